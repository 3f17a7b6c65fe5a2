"""
Dense state vectors for registers of photon-polarisation and electron-spin
qubits.

Ordering: the qubit at position 0 is the most significant bit. Basis value 0
is |R> (photon) or |up> (spin); basis value 1 is |L> or |down>.

Registers may carry a squared norm below one. A post-selected branch keeps
its weight, so the norm is the probability of having reached it.
"""
from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .errors import (
    IndexOutOfRange,
    KindMismatch,
    NonNormalizedInput,
    ShapeMismatch,
    UnknownLabel,
    WrongDimension,
    ZeroNormRegister,
)

MAX_QUBITS = 16
NORM_TOL = 1e-9

_S2 = 1 / math.sqrt(2)


class QubitKind(str, enum.Enum):
    PHOTON = "photon"
    SPIN = "spin"


class Basis(str, enum.Enum):
    CIRCULAR = "circular"  # photon R / L
    LINEAR = "linear"      # photon H / V, H = (R+L)/√2, V = (R-L)/√2
    SPIN_Z = "spin_z"      # spin up / down


OUTCOME_NAMES = {
    Basis.CIRCULAR: ("R", "L"),
    Basis.LINEAR: ("H", "V"),
    Basis.SPIN_Z: ("up", "down"),
}

# rows are the bras of the two outcomes, in the R/L (or up/down) basis
_BASIS_BRAS = {
    Basis.CIRCULAR: np.eye(2, dtype=complex),
    Basis.SPIN_Z: np.eye(2, dtype=complex),
    Basis.LINEAR: np.array([[1, 1], [1, -1]], dtype=complex) * _S2,
}


@dataclass(frozen=True)
class QubitLabel:
    kind: QubitKind
    id: str
    frequency: float | None = None

    def __post_init__(self):
        object.__setattr__(self, "kind", QubitKind(self.kind))
        if self.kind is QubitKind.SPIN and self.frequency is not None:
            raise KindMismatch(f"spin qubit {self.id!r} cannot carry a frequency")
        if self.frequency is not None:
            f = float(self.frequency)
            if not math.isfinite(f):
                raise ValueError(f"photon {self.id!r} frequency must be finite")
            object.__setattr__(self, "frequency", f)

    def to_dict(self) -> dict:
        d = {"kind": self.kind.value, "id": self.id}
        if self.frequency is not None:
            d["frequency"] = self.frequency
        return d

    @classmethod
    def from_dict(cls, d: dict) -> QubitLabel:
        return cls(QubitKind(d["kind"]), d["id"], d.get("frequency"))


def photon(id: str, frequency: float | None = None) -> QubitLabel:
    return QubitLabel(QubitKind.PHOTON, id, frequency)


def spin(id: str) -> QubitLabel:
    return QubitLabel(QubitKind.SPIN, id)


def _check_labels(labels: Sequence[QubitLabel]):
    ids = [lab.id for lab in labels]
    if len(set(ids)) != len(ids):
        raise ValueError(f"qubit ids must be unique, got {ids}")
    if len(labels) > MAX_QUBITS:
        raise ValueError(f"at most {MAX_QUBITS} qubits are supported, got {len(labels)}")


@dataclass(frozen=True, eq=False)
class QuantumRegister:
    labels: tuple[QubitLabel, ...]
    amplitudes: np.ndarray = field(repr=False)

    def __post_init__(self):
        labels = tuple(self.labels)
        _check_labels(labels)
        amps = np.array(self.amplitudes, dtype=complex).reshape(-1)
        if amps.shape[0] != 2 ** len(labels):
            raise ShapeMismatch(f"{len(labels)} qubits need {2 ** len(labels)} amplitudes, got {amps.shape[0]}")
        amps.setflags(write=False)
        object.__setattr__(self, "labels", labels)
        object.__setattr__(self, "amplitudes", amps)

    @classmethod
    def _trusted(cls, labels: tuple[QubitLabel, ...], amps: np.ndarray) -> QuantumRegister:
        """Skip validation for results derived from an already-valid register."""
        reg = object.__new__(cls)
        amps = np.ascontiguousarray(amps, dtype=complex)
        amps.setflags(write=False)
        object.__setattr__(reg, "labels", labels)
        object.__setattr__(reg, "amplitudes", amps)
        return reg

    @property
    def n_qubits(self) -> int:
        return len(self.labels)

    @property
    def norm2(self) -> float:
        return float(np.vdot(self.amplitudes, self.amplitudes).real)

    def index(self, qubit: int | str | QubitLabel) -> int:
        """Resolve a position, id or label to a position."""
        if isinstance(qubit, QubitLabel):
            qubit = qubit.id
        if isinstance(qubit, str):
            for i, lab in enumerate(self.labels):
                if lab.id == qubit:
                    return i
            raise UnknownLabel(qubit)
        if isinstance(qubit, (int, np.integer)) and not isinstance(qubit, bool) and 0 <= qubit < self.n_qubits:
            return int(qubit)
        raise IndexOutOfRange(f"qubit index {qubit!r} out of range for {self.n_qubits} qubits")

    def label(self, qubit) -> QubitLabel:
        return self.labels[self.index(qubit)]

    def normalized(self) -> QuantumRegister:
        n2 = self.norm2
        if n2 <= 0:
            raise ZeroNormRegister("cannot normalise a zero-norm register")
        return QuantumRegister._trusted(self.labels, self.amplitudes / math.sqrt(n2))

    def scaled(self, factor: complex) -> QuantumRegister:
        return QuantumRegister._trusted(self.labels, self.amplitudes * factor)

    def tensor(self, other: QuantumRegister) -> QuantumRegister:
        return QuantumRegister(self.labels + other.labels, np.kron(self.amplitudes, other.amplitudes))

    def to_dict(self) -> dict:
        return {
            "labels": [lab.to_dict() for lab in self.labels],
            "amplitudes": [[float(a.real), float(a.imag)] for a in self.amplitudes],
        }

    @classmethod
    def from_dict(cls, d: dict) -> QuantumRegister:
        labels = [QubitLabel.from_dict(x) for x in d["labels"]]
        amps = [complex(re, im) for re, im in d["amplitudes"]]
        return cls(tuple(labels), np.array(amps, dtype=complex))

    def __repr__(self):
        ids = ",".join(lab.id for lab in self.labels)
        return f"QuantumRegister([{ids}], norm2={self.norm2:.6g})"


def make_register(specs: Sequence[tuple[QubitLabel, tuple[complex, complex]]]) -> QuantumRegister:
    """Product state from per-qubit (alpha, beta) amplitudes.

    >>> make_register([(spin("s"), (1, 0))]).amplitudes
    array([1.+0.j, 0.+0.j])
    """
    labels, amps = [], np.ones(1, dtype=complex)
    for label, (alpha, beta) in specs:
        n2 = abs(alpha) ** 2 + abs(beta) ** 2
        if not math.isclose(n2, 1.0, rel_tol=0, abs_tol=NORM_TOL):
            raise NonNormalizedInput(f"qubit {label.id!r}: |alpha|^2+|beta|^2 = {n2}, expected 1")
        labels.append(label)
        amps = np.multiply.outer(amps, np.array([alpha, beta], dtype=complex)).reshape(-1)
    return QuantumRegister(tuple(labels), amps)


# --- single-qubit operators ---------------------------------------------------

def photon_hadamard() -> np.ndarray:
    """Polarising-beam-splitter basis change R/L <-> H/V."""
    return np.array([[1, 1], [1, -1]], dtype=complex) * _S2


def spin_hadamard() -> np.ndarray:
    """pi/2 rotation mapping up -> (up+down)/√2, down -> (up-down)/√2."""
    return np.array([[1, 1], [1, -1]], dtype=complex) * _S2


def pauli_z() -> np.ndarray:
    return np.diag([1, -1]).astype(complex)


def is_unitary(op: np.ndarray, tol: float = 1e-12) -> bool:
    op = np.asarray(op)
    return op.shape == (2, 2) and np.allclose(op.conj().T @ op, np.eye(2), atol=tol)


def _split(amps: np.ndarray, n: int, idx: int) -> np.ndarray:
    """View the amplitudes as (left, qubit, right)."""
    return amps.reshape(2 ** idx, 2, 2 ** (n - idx - 1))


def _apply_on_axis(amps: np.ndarray, n: int, idx: int, op: np.ndarray) -> np.ndarray:
    return np.matmul(op, _split(amps, n, idx)).reshape(-1)


def apply_single_qubit(reg: QuantumRegister, idx, op) -> QuantumRegister:
    """Apply a 2x2 (not necessarily unitary) operator to one tensor factor."""
    op = np.asarray(op, dtype=complex)
    if op.shape != (2, 2) or not np.all(np.isfinite(op)):
        raise WrongDimension(f"single-qubit operator must be a finite 2x2 matrix, got shape {op.shape}")
    i = reg.index(idx)
    return QuantumRegister._trusted(reg.labels, _apply_on_axis(reg.amplitudes, reg.n_qubits, i, op))


# --- measurement --------------------------------------------------------------

def _check_basis(label: QubitLabel, basis: Basis):
    wanted = QubitKind.SPIN if basis is Basis.SPIN_Z else QubitKind.PHOTON
    if label.kind is not wanted:
        raise KindMismatch(f"basis {basis.value} does not apply to {label.kind.value} qubit {label.id!r}")


def _branch(reg: QuantumRegister, i: int, basis: Basis, outcome: int, remove: bool) -> QuantumRegister:
    ket = _BASIS_BRAS[basis][outcome]
    reduced = np.matmul(ket.conj(), _split(reg.amplitudes, reg.n_qubits, i))
    if remove:
        labels = reg.labels[:i] + reg.labels[i + 1:]
        return QuantumRegister._trusted(labels, reduced.reshape(-1))
    full = ket[None, :, None] * reduced[:, None, :]
    return QuantumRegister._trusted(reg.labels, full.reshape(-1))


def project_qubit(reg: QuantumRegister, idx, basis: Basis | str, outcome: int, *, remove: bool = False):
    """Keep one measurement branch without renormalising.

    Returns ``(prob, collapsed)`` where ``prob`` is the squared norm of the
    branch (so both outcomes sum to ``reg.norm2``). With ``remove=True`` the
    measured qubit is dropped from the result.
    """
    basis = Basis(basis)
    i = reg.index(idx)
    _check_basis(reg.labels[i], basis)
    if outcome not in (0, 1):
        raise ValueError(f"outcome must be 0 or 1, got {outcome!r}")
    collapsed = _branch(reg, i, basis, outcome, remove)
    return collapsed.norm2, collapsed


def measure_qubit(reg: QuantumRegister, idx, basis: Basis | str, rng: np.random.Generator, *, remove: bool = False):
    """Sample a projective measurement.

    Returns ``(outcome, prob, collapsed)``; ``prob`` is the conditional
    probability of the outcome and ``collapsed`` has unit norm.
    """
    total = reg.norm2
    if total <= 0:
        raise ZeroNormRegister("cannot measure a zero-norm register")
    p0, b0 = project_qubit(reg, idx, basis, 0, remove=remove)
    p0 = min(max(p0 / total, 0.0), 1.0)
    if rng.random() < p0:
        return 0, p0, b0.normalized()
    _, b1 = project_qubit(reg, idx, basis, 1, remove=remove)
    return 1, 1.0 - p0, b1.normalized()


# --- density matrices ---------------------------------------------------------

@dataclass(frozen=True, eq=False)
class DensityMatrix:
    labels: tuple[QubitLabel, ...]
    matrix: np.ndarray = field(repr=False)

    def __post_init__(self):
        labels = tuple(self.labels)
        _check_labels(labels)
        m = np.array(self.matrix, dtype=complex)
        d = 2 ** len(labels)
        if m.shape != (d, d):
            raise ShapeMismatch(f"{len(labels)} qubits need a {d}x{d} matrix, got {m.shape}")
        m.setflags(write=False)
        object.__setattr__(self, "labels", labels)
        object.__setattr__(self, "matrix", m)

    @property
    def trace(self) -> float:
        return float(np.trace(self.matrix).real)

    def normalized(self) -> DensityMatrix:
        tr = self.trace
        if tr <= 0:
            raise ZeroNormRegister("zero-trace density matrix")
        return DensityMatrix(self.labels, self.matrix / tr)

    def expectation(self, ket: QuantumRegister) -> float:
        """<psi|rho|psi> for a normalised copy of ``ket``."""
        if ket.n_qubits != len(self.labels):
            raise ShapeMismatch("ket and density matrix act on different numbers of qubits")
        psi = ket.normalized().amplitudes
        return float(np.vdot(psi, self.matrix @ psi).real)


def to_density(reg: QuantumRegister) -> DensityMatrix:
    return DensityMatrix(reg.labels, np.outer(reg.amplitudes, reg.amplitudes.conj()))


def partial_trace(dm: DensityMatrix, keep) -> DensityMatrix:
    """Trace out every qubit not listed in ``keep`` (ids, labels or positions).

    Kept qubits retain their original relative order; the trace is preserved.
    """
    pos = {lab.id: i for i, lab in enumerate(dm.labels)}
    keep_idx = set()
    for q in keep:
        if isinstance(q, QubitLabel):
            q = q.id
        if isinstance(q, str):
            if q not in pos:
                raise UnknownLabel(q)
            keep_idx.add(pos[q])
        elif isinstance(q, (int, np.integer)) and 0 <= q < len(dm.labels):
            keep_idx.add(int(q))
        else:
            raise UnknownLabel(q)
    kept = sorted(keep_idx)
    traced = [i for i in range(len(dm.labels)) if i not in keep_idx]
    n = len(dm.labels)
    t = dm.matrix.reshape((2,) * (2 * n))
    t = np.transpose(t, kept + traced + [n + i for i in kept] + [n + i for i in traced])
    dk, dt = 2 ** len(kept), 2 ** len(traced)
    t = t.reshape(dk, dt, dk, dt)
    reduced = np.einsum("ajbj->ab", t)
    return DensityMatrix(tuple(dm.labels[i] for i in kept), reduced)


_YY = np.kron(np.array([[0, -1j], [1j, 0]]), np.array([[0, -1j], [1j, 0]]))


def concurrence(dm: DensityMatrix | QuantumRegister) -> float:
    """Wootters concurrence of a two-qubit state (normalised internally).

    Computed from the singular values of W^T (Y⊗Y) W with rho = W W^†,
    which avoids square roots of noisy near-zero eigenvalues.
    """
    if isinstance(dm, QuantumRegister):
        dm = to_density(dm)
    if len(dm.labels) != 2:
        raise WrongDimension(f"concurrence needs exactly 2 qubits, got {len(dm.labels)}")
    rho = dm.normalized().matrix
    rho = (rho + rho.conj().T) / 2
    w, v = np.linalg.eigh(rho)
    keep = w > 1e-14 * max(w.max(), 1.0)
    W = v[:, keep] * np.sqrt(w[keep])
    tau = W.T @ _YY @ W
    s = np.sort(np.linalg.svd(tau, compute_uv=False))[::-1]
    s = np.pad(s, (0, 4 - len(s)))
    return float(min(max(s[0] - s[1:].sum(), 0.0), 1.0))


def state_fidelity(a: QuantumRegister, b: QuantumRegister) -> float:
    """|<a|b>|^2 after normalising both registers."""
    if a.n_qubits != b.n_qubits or any(x.kind != y.kind for x, y in zip(a.labels, b.labels)):
        raise ShapeMismatch("registers have different label structures")
    na, nb = a.normalized().amplitudes, b.normalized().amplitudes
    return float(min(abs(np.vdot(na, nb)) ** 2, 1.0))
