"""
Spin-conditioned transmission operator on one photon-spin pair.

With the spin up, an R photon sees the empty cavity and an L photon sees the
dot-coupled cavity; spin down swaps the roles. The operator is diagonal over
(R↑, R↓, L↑, L↓):

    full  : (t0, t, t, t0)
    ideal : (t0, 0, 0, t0)

Only the transmitted branch is kept. Whatever weight the operator removes is
the probability that the photon was reflected or lost.
"""
from __future__ import annotations

import enum
import math
from dataclasses import dataclass

import numpy as np

from .cavity import CavityParams, coupled_cavity_coeffs, empty_cavity_coeffs
from .errors import FrequencyMismatch, KindMismatch
from .qstate import QuantumRegister, QubitKind

FREQ_TOL = 1e-12


class GateMode(str, enum.Enum):
    FULL = "full"
    IDEAL = "ideal"


@dataclass(frozen=True)
class GateOperator:
    mode: GateMode
    t0: complex
    t: complex | None
    params: CavityParams
    omega: float

    @property
    def diag(self) -> tuple[complex, complex, complex, complex]:
        coupled = 0j if self.mode is GateMode.IDEAL else self.t
        return (self.t0, coupled, coupled, self.t0)

    def matrix(self) -> np.ndarray:
        return np.diag(self.diag).astype(complex)

    def as_ideal(self) -> GateOperator:
        return GateOperator(GateMode.IDEAL, self.t0, None, self.params, self.omega)

    def to_dict(self) -> dict:
        return {
            "mode": self.mode.value,
            "basis": ["R,up", "R,down", "L,up", "L,down"],
            "diag": [[float(z.real), float(z.imag)] for z in self.diag],
            "t0": [self.t0.real, self.t0.imag],
            "t": None if self.t is None else [self.t.real, self.t.imag],
            "provenance": {
                "params": {k: getattr(self.params, k) for k in
                           ("g", "kappa", "kappa_s", "gamma", "omega_c", "omega_x")},
                "omega": self.omega,
            },
        }


def build_gate(params: CavityParams, omega: float, mode: GateMode | str = GateMode.FULL) -> GateOperator:
    mode = GateMode(mode)
    t0 = complex(empty_cavity_coeffs(params, omega).t)
    t = None if mode is GateMode.IDEAL else complex(coupled_cavity_coeffs(params, omega).t)
    return GateOperator(mode, t0, t, params, float(omega))


def apply_gate(reg: QuantumRegister, photon, spin, op: GateOperator) -> tuple[QuantumRegister, float]:
    """Transmit ``photon`` through the cavity holding ``spin``.

    Returns the un-renormalised output and the transmission probability
    (squared norm after over squared norm before).
    """
    ip, is_ = reg.index(photon), reg.index(spin)
    lp, ls = reg.labels[ip], reg.labels[is_]
    if lp.kind is not QubitKind.PHOTON:
        raise KindMismatch(f"{lp.id!r} is not a photon")
    if ls.kind is not QubitKind.SPIN:
        raise KindMismatch(f"{ls.id!r} is not a spin")
    if lp.frequency is not None and not math.isclose(lp.frequency, op.omega, rel_tol=0, abs_tol=FREQ_TOL):
        raise FrequencyMismatch(
            f"photon {lp.id!r} has frequency {lp.frequency} but the gate was built at {op.omega}")
    n = reg.n_qubits
    factor = np.asarray(op.diag, dtype=complex).reshape(2, 2)
    shape = [1] * n
    shape[ip] = shape[is_] = 2
    if ip > is_:
        factor = factor.T
    out = reg.amplitudes.reshape((2,) * n) * factor.reshape(shape)
    result = QuantumRegister._trusted(reg.labels, out.reshape(-1))
    before = reg.norm2
    return result, (result.norm2 / before if before > 0 else 0.0)
