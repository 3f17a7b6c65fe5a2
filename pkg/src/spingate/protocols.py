"""
Heralded protocols built from the spin-conditioned transmission gate.

Each protocol is a short list of steps (state preparation, gate passes,
single-qubit rotations, measurements). Running the steps expands a branch
tree: a gate pass splits off a "lost" leaf, a measurement splits into its
outcomes, and a dephasing channel splits into unobserved Kraus branches.
Every node keeps an unnormalised register whose squared norm is the
absolute probability of reaching it. Exact success probabilities are sums
over leaves, and Monte Carlo trials walk the same tree with seeded
uniforms.

Conventions
-----------
- A photon detected in H, or a spin read out as up, heralds the "+" state.
  V or down heralds the "-" state.
- ``correct=True`` applies a Z on the receiving qubit after a "-" herald,
  so both heralds deliver the "+" state.
- ``qnd="projective"`` reads the spin directly. ``qnd="physical"`` sends an
  extra H-polarised probe photon through an ideal gate and reads its
  helicity, which costs another transmission factor.
"""
from __future__ import annotations

import math
import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Callable, NamedTuple, Sequence

import numpy as np

from .cavity import CavityParams
from .errors import InvalidParameter
from .gate import GateMode, GateOperator, apply_gate, build_gate
from .qstate import (
    Basis,
    DensityMatrix,
    OUTCOME_NAMES,
    QuantumRegister,
    apply_single_qubit,
    make_register,
    pauli_z,
    photon,
    project_qubit,
    spin,
    spin_hadamard,
    to_density,
)

_S2 = 1 / math.sqrt(2)
MC_CHUNK = 8192
LOST = "lost"


# --- branch tree ----------------------------------------------------------------

class _Event(NamedTuple):
    desc: str
    outcome: str
    index: int
    visible: bool = True


@dataclass(slots=True)
class _Node:
    reg: QuantumRegister | None  # None marks a lost photon
    weight: float
    record: tuple[_Event, ...] = ()
    children: list[_Node] = field(default_factory=list)

    @property
    def lost(self) -> bool:
        return self.reg is None

    def herald_key(self) -> str:
        if self.lost:
            return LOST
        return ",".join(e.outcome for e in self.record if e.visible)


Step = Callable[[_Node], list]


def _op_step(qubit: str, matrix: np.ndarray) -> Step:
    def step(node):
        reg = apply_single_qubit(node.reg, qubit, matrix)
        return [_Node(reg, reg.norm2, node.record)]
    return step


def _gate_step(photon_id: str, spin_id: str, gate: GateOperator, desc: str) -> Step:
    def step(node):
        reg, p_transmit = apply_gate(node.reg, photon_id, spin_id, gate)
        kept = p_transmit * node.weight
        kids = [_Node(reg, kept, node.record)]
        lost = node.weight - kept
        if lost > 0:
            kids.append(_Node(None, lost, node.record + (_Event(desc, LOST, -1),)))
        return kids
    return step


def _measure_step(qubit: str, basis: Basis, desc: str, *, remove: bool = True,
                  visible: bool = True, names: tuple[str, str] | None = None) -> Step:
    names = names or OUTCOME_NAMES[basis]

    def step(node):
        kids = []
        for k in (0, 1):
            p, reg = project_qubit(node.reg, qubit, basis, k, remove=remove)
            if p > 0:
                kids.append(_Node(reg, p, node.record + (_Event(desc, names[k], k, visible),)))
        return kids
    return step


def _kraus_step(qubit: str, ops: Sequence[np.ndarray], desc: str) -> Step:
    def step(node):
        kids = []
        for k, op in enumerate(ops):
            reg = apply_single_qubit(node.reg, qubit, op)
            if reg.norm2 > 0:
                kids.append(_Node(reg, reg.norm2, node.record + (_Event(desc, f"K{k}", k, False),)))
        return kids
    return step


def _append_step(label, amps) -> Step:
    def step(node):
        reg = node.reg.tensor(make_register([(label, amps)]))
        return [_Node(reg, reg.norm2, node.record)]
    return step


def _correction_step(desc: str, qubit: str) -> Step:
    """Z on ``qubit`` when the measurement ``desc`` returned outcome 1."""
    def step(node):
        flip = any(e.desc == desc and e.index == 1 for e in node.record)
        if not flip:
            return [_Node(node.reg, node.weight, node.record)]
        reg = apply_single_qubit(node.reg, qubit, pauli_z())
        return [_Node(reg, reg.norm2, node.record)]
    return step


def _expand(node: _Node, steps: Sequence[Step]) -> _Node:
    if not steps or node.lost:
        return node
    node.children = [_expand(child, steps[1:]) for child in steps[0](node)]
    return node


def _leaves(node: _Node):
    if not node.children:
        yield node
    else:
        for child in node.children:
            yield from _leaves(child)


def _depth(node: _Node) -> int:
    return 0 if not node.children else 1 + max(_depth(c) for c in node.children)


# --- Monte Carlo ----------------------------------------------------------------

@dataclass(frozen=True)
class MonteCarloTally:
    n_trials: int
    n_success: int
    counts: dict[str, int]
    seed: int

    @property
    def success_fraction(self) -> float:
        return self.n_success / self.n_trials if self.n_trials else float("nan")

    def to_dict(self) -> dict:
        return {"n_trials": self.n_trials, "n_success": self.n_success, "seed": self.seed,
                "counts": dict(sorted(self.counts.items()))}


def _walk(node: _Node, idx: np.ndarray, u: np.ndarray, level: int, counts: dict):
    if idx.size == 0:
        return
    if not node.children:
        key = node.herald_key()
        counts[key] = counts.get(key, 0) + int(idx.size)
        return
    if len(node.children) == 1:
        _walk(node.children[0], idx, u, level + 1, counts)
        return
    w = np.array([c.weight for c in node.children])
    edges = np.cumsum(w / w.sum())[:-1]
    pick = np.searchsorted(edges, u[idx, level], side="right")
    for k, child in enumerate(node.children):
        _walk(child, idx[pick == k], u, level + 1, counts)


def _chunk_counts(root: _Node, seed: int, chunk: int, size: int, depth: int) -> dict:
    rng = np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(chunk,)))
    u = rng.random((size, max(depth, 1)))
    counts: dict[str, int] = {}
    _walk(root, np.arange(size), u, 0, counts)
    return counts


def sample_tree(root: _Node, n_trials: int, seed: int, workers: int = 1) -> MonteCarloTally:
    """Sample ``n_trials`` trajectories through an expanded branch tree.

    Trials are grouped in fixed chunks of ``MC_CHUNK``; chunk ``c`` draws from
    ``SeedSequence(seed, spawn_key=(c,))``, so tallies do not depend on
    ``workers``.
    """
    depth = _depth(root)
    sizes = [min(MC_CHUNK, n_trials - s) for s in range(0, n_trials, MC_CHUNK)]
    jobs = [(root, seed, c, size, depth) for c, size in enumerate(sizes)]
    if workers > 1 and len(jobs) > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            parts = list(pool.map(lambda a: _chunk_counts(*a), jobs))
    else:
        parts = [_chunk_counts(*a) for a in jobs]
    counts: dict[str, int] = {}
    for part in parts:
        for k, v in part.items():
            counts[k] = counts.get(k, 0) + v
    return MonteCarloTally(n_trials, n_trials - counts.get(LOST, 0), counts, int(seed))


# --- outcome ----------------------------------------------------------------------

@dataclass
class ProtocolOutcome:
    """Heralded result of one protocol run.

    ``final`` is the normalised output for the selected herald; it is None
    when unobserved dephasing leaves a mixed state, in which case use
    ``density``.
    """

    protocol: str
    final: QuantumRegister | None
    herald: list[tuple[str, str]]
    p_success: float
    p_herald: float
    herald_probs: dict[str, float]
    target: QuantumRegister | None = None
    target_overlap: float | None = None
    trials: MonteCarloTally | None = None
    _branches: list = field(default_factory=list, repr=False)
    _density: DensityMatrix | None = field(default=None, repr=False)

    @property
    def density(self) -> DensityMatrix:
        """Normalised density matrix of the heralded output (built on demand)."""
        if self._density is None:
            rho = sum(to_density(r).matrix for r in self._branches)
            self._density = DensityMatrix(self._branches[0].labels, rho / self.p_herald)
        return self._density

    @property
    def herald_label(self) -> str:
        return ",".join(o for _, o in self.herald)

    def to_dict(self, dump_state: bool = False) -> dict:
        d = {
            "protocol": self.protocol,
            "p_success": self.p_success,
            "herald": [{"measurement": m, "outcome": o} for m, o in self.herald],
            "p_herald": self.p_herald,
            "herald_probabilities": dict(sorted(self.herald_probs.items())),
            "target_overlap": self.target_overlap,
            "trials": None if self.trials is None else self.trials.to_dict(),
        }
        if dump_state:
            d["state"] = None if self.final is None else self.final.to_dict()
            d["density_matrix"] = [[[float(z.real), float(z.imag)] for z in row]
                                   for row in self.density.matrix]
        return d


def _run(name: str, initial: QuantumRegister, steps: Sequence[Step],
         target_for: Callable[[tuple[_Event, ...]], QuantumRegister | None],
         rng, herald, trials, seed, workers) -> ProtocolOutcome:
    root = _expand(_Node(initial, initial.norm2), steps)
    groups: dict[str, list[_Node]] = {}
    for leaf in _leaves(root):
        if not leaf.lost:
            groups.setdefault(leaf.herald_key(), []).append(leaf)
    probs = {k: sum(n.weight for n in v) for k, v in groups.items()}
    p_success = sum(probs.values())
    if not groups:
        raise InvalidParameter(f"{name}: no heralded branch has nonzero probability")

    keys = list(groups)
    if herald is not None:
        if herald not in groups:
            raise InvalidParameter(f"{name}: herald {herald!r} has zero probability; options {keys}")
        key = herald
    elif rng is not None:
        u, key = rng.random() * p_success, keys[-1]
        for k in keys:
            u -= probs[k]
            if u < 0:
                key = k
                break
    else:
        key = max(keys, key=lambda k: probs[k])

    leaves = groups[key]
    final = leaves[0].reg.normalized() if len(leaves) == 1 else None
    record = leaves[0].record
    target = target_for(record)
    outcome = ProtocolOutcome(
        protocol=name,
        final=final,
        herald=[(e.desc, e.outcome) for e in record if e.visible],
        p_success=float(p_success),
        p_herald=float(probs[key]),
        herald_probs={k: float(v) for k, v in probs.items()},
        target=target,
        _branches=[n.reg for n in leaves],
    )
    if target is not None:
        if final is not None:
            t = target.normalized().amplitudes
            outcome.target_overlap = float(abs(np.vdot(t, final.amplitudes)) ** 2)
        else:
            outcome.target_overlap = outcome.density.expectation(target)

    if trials:
        if seed is None:
            seed = int(rng.integers(2 ** 63)) if rng is not None else int(np.random.SeedSequence().entropy % 2 ** 64)
        outcome.trials = sample_tree(root, int(trials), int(seed), workers)
    return outcome


def _flipped(record, desc) -> bool:
    return any(e.desc == desc and e.index == 1 for e in record)


def _pair_ket(labels, alphas, betas, sign) -> QuantumRegister:
    n = len(labels)
    amps = np.zeros(2 ** n, dtype=complex)
    amps[0] = np.prod(alphas)
    amps[-1] = sign * np.prod(betas)
    reg = QuantumRegister(tuple(labels), amps)
    return reg if reg.norm2 > 0 else None


def _spin_readout(spin_id: str, probe_gate: GateOperator | None, qnd: str, desc: str) -> list[Step]:
    if qnd == "projective":
        return [_measure_step(spin_id, Basis.SPIN_Z, desc)]
    if qnd != "physical":
        raise InvalidParameter(f"qnd must be 'projective' or 'physical', got {qnd!r}")
    probe = photon("probe", probe_gate.omega)
    return [
        _append_step(probe, (_S2, _S2)),
        _gate_step("probe", spin_id, probe_gate, "probe transmission"),
        _measure_step("probe", Basis.CIRCULAR, desc, names=("up", "down")),
        # the spin is now known; drop it from the register
        _measure_step(spin_id, Basis.SPIN_Z, "spin discard", visible=False),
    ]


_SPIN_BASIS = tuple(QuantumRegister((spin("spin"),), v) for v in ([1, 0], [0, 1]))


# --- protocols ----------------------------------------------------------------------

def qnd_spin_measurement(spin_state, gate: GateOperator, rng=None, *, herald=None,
                         trials=0, seed=None, workers=1) -> ProtocolOutcome:
    """Read a spin by transmitting an H photon and measuring its helicity.

    Herald R leaves the spin up, herald L leaves it down (exactly, for an
    ideal gate). ``final`` is the post-measurement spin.
    """
    reg = make_register([(photon("photon", gate.omega), (_S2, _S2)), (spin("spin"), spin_state)])
    desc = "photon helicity"
    steps = [
        _gate_step("photon", "spin", gate, "photon transmission"),
        _measure_step("photon", Basis.CIRCULAR, desc),
    ]
    up, down = _SPIN_BASIS
    return _run("qnd_spin_measurement", reg, steps,
                lambda rec: down if _flipped(rec, desc) else up,
                rng, herald, trials, seed, workers)


def ghz_spins(spins: Sequence, gates: Sequence[GateOperator], rng=None, *, herald=None,
              correct=False, trials=0, seed=None, workers=1) -> ProtocolOutcome:
    """Thread one H photon through N cavities and read it in the H/V basis.

    Herald H gives prod(alpha)|up...up> + prod(beta)|down...down>, herald V
    the same with a minus sign.
    """
    if len(spins) != len(gates):
        raise InvalidParameter(f"{len(spins)} spins but {len(gates)} gates")
    if len(spins) < 2:
        raise InvalidParameter("need at least two spins")
    sids = [f"spin{k + 1}" for k in range(len(spins))]
    reg = make_register([(photon("photon", gates[0].omega), (_S2, _S2))]
                        + [(spin(s), st) for s, st in zip(sids, spins)])
    desc = "photon linear polarisation"
    steps = [_gate_step("photon", s, g, f"photon transmission through cavity {k + 1}")
             for k, (s, g) in enumerate(zip(sids, gates))]
    steps.append(_measure_step("photon", Basis.LINEAR, desc))
    if correct:
        steps.append(_correction_step(desc, sids[0]))
    alphas = [complex(a) for a, _ in spins]
    betas = [complex(b) for _, b in spins]

    def target(rec):
        sign = 1 if correct or not _flipped(rec, desc) else -1
        return _pair_ket([spin(s) for s in sids], alphas, betas, sign)

    return _run("ghz_spins", reg, steps, target, rng, herald, trials, seed, workers)


def entangle_spins(spin1, spin2, gate1: GateOperator, gate2: GateOperator, rng=None, **kw) -> ProtocolOutcome:
    """Entangle two remote spins with one photon (two-spin GHZ)."""
    out = ghz_spins([spin1, spin2], [gate1, gate2], rng, **kw)
    out.protocol = "entangle_spins"
    return out


@dataclass(frozen=True)
class DephasingParams:
    t: float
    T2: float
    T1: float = math.inf

    def __post_init__(self):
        if not (math.isfinite(self.t) and self.t >= 0):
            raise InvalidParameter(f"t must be finite and >= 0, got {self.t}")
        if not (self.T2 > 0):
            raise InvalidParameter(f"T2 must be > 0, got {self.T2}")
        if not (self.T1 > 0):
            raise InvalidParameter(f"T1 must be > 0, got {self.T1}")
        if self.t > self.T1 / 10:
            warnings.warn(f"t={self.t} is not much shorter than T1={self.T1}; pure dephasing model may not hold",
                          stacklevel=3)

    @property
    def coherence(self) -> float:
        return math.exp(-self.t / self.T2)


def spin_dephase(p: DephasingParams) -> DensityMatrix:
    """State of a spin prepared in (up+down)/√2 after dephasing for ``p.t``."""
    c = p.coherence / 2
    return DensityMatrix((spin("spin"),), np.array([[0.5, c], [c, 0.5]], dtype=complex))


def entanglement_fidelity(p: DephasingParams) -> float:
    """Photon-pair fidelity when the spin dephases between the two photons."""
    return (1 + p.coherence) / 2


def dephasing_kraus(p: DephasingParams) -> list[np.ndarray]:
    """Phase-flip channel whose off-diagonal decay factor is exp(-t/T2)."""
    flip = (1 - p.coherence) / 2
    return [math.sqrt(1 - flip) * np.eye(2, dtype=complex), math.sqrt(flip) * pauli_z()]


def _check_window(params: CavityParams, omega: float):
    if abs(omega - params.omega_c) >= params.kappa:
        warnings.warn(f"photon frequency {omega} lies outside |omega - omega_c| < kappa; "
                      "gate fidelity will be poor", stacklevel=3)


def ghz_photons(photons: Sequence, params: CavityParams, rng=None, *, mode: GateMode | str = GateMode.IDEAL,
                herald=None, correct=False, dephasing: DephasingParams | None = None,
                qnd: str = "projective", trials=0, seed=None, workers=1) -> ProtocolOutcome:
    """Send N photons through one cavity, rotate the spin and read it out.

    ``photons`` holds ``(alpha, beta, omega)`` triples; each photon's gate is
    built at its own frequency. Herald up gives prod(alpha)|R...R> +
    prod(beta)|L...L>, herald down the minus combination. ``dephasing``
    inserts the spin phase-flip channel between consecutive photons.
    """
    if len(photons) < 2:
        raise InvalidParameter("need at least two photons")
    mode = GateMode(mode)
    pids = [f"photon{k + 1}" for k in range(len(photons))]
    specs = []
    gates = []
    for pid, (a, b, w) in zip(pids, photons):
        _check_window(params, w)
        specs.append((photon(pid, w), (a, b)))
        gates.append(build_gate(params, w, mode))
    reg = make_register(specs + [(spin("spin"), (_S2, _S2))])
    desc = "spin readout"
    steps: list[Step] = []
    for k, (pid, g) in enumerate(zip(pids, gates)):
        if k and dephasing is not None:
            steps.append(_kraus_step("spin", dephasing_kraus(dephasing), f"dephasing before {pid}"))
        steps.append(_gate_step(pid, "spin", g, f"{pid} transmission"))
    steps.append(_op_step("spin", spin_hadamard()))
    steps.extend(_spin_readout("spin", gates[0].as_ideal(), qnd, desc))
    if correct:
        steps.append(_correction_step(desc, pids[0]))
    alphas = [complex(p[0]) for p in photons]
    betas = [complex(p[1]) for p in photons]
    labels = [photon(pid, p[2]) for pid, p in zip(pids, photons)]

    def target(rec):
        sign = 1 if correct or not _flipped(rec, desc) else -1
        return _pair_ket(labels, alphas, betas, sign)

    return _run("ghz_photons", reg, steps, target, rng, herald, trials, seed, workers)


def entangle_photons(ph1, ph2, params: CavityParams, rng=None, **kw) -> ProtocolOutcome:
    """Entangle two independent photons through one cavity spin."""
    out = ghz_photons([ph1, ph2], params, rng, **kw)
    out.protocol = "entangle_photons"
    return out


def photon_to_spin(photon_state, gate: GateOperator, rng=None, *, herald=None, correct=False,
                   trials=0, seed=None, workers=1) -> ProtocolOutcome:
    """Move alpha|R>+beta|L> onto the cavity spin as alpha|up> ± beta|down>."""
    reg = make_register([(photon("photon", gate.omega), photon_state), (spin("spin"), (_S2, _S2))])
    desc = "photon linear polarisation"
    steps = [
        _gate_step("photon", "spin", gate, "photon transmission"),
        _measure_step("photon", Basis.LINEAR, desc),
    ]
    if correct:
        steps.append(_correction_step(desc, "spin"))
    a, b = (complex(x) for x in photon_state)

    def target(rec):
        sign = 1 if correct or not _flipped(rec, desc) else -1
        return QuantumRegister((spin("spin"),), [a, sign * b])

    return _run("photon_to_spin", reg, steps, target, rng, herald, trials, seed, workers)


def spin_to_photon(spin_state, gate: GateOperator, rng=None, *, herald=None, correct=False,
                   qnd: str = "projective", trials=0, seed=None, workers=1) -> ProtocolOutcome:
    """Move alpha|up>+beta|down> onto an H photon as alpha|R> ± beta|L>."""
    reg = make_register([(photon("photon", gate.omega), (_S2, _S2)), (spin("spin"), spin_state)])
    desc = "spin readout"
    steps = [
        _gate_step("photon", "spin", gate, "photon transmission"),
        _op_step("spin", spin_hadamard()),
        *_spin_readout("spin", gate.as_ideal(), qnd, desc),
    ]
    if correct:
        steps.append(_correction_step(desc, "photon"))
    a, b = (complex(x) for x in spin_state)

    def target(rec):
        sign = 1 if correct or not _flipped(rec, desc) else -1
        return QuantumRegister((photon("photon", gate.omega),), [a, sign * b])

    return _run("spin_to_photon", reg, steps, target, rng, herald, trials, seed, workers)


def mean_transfer_fidelity(gate: GateOperator, n_samples: int, rng: np.random.Generator,
                           direction: str = "photon_to_spin") -> float:
    """Herald-weighted transfer fidelity averaged over Haar-random inputs.

    Uses corrected heralds. For full gates this is reported as data; it is
    not an identity with the amplitude fidelity of the gate.
    """
    fns = {"photon_to_spin": photon_to_spin, "spin_to_photon": spin_to_photon}
    if direction not in fns:
        raise InvalidParameter(f"direction must be one of {sorted(fns)}, got {direction!r}")
    fn = fns[direction]
    total = 0.0
    for _ in range(n_samples):
        v = rng.normal(size=2) + 1j * rng.normal(size=2)
        v /= np.linalg.norm(v)
        base = fn(tuple(v), gate, correct=True)
        acc = 0.0
        for key, p in base.herald_probs.items():
            acc += p * fn(tuple(v), gate, herald=key, correct=True).target_overlap
        total += acc / base.p_success
    return total / n_samples
