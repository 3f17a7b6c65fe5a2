"""Simulator for a spin-conditioned photon transmission gate in a double-sided microcavity."""
from __future__ import annotations

__version__ = "0.1.0"

from .cavity import (
    CavityParams,
    CoefficientPair,
    SpectraTable,
    coupled_cavity_coeffs,
    empty_cavity_coeffs,
    gate_fidelity,
    sweep_parameter,
    sweep_spectra,
)
from .errors import *  # noqa: F401,F403
from .gate import GateMode, GateOperator, apply_gate, build_gate
from .protocols import (
    DephasingParams,
    MonteCarloTally,
    ProtocolOutcome,
    entangle_photons,
    entangle_spins,
    entanglement_fidelity,
    ghz_photons,
    ghz_spins,
    photon_to_spin,
    qnd_spin_measurement,
    spin_dephase,
    spin_to_photon,
)
from .qstate import (
    Basis,
    DensityMatrix,
    QuantumRegister,
    QubitKind,
    QubitLabel,
    apply_single_qubit,
    concurrence,
    make_register,
    measure_qubit,
    partial_trace,
    photon,
    photon_hadamard,
    project_qubit,
    spin,
    spin_hadamard,
    state_fidelity,
    to_density,
)
