"""
Steady-state response of a double-sided microcavity, empty or coupled to a
charged quantum dot.

All rates and frequencies share one unit. The canonical choice is
"multiples of kappa" (kappa = 1); :meth:`CavityParams.from_uev` divides
μeV inputs through by the supplied kappa.

Conventions
-----------
- ``kappa``   : cavity field decay into the two input/output ports
- ``kappa_s`` : side leakage, enters the denominators as ``kappa_s / 2``
- ``gamma``   : dipole decay, enters as ``gamma / 2``
- ``t0(omega_c) = -1`` at lossless resonance; no phase renormalisation.
"""
from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, fields, replace
from pathlib import Path
from typing import Iterable, TextIO

import numpy as np

from .errors import DegenerateFidelity, InvalidParameter

SPECTRA_COLUMNS = ("omega", "abs_r0", "abs_t0", "abs_r", "abs_t", "fidelity")


@dataclass(frozen=True)
class CavityParams:
    g: float
    kappa: float = 1.0
    kappa_s: float = 0.0
    gamma: float = 0.0
    omega_c: float = 0.0
    omega_x: float = 0.0

    def __post_init__(self):
        for f in fields(self):
            value = getattr(self, f.name)
            if not isinstance(value, (int, float, np.floating, np.integer)) or isinstance(value, bool):
                raise InvalidParameter(f"{f.name} must be a real number, got {value!r}")
            if not math.isfinite(value):
                raise InvalidParameter(f"{f.name} must be finite, got {value!r}")
            object.__setattr__(self, f.name, float(value))
        if self.kappa <= 0:
            raise InvalidParameter(f"kappa must be > 0, got {self.kappa}")
        for name in ("g", "kappa_s", "gamma"):
            if getattr(self, name) < 0:
                raise InvalidParameter(f"{name} must be >= 0, got {getattr(self, name)}")

    @classmethod
    def from_uev(cls, g, kappa, kappa_s=0.0, gamma=0.0, omega_c=0.0, omega_x=0.0) -> CavityParams:
        """Build canonical (kappa = 1) parameters from values given in μeV."""
        if not (isinstance(kappa, (int, float)) and math.isfinite(kappa) and kappa > 0):
            raise InvalidParameter(f"kappa must be a finite positive number, got {kappa!r}")
        k = float(kappa)
        return cls(g=g / k, kappa=1.0, kappa_s=kappa_s / k, gamma=gamma / k,
                   omega_c=omega_c / k, omega_x=omega_x / k)

    def with_(self, **changes) -> CavityParams:
        return replace(self, **changes)


@dataclass(frozen=True)
class CoefficientPair:
    r: complex
    t: complex


def _check_omega(omega):
    if isinstance(omega, (float, int, np.floating, np.integer)) and not isinstance(omega, bool):
        if not math.isfinite(omega):
            raise InvalidParameter(f"probe frequency must be finite, got {omega!r}")
        return float(omega)
    arr = np.asarray(omega, dtype=float)
    if not np.all(np.isfinite(arr)):
        raise InvalidParameter(f"probe frequency must be finite, got {omega!r}")
    return arr if arr.ndim else float(arr)


def _unwrap(x):
    return complex(x) if np.ndim(x) == 0 else x


def empty_cavity_coeffs(params: CavityParams, omega) -> CoefficientPair:
    """Reflection and transmission of the cavity with the dot decoupled.

    ``omega`` may be a scalar or an array; the returned pair matches its shape.
    """
    omega = _check_omega(omega)
    if isinstance(omega, float):
        cav = complex(params.kappa + params.kappa_s / 2, params.omega_c - omega)
        return CoefficientPair(complex(params.kappa_s / 2, params.omega_c - omega) / cav, -params.kappa / cav)
    cav = 1j * (params.omega_c - omega) + params.kappa + params.kappa_s / 2
    r0 = (1j * (params.omega_c - omega) + params.kappa_s / 2) / cav
    t0 = -params.kappa / cav
    return CoefficientPair(_unwrap(r0), _unwrap(t0))


def _cdiv(a, b):
    """Complex a/b in real arithmetic (Smith's method).

    numpy forms 1/b first, which overflows for subnormal divisors.
    """
    a, b = np.asarray(a, dtype=complex), np.asarray(b, dtype=complex)
    ar, ai, br, bi = a.real, a.imag, b.real, b.imag
    # the branch np.where discards may overflow; its value is never used
    with np.errstate(divide="ignore", invalid="ignore", over="ignore"):
        wide = np.abs(br) >= np.abs(bi)
        ratio = np.where(wide, bi / br, br / bi)
        den = np.where(wide, br + bi * ratio, bi + br * ratio)
        re = np.where(wide, ar + ai * ratio, ar * ratio + ai) / den
        im = np.where(wide, ai - ar * ratio, ai * ratio - ar) / den
    return re + 1j * im


def _coupled_scalar(params: CavityParams, omega: float) -> CoefficientPair:
    # same scaling as the array path; Python's complex division already
    # works in real arithmetic, so subnormal divisors are safe
    dip = complex(params.gamma / 2, params.omega_x - omega)
    cav = complex(params.kappa + params.kappa_s / 2, params.omega_c - omega)
    g = params.g
    if g == 0:
        t = -params.kappa / cav
    else:
        scale = max(abs(dip), g)
        d = complex(dip.real / scale, dip.imag / scale)
        t = -params.kappa * d / (d * cav + g * (g / scale))
    return CoefficientPair(1 + t, t)


def coupled_cavity_coeffs(params: CavityParams, omega) -> CoefficientPair:
    """Reflection and transmission of the dot-coupled cavity (weak excitation)."""
    omega = _check_omega(omega)
    dip = 1j * (params.omega_x - omega) + params.gamma / 2
    cav = 1j * (params.omega_c - omega) + params.kappa + params.kappa_s / 2
    if isinstance(omega, float):
        return _coupled_scalar(params, omega)
    if params.g == 0:
        # dip cancels; also avoids 0/0 at omega = omega_x when gamma = 0
        t = -params.kappa / cav
    else:
        # -kappa*dip / (dip*cav + g^2) with numerator and denominator divided
        # by s = max(|dip|, g): no intermediate can overflow, and an
        # underflowing g^2 cannot turn the dip = 0 limit (exactly 0) into 0/0
        dip = np.asarray(dip, dtype=complex)
        scale = np.maximum(np.abs(dip), params.g)
        d = dip.real / scale + 1j * (dip.imag / scale)
        t = _cdiv(-params.kappa * d, d * cav + params.g * (params.g / scale))
    # r is defined through t; never evaluated independently
    return CoefficientPair(_unwrap(1 + t), _unwrap(t))


def _fidelity(abs_t0, abs_t):
    norm = np.sqrt(abs_t0 ** 2 + abs_t ** 2)
    if np.any(norm == 0):
        raise DegenerateFidelity("|t0| and |t| both vanish; gate fidelity is undefined")
    return abs_t0 / norm


def gate_fidelity(params: CavityParams, omega) -> float:
    """Amplitude fidelity of the full transmission operator against the ideal one."""
    t0 = empty_cavity_coeffs(params, omega).t
    t = coupled_cavity_coeffs(params, omega).t
    f = _fidelity(np.abs(t0), np.abs(t))
    return float(f) if np.ndim(f) == 0 else f


@dataclass(frozen=True)
class SpectraTable:
    """Columns of a frequency (or parameter) sweep.

    ``axis_name`` is ``"omega"`` for frequency sweeps, otherwise the name of
    the swept :class:`CavityParams` field.
    """

    axis: np.ndarray
    abs_r0: np.ndarray
    abs_t0: np.ndarray
    abs_r: np.ndarray
    abs_t: np.ndarray
    fidelity: np.ndarray
    axis_name: str = "omega"

    @property
    def columns(self) -> tuple[str, ...]:
        return (self.axis_name,) + SPECTRA_COLUMNS[1:]

    def rows(self) -> Iterable[tuple[float, ...]]:
        return zip(self.axis, self.abs_r0, self.abs_t0, self.abs_r, self.abs_t, self.fidelity)

    def __len__(self):
        return len(self.axis)

    def write_csv(self, fh: TextIO, metadata: dict | None = None) -> None:
        for key, value in (metadata or {}).items():
            fh.write(f"# {key}={value}\n")
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(self.columns)
        for row in self.rows():
            writer.writerow([format_float(v) for v in row])

    def to_csv(self, path: str | Path | None = None, metadata: dict | None = None) -> str:
        buf = io.StringIO()
        self.write_csv(buf, metadata)
        text = buf.getvalue()
        if path is not None:
            Path(path).write_text(text, encoding="utf-8", newline="\n")
        return text


def format_float(x: float) -> str:
    """17 significant digits, '.' decimal, independent of locale."""
    return format(float(x), ".17g")


def _table(axis, axis_name, r0t0: CoefficientPair, rt: CoefficientPair) -> SpectraTable:
    abs_t0, abs_t = np.abs(r0t0.t), np.abs(rt.t)
    return SpectraTable(
        axis=np.asarray(axis, dtype=float),
        abs_r0=np.abs(r0t0.r),
        abs_t0=abs_t0,
        abs_r=np.abs(rt.r),
        abs_t=abs_t,
        fidelity=_fidelity(abs_t0, abs_t),
        axis_name=axis_name,
    )


def sweep_spectra(params: CavityParams, omega_min: float, omega_max: float, n_points: int) -> SpectraTable:
    """Sample the empty and coupled spectra on a uniform frequency grid."""
    _check_range("omega_min", omega_min, "omega_max", omega_max, n_points)
    omega = np.linspace(omega_min, omega_max, int(n_points))
    return _table(omega, "omega", empty_cavity_coeffs(params, omega), coupled_cavity_coeffs(params, omega))


def sweep_parameter(params: CavityParams, name: str, values, omega: float) -> SpectraTable:
    """Repeat the fixed-frequency evaluation while varying one cavity field.

    Used for coupling-strength and side-leakage scans at a fixed probe.
    """
    if name not in {f.name for f in fields(CavityParams)}:
        raise InvalidParameter(f"unknown cavity parameter {name!r}")
    values = np.asarray(values, dtype=float)
    if values.ndim != 1 or len(values) == 0:
        raise InvalidParameter("values must be a non-empty 1-D sequence")
    r0, t0, r, t = [], [], [], []
    for v in values:
        p = params.with_(**{name: float(v)})
        e, c = empty_cavity_coeffs(p, omega), coupled_cavity_coeffs(p, omega)
        r0.append(e.r), t0.append(e.t), r.append(c.r), t.append(c.t)
    return _table(values, name, CoefficientPair(np.array(r0), np.array(t0)),
                  CoefficientPair(np.array(r), np.array(t)))


def _check_range(lo_name, lo, hi_name, hi, n_points):
    for name, v in ((lo_name, lo), (hi_name, hi)):
        if not math.isfinite(v):
            raise InvalidParameter(f"{name} must be finite")
    if not lo < hi:
        raise InvalidParameter(f"{lo_name} ({lo}) must be smaller than {hi_name} ({hi})")
    if int(n_points) != n_points or n_points < 2:
        raise InvalidParameter(f"n_points must be an integer >= 2, got {n_points}")
