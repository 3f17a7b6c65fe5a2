"""
Command-line front end.

    spingate spectra       --config cfg.json [--out spectra.csv]
    spingate protocol      --config cfg.json [--seed N] [--trials N] [--dump-state]
    spingate decoherence   --config cfg.json [--out dephasing.csv]
    spingate gate describe --config cfg.json

Exit codes: 0 success, 2 configuration or usage error, 3 numerical-domain
error. Data goes to ``--out`` (or stdout); diagnostics go to stderr.
"""
from __future__ import annotations

import argparse
import csv
import hashlib
import io
import json
import math
import os
import secrets
import sys
import warnings
from dataclasses import dataclass
from pathlib import Path

import jsonschema
import numpy as np

from . import __version__
from .cavity import CavityParams, format_float, sweep_parameter, sweep_spectra
from .errors import InvalidParameter, NonNormalizedInput, SpinGateError
from .gate import GateMode, build_gate
from . import protocols as P

EXIT_CONFIG = 2
EXIT_NUMERIC = 3

_number = {"type": "number"}
_amp = {"oneOf": [_number, {"type": "array", "items": _number, "minItems": 2, "maxItems": 2}]}

CONFIG_SCHEMA = {
    "type": "object",
    "properties": {
        "seed": {"type": "integer", "minimum": 0, "maximum": 2 ** 64 - 1},
        "trials": {"type": "integer", "minimum": 0},
        "workers": {"type": "integer", "minimum": 1},
        "cavities": {
            "type": "object",
            "additionalProperties": {
                "type": "object",
                "properties": {
                    "g": _number, "kappa": _number, "kappa_s": _number, "gamma": _number,
                    "omega_c": _number, "omega_x": _number,
                    "units": {"enum": ["kappa", "ueV"]},
                },
                "required": ["g"],
                "additionalProperties": False,
            },
        },
        "spectra": {
            "type": "object",
            "properties": {
                "cavity": {"type": "string"},
                "omega_min": _number, "omega_max": _number,
                "parameter": {"enum": ["g", "kappa_s", "gamma"]},
                "min": _number, "max": _number, "omega": _number,
                "n_points": {"type": "integer"},
            },
            "required": ["cavity", "n_points"],
            "additionalProperties": False,
        },
        "protocol": {
            "type": "object",
            "properties": {
                "name": {"type": "string"},
                "cavity": {"type": "string"},
                "cavities": {"type": "array", "items": {"type": "string"}},
                "mode": {"enum": ["ideal", "full"]},
                "omega": _number,
                "inputs": {"type": "array", "items": {"type": "array", "items": _amp, "minItems": 2, "maxItems": 3}},
                "correct": {"type": "boolean"},
                "qnd": {"enum": ["projective", "physical"]},
                "herald": {"type": "string"},
                "dephasing": {
                    "type": "object",
                    "properties": {"t": _number, "T2": _number, "T1": _number},
                    "required": ["t", "T2"],
                    "additionalProperties": False,
                },
            },
            "required": ["name", "inputs"],
            "additionalProperties": False,
        },
        "decoherence": {
            "type": "object",
            "properties": {"T2": _number, "T1": _number, "t_min": _number, "t_max": _number,
                           "n_points": {"type": "integer"}},
            "required": ["T2", "t_max", "n_points"],
            "additionalProperties": False,
        },
        "gate": {
            "type": "object",
            "properties": {"cavity": {"type": "string"}, "omega": _number, "mode": {"enum": ["ideal", "full"]}},
            "required": ["cavity"],
            "additionalProperties": False,
        },
    },
}

PROTOCOLS = ("qnd_spin_measurement", "entangle_spins", "ghz_spins", "entangle_photons",
             "ghz_photons", "photon_to_spin", "spin_to_photon")


class ConfigError(Exception):
    pass


@dataclass(frozen=True)
class _Cavity:
    params: CavityParams
    scale: float  # divide user frequencies by this to reach kappa units


def _err(msg: str):
    print(f"spingate: error: {msg}", file=sys.stderr)


def load_config(path: str) -> dict:
    try:
        cfg = json.loads(Path(path).read_text(encoding="utf-8"))
    except (OSError, json.JSONDecodeError) as e:
        raise ConfigError(f"cannot read config {path}: {e}") from e
    try:
        jsonschema.validate(cfg, CONFIG_SCHEMA)
    except jsonschema.ValidationError as e:
        where = "/".join(str(p) for p in e.absolute_path) or "<root>"
        raise ConfigError(f"config field {where}: {e.message}") from e
    return cfg


def _cavity(cfg: dict, name: str) -> _Cavity:
    blocks = cfg.get("cavities", {})
    if name not in blocks:
        raise ConfigError(f"unknown cavity {name!r}; defined: {sorted(blocks)}")
    block = dict(blocks[name])
    units = block.pop("units", "kappa")
    try:
        if units == "ueV":
            if "kappa" not in block:
                raise ConfigError(f"cavities/{name}: ueV units need a reference kappa")
            return _Cavity(CavityParams.from_uev(**block), float(block["kappa"]))
        return _Cavity(CavityParams(**block), 1.0)
    except InvalidParameter as e:
        raise ConfigError(f"cavities/{name}: {e}") from e


def _complex(x) -> complex:
    return complex(x[0], x[1]) if isinstance(x, list) else complex(x)


def _meta(cfg: dict, seed: int, command: str) -> dict:
    canon = json.dumps(cfg, sort_keys=True, separators=(",", ":"))
    return {
        "tool": "spingate",
        "version": __version__,
        "command": command,
        "config_sha256": hashlib.sha256(canon.encode()).hexdigest(),
        "seed": seed,
    }


def _emit(text: str, out: str | None):
    if out:
        Path(out).write_text(text, encoding="utf-8", newline="\n")
    else:
        sys.stdout.write(text)


def _dump_json(obj) -> str:
    return json.dumps(obj, indent=2, sort_keys=True, allow_nan=False) + "\n"


# --- subcommands ------------------------------------------------------------------

def cmd_spectra(cfg: dict, seed: int, out: str | None) -> int:
    if "spectra" not in cfg:
        raise ConfigError("config has no 'spectra' block")
    sp = cfg["spectra"]
    cav = _cavity(cfg, sp["cavity"])
    try:
        if "parameter" in sp:
            for key in ("min", "max"):
                if key not in sp:
                    raise ConfigError(f"spectra/{key} is required for a parameter sweep")
            if not sp["min"] < sp["max"] or sp["n_points"] < 2:
                raise ConfigError(f"spectra/min ({sp['min']}) must be smaller than spectra/max ({sp['max']}) "
                                  "and spectra/n_points >= 2")
            values = np.linspace(sp["min"], sp["max"], sp["n_points"]) / cav.scale
            table = sweep_parameter(cav.params, sp["parameter"], values, sp.get("omega", 0.0) / cav.scale)
        else:
            for key in ("omega_min", "omega_max"):
                if key not in sp:
                    raise ConfigError(f"spectra/{key} is required")
            table = sweep_spectra(cav.params, sp["omega_min"] / cav.scale, sp["omega_max"] / cav.scale,
                                  sp["n_points"])
    except InvalidParameter as e:
        raise ConfigError(f"spectra: {e}") from e
    _emit(table.to_csv(metadata=_meta(cfg, seed, "spectra")), out)
    return 0


def _gates_for(cfg, pr, n, mode):
    names = pr.get("cavities") or [pr.get("cavity")] * n
    if len(names) != n or None in names:
        raise ConfigError(f"protocol/cavities must name {n} cavities")
    gates = []
    for name in names:
        cav = _cavity(cfg, name)
        gates.append(build_gate(cav.params, pr.get("omega", 0.0) / cav.scale, mode))
    return gates


def run_protocol(cfg: dict, seed: int, trials: int, workers: int = 1):
    if "protocol" not in cfg:
        raise ConfigError("config has no 'protocol' block")
    pr = cfg["protocol"]
    name = pr["name"]
    if name not in PROTOCOLS:
        raise ConfigError(f"protocol/name: unknown protocol {name!r}; choose from {', '.join(PROTOCOLS)}")
    mode = GateMode(pr.get("mode", "ideal"))
    inputs = [[_complex(x) for x in item] for item in pr["inputs"]]
    kw = dict(trials=trials, seed=seed, workers=workers, herald=pr.get("herald"))
    rng = np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(2 ** 32,)))
    if name in ("qnd_spin_measurement", "photon_to_spin", "spin_to_photon"):
        if len(inputs) != 1 or len(inputs[0]) != 2:
            raise ConfigError(f"protocol/inputs: {name} takes one [alpha, beta] pair")
        (gate,) = _gates_for(cfg, pr, 1, mode)
        fn = getattr(P, name)
        if name != "qnd_spin_measurement":
            kw["correct"] = pr.get("correct", False)
        if name == "spin_to_photon":
            kw["qnd"] = pr.get("qnd", "projective")
        return fn(tuple(inputs[0]), gate, rng, **kw)
    if name in ("entangle_spins", "ghz_spins"):
        if any(len(x) != 2 for x in inputs):
            raise ConfigError("protocol/inputs: spin inputs are [alpha, beta] pairs")
        if name == "entangle_spins" and len(inputs) != 2:
            raise ConfigError("protocol/inputs: entangle_spins takes exactly two spins")
        gates = _gates_for(cfg, pr, len(inputs), mode)
        kw["correct"] = pr.get("correct", False)
        if name == "ghz_spins":
            return P.ghz_spins([tuple(x) for x in inputs], gates, rng, **kw)
        return P.entangle_spins(tuple(inputs[0]), tuple(inputs[1]), gates[0], gates[1], rng, **kw)
    # photon protocols
    if "cavity" not in pr:
        raise ConfigError(f"protocol/cavity is required for {name}")
    cav = _cavity(cfg, pr["cavity"])
    photons = []
    for item in inputs:
        a, b = item[0], item[1]
        w = item[2].real / cav.scale if len(item) == 3 else pr.get("omega", 0.0) / cav.scale
        photons.append((a, b, w))
    if name == "entangle_photons" and len(photons) != 2:
        raise ConfigError("protocol/inputs: entangle_photons takes exactly two photons")
    deph = None
    if "dephasing" in pr:
        d = pr["dephasing"]
        try:
            deph = P.DephasingParams(d["t"], d["T2"], d.get("T1", math.inf))
        except InvalidParameter as e:
            raise ConfigError(f"protocol/dephasing: {e}") from e
    out = P.ghz_photons(photons, cav.params, rng, mode=mode, correct=pr.get("correct", False),
                        dephasing=deph, qnd=pr.get("qnd", "projective"), **kw)
    if name == "entangle_photons":
        out.protocol = name
    return out


def cmd_protocol(cfg: dict, seed: int, trials: int, out: str | None, dump_state: bool, workers: int = 1) -> int:
    outcome = run_protocol(cfg, seed, trials, workers)
    report = {"meta": _meta(cfg, seed, "protocol"), **outcome.to_dict(dump_state=dump_state)}
    _emit(_dump_json(report), out)
    return 0


def cmd_decoherence(cfg: dict, seed: int, out: str | None) -> int:
    if "decoherence" not in cfg:
        raise ConfigError("config has no 'decoherence' block")
    d = cfg["decoherence"]
    t_min, t_max, n = d.get("t_min", 0.0), d["t_max"], d["n_points"]
    if not d["T2"] > 0:
        raise ConfigError(f"decoherence/T2 must be > 0, got {d['T2']}")
    if not (0 <= t_min < t_max) or n < 2:
        raise ConfigError(f"decoherence/t_min ({t_min}) must satisfy 0 <= t_min < t_max ({t_max}) "
                          "and decoherence/n_points >= 2")
    buf = io.StringIO()
    for k, v in _meta(cfg, seed, "decoherence").items():
        buf.write(f"# {k}={v}\n")
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["t", "offdiag", "fidelity"])
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        for t in np.linspace(t_min, t_max, n):
            p = P.DephasingParams(float(t), d["T2"], d.get("T1", math.inf))
            rho = P.spin_dephase(p)
            w.writerow([format_float(t), format_float(rho.matrix[0, 1].real),
                        format_float(P.entanglement_fidelity(p))])
    _emit(buf.getvalue(), out)
    return 0


def cmd_gate_describe(cfg: dict, seed: int, out: str | None) -> int:
    if "gate" not in cfg:
        raise ConfigError("config has no 'gate' block")
    g = cfg["gate"]
    cav = _cavity(cfg, g["cavity"])
    op = build_gate(cav.params, g.get("omega", 0.0) / cav.scale, g.get("mode", "full"))
    _emit(_dump_json({"meta": _meta(cfg, seed, "gate describe"), "gate": op.to_dict()}), out)
    return 0


# --- entry point ------------------------------------------------------------------

def _parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", required=True, help="JSON scenario file")
    common.add_argument("--seed", type=int, help="unsigned 64-bit master seed (overrides config)")
    common.add_argument("--out", help="output path (default: stdout)")

    ap = argparse.ArgumentParser(prog="spingate", description=__doc__.split("\n\n")[0].strip())
    ap.add_argument("--version", action="version", version=f"spingate {__version__}")
    sub = ap.add_subparsers(dest="command", required=True)
    sub.add_parser("spectra", parents=[common], help="transmission/reflection spectra CSV")
    p = sub.add_parser("protocol", parents=[common], help="run a heralded protocol, JSON report")
    p.add_argument("--trials", type=int, help="Monte Carlo trials (overrides config)")
    p.add_argument("--workers", type=int, help="threads for Monte Carlo chunks")
    p.add_argument("--dump-state", action="store_true", help="include the heralded state in the report")
    sub.add_parser("decoherence", parents=[common], help="dephasing fidelity curve CSV")
    g = sub.add_parser("gate", help="gate inspection")
    gsub = g.add_subparsers(dest="gate_command", required=True)
    gsub.add_parser("describe", parents=[common], help="print the transmission operator as JSON")
    return ap


def main(argv=None) -> int:
    args = _parser().parse_args(argv)
    try:
        cfg = load_config(args.config)
        seed = args.seed if args.seed is not None else cfg.get("seed")
        if seed is None:
            seed = secrets.randbits(64)
            print(f"spingate: no seed given, using {seed}", file=sys.stderr)
        if not 0 <= seed < 2 ** 64:
            raise ConfigError(f"seed must be an unsigned 64-bit integer, got {seed}")
        if args.command == "spectra":
            return cmd_spectra(cfg, seed, args.out)
        if args.command == "protocol":
            trials = args.trials if args.trials is not None else cfg.get("trials", 0)
            if trials < 0:
                raise ConfigError("trials must be >= 0")
            workers = args.workers or cfg.get("workers", 1)
            return cmd_protocol(cfg, seed, trials, args.out, args.dump_state, workers)
        if args.command == "decoherence":
            return cmd_decoherence(cfg, seed, args.out)
        return cmd_gate_describe(cfg, seed, args.out)
    except (ConfigError, InvalidParameter, NonNormalizedInput) as e:
        _err(str(e))
        return EXIT_CONFIG
    except (ArithmeticError, SpinGateError) as e:
        _err(f"numerical error: {e}")
        return EXIT_NUMERIC
    except BrokenPipeError:
        # reader went away (e.g. piped into head); silence the flush at exit
        os.dup2(os.open(os.devnull, os.O_WRONLY), sys.stdout.fileno())
        return 1


if __name__ == "__main__":
    sys.exit(main())
