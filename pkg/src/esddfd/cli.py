"""Config-driven command line front end.

    esddfd <command> --config PATH|NAME [--out DIR] [--override KEY=VALUE ...]

Commands: relax, oscillate, fpe, ffpe, props, divformula, mlcheck.  Configs are
YAML documents checked against a strict per-command schema (unknown keys are
errors).  ``NAME`` selects a bundled config (``esddfd list`` shows them).

Exit codes: 0 all configured checks pass, 1 a check failed, 2 config or runtime error.
"""

from __future__ import annotations

import argparse
import csv
import hashlib
import json
import math
import sys
from dataclasses import dataclass, field, replace
from importlib import resources
from pathlib import Path
from typing import Any, Dict, List, Optional, Sequence

import numpy as np
import yaml
from scipy.special import erfcx

from . import __version__
from .fokker_planck import (
    ConstantForce, Free, FpeParams, Grid1D, Harmonic, InitialCondition, SimConfig, SimulationError,
    StabilityError, Tabulated, einstein_relation_check, fit_msd, run, stationary_compare,
)
from .master_equations import (
    TimeGrid, oscillation_amplitude, oscillation_exact, relaxation_exact, solve_oscillation, solve_relaxation,
)
from .measures import NidKind, SolutionFn, Tag
from .nid_calculus import ml_division_residual, property_suite
from .specfun import gamma, ml_two

EXIT_OK, EXIT_FAIL, EXIT_ERROR = 0, 1, 2
COMMANDS = ("relax", "oscillate", "fpe", "ffpe", "props", "divformula", "mlcheck")


class ConfigError(ValueError):
    def __init__(self, path: str, message: str):
        super().__init__(f"config field '{path}': {message}" if path else message)
        self.path = path


# --------------------------------------------------------------------------- schema

REQ = object()


@dataclass(frozen=True)
class F:
    """One schema field: a type tag, a default (``REQ`` if required) and optional choices."""

    kind: str
    default: Any = REQ
    choices: Optional[Sequence[str]] = None


def _num(path, value):
    if isinstance(value, str):
        # YAML 1.1 reads "1e-12" (no dot) as a string
        try:
            value = float(value)
        except ValueError:
            raise ConfigError(path, f"expected a number, got {value!r}") from None
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise ConfigError(path, f"expected a number, got {value!r}")
    value = float(value)
    if not math.isfinite(value):
        raise ConfigError(path, "must be finite")
    return value


def _coerce(path: str, spec: F, value):
    k = spec.kind
    if value is None and spec.default is None:
        return None
    if k == "float":
        return _num(path, value)
    if k == "pos":
        v = _num(path, value)
        if not v > 0.0:
            raise ConfigError(path, f"must be positive, got {v!r}")
        return v
    if k == "nonneg":
        v = _num(path, value)
        if v < 0.0:
            raise ConfigError(path, f"must be >= 0, got {v!r}")
        return v
    if k == "alpha":
        v = _num(path, value)
        if not 0.0 < v <= 1.0:
            raise ConfigError(path, f"must lie in (0, 1], got {v!r}")
        return v
    if k in ("int", "posint", "nonnegint"):
        if isinstance(value, bool) or not isinstance(value, int):
            raise ConfigError(path, f"expected an integer, got {value!r}")
        if k == "posint" and value < 1:
            raise ConfigError(path, "must be >= 1")
        if k == "nonnegint" and value < 0:
            raise ConfigError(path, "must be >= 0")
        return value
    if k == "bool":
        if not isinstance(value, bool):
            raise ConfigError(path, f"expected true/false, got {value!r}")
        return value
    if k == "str":
        if not isinstance(value, str):
            raise ConfigError(path, f"expected a string, got {value!r}")
        if spec.choices and value not in spec.choices:
            raise ConfigError(path, f"must be one of {list(spec.choices)}, got {value!r}")
        return value
    if k in ("floats", "ints", "window"):
        if not isinstance(value, (list, tuple)):
            raise ConfigError(path, f"expected a list, got {value!r}")
        item = "int" if k == "ints" else "float"
        out = [_coerce(f"{path}[{i}]", F(item), v) for i, v in enumerate(value)]
        if k == "window" and (len(out) != 2 or not out[0] < out[1]):
            raise ConfigError(path, "expected [lo, hi] with lo < hi")
        return out
    raise AssertionError(k)


def validate(schema: dict, data: Any, path: str = "") -> dict:
    """Check ``data`` against ``schema``; fill defaults; reject unknown keys."""
    if data is None:
        data = {}
    if not isinstance(data, dict):
        raise ConfigError(path, f"expected a mapping, got {type(data).__name__}")
    unknown = sorted(set(data) - set(schema))
    if unknown:
        where = f"{path}.{unknown[0]}" if path else unknown[0]
        raise ConfigError(where, "unknown key")
    out = {}
    for key, spec in schema.items():
        sub = f"{path}.{key}" if path else key
        if isinstance(spec, dict):
            out[key] = validate(spec, data.get(key), sub)
        elif isinstance(spec, tuple):
            # ("optional", nested schema): absent -> None
            out[key] = None if data.get(key) is None else validate(spec[1], data[key], sub)
        elif isinstance(spec, list):
            # [nested schema]: list of mappings
            items = data.get(key, REQ)
            if items is REQ:
                raise ConfigError(sub, "required")
            if not isinstance(items, list) or not items:
                raise ConfigError(sub, "expected a non-empty list")
            out[key] = [validate(spec[0], item, f"{sub}[{i}]") for i, item in enumerate(items)]
        elif key in data:
            out[key] = _coerce(sub, spec, data[key])
        elif spec.default is REQ:
            raise ConfigError(sub, "required")
        else:
            out[key] = spec.default
    return out


KIND = {
    "tag": F("str", REQ, [t.value for t in Tag]),
    "alpha": F("alpha", 1.0),
    "t0": F("nonneg", 0.0),
    "L0": F("pos", 1.0),
    "k": F("pos", 1.0),
    "lambda_effective": F("pos", None),
    "psi": ("optional", {"type": F("str", REQ, ["linear", "power", "log1p"]), "c": F("pos", 1.0),
                         "p": F("pos", 1.0)}),
}
TIMEGRID = {"t0": F("nonneg", 0.0), "h": F("pos"), "n_steps": F("posint")}
GRID1D = {"x_min": F("float"), "x_max": F("float"), "m_cells": F("int")}
POTENTIAL = {
    "type": F("str", "free", ["free", "constant_force", "harmonic", "tabulated"]),
    "F": F("float", 0.0),
    "kappa": F("pos", 1.0),
    "center": F("float", 0.0),
    "values": F("floats", None),
}
PARAMS = {
    "m": F("pos", 1.0), "eta": F("pos", 1.0), "K": F("pos", None), "beta_thermo": F("pos", 1.0),
    "alpha": F("alpha", 1.0), "lambda_time": F("pos", None), "s_laplace": F("nonneg", 0.0),
    "einstein_consistent": F("bool", False),
}
INITIAL = {
    "shape": F("str", "gaussian", ["gaussian", "mode", "uniform", "zero", "tabulated"]),
    "center": F("float", 0.0), "width": F("pos", 1.0), "mode": F("int", 1), "eps": F("float", 0.5),
    "background": F("float", 1.0), "values": F("floats", None),
}
CHECKS = {
    "mass": ("optional", {"tolerance": F("pos")}),
    "stationary": ("optional", {"tolerance": F("pos", 1e-3), "fixed_point_tolerance": F("pos", None)}),
    "msd_fit": ("optional", {"window": F("window"), "exponent": F("float", None),
                             "exponent_tol": F("pos", 0.05), "prefactor": F("pos", None),
                             "prefactor_rel_tol": F("pos", 0.1)}),
    "msd_slope": ("optional", {"window": F("window"), "slope": F("pos", None), "rel_tol": F("pos", 0.02)}),
    "mode": ("optional", {"mode": F("posint", 1), "tolerance": F("pos", 1e-10)}),
    "einstein": ("optional", {"F": F("float"), "horizon": F("pos"), "tolerance": F("pos", 0.02),
                              "dt": F("pos", 0.01)}),
    "classical_limit": ("optional", {"tolerance": F("pos", 1e-12)}),
    "rl_consistency": ("optional", {"alphas": F("floats", [0.9, 0.99, 0.999, 1.0])}),
}
FPE_BASE = {
    "command": F("str", None),
    "grid": GRID1D,
    "potential": POTENTIAL,
    "params": PARAMS,
    "initial": INITIAL,
    "time": {"dt": F("pos"), "n_steps": F("nonnegint"), "t_start": F("nonneg", None)},
    "bc": F("str", "periodic", ["periodic", "reflecting"]),
    "advection": F("str", "flux", ["flux", "forward", "upwind"]),
    "cadence": F("posint", 1),
    "modes": F("ints", []),
    "x_ref": F("float", None),
    "strict_positivity": F("bool", False),
    "literal_paper_forms": F("bool", False),
    "checks": CHECKS,
}
SCHEMAS = {
    "relax": {
        "command": F("str", None), "kind": KIND, "lambda": F("pos"), "y0": F("float", 1.0),
        "grid": TIMEGRID, "scheme": F("str", "explicit", ["explicit", "implicit"]),
        "tolerance": F("pos", 1e-12),
    },
    "oscillate": {
        "command": F("str", None), "omega": F("pos"), "y0": F("float", 1.0), "v0": F("float", 0.0),
        "grid": TIMEGRID, "seed": F("str", "exact", ["exact", "taylor"]), "tolerance": F("pos", 1e-9),
        "amplitude_tolerance": F("pos", 1e-9),
    },
    "fpe": FPE_BASE,
    "ffpe": {**FPE_BASE, "kind": KIND, "scheme": F("str", "caputo", ["caputo", "rl"]),
             "rl_w0": ("optional", INITIAL)},
    "props": {
        "command": F("str", None), "kinds": [KIND], "lambda": F("pos", 1.0), "t": F("pos", 1.0),
        "h": F("pos", 0.1), "linearity_tol": F("pos", 1e-13), "product_tol": F("pos", 1e-12),
        "constant_tol": F("pos", 1e-13),
    },
    "divformula": {
        "command": F("str", None),
        "alphas": F("floats", [0.3, 0.5, 0.8, 1.0]), "lambdas": F("floats", [0.5, 1.0, 2.0]),
        "ts": F("floats", [0.5, 1.0, 2.0]), "hs": F("floats", [0.5, 0.1, 0.01]),
        "limit_hs": F("floats", [1e-1, 1e-2, 1e-3, 1e-4]),
        "limit_tolerance": F("pos", 1e-3), "identity_tolerance": F("pos", 1e-14),
    },
    "mlcheck": {
        "command": F("str", None),
        "rows": [{"alpha": F("pos"), "beta": F("pos", 1.0), "z": F("float")}],
        "tolerance": F("pos", 1e-10),
    },
}


# --------------------------------------------------------------------------- loading


def bundled_configs() -> List[str]:
    root = resources.files("esddfd") / "configs"
    return sorted(p.name[:-5] for p in root.iterdir() if p.name.endswith(".yaml"))


def load_raw(spec: str) -> dict:
    path = Path(spec)
    if path.is_file():
        text = path.read_text()
    else:
        res = resources.files("esddfd") / "configs" / f"{spec}.yaml"
        if not res.is_file():
            raise ConfigError("", f"no config file or bundled config named {spec!r}")
        text = res.read_text()
    try:
        data = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        raise ConfigError("", f"malformed YAML: {exc}") from exc
    if data is None:
        data = {}
    if not isinstance(data, dict):
        raise ConfigError("", "top level must be a mapping")
    return data


def apply_override(data: dict, item: str) -> None:
    """``a.b.c=VALUE``; VALUE is parsed as YAML (numbers, booleans, lists)."""
    if "=" not in item:
        raise ConfigError("", f"override {item!r} is not KEY=VALUE")
    key, raw = item.split("=", 1)
    parts = key.strip().split(".")
    if not all(parts):
        raise ConfigError(key, "empty key component")
    try:
        value = yaml.safe_load(raw)
    except yaml.YAMLError as exc:
        raise ConfigError(key, f"cannot parse override value: {exc}") from exc
    node = data
    for part in parts[:-1]:
        nxt = node.get(part)
        if nxt is None:
            nxt = node[part] = {}
        if not isinstance(nxt, dict):
            raise ConfigError(key, f"'{part}' is not a section")
        node = nxt
    node[parts[-1]] = value


def load_config(command: str, spec: str, overrides: Sequence[str] = (), strict_positivity: bool = False,
                literal: bool = False) -> tuple:
    raw = load_raw(spec)
    for item in overrides:
        apply_override(raw, item)
    if strict_positivity and command in ("fpe", "ffpe"):
        raw["strict_positivity"] = True
    if literal and command in ("fpe", "ffpe"):
        raw["literal_paper_forms"] = True
    cfg = validate(SCHEMAS[command], raw)
    if cfg.get("command") not in (None, command):
        raise ConfigError("command", f"config is for {cfg['command']!r}, not {command!r}")
    return raw, cfg


def _psi(spec):
    if spec is None:
        return None
    c, p = spec["c"], spec["p"]
    if spec["type"] == "linear":
        return lambda x: c * np.asarray(x, dtype=float)
    if spec["type"] == "power":
        return lambda x: c * np.asarray(x, dtype=float) ** p
    return lambda x: c * np.log1p(np.asarray(x, dtype=float))


def make_kind(k: dict, path: str = "kind") -> NidKind:
    try:
        return NidKind(Tag(k["tag"]), alpha=k["alpha"], t0=k["t0"], L0=k["L0"], k=k["k"],
                       psi=_psi(k["psi"]), lambda_effective=k["lambda_effective"])
    except ValueError as exc:
        raise ConfigError(path, str(exc)) from exc


# --------------------------------------------------------------------------- output


def _fmt(v) -> str:
    if isinstance(v, (bool, np.bool_)):
        return "true" if v else "false"
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        return format(float(v), ".17g")
    return str(v)


def write_csv(path: Path, header: Sequence[str], rows) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(header)
        for row in rows:
            writer.writerow([_fmt(v) for v in row])


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, (np.bool_, bool)):
        return bool(obj)
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        f = float(obj)
        return f if math.isfinite(f) else str(f)
    return obj


@dataclass
class Report:
    command: str
    config: dict
    derived: Dict[str, Any] = field(default_factory=dict)
    checks: List[dict] = field(default_factory=list)
    outputs: List[str] = field(default_factory=list)

    def check(self, name: str, value, threshold, passed: bool, detail: str = "") -> None:
        self.checks.append({"name": name, "value": value, "threshold": threshold, "pass": bool(passed),
                            "detail": detail})

    @property
    def passed(self) -> bool:
        return all(c["pass"] for c in self.checks)

    def manifest(self) -> dict:
        canon = json.dumps(_jsonable(self.config), sort_keys=True, separators=(",", ":"))
        return _jsonable({
            "command": self.command, "version": __version__, "config": self.config,
            "config_hash": hashlib.sha256(canon.encode()).hexdigest(), "derived": self.derived,
            "checks": self.checks, "all_pass": self.passed, "outputs": self.outputs,
        })


# --------------------------------------------------------------------------- commands


def cmd_relax(cfg: dict, out: Path, report: Report) -> None:
    kind = make_kind(cfg["kind"])
    g = cfg["grid"]
    grid = TimeGrid(g["t0"], g["h"], g["n_steps"])
    series = solve_relaxation(kind, cfg["lambda"], cfg["y0"], grid, cfg["scheme"])
    exact = relaxation_exact(kind, cfg["lambda"], cfg["y0"], grid)
    err = np.abs(series.values - exact)
    with np.errstate(divide="ignore", invalid="ignore"):
        rel = np.where(exact != 0.0, err / np.abs(exact), np.where(err == 0.0, 0.0, np.inf))
    path = out / "relax.csv"
    write_csv(path, ["t", "y_numeric", "y_exact", "abs_err", "rel_err"],
              zip(grid.times, series.values, exact, err, rel))
    report.outputs.append(path.name)
    report.derived["mu1_at_t0"] = float(SolutionFn(kind, cfg["lambda"]).decrement(g["t0"], g["h"]) /
                                        kind.rate(cfg["lambda"]))
    report.check("max_rel_err", float(rel.max()), cfg["tolerance"], rel.max() <= cfg["tolerance"])


def cmd_oscillate(cfg: dict, out: Path, report: Report) -> None:
    g = cfg["grid"]
    grid = TimeGrid(g["t0"], g["h"], g["n_steps"])
    omega = cfg["omega"]
    series = solve_oscillation(omega, cfg["y0"], cfg["v0"], grid, cfg["seed"])
    exact = oscillation_exact(omega, cfg["y0"], cfg["v0"], grid)
    amp0 = math.hypot(cfg["y0"], cfg["v0"] / omega)
    err = np.abs(series.values - exact)
    rel = err / amp0 if amp0 > 0.0 else err
    path = out / "oscillate.csv"
    write_csv(path, ["t", "y_numeric", "y_exact", "abs_err", "rel_err"],
              zip(grid.times, series.values, exact, err, rel))
    report.outputs.append(path.name)
    report.derived["amplitude"] = amp0
    report.check("max_rel_err", float(rel.max()), cfg["tolerance"], rel.max() <= cfg["tolerance"],
                 "error relative to the initial amplitude")
    amp = oscillation_amplitude(series, omega)
    drift = float(np.max(np.abs(amp - amp0)))
    report.check("amplitude_drift", drift, cfg["amplitude_tolerance"], drift <= cfg["amplitude_tolerance"])


def _sim_config(cfg: dict, command: str) -> SimConfig:
    try:
        grid = Grid1D(cfg["grid"]["x_min"], cfg["grid"]["x_max"], cfg["grid"]["m_cells"])
    except ValueError as exc:
        raise ConfigError("grid", str(exc)) from exc
    p = dict(cfg["params"])
    if command == "fpe" and p["alpha"] != 1.0:
        raise ConfigError("params.alpha", "fpe is the alpha = 1 model; use ffpe")
    if p["K"] is None:
        p["K"] = 1.0 / (p["beta_thermo"] * p["m"] * p["eta"]) if p["einstein_consistent"] else 1.0
    try:
        params = FpeParams(**p)
    except ValueError as exc:
        raise ConfigError("params", str(exc)) from exc
    pot = cfg["potential"]
    if pot["type"] == "free":
        potential = Free()
    elif pot["type"] == "constant_force":
        potential = ConstantForce(pot["F"])
    elif pot["type"] == "harmonic":
        potential = Harmonic(pot["kappa"], pot["center"])
    else:
        if pot["values"] is None:
            raise ConfigError("potential.values", "required for a tabulated potential")
        try:
            potential = Tabulated(grid, pot["values"])
        except ValueError as exc:
            raise ConfigError("potential.values", str(exc)) from exc

    def initial(spec, path):
        values = tuple(spec["values"]) if spec["values"] is not None else None
        ic = InitialCondition(spec["shape"], spec["center"], spec["width"], spec["mode"], spec["eps"],
                              spec["background"], values)
        try:
            ic.build(grid)
        except ValueError as exc:
            raise ConfigError(path, str(exc)) from exc
        return ic

    kind = None
    scheme = "caputo"
    rl_w0 = None
    if command == "ffpe":
        kind = make_kind(cfg["kind"])
        if kind.alpha != params.alpha:
            raise ConfigError("kind.alpha", f"must equal params.alpha = {params.alpha}")
        scheme = cfg["scheme"]
        if cfg["rl_w0"] is not None:
            rl_w0 = initial(cfg["rl_w0"], "rl_w0")
    advection = "forward" if cfg["literal_paper_forms"] else cfg["advection"]
    checks = cfg["checks"]
    keep = checks["classical_limit"] is not None or checks["rl_consistency"] is not None
    try:
        return SimConfig(
            grid=grid, params=params, potential=potential, kind=kind,
            initial=initial(cfg["initial"], "initial"), dt=cfg["time"]["dt"], n_steps=cfg["time"]["n_steps"],
            t_start=cfg["time"]["t_start"], bc=cfg["bc"], scheme=scheme, advection=advection,
            literal_paper_forms=cfg["literal_paper_forms"], strict_positivity=cfg["strict_positivity"],
            cadence=cfg["cadence"], modes=tuple(cfg["modes"]), x_ref=cfg["x_ref"], keep_fields=keep,
            rl_w0=rl_w0)
    except ValueError as exc:
        raise ConfigError("", str(exc)) from exc


def _mode_check(result, mode: int, tol: float, report: Report) -> None:
    obs = result.observables
    amp = obs.mode_amp[mode]
    cfg = result.config
    if cfg.cadence != 1:
        raise ConfigError("checks.mode", "needs cadence = 1 (one sample per step)")
    lam = result.lambda_time
    if cfg.params.alpha == 1.0:
        ratio = amp[1:] / amp[:-1]
        expected = math.exp(-lam * cfg.dt)
        spread = float(np.max(np.abs(ratio - ratio[0]))) if ratio.size else 0.0
        gap = float(np.max(np.abs(ratio - expected))) if ratio.size else 0.0
        report.derived["mode_ratio"] = float(ratio[0]) if ratio.size else None
        report.check("mode_ratio_constant", spread, tol, spread <= tol)
        report.check("mode_ratio_vs_exp", gap, tol, gap <= tol)
    else:
        u = np.asarray(SolutionFn(cfg.kind, lam)(obs.times), dtype=float)
        expected = amp[0] * u / u[0]
        err = float(np.max(np.abs(amp - expected)) / amp[0])
        report.check("mode_amp_vs_ml", err, tol, err <= tol)


def cmd_fpe(cfg: dict, out: Path, report: Report, command: str = "fpe") -> None:
    sim = _sim_config(cfg, command)
    checks = cfg["checks"]
    try:
        result = run(sim)
    except SimulationError as exc:
        cause = exc.cause
        if isinstance(cause, StabilityError):
            raise RuntimeError(f"stability gate failed at step {exc.step}: margin {cause.margin:.6g} >= 1") from exc
        raise
    obs = result.observables
    cols = obs.columns()
    path = out / "observables.csv"
    write_csv(path, list(cols), zip(*cols.values()))
    report.outputs.append(path.name)
    path = out / "final_field.csv"
    write_csv(path, ["x", "W"], zip(sim.grid.nodes, result.final.w))
    report.outputs.append(path.name)
    report.derived.update({
        "lambda_time": result.lambda_time, "mu_t_first": float(result.mu_t[0]) if result.mu_t.size else None,
        "mu_diff": result.mu_diff, "dx": sim.grid.dx, "stability_gate_max": result.max_gate,
        "mass_drift_max": result.max_mass_drift, "effective_time": result.effective_time,
        "t_end": result.final.time,
    })
    if sim.scheme == "rl":
        report.derived["rl_shift_total"] = result.shift_total

    if checks["mass"] is not None:
        tol = checks["mass"]["tolerance"]
        report.check("mass_drift", result.max_mass_drift, tol, result.max_mass_drift <= tol)
    if checks["stationary"] is not None:
        st = stationary_compare(result.final, sim.potential, sim.params.beta_thermo)
        tol = checks["stationary"]["tolerance"]
        report.derived["stationary_l1"] = st["l1"]
        report.check("stationary_linf_rel", st["linf_rel"], tol, st["linf_rel"] <= tol)
        fp_tol = checks["stationary"]["fixed_point_tolerance"]
        if fp_tol is not None:
            one = run(replace(sim, initial=InitialCondition("tabulated", values=tuple(result.final.w)),
                              n_steps=1, t_start=result.final.time, keep_fields=False, rl_w0=None))
            change = float(np.max(np.abs(one.final.w - result.final.w)))
            report.check("stationary_fixed_point", change, fp_tol, change <= fp_tol)
    if checks["msd_fit"] is not None:
        c = checks["msd_fit"]
        fit = fit_msd(obs, tuple(c["window"]))
        alpha = sim.params.alpha
        exp_target = alpha if c["exponent"] is None else c["exponent"]
        pre_target = 2.0 * sim.params.K / gamma(1.0 + alpha) if c["prefactor"] is None else c["prefactor"]
        report.derived.update({"msd_exponent": fit.exponent, "msd_prefactor": fit.prefactor,
                               "msd_points": fit.n_points})
        report.check("msd_exponent", fit.exponent, [exp_target, c["exponent_tol"]],
                     abs(fit.exponent - exp_target) <= c["exponent_tol"])
        rel = abs(fit.prefactor / pre_target - 1.0)
        report.check("msd_prefactor_rel", rel, c["prefactor_rel_tol"], rel <= c["prefactor_rel_tol"])
    if checks["msd_slope"] is not None:
        c = checks["msd_slope"]
        lo, hi = c["window"]
        sel = (obs.times >= lo) & (obs.times <= hi)
        if np.count_nonzero(sel) < 10:
            raise ConfigError("checks.msd_slope.window", "fewer than 10 samples in window")
        slope = float(np.polyfit(obs.times[sel], obs.msd[sel] - obs.msd[0], 1)[0])
        target = 2.0 * sim.params.K if c["slope"] is None else c["slope"]
        rel = abs(slope / target - 1.0)
        report.derived["msd_slope"] = slope
        report.check("msd_slope_rel", rel, c["rel_tol"], rel <= c["rel_tol"])
    if checks["mode"] is not None:
        mode = checks["mode"]["mode"]
        if mode not in obs.mode_amp:
            raise ConfigError("checks.mode.mode", f"mode {mode} is not in 'modes'")
        _mode_check(result, mode, checks["mode"]["tolerance"], report)
    if checks["einstein"] is not None:
        c = checks["einstein"]
        ein = einstein_relation_check(sim.params, c["F"], c["horizon"], kind=sim.kind, dt=c["dt"])
        report.derived["einstein_mean_shift"] = ein.mean_shift
        report.derived["einstein_msd_free"] = ein.msd_free
        if ein.ratio is None:
            report.check("einstein_ratio", None, c["tolerance"], False, ein.note)
        else:
            report.check("einstein_ratio", ein.ratio, [1.0, c["tolerance"]], abs(ein.ratio - 1.0) <= c["tolerance"])
    if checks["classical_limit"] is not None:
        if sim.params.alpha != 1.0:
            raise ConfigError("checks.classical_limit", "needs alpha = 1")
        ref = run(replace(sim, kind=None, scheme="caputo", t_start=sim.start_time, rl_w0=None))
        worst = 0.0
        for a, b in zip(result.fields, ref.fields):
            scale = np.maximum(np.abs(b), np.finfo(float).tiny)
            worst = max(worst, float(np.max(np.abs(a - b) / scale)))
        report.check("classical_limit_rel", worst, checks["classical_limit"]["tolerance"],
                     worst <= checks["classical_limit"]["tolerance"])
    if checks["rl_consistency"] is not None:
        _rl_checks(sim, checks["rl_consistency"]["alphas"], report)
    report.outputs.sort()


def _rl_checks(sim: SimConfig, alphas: Sequence[float], report: Report) -> None:
    if sim.kind is None:
        raise ConfigError("checks.rl_consistency", "needs an ffpe config")
    start = sim.dt if sim.t_start is None else sim.t_start
    zero = InitialCondition("zero")
    rl = run(replace(sim, scheme="rl", rl_w0=zero, t_start=start, keep_fields=True))
    cap = run(replace(sim, scheme="caputo", rl_w0=None, t_start=start, keep_fields=True))
    identical = all(np.array_equal(a, b) for a, b in zip(rl.fields, cap.fields))
    report.check("rl_zero_source_bitwise", identical, True, identical)
    totals = []
    for a in alphas:
        kind = replace(sim.kind, alpha=a)
        params = replace(sim.params, alpha=a)
        r = run(replace(sim, kind=kind, params=params, scheme="rl", rl_w0=None, t_start=start, keep_fields=False))
        totals.append(r.shift_total)
    report.derived["rl_shift_totals"] = dict(zip([str(a) for a in alphas], totals))
    monotone = all(b <= a for a, b in zip(totals, totals[1:]))
    report.check("rl_shift_monotone_to_zero", totals, "non-increasing", monotone and (alphas[-1] < 1.0 or totals[-1] == 0.0))


def _props_f(t):
    return 2.0 + math.sin(t)


def _props_g(t):
    return 1.0 + t * t


def cmd_props(cfg: dict, out: Path, report: Report) -> None:
    rows = []
    for i, k in enumerate(cfg["kinds"]):
        kind = make_kind(k, f"kinds[{i}]")
        rep = property_suite(kind, _props_f, _props_g, cfg["lambda"], cfg["t"], cfg["h"])
        label = kind.tag.value if kind.alpha == 1.0 else f"{kind.tag.value}(alpha={kind.alpha:g})"
        tols = {"linearity": cfg["linearity_tol"], "product_rule_discrete": cfg["product_tol"],
                "quotient_rule_discrete": cfg["product_tol"], "constant": cfg["constant_tol"]}
        for name, value in rep.residuals.items():
            tol = tols.get(name)
            ok = True if tol is None else value <= tol
            rows.append((label, name, value, "" if tol is None else tol, ok))
            if tol is not None:
                report.check(f"{label}:{name}", value, tol, ok)
        for name, seq in rep.limits.items():
            ok = rep.limit_ok(name)
            rows.append((label, name, seq[-1], "shrinks with h", ok))
            report.check(f"{label}:{name}", seq, "shrinks with h", ok)
        # constants once more with f = g = const: every residual must vanish
        const = property_suite(kind, lambda s: 1.5, lambda s: -0.5, cfg["lambda"], cfg["t"], cfg["h"])
        worst = max(const.residuals.values())
        rows.append((label, "all_residuals_constant_inputs", worst, 0.0, worst == 0.0))
        report.check(f"{label}:constant_inputs", worst, 0.0, worst == 0.0)
    path = out / "props.csv"
    write_csv(path, ["kind", "property", "residual", "threshold", "pass"], rows)
    report.outputs.append(path.name)


def cmd_divformula(cfg: dict, out: Path, report: Report) -> None:
    rows = []
    for a in cfg["alphas"]:
        for lam in cfg["lambdas"]:
            for t in cfg["ts"]:
                for h in cfg["hs"]:
                    res = ml_division_residual(a, lam, t, h)
                    rows.append((a, lam, t, h, res))
                    if a == 1.0:
                        report.check(f"identity a=1 lam={lam:g} t={t:g} h={h:g}", res,
                                     cfg["identity_tolerance"], res <= cfg["identity_tolerance"])
    path = out / "divformula.csv"
    write_csv(path, ["alpha", "lambda", "t", "h", "residual"], rows)
    report.outputs.append(path.name)

    hs = sorted(cfg["limit_hs"], reverse=True)
    trend = []
    for a in cfg["alphas"]:
        for lam in cfg["lambdas"]:
            for t in cfg["ts"]:
                seq = [ml_division_residual(a, lam, t, h) for h in hs]
                if a == 1.0:
                    ok = max(seq) <= cfg["identity_tolerance"]
                else:
                    ok = all(r2 < r1 for r1, r2 in zip(seq, seq[1:])) and seq[-1] <= cfg["limit_tolerance"]
                trend.append((a, lam, t, *seq, ok))
                report.check(f"limit a={a:g} lam={lam:g} t={t:g}", seq[-1], cfg["limit_tolerance"], ok)
    path = out / "divformula_limit.csv"
    write_csv(path, ["alpha", "lambda", "t", *[f"h={h:g}" for h in hs], "monotone_to_zero"], trend)
    report.outputs.append(path.name)


def ml_oracle(alpha: float, beta: float, z: float):
    """Closed-form value of E_{alpha,beta}(z) and the name of the oracle, or (None, None)."""
    if z == 0.0:
        return 1.0 / gamma(beta), "1/Gamma(beta)"
    if alpha == 1.0 and beta == 1.0:
        return math.exp(z), "exp"
    if alpha == 1.0 and beta == 2.0:
        return math.expm1(z) / z, "expm1(z)/z"
    if alpha == 0.5 and beta == 1.0 and z < 0.0:
        return float(erfcx(-z)), "erfcx"
    if alpha == 2.0 and beta == 1.0:
        return (math.cos(math.sqrt(-z)) if z < 0.0 else math.cosh(math.sqrt(z))), "cos/cosh"
    if alpha == 2.0 and beta == 2.0:
        r = math.sqrt(abs(z))
        return (math.sin(r) / r if z < 0.0 else math.sinh(r) / r), "sin/sinh"
    return None, None


def cmd_mlcheck(cfg: dict, out: Path, report: Report) -> None:
    rows = []
    for i, row in enumerate(cfg["rows"]):
        a, b, z = row["alpha"], row["beta"], row["z"]
        ref, name = ml_oracle(a, b, z)
        if ref is None:
            raise ConfigError(f"rows[{i}]", f"no closed-form oracle for (alpha={a}, beta={b}, z={z})")
        value = ml_two(a, b, z)
        rel = abs(value - ref) / abs(ref) if ref != 0.0 else abs(value)
        ok = rel <= cfg["tolerance"]
        rows.append((a, b, z, value, ref, name, rel, ok))
        report.check(f"E_{a:g},{b:g}({z:g})", rel, cfg["tolerance"], ok)
    path = out / "mlcheck.csv"
    write_csv(path, ["alpha", "beta", "z", "value", "oracle", "oracle_name", "rel_err", "pass"], rows)
    report.outputs.append(path.name)


HANDLERS = {
    "relax": cmd_relax,
    "oscillate": cmd_oscillate,
    "fpe": cmd_fpe,
    "ffpe": lambda cfg, out, report: cmd_fpe(cfg, out, report, "ffpe"),
    "props": cmd_props,
    "divformula": cmd_divformula,
    "mlcheck": cmd_mlcheck,
}


# --------------------------------------------------------------------------- entry point


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="esddfd", description="Exact-denominator finite difference solver kit")
    sub = parser.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        p = sub.add_parser(name)
        p.add_argument("--config", required=True, help="YAML config path or bundled config name")
        p.add_argument("--out", default=None, help="output directory (default: ./out/<config name>)")
        p.add_argument("--override", action="append", default=[], metavar="KEY=VALUE",
                       help="set a config value by dotted key; repeatable")
        p.add_argument("--strict-positivity", action="store_true",
                       help="reject steps failing the stability gate and any negative density")
        p.add_argument("--literal-paper-forms", action="store_true",
                       help="forward advection stencil with the printed advection-denominator grouping")
    sub.add_parser("list", help="list bundled configs")
    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    if args.command == "list":
        for name in bundled_configs():
            print(name)
        return EXIT_OK
    try:
        raw, cfg = load_config(args.command, args.config, args.override, args.strict_positivity,
                               args.literal_paper_forms)
        out = Path(args.out) if args.out else Path("out") / Path(args.config).stem
        out.mkdir(parents=True, exist_ok=True)
        report = Report(args.command, cfg)
        HANDLERS[args.command](cfg, out, report)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_ERROR
    except (ValueError, ArithmeticError, RuntimeError, OSError) as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_ERROR
    report.outputs.append("manifest.json")
    report.outputs.sort()
    with open(out / "manifest.json", "w") as fh:
        json.dump(report.manifest(), fh, indent=2, sort_keys=True)
        fh.write("\n")
    width = max((len(c["name"]) for c in report.checks), default=0)
    for c in report.checks:
        value = c["value"]
        shown = _fmt(value) if isinstance(value, (float, int)) else json.dumps(_jsonable(value))
        print(f"{'PASS' if c['pass'] else 'FAIL'}  {c['name']:<{width}}  {shown}")
    print(f"{args.command}: {'all checks pass' if report.passed else 'CHECKS FAILED'}; outputs in {out}")
    return EXIT_OK if report.passed else EXIT_FAIL


if __name__ == "__main__":
    sys.exit(main())
