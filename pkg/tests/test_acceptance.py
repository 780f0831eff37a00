"""Acceptance criteria, one test each; every test prints a PASS/FAIL line.

The lines are collected in ``RESULTS`` and repeated in the terminal summary
(see conftest.py), so ``pytest tests/test_acceptance.py`` ends with the table.
Bundled configs are run through the CLI; quantities are then recomputed from
the CSV outputs with independent formulas where that is cheap.
"""

import csv
import json
import math
import time

import numpy as np
from scipy.special import erfcx

from esddfd.cli import EXIT_OK, load_raw, main
from esddfd.master_equations import TimeGrid, solve_relaxation
from esddfd.measures import NidKind, Tag
from esddfd.specfun import ml_one, ml_two

RESULTS = {}
EPS = np.finfo(float).eps


def report(n, ok, detail):
    line = f"criterion {n:>2}: {'PASS' if ok else 'FAIL'}  {detail}"
    RESULTS[n] = line
    print(line)
    assert ok, line


def run_bundled(name, out):
    start = time.perf_counter()
    code = main([load_raw(name)["command"], "--config", name, "--out", str(out)])
    elapsed = time.perf_counter() - start
    manifest = json.loads((out / "manifest.json").read_text()) if (out / "manifest.json").exists() else None
    return code, elapsed, manifest


def columns(path):
    with open(path) as fh:
        rows = list(csv.reader(fh))
    out = {}
    for i, h in enumerate(rows[0]):
        try:
            out[h] = np.array([float(r[i]) for r in rows[1:]])
        except ValueError:  # flag columns
            out[h] = np.array([r[i] for r in rows[1:]])
    return out


def check(manifest, name):
    return [c for c in manifest["checks"] if c["name"] == name][0]


# 1 ------------------------------------------------------------------------------------------


def test_criterion_01_relaxation_exactness():
    local = [NidKind(Tag.MICKENS), NidKind(Tag.CONFORMABLE, 0.5), NidKind(Tag.HOLDER_CHEN, 0.7),
             NidKind(Tag.HE, 0.6, L0=2.0, k=1.5)]
    caputo = NidKind(Tag.CAPUTO, 0.5)
    start = time.perf_counter()
    worst_local = worst_caputo = 0.0
    envelope_ok = True
    for lam in (0.5, 1.0, 4.0):
        for h in (0.5, 0.1, 0.01):
            g = TimeGrid(0.0, h, 1000)
            n = np.arange(1001)
            for kind in local:
                y = solve_relaxation(kind, lam, 1.0, g).values
                clock = kind.clock(g.times)
                exact = np.exp(-lam * clock)
                normal = exact >= np.finfo(float).tiny  # compare before exp underflows
                err = np.abs(y[normal] - exact[normal]) / exact[normal]
                worst_local = max(worst_local, float(err.max()))
                # rounding-level error: bounded by a random-walk envelope, no truncation growth
                env = 16.0 * EPS * np.sqrt(n[normal] + 1.0) * np.maximum(1.0, lam * clock[normal])
                envelope_ok &= bool(np.all(err <= env))
            # E_{1/2}(-x) = erfcx(x): an oracle independent of the ML evaluator
            y = solve_relaxation(caputo, lam, 1.0, g).values
            exact = erfcx(lam * np.sqrt(g.times))
            worst_caputo = max(worst_caputo, float(np.max(np.abs(y - exact) / exact)))
    elapsed = time.perf_counter() - start
    ok = worst_local <= 1e-12 and worst_caputo <= 1e-8 and envelope_ok and elapsed <= 5.0
    report(1, ok, f"local max rel err {worst_local:.2e} (<=1e-12), Caputo {worst_caputo:.2e} (<=1e-8), "
                  f"rounding envelope {'held' if envelope_ok else 'broken'}, {elapsed:.2f}s (<=5s)")


# 2 ------------------------------------------------------------------------------------------


def test_criterion_02_oscillation_exactness(tmp_path):
    parts, ok = [], True
    for name in ("oscillate_unit", "oscillate_2pi"):
        out = tmp_path / name
        code, elapsed, manifest = run_bundled(name, out)
        cfg = load_raw(name)
        cols = columns(out / "oscillate.csv")
        exact = cfg["y0"] * np.cos(cfg["omega"] * cols["t"])
        err = float(np.max(np.abs(cols["y_numeric"] - exact)))
        drift = check(manifest, "amplitude_drift")["value"]
        periods = cols["t"][-1] * cfg["omega"] / (2.0 * math.pi)
        ok &= code == EXIT_OK and err <= 1e-9 and drift <= 1e-9 and elapsed <= 5.0 and periods >= 99.99
        parts.append(f"w={cfg['omega']:.4g}: abs err {err:.1e}, amp drift {drift:.1e}, "
                     f"{periods:.0f} periods, {elapsed:.2f}s")
    report(2, ok, "; ".join(parts))


# 3 ------------------------------------------------------------------------------------------


def test_criterion_03_ml_accuracy():
    z = np.linspace(-50.0, 2.0, 5001)
    e1 = float(np.max(np.abs(ml_one(1.0, z) - np.exp(z)) / np.exp(z)))
    x = np.linspace(0.1, 10.0, 5001)
    e2 = float(np.max(np.abs(ml_one(0.5, -x) - erfcx(x)) / erfcx(x)))
    e3 = 0.0
    for a in np.linspace(0.1, 2.0, 20):
        for b in np.linspace(0.1, 3.0, 30):
            e3 = max(e3, abs(float(ml_two(a, b, 0.0)) - 1.0 / math.gamma(b)))
    ok = e1 <= 1e-10 and e2 <= 1e-9 and e3 <= 1e-12
    report(3, ok, f"E_1 vs exp {e1:.1e} (<=1e-10), E_1/2 vs erfcx {e2:.1e} (<=1e-9), "
                  f"E_ab(0) vs 1/Gamma {e3:.1e} (<=1e-12)")


# 4 ------------------------------------------------------------------------------------------


def test_criterion_04_mode_relaxation(tmp_path):
    code, elapsed, manifest = run_bundled("mode_decay", tmp_path)
    cfg = load_raw("mode_decay")
    cols = columns(tmp_path / "observables.csv")
    amp = cols["mode_amp_1"]
    L = cfg["grid"]["x_max"] - cfg["grid"]["x_min"]
    dx = L / cfg["grid"]["m_cells"]
    k = 2.0 * math.pi / L
    lam = 4.0 * cfg["params"]["K"] * math.sin(0.5 * k * dx) ** 2 / dx**2
    ratio = amp[1:] / amp[:-1]
    spread = float(np.ptp(ratio))
    gap = float(np.max(np.abs(ratio - math.exp(-lam * cfg["time"]["dt"]))))
    ok = code == EXIT_OK and spread <= 1e-10 and gap <= 1e-10 and elapsed <= 10.0
    report(4, ok, f"ratio spread {spread:.1e}, |ratio - exp(-lam dt)| {gap:.1e} (<=1e-10) over "
                  f"{len(ratio)} steps, {elapsed:.2f}s (<=10s)")


# 5 ------------------------------------------------------------------------------------------


def test_criterion_05_gibbs_state(tmp_path):
    parts, ok = [], True
    for name in ("gibbs_harmonic", "gibbs_harmonic_a06"):
        out = tmp_path / name
        code, elapsed, manifest = run_bundled(name, out)
        cfg = load_raw(name)
        cols = columns(out / "final_field.csv")
        x, w = cols["x"], cols["W"]
        dx = x[1] - x[0]
        ref = np.exp(-cfg["params"]["beta_thermo"] * 0.5 * cfg["potential"]["kappa"] * x**2)
        ref *= np.sum(w) / np.sum(ref)
        err = float(np.max(np.abs(w - ref)) / ref.max())
        ok &= code == EXIT_OK and err <= 1e-3 and elapsed <= 60.0
        parts.append(f"alpha={cfg['params'].get('alpha', 1.0)}: Linf rel {err:.1e} (<=1e-3), {elapsed:.1f}s")
        assert abs(np.sum(w) * dx - 1.0) <= 1e-12
    report(5, ok, "; ".join(parts))


# 6 ------------------------------------------------------------------------------------------


def test_criterion_06_classical_msd(tmp_path):
    code, elapsed, manifest = run_bundled("msd_classical", tmp_path)
    cfg = load_raw("msd_classical")
    cols = columns(tmp_path / "observables.csv")
    lo, hi = cfg["checks"]["msd_slope"]["window"]
    sel = (cols["t"] >= lo) & (cols["t"] <= hi)
    slope = np.polyfit(cols["t"][sel], cols["msd"][sel] - cols["msd"][0], 1)[0]
    rel = abs(slope / (2.0 * cfg["params"]["K"]) - 1.0)
    ok = code == EXIT_OK and rel <= 0.02
    report(6, ok, f"fitted slope {slope:.5f} vs 2K = {2.0 * cfg['params']['K']:g}, rel err {rel:.2%} (<=2%), "
                  f"window [{lo:g}, {hi:g}]")


# 7 ------------------------------------------------------------------------------------------


def test_criterion_07_subdiffusive_msd(tmp_path):
    parts, ok = [], True
    for name in ("subdiffusion_a05", "subdiffusion_a08"):
        out = tmp_path / name
        code, elapsed, manifest = run_bundled(name, out)
        cfg = load_raw(name)
        a, K = cfg["params"]["alpha"], cfg["params"]["K"]
        cols = columns(out / "observables.csv")
        lo, hi = cfg["checks"]["msd_fit"]["window"]
        msd = cols["msd"] - cols["msd"][0]
        sel = (cols["t"] >= lo) & (cols["t"] <= hi)
        slope, icpt = np.polyfit(np.log(cols["t"][sel]), np.log(msd[sel]), 1)
        target = 2.0 * K / math.gamma(1.0 + a)
        pre_rel = abs(math.exp(icpt) / target - 1.0)
        ok &= code == EXIT_OK and abs(slope - a) <= 0.05 and pre_rel <= 0.10
        parts.append(f"alpha={a}: exponent {slope:.4f} (+-0.05), prefactor rel err {pre_rel:.1%} (<=10%)")
    report(7, ok, "; ".join(parts))


# 8 ------------------------------------------------------------------------------------------


def test_criterion_08_einstein_relation(tmp_path):
    parts, ok = [], True
    for name, tol in (("einstein_a1", 0.02), ("einstein_a05", 0.05)):
        out = tmp_path / name
        code, elapsed, manifest = run_bundled(name, out)
        cfg = load_raw(name)
        c = cfg["checks"]["einstein"]
        d = manifest["derived"]
        ratio = d["einstein_mean_shift"] / (0.5 * c["F"] * cfg["params"]["beta_thermo"] * d["einstein_msd_free"])
        ok &= code == EXIT_OK and abs(ratio - 1.0) <= tol
        parts.append(f"alpha={cfg['params'].get('alpha', 1.0)}, F={c['F']}: ratio {ratio:.4f} (1+-{tol:g})")
    report(8, ok, "; ".join(parts))


# 9 ------------------------------------------------------------------------------------------


def test_criterion_09_rl_caputo_consistency(tmp_path):
    code, elapsed, manifest = run_bundled("rl_consistency", tmp_path)
    bitwise = check(manifest, "rl_zero_source_bitwise")["pass"]
    totals = list(manifest["derived"]["rl_shift_totals"].values())
    monotone = all(b <= a for a, b in zip(totals, totals[1:])) and totals[-1] == 0.0
    ok = code == EXIT_OK and bitwise and monotone
    shown = ", ".join(f"{t:.2e}" for t in totals)
    report(9, ok, f"w0=0 RL vs Caputo bitwise: {bitwise}; shift totals for alpha "
                  f"{list(manifest['derived']['rl_shift_totals'])}: {shown} (monotone to 0: {monotone})")


# 10 -----------------------------------------------------------------------------------------


def test_criterion_10_property_suite(tmp_path):
    code, elapsed, manifest = run_bundled("props_all", tmp_path)
    with open(tmp_path / "props.csv") as fh:
        rows = list(csv.DictReader(fh))

    def worst(prop):
        return max(float(r["residual"]) for r in rows if r["property"] == prop)

    lin, const, prod = worst("linearity"), worst("constant"), worst("product_rule_discrete")
    kinds = len({r["kind"] for r in rows})
    ok = code == EXIT_OK and lin <= 1e-13 and const <= 1e-13 and prod <= 1e-12 and kinds == 9
    report(10, ok, f"{kinds} kinds: linearity {lin:.1e}, constant {const:.1e} (<=1e-13), "
                   f"product vs mu1*Df*Dg {prod:.1e} (<=1e-12)")


# 11 -----------------------------------------------------------------------------------------


def test_criterion_11_ml_division_limit(tmp_path):
    code, elapsed, manifest = run_bundled("divformula", tmp_path)
    cols = columns(tmp_path / "divformula_limit.csv")
    hcols = [k for k in cols if k.startswith("h=")]
    seqs = np.stack([cols[k] for k in hcols], axis=1)
    frac = cols["alpha"] < 1.0
    monotone = bool(np.all(np.diff(seqs[frac], axis=1) < 0.0))
    final = float(seqs[frac, -1].max())
    sweep = (tmp_path / "divformula.csv").is_file()
    ok = code == EXIT_OK and monotone and final <= 1e-3 and sweep
    report(11, ok, f"{int(frac.sum())} lattice points: monotone over h {hcols}: {monotone}, "
                   f"worst final residual {final:.1e} (<=1e-3); finite-h sweep written: {sweep}")


# 12 -----------------------------------------------------------------------------------------


def test_criterion_12_classical_limit(tmp_path):
    code, elapsed, manifest = run_bundled("classical_limit", tmp_path)
    value = check(manifest, "classical_limit_rel")["value"]
    steps = load_raw("classical_limit")["time"]["n_steps"]
    ok = code == EXIT_OK and value <= 1e-12
    report(12, ok, f"alpha=1 fractional path vs classical path: max node rel diff {value:.1e} (<=1e-12) "
                   f"over {steps} steps")
