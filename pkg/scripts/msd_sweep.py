"""Fitted MSD exponent and prefactor across alpha for a free Caputo walker.

    python3 scripts/msd_sweep.py [--alphas 0.3 0.5 0.7 0.9 1.0] [--steps 10000]
"""

import argparse
import math

from esddfd.fokker_planck import FpeParams, Grid1D, InitialCondition, SimConfig, fit_msd, run
from esddfd.measures import NidKind, Tag


def sweep(alphas, n_steps, dt=0.01, window=(1.0, 100.0)):
    grid = Grid1D(-40.0, 40.0, 160)
    for a in alphas:
        kind = NidKind(Tag.CAPUTO, a) if a < 1.0 else None
        cfg = SimConfig(grid=grid, params=FpeParams(K=1.0, alpha=a), kind=kind,
                        initial=InitialCondition("gaussian", width=0.5), dt=dt, n_steps=n_steps,
                        bc="reflecting", cadence=10, x_ref=0.0)
        fit = fit_msd(run(cfg).observables, window)
        target = 2.0 / math.gamma(1.0 + a)
        yield a, fit, target


def cli():
    parser = argparse.ArgumentParser()
    parser.add_argument("--alphas", type=float, nargs="+", default=[0.3, 0.5, 0.7, 0.9, 1.0])
    parser.add_argument("--steps", type=int, default=10000)
    args = parser.parse_args()
    print(f"{'alpha':>6} {'exponent':>9} {'prefactor':>10} {'2K/G(1+a)':>10}")
    for a, fit, target in sweep(args.alphas, args.steps):
        print(f"{a:6.2f} {fit.exponent:9.4f} {fit.prefactor:10.4f} {target:10.4f}")


if __name__ == "__main__":
    cli()
