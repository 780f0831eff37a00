"""Difference-quotient derivatives over the exact measures, and their identity checks."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Dict, List, Sequence

import numpy as np

from .measures import NidKind, SolutionFn, MeasureDomainError, mu1, rl_shift
from .specfun import ml_one, ml_two

__all__ = [
    "fdqr",
    "fdqr_rl",
    "PropertyReport",
    "property_suite",
    "caputo_conformable_factor",
    "effective_rate",
    "ml_division_residual",
    "division_sweep",
]

SampledFn = Callable[[float], float]


def fdqr(kind: NidKind, f: SampledFn, lam: float, t: float, h: float) -> float:
    """``(f(t+h) - f(t)) / mu1(kind, lam, t, h)``."""
    return (f(t + h) - f(t)) / mu1(kind, lam, t, h)


def fdqr_rl(kind: NidKind, f: SampledFn, lam: float, t: float, h: float, y0: float) -> float:
    """Riemann-Liouville counterpart: the Caputo quotient plus ``y0 t^-a / Gamma(1-a)``."""
    return fdqr(kind, f, lam, t, h) + rl_shift(t, kind.alpha, y0)


@dataclass
class PropertyReport:
    """Residuals of the classical derivative rules for one kind at one point.

    Finite-h identities (linearity, constants, the discrete product and quotient
    rules) are reported as plain residuals.  The chain-type rules only hold as
    h -> 0; for those ``limits`` holds the residual along a decreasing step
    sequence and ``orders`` the observed convergence order between successive
    steps.
    """

    kind: str
    t: float
    h: float
    residuals: Dict[str, float]
    limits: Dict[str, List[float]] = field(default_factory=dict)
    limit_steps: List[float] = field(default_factory=list)

    @property
    def orders(self) -> Dict[str, List[float]]:
        out = {}
        for name, seq in self.limits.items():
            ratios = []
            for (h1, r1), (h2, r2) in zip(zip(self.limit_steps, seq), zip(self.limit_steps[1:], seq[1:])):
                if r1 > 0.0 and r2 > 0.0:
                    ratios.append(math.log(r1 / r2) / math.log(h1 / h2))
                else:
                    ratios.append(math.inf)
            out[name] = ratios
        return out

    def limit_ok(self, name: str, floor: float = 1e-9) -> bool:
        """True when the residual shrinks at least linearly in h, down to a rounding floor."""
        seq = self.limits[name]
        h0, r0 = self.limit_steps[0], seq[0]
        return all(r <= 1.5 * r0 * (hh / h0) + floor for hh, r in zip(self.limit_steps, seq))

    def rows(self):
        for name, value in self.residuals.items():
            yield name, value
        for name, seq in self.limits.items():
            yield name, seq[-1]


def _scale(*values: float) -> float:
    return max(1.0, *(abs(v) for v in values))


def property_suite(kind: NidKind, f: SampledFn, g: SampledFn, lam: float, t: float, h: float,
                   A: float = 2.0, B: float = -3.0, C: float = 1.7,
                   limit_steps: Sequence[float] = (1e-2, 1e-3, 1e-4, 1e-5)) -> PropertyReport:
    """Residuals of the six classical rules for the generalized quotient.

    Residuals are scaled by the magnitude of the terms involved, so an exact
    algebraic identity shows up at the rounding level.
    """
    m = mu1(kind, lam, t, h)
    ft, gt = f(t), g(t)
    df = (f(t + h) - ft) / m
    dg = (g(t + h) - gt) / m

    lin = fdqr(kind, lambda s: A * f(s) + B * g(s), lam, t, h)
    lin_res = abs(lin - (A * df + B * dg)) / _scale(lin, A * df, B * dg)

    prod = fdqr(kind, lambda s: f(s) * g(s), lam, t, h)
    prod_gap = prod - (gt * df + ft * dg)
    correction = m * df * dg
    prod_res = abs(prod_gap - correction) / _scale(prod, gt * df, ft * dg)

    quot = fdqr(kind, lambda s: f(s) / g(s), lam, t, h)
    # exact discrete quotient rule: (g df - f dg) / (g (g + mu dg))
    quot_exact = (gt * df - ft * dg) / (gt * (gt + m * dg))
    quot_res = abs(quot - quot_exact) / _scale(quot, quot_exact)

    const_res = abs(fdqr(kind, lambda s: C, lam, t, h))

    report = PropertyReport(
        kind=kind.tag.value, t=t, h=h,
        residuals={
            "linearity": lin_res,
            "product_rule_discrete": prod_res,
            "product_rule_gap": abs(prod_gap),
            "quotient_rule_discrete": quot_res,
            "constant": const_res,
        },
        limit_steps=list(limit_steps),
    )

    u = SolutionFn(kind, lam)
    ut = u(t)
    p = 2.0
    power, chain = [], []
    for hh in limit_steps:
        du1 = (u(t + hh) - ut) / hh
        lhs_power = fdqr(kind, lambda s: s**p, lam, t, hh)
        rhs_power = -u.rate * p * t ** (p - 1.0) * ut / du1
        power.append(abs(lhs_power - rhs_power) / _scale(rhs_power))
        df1 = (f(t + hh) - ft) / hh
        lhs = fdqr(kind, f, lam, t, hh)
        rhs = -u.rate * ut / du1 * df1
        chain.append(abs(lhs - rhs) / _scale(rhs))
    report.limits["power_rule_limit"] = power
    report.limits["chain_rule_limit"] = chain
    return report


def caputo_conformable_factor(alpha: float, t: float) -> float:
    """``E_a(-t^a) / E_{a,a}(-t^a)``: converts the conformable derivative into the Caputo one."""
    if not t > 0.0:
        raise MeasureDomainError("t must be positive")
    if not 0.0 < alpha <= 1.0:
        raise ValueError("alpha must lie in (0, 1]")
    z = -(t**alpha)
    den = ml_two(alpha, alpha, z)
    if abs(den) < 1e-300:
        raise ZeroDivisionError("E_{a,a}(-t^a) underflows")
    return ml_one(alpha, z) / den


def effective_rate(kind: NidKind, lam: float, t: float) -> float:
    """Variable first-order rate ``r(t) = -U'(t)/U(t)``, by centered difference of log U."""
    if not t > kind.t0:
        raise MeasureDomainError(f"effective rate needs t > t0 = {kind.t0}")
    u = SolutionFn(kind, lam)
    step = 1e-6 * max(1.0, t)
    step = min(step, 0.5 * (t - kind.t0))
    return -(math.log(u(t + step)) - math.log(u(t - step))) / (2.0 * step)


def ml_division_residual(alpha: float, lam: float, t: float, h: float) -> float:
    """|E_a(-lam (t+h)^a)/E_a(-lam t^a) - RHS| for the conjectured ML division formula."""
    if not t > 0.0:
        raise MeasureDomainError("t must be positive")
    if h < 0.0:
        raise MeasureDomainError("h must be non-negative")
    z0 = -lam * t**alpha
    z1 = -lam * (t + h) ** alpha
    e0 = ml_one(alpha, z0)
    lhs = ml_one(alpha, z1) / e0
    ratio = ml_two(alpha, alpha, z0) / e0
    rhs = 1.0 - alpha * ratio * -math.expm1(-(lam / alpha) * ((t + h) ** alpha - t**alpha))
    return abs(lhs - rhs)


def division_sweep(alphas, lams, ts, hs):
    """Residual table over the (alpha, lam, t, h) lattice, one dict per row."""
    rows = []
    for a in alphas:
        for lam in lams:
            for t in ts:
                for h in hs:
                    rows.append({"alpha": a, "lambda": lam, "t": t, "h": h,
                                 "residual": ml_division_residual(a, lam, t, h)})
    return rows
