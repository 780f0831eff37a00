"""Exact discrete solvers for the relaxation and harmonic-oscillator master equations."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .measures import NidKind, SolutionFn, Tag, mu1, mu1_implicit, mu2, rl_shift

__all__ = [
    "TimeGrid",
    "ScalarSeries",
    "solve_relaxation",
    "solve_relaxation_rl",
    "relaxation_exact",
    "solve_oscillation",
    "oscillation_exact",
    "oscillation_amplitude",
]


@dataclass(frozen=True)
class TimeGrid:
    t0: float
    h: float
    n_steps: int

    def __post_init__(self):
        if self.t0 < 0.0:
            raise ValueError("t0 must be non-negative")
        if not (self.h > 0.0 and math.isfinite(self.h)):
            raise ValueError("step h must be positive and finite")
        if int(self.n_steps) != self.n_steps or self.n_steps < 1:
            raise ValueError("n_steps must be a positive integer")

    @property
    def times(self) -> np.ndarray:
        return self.t0 + self.h * np.arange(self.n_steps + 1)

    @property
    def t_end(self) -> float:
        return self.t0 + self.h * self.n_steps


@dataclass
class ScalarSeries:
    grid: TimeGrid
    values: np.ndarray

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=float)
        if self.values.shape != (self.grid.n_steps + 1,):
            raise ValueError("series length must be n_steps + 1")
        if not np.all(np.isfinite(self.values)):
            raise FloatingPointError("non-finite value in series")

    @property
    def times(self) -> np.ndarray:
        return self.grid.times


def relaxation_exact(kind: NidKind, lam: float, y0: float, grid: TimeGrid) -> np.ndarray:
    """Analytic solution ``y0 U(t_n) / U(t0)`` on the grid."""
    u = SolutionFn(kind, lam)
    values = np.asarray(u(grid.times), dtype=float)
    return y0 * values / values[0]


def solve_relaxation(kind: NidKind, lam: float, y0: float, grid: TimeGrid,
                     scheme: str = "explicit") -> ScalarSeries:
    """Advance ``D^a y = -lam y`` with the exact first-order measure.

    explicit: ``y_{n+1} = y_n (1 - lam mu1(t_n))``;
    implicit: ``y_{n+1} = y_n / (1 + lam mu1_implicit(t_n))``.
    """
    if grid.t0 < kind.t0:
        raise ValueError("grid starts before the kind's initial time")
    if not lam > 0.0:
        raise ValueError(f"rate must be positive, got {lam!r}")
    rate = kind.rate(lam)
    times = grid.times
    t = times[:-1]
    # per-step h_n = t_{n+1} - t_n is exact in floating point and t_n + h_n == t_{n+1},
    # so the clock increments telescope onto the analytic solution's samples
    steps = np.diff(times)
    if scheme == "explicit":
        factors = 1.0 - rate * np.atleast_1d(mu1(kind, lam, t, steps))
    elif scheme == "implicit":
        factors = 1.0 / (1.0 + rate * np.atleast_1d(mu1_implicit(kind, lam, t, steps)))
    else:
        raise ValueError(f"unknown scheme {scheme!r}")
    y = np.empty(grid.n_steps + 1)
    y[0] = y0
    for n, f in enumerate(factors):
        y[n + 1] = y[n] * f
    return ScalarSeries(grid, y)


def solve_relaxation_rl(kind: NidKind, lam: float, y0: float, grid: TimeGrid) -> ScalarSeries:
    """Riemann-Liouville relaxation ``y_{n+1} = y_n + mu1 (-lam y_n + y0 t_n^-a / Gamma(1-a))``.

    The shift is singular at t = 0, so the grid must start at t0 > 0.
    """
    if grid.t0 <= 0.0:
        raise ValueError("Riemann-Liouville relaxation needs t0 > 0 (the shift is singular at 0)")
    if grid.t0 < kind.t0:
        raise ValueError("grid starts before the kind's initial time")
    rate = kind.rate(lam)
    times = grid.times
    t = times[:-1]
    m = np.atleast_1d(mu1(kind, lam, t, np.diff(times)))
    shift = np.atleast_1d(rl_shift(t, kind.alpha, y0))
    y = np.empty(grid.n_steps + 1)
    y[0] = y0
    for n in range(grid.n_steps):
        y[n + 1] = y[n] + m[n] * (-rate * y[n] + shift[n])
    return ScalarSeries(grid, y)


def oscillation_exact(omega: float, y0: float, v0: float, grid: TimeGrid) -> np.ndarray:
    tau = grid.times - grid.t0
    return y0 * np.cos(omega * tau) + v0 / omega * np.sin(omega * tau)


def solve_oscillation(omega: float, y0: float, v0: float, grid: TimeGrid,
                      seed: str = "exact") -> ScalarSeries:
    """Harmonic oscillator ``y_{n+1} = 2 y_n - y_{n-1} - w^2 mu2^2 y_n``.

    ``seed="exact"`` takes y_1 from the analytic solution; ``seed="taylor"``
    uses ``y_0 + h v_0 - (w h)^2 y_0 / 2``.
    """
    if not omega > 0.0:
        raise ValueError("omega must be positive")
    h = grid.h
    m2 = mu2(NidKind(Tag.MICKENS), omega * omega, h)
    q = (omega * m2) ** 2
    y = np.empty(grid.n_steps + 1)
    y[0] = y0
    if seed == "exact":
        y[1] = y0 * math.cos(omega * h) + v0 / omega * math.sin(omega * h)
    elif seed == "taylor":
        y[1] = y0 + h * v0 - 0.5 * (omega * h) ** 2 * y0
    else:
        raise ValueError(f"unknown seed {seed!r}")
    # first-difference form of the same recurrence; accumulates less rounding
    d = y[1] - y[0]
    for n in range(1, grid.n_steps):
        d -= q * y[n]
        y[n + 1] = y[n] + d
    return ScalarSeries(grid, y)


def oscillation_amplitude(series: ScalarSeries, omega: float) -> np.ndarray:
    """Amplitude from the conserved quadratic form of the recurrence, one value per step n >= 1."""
    y = series.values
    s = math.sin(omega * series.grid.h)
    c = 1.0 - 0.5 * (2.0 * math.sin(0.5 * omega * series.grid.h)) ** 2
    form = y[1:] ** 2 - 2.0 * c * y[1:] * y[:-1] + y[:-1] ** 2
    return np.sqrt(np.maximum(form, 0.0)) / abs(s)
