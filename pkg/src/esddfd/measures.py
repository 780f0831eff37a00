"""Exact denominator measures for the relaxation and oscillation master equations.

Every derivative kind is identified by the solution ``U`` of its relaxation
problem ``D^a y = -lam y``: an exponential of a kind-specific clock for local
kinds, a Mittag-Leffler function of the clock for non-local kinds.  The
first-order measure is the ratio form

    mu1 = (1/lam) (1 - U(t+h) / U(t)),

which makes the explicit update ``y_{n+1} = y_n (1 - lam mu1)`` reproduce
``U`` exactly.  The second-order measure ``(2/w) sin_U(w dx / 2)`` does the
same for the harmonic oscillator.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from enum import Enum
from typing import Callable, Optional

import numpy as np

from .specfun import gen_sine, ml_one, rgamma

__all__ = [
    "Tag",
    "NidKind",
    "SolutionFn",
    "MeasureDomainError",
    "ResonanceError",
    "mu1",
    "mu1_implicit",
    "mu2",
    "rl_shift",
]


class MeasureDomainError(ValueError):
    """Raised for arguments outside a measure's domain (t < t0, h <= 0, ...)."""


class ResonanceError(ValueError):
    """Raised when the oscillation denominator would vanish or change sign."""


class Tag(str, Enum):
    MICKENS = "Mickens"
    CONFORMABLE = "Conformable"
    HOLDER_CHEN = "HolderChen"
    HE = "He"
    GENERAL_LOCAL = "GeneralLocal"
    CAPUTO = "Caputo"
    CAPUTO_FABRIZIO = "CaputoFabrizio"
    ATANGANA_BALEANU = "AtanganaBaleanu"
    GENERAL_NONLOCAL = "GeneralNonLocal"


LOCAL_TAGS = frozenset({Tag.MICKENS, Tag.CONFORMABLE, Tag.HOLDER_CHEN, Tag.HE, Tag.GENERAL_LOCAL})
ML_TAGS = frozenset({Tag.CAPUTO, Tag.CAPUTO_FABRIZIO, Tag.ATANGANA_BALEANU, Tag.GENERAL_NONLOCAL})


@dataclass(frozen=True)
class NidKind:
    """A derivative family from the catalog, with its parameters.

    ``psi`` is required for the general kinds; ``L0`` and ``k`` for He.
    ``lambda_effective`` replaces the caller's rate inside every measure of
    this kind (Caputo-Fabrizio and Atangana-Baleanu use a rate different from
    the Caputo one; the map is left to the caller).
    """

    tag: Tag
    alpha: float = 1.0
    t0: float = 0.0
    L0: float = 1.0
    k: float = 1.0
    psi: Optional[Callable] = field(default=None, compare=False)
    lambda_effective: Optional[float] = None

    def __post_init__(self):
        object.__setattr__(self, "tag", Tag(self.tag))
        if self.tag is Tag.MICKENS and self.alpha != 1.0:
            raise ValueError("the Mickens kind is first order: alpha must be 1")
        if not 0.0 < self.alpha <= 1.0:
            raise ValueError(f"alpha must lie in (0, 1], got {self.alpha!r}")
        if self.t0 < 0.0:
            raise ValueError("t0 must be non-negative")
        if self.tag is Tag.HE and not (self.L0 > 0.0 and self.k > 0.0):
            raise ValueError("He kind needs L0 > 0 and k > 0")
        if self.tag in (Tag.GENERAL_LOCAL, Tag.GENERAL_NONLOCAL):
            if self.psi is None:
                raise ValueError(f"{self.tag.value} kind needs a psi function")
            if abs(float(self.psi(0.0))) > 1e-14:
                raise ValueError("psi must satisfy psi(0) = 0")
        if self.lambda_effective is not None and not self.lambda_effective > 0.0:
            raise ValueError("lambda_effective must be positive")

    @property
    def family(self) -> str:
        return "exponential" if self.tag in LOCAL_TAGS else "mittag-leffler"

    @property
    def is_local(self) -> bool:
        return self.tag in LOCAL_TAGS

    def rate(self, lam: float) -> float:
        return lam if self.lambda_effective is None else self.lambda_effective

    def clock(self, t):
        """Kind-specific time variable ``phi(t - t0)``, zero at ``t0``."""
        tau = np.asarray(t, dtype=float) - self.t0
        a = self.alpha
        tag = self.tag
        if tag is Tag.MICKENS:
            return tau
        if tag is Tag.CONFORMABLE:
            return tau**a / a
        if tag is Tag.HE:
            return self.k * self.L0 ** (a - 1.0) * tau
        if tag in (Tag.GENERAL_LOCAL, Tag.GENERAL_NONLOCAL):
            return np.asarray(self.psi(tau**a), dtype=float)
        return tau**a

    def clock_rate(self, t):
        """Derivative of the clock; ``inf`` where it blows up (t = t0, alpha < 1)."""
        tau = np.asarray(t, dtype=float) - self.t0
        a = self.alpha
        tag = self.tag
        if tag is Tag.MICKENS:
            return np.ones_like(tau)
        if tag is Tag.HE:
            return np.full_like(tau, self.k * self.L0 ** (a - 1.0))
        with np.errstate(divide="ignore"):
            base = tau ** (a - 1.0) if tag is Tag.CONFORMABLE else a * tau ** (a - 1.0)
        if tag in (Tag.GENERAL_LOCAL, Tag.GENERAL_NONLOCAL):
            step = 1e-7 * np.maximum(1.0, tau**a)
            x = tau**a
            dpsi = (np.asarray(self.psi(x + step)) - np.asarray(self.psi(np.maximum(x - step, 0.0)))) / (
                x + step - np.maximum(x - step, 0.0))
            return base * dpsi
        return base

    def validate_psi(self, horizon: float, samples: int = 2001) -> None:
        """Check by sampling that psi is strictly increasing on [0, horizon**alpha]."""
        if self.psi is None:
            return
        x = np.linspace(0.0, max(horizon - self.t0, 0.0) ** self.alpha, samples)
        values = np.asarray(self.psi(x), dtype=float)
        if not np.all(np.diff(values) > 0.0):
            raise ValueError("psi is not strictly increasing on the simulation horizon")


@dataclass(frozen=True)
class SolutionFn:
    """Relaxation solution ``U(t) = exp(-lam phi(t))`` or ``E_a(-lam phi(t))``, with U(t0) = 1."""

    kind: NidKind
    lam: float

    def __post_init__(self):
        if not self.lam > 0.0:
            raise ValueError(f"rate must be positive, got {self.lam!r}")

    @property
    def rate(self) -> float:
        return self.kind.rate(self.lam)

    def __call__(self, t):
        return self.evaluate(t)

    def evaluate(self, t):
        t = np.asarray(t, dtype=float)
        if np.any(t < self.kind.t0):
            raise MeasureDomainError(f"U is defined for t >= t0 = {self.kind.t0}")
        arg = -self.rate * self.kind.clock(t)
        if self.kind.is_local:
            out = np.exp(arg)
        else:
            out = ml_one(self.kind.alpha, arg)
        return float(out) if np.ndim(out) == 0 else out

    def decrement(self, t, h):
        """``1 - U(t+h)/U(t)``, computed without cancellation for local kinds."""
        t = np.asarray(t, dtype=float)
        if self.kind.is_local:
            if self.kind.tag is Tag.MICKENS:
                dphi = np.broadcast_to(np.asarray(h, dtype=float), np.broadcast(t, h).shape)
            else:
                dphi = self.kind.clock(t + h) - self.kind.clock(t)
            out = -np.expm1(-self.rate * dphi)
        else:
            out = 1.0 - self.evaluate(t + h) / self.evaluate(t)
        return float(out) if np.ndim(out) == 0 else out

    def increment(self, t, h):
        """``U(t)/U(t+h) - 1``."""
        t = np.asarray(t, dtype=float)
        if self.kind.is_local:
            if self.kind.tag is Tag.MICKENS:
                dphi = np.broadcast_to(np.asarray(h, dtype=float), np.broadcast(t, h).shape)
            else:
                dphi = self.kind.clock(t + h) - self.kind.clock(t)
            out = np.expm1(self.rate * dphi)
        else:
            out = self.evaluate(t) / self.evaluate(t + h) - 1.0
        return float(out) if np.ndim(out) == 0 else out


def _check_args(kind: NidKind, lam: float, t, h) -> None:
    if not lam > 0.0:
        raise MeasureDomainError(f"rate must be positive, got {lam!r}")
    if np.any(np.asarray(h) <= 0.0):
        raise MeasureDomainError("step h must be positive")
    if np.any(np.asarray(t) < kind.t0):
        raise MeasureDomainError(f"t must be >= t0 = {kind.t0}")


def mu1(kind: NidKind, lam: float, t, h):
    """Explicit first-order measure ``(1/lam)(1 - U(t+h)/U(t))``."""
    _check_args(kind, lam, t, h)
    u = SolutionFn(kind, lam)
    return u.decrement(t, h) / u.rate


def mu1_implicit(kind: NidKind, lam: float, t, h):
    """Implicit first-order measure ``(1/lam)(U(t)/U(t+h) - 1)``."""
    _check_args(kind, lam, t, h)
    u = SolutionFn(kind, lam)
    return u.increment(t, h) / u.rate


def mu2(kind: NidKind, omega_sq: float, dx: float) -> float:
    """Second-order measure ``(2/w) sin_U(w dx/2)``.

    ``omega_sq > 0`` selects the sine branch, ``omega_sq < 0`` the hyperbolic
    branch with ``theta = sqrt(-omega_sq)``; ``omega_sq == 0`` returns ``dx``.
    """
    if not dx > 0.0:
        raise MeasureDomainError("dx must be positive")
    if omega_sq == 0.0:
        return float(dx)
    beta = kind.alpha if kind.family == "mittag-leffler" else 1.0
    if omega_sq > 0.0:
        omega = math.sqrt(omega_sq)
        half = omega * dx / 2.0
        if half >= math.pi:
            raise ResonanceError(f"omega*dx/2 = {half:.6g} >= pi: denominator loses its sign")
        value = 2.0 / omega * gen_sine(kind, half, 1.0, beta)
    else:
        theta = math.sqrt(-omega_sq)
        value = 2.0 / theta * gen_sine(kind, theta * dx / 2.0, 1.0, beta, hyperbolic=True)
    if not value > 0.0:
        raise ResonanceError(f"second-order measure is not positive ({value!r})")
    return value


def rl_shift(t, alpha: float, y0: float = 1.0):
    """Riemann-Liouville shift ``y0 t^(-alpha) / Gamma(1 - alpha)``; zero at alpha = 1."""
    t_arr = np.asarray(t, dtype=float)
    if np.any(t_arr <= 0.0):
        raise MeasureDomainError("the Riemann-Liouville shift is singular at t = 0")
    if not 0.0 < alpha <= 1.0:
        raise ValueError(f"alpha must lie in (0, 1], got {alpha!r}")
    out = y0 * t_arr ** (-alpha) * rgamma(1.0 - alpha)
    return float(out) if np.ndim(out) == 0 else out
