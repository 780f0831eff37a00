"""Special functions: Gamma, Mittag-Leffler (one and two parameter), generalized sine.

The Mittag-Leffler functions are evaluated with a power series close to the
origin and by numerical inversion of the Laplace transform

    E_{a,b}(z) = 1/(2 pi i) int_C e^s s^(a-b) / (s^a - z) ds

elsewhere, integrating with the trapezoidal rule on an optimal parabolic
contour and adding the residues of the poles left outside it (Garrappa,
SIAM J. Numer. Anal. 53, 2015).  Both branches are vectorised over ``z``.
"""

from __future__ import annotations

import math

import numpy as np
from scipy import special

__all__ = [
    "PoleError",
    "MLConvergenceError",
    "gamma",
    "rgamma",
    "ml_one",
    "ml_two",
    "ml_complex",
    "gen_sine",
]

_LOG_EPS = math.log(np.finfo(float).eps)
_LOG_TARGET = math.log(1e-15)
_SERIES_RADIUS = 1.0
_MAX_NODES = 200


class PoleError(ValueError):
    """Raised when Gamma is requested at a non-positive integer."""


class MLConvergenceError(ArithmeticError):
    """Raised when a Mittag-Leffler evaluation cannot reach its tolerance."""


def _is_pole(x: float) -> bool:
    return x <= 0 and float(x).is_integer()


def gamma(x: float) -> float:
    """Gamma function for real ``x``; raises :class:`PoleError` at 0, -1, -2, ..."""
    x = float(x)
    if _is_pole(x):
        raise PoleError(f"Gamma has a pole at x={x:g}")
    return math.gamma(x)


def rgamma(x):
    """Reciprocal Gamma, entire: returns 0 at the poles of Gamma."""
    return special.rgamma(x)


def _check_order(alpha: float, beta: float) -> None:
    if not 0.0 < alpha <= 2.0:
        raise ValueError(f"alpha must lie in (0, 2], got {alpha!r}")
    if not beta > 0.0:
        raise ValueError(f"beta must be positive, got {beta!r}")


# {{{ power series

def _series_terms(alpha: float, beta: float, radius: float) -> int:
    # smallest K with radius^k / Gamma(alpha k + beta) < 1e-18 for all k >= K
    k = 1
    log_r = math.log(radius) if radius > 0 else -math.inf
    while True:
        a = alpha * k + beta
        if a > 1.5 and k * log_r - math.lgamma(a) < -41.5:
            return k + 1
        k += 1
        if k > 5000:
            raise MLConvergenceError("power series needs more than 5000 terms")


def _ml_series(z: np.ndarray, alpha: float, beta: float) -> np.ndarray:
    radius = float(np.max(np.abs(z))) if z.size else 0.0
    nterms = _series_terms(alpha, beta, max(radius, 1e-300))
    coef = rgamma(alpha * np.arange(nterms) + beta)
    # Horner from the tail keeps the rounding error at the level of the largest term
    acc = np.zeros_like(z)
    for c in coef[::-1]:
        acc = acc * z + c
    return acc

# }}}


# {{{ contour inversion

def _param_bounded(phi_j, phi_j1, pj, qj, log_eps):
    """Contour parameters for a region bounded by two singularities."""
    fac = 1.01
    f_max = math.exp(log_eps - _LOG_EPS)
    sq_j = math.sqrt(phi_j)
    threshold = 2.0 * math.sqrt(log_eps - _LOG_EPS)
    sq_j1 = min(math.sqrt(phi_j1), threshold - sq_j)

    f_bar = None
    if pj < 1e-14 and qj < 1e-14:
        sqbar_j, sqbar_j1 = sq_j, sq_j1
        f_bar = 1.0
    elif pj < 1e-14:
        sqbar_j = sq_j
        f_min = fac * (sq_j / (sq_j1 - sq_j)) ** qj if sq_j > 0 else fac
        if f_min < f_max:
            f_bar = f_min + f_min / f_max * (f_max - f_min)
            fq = f_bar ** (-1.0 / qj)
            sqbar_j1 = (2.0 * sq_j1 - fq * sq_j) / (2.0 + fq)
    elif qj < 1e-14:
        sqbar_j1 = sq_j1
        f_min = fac * (sq_j1 / (sq_j1 - sq_j)) ** pj
        if f_min < f_max:
            f_bar = f_min + f_min / f_max * (f_max - f_min)
            fp = f_bar ** (-1.0 / pj)
            sqbar_j = (2.0 * sq_j + fp * sq_j1) / (2.0 - fp)
    else:
        f_min = fac * (sq_j + sq_j1) / (sq_j1 - sq_j) ** max(pj, qj)
        if f_min < f_max:
            f_min = max(f_min, 1.5)
            f_bar = f_min + f_min / f_max * (f_max - f_min)
            fp = f_bar ** (-1.0 / pj)
            fq = f_bar ** (-1.0 / qj)
            w = -phi_j1 / log_eps
            den = 2.0 + w - (1.0 + w) * fp + fq
            sqbar_j = ((2.0 + w + fq) * sq_j + fp * sq_j1) / den
            sqbar_j1 = (-(1.0 + w) * fq * sq_j + (2.0 + w - (1.0 + w) * fp) * sq_j1) / den

    if f_bar is None:
        return 0.0, 0.0, math.inf

    log_eps = log_eps - math.log(f_bar)
    w = -sqbar_j1**2 / log_eps
    mu = (((1.0 + w) * sqbar_j + sqbar_j1) / (2.0 + w)) ** 2
    h = (-2.0 * math.pi / log_eps * (sqbar_j1 - sqbar_j)
         / ((1.0 + w) * sqbar_j + sqbar_j1))
    if mu <= 0.0 or h <= 0.0:
        return 0.0, 0.0, math.inf
    n = math.ceil(math.sqrt(1.0 - log_eps / mu) / h)
    return mu, h, n


def _param_unbounded(phi_j, pj, log_eps):
    """Contour parameters for the region to the right of the last singularity."""
    sq_phi_j = math.sqrt(phi_j)
    phibar = phi_j * 1.01 if phi_j > 0 else 0.01
    sqbar = math.sqrt(phibar)
    f_min, f_max, f_tar = 1.0, 10.0, 5.0

    for _ in range(100):
        log_eps_phi = log_eps / phibar
        n = math.ceil(phibar / math.pi * (1.0 - 1.5 * log_eps_phi + math.sqrt(1.0 - 2.0 * log_eps_phi)))
        a = math.pi * n / phibar
        sq_mu = sqbar * abs(4.0 - a) / abs(7.0 - math.sqrt(1.0 + 12.0 * a))
        fbar = ((sqbar - sq_phi_j) / sq_mu) ** (-pj)
        if pj < 1e-14 or f_min < fbar < f_max:
            break
        sqbar = f_tar ** (-1.0 / pj) * sq_mu + sq_phi_j
        phibar = sqbar**2
    mu = sq_mu**2
    h = (-3.0 * a - 2.0 + 2.0 * math.sqrt(1.0 + 12.0 * a)) / (4.0 - a) / n

    threshold = log_eps - _LOG_EPS
    if mu > threshold:
        q = 0.0 if abs(pj) < 1e-14 else f_tar ** (-1.0 / pj) * math.sqrt(mu)
        phibar = (q + math.sqrt(phi_j)) ** 2
        if phibar < threshold:
            w = math.sqrt(_LOG_EPS / (_LOG_EPS - log_eps))
            u = math.sqrt(-phibar / _LOG_EPS)
            mu = threshold
            n = math.ceil(w * log_eps / 2.0 / math.pi / (u * w - 1.0))
            h = w / n
        else:
            return 0.0, 0.0, math.inf
    return mu, h, n


def _singularities(z: complex, alpha: float):
    """Poles of s^(a-b)/(s^a - z) on the principal sheet, sorted by phi."""
    theta = math.atan2(z.imag, z.real)
    kmin = math.ceil(-alpha / 2.0 - theta / (2.0 * math.pi))
    kmax = math.floor(alpha / 2.0 - theta / (2.0 * math.pi))
    k = np.arange(kmin, kmax + 1)
    s_star = abs(z) ** (1.0 / alpha) * np.exp(1j * (theta + 2.0 * k * math.pi) / alpha)
    phi = (s_star.real + np.abs(s_star)) / 2.0
    order = np.argsort(phi, kind="stable")
    s_star, phi = s_star[order], phi[order]
    keep = phi > 1e-15
    return s_star[keep], phi[keep]


def _contour_plan(z: complex, alpha: float, beta: float):
    """Choose the contour (mu, h, N) and the poles whose residues must be added."""
    poles, phi_poles = _singularities(z, alpha)
    s_star = np.concatenate(([0.0 + 0.0j], poles))
    phi = np.concatenate(([0.0], phi_poles, [math.inf]))
    nsing = len(s_star)
    p = [max(0.0, -2.0 * (alpha - beta + 1.0))] + [1.0] * (nsing - 1)
    q = [1.0] * (nsing - 1) + [math.inf]

    log_eps = _LOG_TARGET
    admissible = [j for j in range(nsing)
                  if phi[j] < (log_eps - _LOG_EPS) and phi[j] < phi[j + 1]]
    if not admissible:
        raise MLConvergenceError(f"no admissible contour for z={z!r}, alpha={alpha}")

    for _ in range(10):
        plans = {}
        for j in admissible:
            if j < nsing - 1:
                plans[j] = _param_bounded(phi[j], phi[j + 1], p[j], q[j], log_eps)
            else:
                plans[j] = _param_unbounded(phi[j], p[j], log_eps)
        j_best = min(plans, key=lambda j: plans[j][2])
        if plans[j_best][2] <= _MAX_NODES:
            mu, h, n = plans[j_best]
            return mu, h, int(n), s_star[j_best + 1:]
        log_eps += math.log(10.0)
    raise MLConvergenceError(f"contour needs more than {_MAX_NODES} nodes at z={z!r}")


def _contour_integral(z: np.ndarray, alpha: float, beta: float, mu: float, h: float, n: int) -> np.ndarray:
    u = h * np.arange(-n, n + 1)
    s = mu * (1j * u + 1.0) ** 2
    ds = 2.0 * mu * (1j - u)
    weight = np.exp(s) * s ** (alpha - beta) * ds
    sa = s**alpha
    out = np.empty(z.shape, dtype=complex)
    chunk = max(1, 200_000 // len(u))
    for i in range(0, z.size, chunk):
        zz = z[i:i + chunk, None]
        out[i:i + chunk] = (weight / (sa - zz)).sum(axis=1)
    return out * h / (2.0j * math.pi)


def _ml_contour(z: np.ndarray, alpha: float, beta: float) -> np.ndarray:
    out = np.empty(z.shape, dtype=complex)
    # z with no poles outside the contour share a single plan (e.g. alpha < 1, z < 0)
    groups: dict = {}
    for i, zi in enumerate(z):
        mu, h, n, residual_poles = _contour_plan(complex(zi), alpha, beta)
        if len(residual_poles) == 0:
            groups.setdefault((mu, h, n), []).append(i)
        else:
            val = _contour_integral(np.array([zi]), alpha, beta, mu, h, n)[0]
            val += np.sum(residual_poles ** (1.0 - beta) * np.exp(residual_poles)) / alpha
            out[i] = val
    for (mu, h, n), idx in groups.items():
        idx = np.asarray(idx)
        out[idx] = _contour_integral(z[idx], alpha, beta, mu, h, n)
    return out

# }}}


def ml_complex(z, alpha: float, beta: float = 1.0):
    """Two-parameter Mittag-Leffler function at complex ``z`` (array or scalar)."""
    _check_order(alpha, beta)
    zarr = np.atleast_1d(np.asarray(z, dtype=complex))
    out = np.empty(zarr.shape, dtype=complex)
    flat_z = zarr.ravel()
    flat = out.ravel()

    near = np.abs(flat_z) <= _SERIES_RADIUS
    if np.any(near):
        flat[near] = _ml_series(flat_z[near], alpha, beta)
    far = ~near
    if np.any(far):
        flat[far] = _ml_contour(flat_z[far], alpha, beta)
    if not np.all(np.isfinite(flat)):
        raise MLConvergenceError("non-finite Mittag-Leffler value")
    out = flat.reshape(zarr.shape)
    return out[0] if np.ndim(z) == 0 else out


def ml_two(alpha: float, beta: float, z):
    """E_{alpha,beta}(z) for real ``z`` (scalar or array)."""
    _check_order(alpha, beta)
    zarr = np.asarray(z, dtype=float)
    if alpha == 1.0 and beta == 1.0:
        out = np.exp(zarr)
    elif alpha == 2.0 and beta == 1.0:
        out = np.where(zarr < 0, np.cos(np.sqrt(np.abs(zarr))), np.cosh(np.sqrt(np.abs(zarr))))
    else:
        out = ml_complex(zarr.ravel(), alpha, beta).real.reshape(zarr.shape)
    if np.ndim(z) == 0:
        return float(out)
    return out


def ml_one(alpha: float, z):
    """E_alpha(z) = E_{alpha,1}(z) for real ``z``."""
    return ml_two(alpha, 1.0, z)


def gen_sine(kind, x: float, omega: float, beta: float = 1.0, hyperbolic: bool = False) -> float:
    """Generalized sine built from the solution function of ``kind``.

    ``(1/2i)[U(i x w) - U(-i x w)]``: the ordinary sine for exponential kinds and
    ``Im E_beta(i x w)`` for Mittag-Leffler kinds.  With ``hyperbolic=True`` the
    odd part ``(1/2)[U(x w) - U(-x w)]`` is returned instead (sinh for
    exponential kinds).
    """
    family = getattr(kind, "family", kind)
    arg = float(x) * float(omega)
    if family == "exponential":
        if beta != 1.0:
            raise ValueError("exponential kinds only define the beta=1 sine")
        return math.sinh(arg) if hyperbolic else math.sin(arg)
    if family == "mittag-leffler":
        if hyperbolic:
            vals = ml_complex(np.array([arg, -arg]), beta)
            return float((vals[0] - vals[1]).real / 2.0)
        return float(ml_complex(np.array([1j * arg]), beta)[0].imag)
    raise NotImplementedError(f"no generalized sine for kind family {family!r}")
