"""Exact-denominator simulators for the Fokker-Planck equation and its time-fractional forms.

Model: ``D_t W = d/dx (V'(x) W) / (m eta) + K d^2 W / dx^2`` on a uniform
cell-centred grid, advanced by ``W^{n+1} = W^n + mu_t L W^n`` where ``L`` is a
three-point stencil built from the exact advection and diffusion measures and
``mu_t`` is the exact relaxation measure for the time derivative.

The spatial operator is time independent, so a run assembles it once as three
coefficient vectors; only ``mu_t`` changes from step to step.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from .measures import NidKind, Tag, mu1, rl_shift

__all__ = [
    "Grid1D",
    "Potential",
    "Free",
    "ConstantForce",
    "Harmonic",
    "Tabulated",
    "FpeParams",
    "Field",
    "ObservableSeries",
    "InitialCondition",
    "SimConfig",
    "RunResult",
    "MsdFit",
    "EinsteinCheck",
    "StabilityError",
    "NegativeDensityError",
    "SimulationError",
    "InsufficientDataError",
    "BOUNDARIES",
    "ADVECTION_FORMS",
    "default_lambda_time",
    "build_time_denominator",
    "build_advection_denominator",
    "build_diffusion_denominator",
    "step_fpe",
    "step_ffpe_caputo",
    "step_ffpe_rl",
    "run",
    "stationary_compare",
    "einstein_relation_check",
    "fit_msd",
]

BOUNDARIES = ("periodic", "reflecting")
ADVECTION_FORMS = ("flux", "forward", "upwind")
_EXP_GUARD = 700.0


class StabilityError(ValueError):
    """The time step fails the positivity gate ``mu_t * max(-diag L) < 1``."""

    def __init__(self, message: str, margin: float):
        super().__init__(message)
        self.margin = margin


class NegativeDensityError(ArithmeticError):
    """A density entry went negative in strict-positivity mode."""


class SimulationError(RuntimeError):
    """A step failed; ``step`` is the index of the step being taken."""

    def __init__(self, step: int, cause: BaseException):
        super().__init__(f"step {step}: {type(cause).__name__}: {cause}")
        self.step = step
        self.cause = cause


class InsufficientDataError(ValueError):
    pass


# --------------------------------------------------------------------------- grid / potentials


@dataclass(frozen=True)
class Grid1D:
    """``m_cells`` cells of width dx on [x_min, x_max]; nodes at the cell centres."""

    x_min: float
    x_max: float
    m_cells: int

    def __post_init__(self):
        if int(self.m_cells) != self.m_cells or self.m_cells < 8:
            raise ValueError("m_cells must be an integer >= 8")
        if not (math.isfinite(self.x_min) and math.isfinite(self.x_max) and self.x_max > self.x_min):
            raise ValueError("grid needs finite x_min < x_max")

    @property
    def length(self) -> float:
        return self.x_max - self.x_min

    @property
    def dx(self) -> float:
        return self.length / self.m_cells

    @property
    def nodes(self) -> np.ndarray:
        return self.x_min + (np.arange(self.m_cells) + 0.5) * self.dx

    def wavenumber(self, mode: int) -> float:
        return 2.0 * math.pi * mode / self.length


class Potential:
    """External potential; the force is ``-V'``."""

    name = "potential"

    def V(self, x):
        raise NotImplementedError

    def dV(self, x):
        raise NotImplementedError

    def node_values(self, grid: Grid1D) -> np.ndarray:
        return np.asarray(self.V(grid.nodes), dtype=float) * np.ones(grid.m_cells)

    def node_slopes(self, grid: Grid1D) -> np.ndarray:
        return np.asarray(self.dV(grid.nodes), dtype=float) * np.ones(grid.m_cells)

    def link_differences(self, grid: Grid1D) -> np.ndarray:
        """``V(x_m + dx) - V(x_m)`` for every node; the last entry is the periodic wrap link."""
        x = grid.nodes
        return np.asarray(self.V(x + grid.dx) - self.V(x), dtype=float) * np.ones(grid.m_cells)

    def consistency_error(self, grid: Grid1D, step: float = 1e-5) -> float:
        """Max |V' - centred difference of V| over the nodes."""
        x = grid.nodes
        fd = (np.asarray(self.V(x + step)) - np.asarray(self.V(x - step))) / (2.0 * step)
        return float(np.max(np.abs(fd - self.node_slopes(grid))))

    def describe(self) -> dict:
        return {"type": self.name}


class Free(Potential):
    name = "free"

    def V(self, x):
        return np.zeros_like(np.asarray(x, dtype=float))

    def dV(self, x):
        return np.zeros_like(np.asarray(x, dtype=float))


@dataclass(frozen=True)
class ConstantForce(Potential):
    """``V = -F x``."""

    F: float
    name = "constant_force"

    def V(self, x):
        return -self.F * np.asarray(x, dtype=float)

    def dV(self, x):
        return np.full_like(np.asarray(x, dtype=float), -self.F)

    def link_differences(self, grid: Grid1D) -> np.ndarray:
        return np.full(grid.m_cells, -self.F * grid.dx)

    def describe(self) -> dict:
        return {"type": self.name, "F": self.F}


@dataclass(frozen=True)
class Harmonic(Potential):
    """``V = kappa (x - center)^2 / 2``."""

    kappa: float
    center: float = 0.0
    name = "harmonic"

    def __post_init__(self):
        if not self.kappa > 0.0:
            raise ValueError("kappa must be positive")

    def V(self, x):
        return 0.5 * self.kappa * (np.asarray(x, dtype=float) - self.center) ** 2

    def dV(self, x):
        return self.kappa * (np.asarray(x, dtype=float) - self.center)

    def describe(self) -> dict:
        return {"type": self.name, "kappa": self.kappa, "center": self.center}


class Tabulated(Potential):
    """Potential given by its values at the grid nodes.

    ``V'`` is the centred difference of the table (one-sided at the ends);
    links use plain differences of neighbouring values, with the periodic wrap
    link ``V_0 - V_{M-1}``.
    """

    name = "tabulated"

    def __init__(self, grid: Grid1D, values: Sequence[float]):
        values = np.asarray(values, dtype=float)
        if values.shape != (grid.m_cells,):
            raise ValueError("tabulated potential needs one value per node")
        if not np.all(np.isfinite(values)):
            raise ValueError("tabulated potential has non-finite values")
        self.grid = grid
        self.values = values

    def _check(self, grid: Grid1D):
        if grid != self.grid:
            raise ValueError("tabulated potential was built for a different grid")

    def V(self, x):
        return np.interp(x, self.grid.nodes, self.values)

    def dV(self, x):
        return np.interp(x, self.grid.nodes, np.gradient(self.values, self.grid.dx))

    def node_values(self, grid):
        self._check(grid)
        return self.values.copy()

    def node_slopes(self, grid):
        self._check(grid)
        return np.gradient(self.values, grid.dx)

    def link_differences(self, grid):
        self._check(grid)
        return np.roll(self.values, -1) - self.values

    def consistency_error(self, grid, step=None):
        self._check(grid)
        v = self.values
        fd = (v[2:] - v[:-2]) / (2.0 * grid.dx)
        return float(np.max(np.abs(fd - self.node_slopes(grid)[1:-1])))

    def describe(self):
        return {"type": self.name, "values": self.values.tolist()}


# --------------------------------------------------------------------------- parameters / state


@dataclass(frozen=True)
class FpeParams:
    """Physical and discretization parameters.

    ``K`` is K_1 for alpha = 1 and K_alpha otherwise (likewise ``eta``).
    ``lambda_time=None`` selects the lowest-mode discrete eigenvalue of the grid.
    """

    m: float = 1.0
    eta: float = 1.0
    K: float = 1.0
    beta_thermo: float = 1.0
    alpha: float = 1.0
    lambda_time: Optional[float] = None
    s_laplace: float = 0.0
    einstein_consistent: bool = False

    def __post_init__(self):
        for name in ("m", "eta", "K", "beta_thermo"):
            value = getattr(self, name)
            if not (value > 0.0 and math.isfinite(value)):
                raise ValueError(f"{name} must be positive and finite, got {value!r}")
        if not 0.0 < self.alpha <= 1.0:
            raise ValueError(f"alpha must lie in (0, 1], got {self.alpha!r}")
        if self.lambda_time is not None and not self.lambda_time > 0.0:
            raise ValueError("lambda_time must be positive")
        if not self.s_laplace >= 0.0:
            raise ValueError("s_laplace must be >= 0")
        if self.einstein_consistent:
            target = 1.0 / (self.beta_thermo * self.m * self.eta)
            if abs(self.K - target) > 1e-12 * target:
                raise ValueError(f"einstein_consistent requires K = 1/(beta m eta) = {target!r}, got {self.K!r}")

    @property
    def mobility(self) -> float:
        return 1.0 / (self.m * self.eta)

    @classmethod
    def einstein(cls, m=1.0, eta=1.0, beta_thermo=1.0, **kw) -> "FpeParams":
        return cls(m=m, eta=eta, K=1.0 / (beta_thermo * m * eta), beta_thermo=beta_thermo,
                   einstein_consistent=True, **kw)


@dataclass
class Field:
    grid: Grid1D
    w: np.ndarray
    time: float = 0.0

    def __post_init__(self):
        self.w = np.asarray(self.w, dtype=float)
        if self.w.shape != (self.grid.m_cells,):
            raise ValueError("field needs one value per node")
        if not np.all(np.isfinite(self.w)):
            raise FloatingPointError("non-finite density")

    @property
    def mass(self) -> float:
        return float(np.sum(self.w) * self.grid.dx)

    def copy(self) -> "Field":
        return Field(self.grid, self.w.copy(), self.time)


@dataclass
class ObservableSeries:
    times: np.ndarray
    mass: np.ndarray
    mean: np.ndarray
    msd: np.ndarray
    mode_amp: Dict[int, np.ndarray]
    x_ref: float

    def __post_init__(self):
        n = len(self.times)
        if any(len(a) != n for a in (self.mass, self.mean, self.msd, *self.mode_amp.values())):
            raise ValueError("observable series lengths differ")

    def columns(self) -> Dict[str, np.ndarray]:
        cols = {"t": self.times, "mass": self.mass, "mean": self.mean, "msd": self.msd}
        for mode, amp in self.mode_amp.items():
            cols[f"mode_amp_{mode}"] = amp
        return cols


def _observe(grid: Grid1D, w: np.ndarray, x_ref: float, modes: Sequence[int]):
    x = grid.nodes
    dx = grid.dx
    mass = float(np.sum(w) * dx)
    if not mass > 0.0:
        raise ArithmeticError(f"non-positive mass {mass!r}")
    mean = float(np.sum(x * w) * dx / mass)
    msd = float(np.sum((x - x_ref) ** 2 * w) * dx / mass)
    amps = []
    for mode in modes:
        k = grid.wavenumber(mode)
        amps.append(2.0 * abs(np.sum(w * np.exp(-1j * k * x))) * dx / grid.length)
    return mass, mean, msd, amps


# --------------------------------------------------------------------------- denominators


def default_lambda_time(params: FpeParams, grid: Grid1D) -> float:
    """Discrete diffusion eigenvalue of the lowest nonzero mode, ``4K sin^2(k1 dx/2) / mu_diff^2``."""
    k1 = grid.wavenumber(1)
    mu_diff = build_diffusion_denominator(params, grid.dx)
    return 4.0 * params.K * math.sin(0.5 * k1 * grid.dx) ** 2 / mu_diff**2


def _lambda(params: FpeParams, lam: Optional[float]) -> float:
    lam = params.lambda_time if lam is None else lam
    if lam is None:
        raise ValueError("lambda_time is unset; resolve it with default_lambda_time(params, grid)")
    return lam


def build_time_denominator(params: FpeParams, kind: Optional[NidKind], t, dt, lam: Optional[float] = None):
    """Exact relaxation measure for the time derivative.

    For alpha = 1 this is always ``(1/lam)(1 - exp(-lam dt))`` regardless of
    ``kind``, so the classical and fractional paths coincide bit for bit.
    ``t`` and ``dt`` may be arrays (one entry per step).
    """
    lam = _lambda(params, lam)
    if np.any(np.asarray(dt) <= 0.0):
        raise ValueError("dt must be positive")
    if params.alpha == 1.0:
        out = -np.expm1(-lam * np.asarray(dt, dtype=float)) / lam
        out = out * np.ones(np.broadcast(np.asarray(t), np.asarray(dt)).shape)
        return float(out) if np.ndim(out) == 0 else out
    if kind is None:
        raise ValueError("fractional order needs a derivative kind")
    if kind.alpha != params.alpha:
        raise ValueError(f"kind alpha {kind.alpha} differs from params alpha {params.alpha}")
    return mu1(kind, lam, t, dt)


def build_advection_denominator(params: FpeParams, v_local: float, dx: float,
                                literal: bool = False) -> float:
    """``(K/v)(1 - exp(-v dx / K))``, the exact steady advection-diffusion measure; ``dx`` at v = 0.

    ``literal=True`` uses the printed grouping ``(K m eta / v)(1 - exp(-v dx / (K m eta)))``.
    """
    if not dx > 0.0:
        raise ValueError("dx must be positive")
    if not v_local >= 0.0:
        raise ValueError("drift speed must be >= 0")
    if v_local == 0.0:
        return float(dx)
    scale = params.K * params.m * params.eta if literal else params.K
    r = v_local * dx / scale
    if r == 0.0:  # subnormal speed
        return float(dx)
    # the bound is exact; clamp rounding at tiny r
    return float(min(dx, dx * -math.expm1(-r) / r))


def _link_denominator(a: np.ndarray, dx: float) -> np.ndarray:
    """Signed version of the advection measure in terms of ``a = v dx / K``: ``dx (1 - e^-a)/a``."""
    out = np.full_like(a, dx)
    nz = a != 0.0
    out[nz] = dx * -np.expm1(-a[nz]) / a[nz]
    return out


def build_diffusion_denominator(params: FpeParams, dx: float) -> float:
    """``(2/theta) sinh(theta dx / 2)`` with ``theta = sqrt(sigma(s)/K)``; ``dx`` at s = 0.

    ``sigma(s)`` is ``s`` for alpha = 1 and ``s**alpha`` otherwise.
    """
    if not dx > 0.0:
        raise ValueError("dx must be positive")
    s = params.s_laplace
    if s == 0.0:
        return float(dx)
    sigma = s if params.alpha == 1.0 else s**params.alpha
    theta = math.sqrt(sigma / params.K)
    half = 0.5 * theta * dx
    if half > _EXP_GUARD:
        raise OverflowError(f"theta*dx/2 = {half:.6g} overflows sinh")
    return max(float(dx), 2.0 / theta * math.sinh(half))


# --------------------------------------------------------------------------- spatial operator


@dataclass(frozen=True)
class _Stencil:
    lower: np.ndarray
    diag: np.ndarray
    upper: np.ndarray
    periodic: bool

    def apply(self, w: np.ndarray) -> np.ndarray:
        if self.periodic:
            left = np.roll(w, 1)
            right = np.roll(w, -1)
        else:
            left = np.empty_like(w)
            right = np.empty_like(w)
            left[0] = 0.0
            left[1:] = w[:-1]
            right[-1] = 0.0
            right[:-1] = w[1:]
        return self.lower * left + self.diag * w + self.upper * right

    @property
    def max_outflow(self) -> float:
        return float(np.max(-self.diag))

    @property
    def positive_offdiagonal(self) -> bool:
        return bool(np.all(self.lower >= 0.0) and np.all(self.upper >= 0.0))


def _build_stencil(grid: Grid1D, params: FpeParams, pot: Potential, bc: str,
                   advection: str = "flux", literal: bool = False) -> _Stencil:
    if bc not in BOUNDARIES:
        raise ValueError(f"unknown boundary condition {bc!r}; expected one of {BOUNDARIES}")
    if advection not in ADVECTION_FORMS:
        raise ValueError(f"unknown advection form {advection!r}; expected one of {ADVECTION_FORMS}")
    M = grid.m_cells
    dx = grid.dx
    K = params.K
    mu_diff = build_diffusion_denominator(params, dx)
    periodic = bc == "periodic"
    lower = np.zeros(M)
    diag = np.zeros(M)
    upper = np.zeros(M)

    if advection == "flux":
        # link j joins node j to node j+1 (j = M-1 is the periodic wrap link);
        # G_j = g_j (W_{j+1} - e^{-a_j} W_j), dW_m/dt = (G_m - G_{m-1}) / mu_diff
        a = pot.link_differences(grid) * params.mobility / K
        if np.max(np.abs(a)) > _EXP_GUARD:
            raise OverflowError("potential jump across a cell overflows the exponential flux")
        g = K * dx / (_link_denominator(a, dx) * mu_diff) / mu_diff
        ea = np.exp(-a)
        if not periodic:
            g[-1] = 0.0
        upper += g
        diag -= g * ea
        g_prev = np.roll(g, 1)
        diag -= g_prev
        lower += g_prev * np.roll(ea, 1)
        return _Stencil(lower, diag, upper, periodic)

    c = K / mu_diff**2
    lower += c
    diag -= 2.0 * c
    upper += c
    slope = pot.node_slopes(grid)
    v = np.abs(slope) * params.mobility
    mu_adv = np.array([build_advection_denominator(params, float(vi), dx, literal) for vi in v])
    coef = slope * params.mobility / mu_adv
    if advection == "forward":
        upper += coef
        diag -= coef
    else:
        fwd = slope >= 0.0
        upper += np.where(fwd, coef, 0.0)
        diag -= np.where(fwd, coef, 0.0)
        diag += np.where(fwd, 0.0, coef)
        lower -= np.where(fwd, 0.0, coef)
    if not periodic:
        # mirrored ghost nodes W_{-1} = W_0, W_M = W_{M-1}
        diag[0] += lower[0]
        lower[0] = 0.0
        diag[-1] += upper[-1]
        upper[-1] = 0.0
    return _Stencil(lower, diag, upper, periodic)


def _gate(stencil: _Stencil, mu_t: float) -> float:
    return mu_t * stencil.max_outflow


def _advance(stencil: _Stencil, w: np.ndarray, mu_t: float, source: Optional[np.ndarray],
             strict: bool) -> np.ndarray:
    if strict:
        margin = _gate(stencil, mu_t)
        if margin >= 1.0:
            raise StabilityError(f"stability gate margin mu_t*max(-diag) = {margin:.6g} >= 1", margin)
    new = w + mu_t * stencil.apply(w)
    if source is not None:
        new = new + source
    if not np.all(np.isfinite(new)):
        raise FloatingPointError("non-finite density")
    if strict and np.any(new < 0.0):
        raise NegativeDensityError(f"negative density {new.min():.3e}")
    return new


def step_fpe(field: Field, params: FpeParams, pot: Potential, dt: float, bc: str = "periodic",
             advection: str = "flux", literal: bool = False, strict: bool = False) -> Field:
    """One classical step ``W + mu_t L W`` with ``mu_t = (1/lam)(1 - e^{-lam dt})``."""
    if params.alpha != 1.0:
        raise ValueError("step_fpe is the alpha = 1 scheme; use step_ffpe_caputo")
    lam = params.lambda_time if params.lambda_time is not None else default_lambda_time(params, field.grid)
    mu_t = build_time_denominator(params, None, field.time, dt, lam)
    stencil = _build_stencil(field.grid, params, pot, bc, advection, literal)
    return Field(field.grid, _advance(stencil, field.w, mu_t, None, strict), field.time + dt)


def step_ffpe_caputo(field: Field, params: FpeParams, pot: Potential, kind: NidKind, dt: float,
                     bc: str = "periodic", advection: str = "flux", literal: bool = False,
                     strict: bool = False) -> Field:
    """Caputo-type step with ``mu_t`` evaluated at the current (left endpoint) time."""
    lam = params.lambda_time if params.lambda_time is not None else default_lambda_time(params, field.grid)
    mu_t = build_time_denominator(params, kind, field.time, dt, lam)
    stencil = _build_stencil(field.grid, params, pot, bc, advection, literal)
    return Field(field.grid, _advance(stencil, field.w, mu_t, None, strict), field.time + dt)


def step_ffpe_rl(field: Field, params: FpeParams, pot: Potential, kind: NidKind, w0: Field, dt: float,
                 bc: str = "periodic", advection: str = "flux", literal: bool = False,
                 strict: bool = False) -> Field:
    """Caputo-type step plus the source ``mu_t t_n^-a / Gamma(1-a) W(x, 0)``; needs t_n > 0."""
    if not field.time > 0.0:
        raise ValueError("Riemann-Liouville step is singular at t = 0; start at t = dt")
    lam = params.lambda_time if params.lambda_time is not None else default_lambda_time(params, field.grid)
    mu_t = build_time_denominator(params, kind, field.time, dt, lam)
    stencil = _build_stencil(field.grid, params, pot, bc, advection, literal)
    source = mu_t * rl_shift(field.time, params.alpha) * w0.w
    return Field(field.grid, _advance(stencil, field.w, mu_t, source, strict), field.time + dt)


# --------------------------------------------------------------------------- runs


@dataclass(frozen=True)
class InitialCondition:
    """``gaussian`` (center, width), ``mode`` (background + eps cos(k_mode x)), ``uniform``, ``zero`` or ``tabulated``."""

    shape: str = "gaussian"
    center: float = 0.0
    width: float = 1.0
    mode: int = 1
    eps: float = 0.5
    background: float = 1.0
    values: Optional[Tuple[float, ...]] = None

    def build(self, grid: Grid1D) -> np.ndarray:
        x = grid.nodes
        if self.shape == "gaussian":
            if not self.width > 0.0:
                raise ValueError("gaussian width must be positive")
            w = np.exp(-0.5 * ((x - self.center) / self.width) ** 2)
            return w / (np.sum(w) * grid.dx)
        if self.shape == "mode":
            return self.background + self.eps * np.cos(grid.wavenumber(self.mode) * (x - grid.x_min))
        if self.shape == "uniform":
            return np.full(grid.m_cells, 1.0 / grid.length)
        if self.shape == "zero":
            return np.zeros(grid.m_cells)
        if self.shape == "tabulated":
            if self.values is None or len(self.values) != grid.m_cells:
                raise ValueError("tabulated initial condition needs one value per node")
            return np.asarray(self.values, dtype=float)
        raise ValueError(f"unknown initial shape {self.shape!r}")


@dataclass(frozen=True)
class SimConfig:
    grid: Grid1D
    params: FpeParams
    potential: Potential = field(default_factory=Free)
    kind: Optional[NidKind] = None
    initial: InitialCondition = field(default_factory=InitialCondition)
    dt: float = 0.01
    n_steps: int = 100
    t_start: Optional[float] = None
    bc: str = "periodic"
    scheme: str = "caputo"
    advection: str = "flux"
    literal_paper_forms: bool = False
    strict_positivity: bool = False
    cadence: int = 1
    modes: Tuple[int, ...] = ()
    x_ref: Optional[float] = None
    keep_fields: bool = False
    rl_w0: Optional[InitialCondition] = None  # RL source profile; None means the initial field

    def __post_init__(self):
        if not (self.dt > 0.0 and math.isfinite(self.dt)):
            raise ValueError("dt must be positive and finite")
        if int(self.n_steps) != self.n_steps or self.n_steps < 0:
            raise ValueError("n_steps must be a non-negative integer")
        if int(self.cadence) != self.cadence or self.cadence < 1:
            raise ValueError("cadence must be a positive integer")
        if self.scheme not in ("caputo", "rl"):
            raise ValueError(f"unknown scheme {self.scheme!r}; expected 'caputo' or 'rl'")
        if self.bc not in BOUNDARIES:
            raise ValueError(f"unknown boundary condition {self.bc!r}")
        if self.advection not in ADVECTION_FORMS:
            raise ValueError(f"unknown advection form {self.advection!r}")
        if self.params.alpha < 1.0 and self.kind is None:
            raise ValueError("fractional order needs a derivative kind")
        if self.kind is not None and self.kind.alpha != self.params.alpha:
            raise ValueError("kind alpha and params alpha differ")

    @property
    def start_time(self) -> float:
        if self.t_start is not None:
            return self.t_start
        return self.dt if self.scheme == "rl" else 0.0


@dataclass
class RunResult:
    config: SimConfig
    observables: ObservableSeries
    final: Field
    lambda_time: float
    mu_t: np.ndarray
    mu_diff: float
    max_gate: float
    max_mass_drift: float
    shift_total: float = 0.0
    fields: List[np.ndarray] = field(default_factory=list)

    @property
    def effective_time(self) -> float:
        return float(np.sum(self.mu_t))


def run(config: SimConfig) -> RunResult:
    """Advance the configured simulation and sample observables every ``cadence`` steps.

    Deterministic: fixed loop order, no randomness.  Step failures are re-raised
    as :class:`SimulationError` carrying the step index.
    """
    cfg = config
    grid = cfg.grid
    params = cfg.params
    lam = params.lambda_time if params.lambda_time is not None else default_lambda_time(params, grid)
    t_first = cfg.start_time
    if cfg.scheme == "rl" and not t_first > 0.0:
        raise ValueError("Riemann-Liouville runs must start at t > 0 (default t = dt)")
    times = t_first + cfg.dt * np.arange(cfg.n_steps + 1)
    if cfg.n_steps:
        # per-step h_n = t_{n+1} - t_n keeps t_n + h_n == t_{n+1} exactly
        mu_t = np.atleast_1d(build_time_denominator(params, cfg.kind, times[:-1], np.diff(times), lam))
    else:
        mu_t = np.zeros(0)
    stencil = _build_stencil(grid, params, cfg.potential, cfg.bc, cfg.advection, cfg.literal_paper_forms)
    gates = mu_t * stencil.max_outflow
    max_gate = float(gates.max()) if gates.size else 0.0
    if cfg.strict_positivity and max_gate >= 1.0:
        n_bad = int(np.argmax(gates >= 1.0))
        raise SimulationError(n_bad, StabilityError(
            f"stability gate margin mu_t*max(-diag) = {gates[n_bad]:.6g} >= 1", float(gates[n_bad])))

    w = cfg.initial.build(grid)
    w0 = w.copy() if cfg.rl_w0 is None else cfg.rl_w0.build(grid)
    x_ref = cfg.x_ref
    mass0, mean0, _, _ = _observe(grid, w, 0.0, ())
    if x_ref is None:
        x_ref = mean0
    shifts = rl_shift(times[:-1], params.alpha) if (cfg.scheme == "rl" and cfg.n_steps) else None

    samples = {"t": [], "mass": [], "mean": [], "msd": []}
    amps: Dict[int, list] = {m: [] for m in cfg.modes}
    fields = []

    def sample(t, w):
        mass, mean, msd, a = _observe(grid, w, x_ref, cfg.modes)
        samples["t"].append(t)
        samples["mass"].append(mass)
        samples["mean"].append(mean)
        samples["msd"].append(msd)
        for m, v in zip(cfg.modes, a):
            amps[m].append(v)
        if cfg.keep_fields:
            fields.append(w.copy())

    sample(times[0], w)
    max_drift = 0.0
    shift_total = 0.0
    dx = grid.dx
    for n in range(cfg.n_steps):
        try:
            source = None
            if shifts is not None:
                source = (mu_t[n] * shifts[n]) * w0
                shift_total += float(np.sum(source) * dx)
            w = _advance(stencil, w, float(mu_t[n]), source, cfg.strict_positivity)
            mass = float(np.sum(w) * dx)
            max_drift = max(max_drift, abs(mass - mass0) / mass0)
            if (n + 1) % cfg.cadence == 0 or n + 1 == cfg.n_steps:
                sample(times[n + 1], w)
        except (ArithmeticError, ValueError) as exc:
            raise SimulationError(n, exc) from exc

    obs = ObservableSeries(
        times=np.asarray(samples["t"]), mass=np.asarray(samples["mass"]),
        mean=np.asarray(samples["mean"]), msd=np.asarray(samples["msd"]),
        mode_amp={m: np.asarray(v) for m, v in amps.items()}, x_ref=float(x_ref))
    return RunResult(
        config=cfg, observables=obs, final=Field(grid, w, float(times[-1])), lambda_time=lam,
        mu_t=mu_t, mu_diff=build_diffusion_denominator(params, grid.dx), max_gate=max_gate,
        max_mass_drift=max_drift, shift_total=shift_total, fields=fields)


# --------------------------------------------------------------------------- validation


def stationary_compare(field: Field, pot: Potential, beta_thermo: float) -> Dict[str, float]:
    """Compare against ``N exp(-beta V)`` normalised to the field's mass.

    ``linf_rel`` is ``max|W - W_ref| / max W_ref``; ``l1`` is ``sum|W - W_ref| dx``.
    """
    mass = field.mass
    if not mass > 0.0:
        raise ValueError("field mass must be positive")
    v = pot.node_values(field.grid)
    ref = np.exp(-beta_thermo * (v - v.min()))
    ref *= mass / (np.sum(ref) * field.grid.dx)
    diff = np.abs(field.w - ref)
    return {"linf_rel": float(diff.max() / ref.max()), "l1": float(np.sum(diff) * field.grid.dx)}


@dataclass(frozen=True)
class MsdFit:
    exponent: float
    prefactor: float
    n_points: int


def fit_msd(series: ObservableSeries, window: Tuple[float, float], subtract_initial: bool = True) -> MsdFit:
    """Least-squares line through ``log(msd)`` against ``log(t)`` on ``window``.

    With ``subtract_initial`` the initial spread ``msd(t_0)`` is removed first,
    so a finite-width start does not bend the power law.
    """
    lo, hi = window
    t = np.asarray(series.times, dtype=float)
    msd = np.asarray(series.msd, dtype=float)
    if subtract_initial:
        msd = msd - msd[0]
    sel = (t >= lo) & (t <= hi) & (t > 0.0) & (msd > 0.0)
    if np.count_nonzero(sel) < 10:
        raise InsufficientDataError(f"only {np.count_nonzero(sel)} samples in window {window}; need 10")
    slope, intercept = np.polyfit(np.log(t[sel]), np.log(msd[sel]), 1)
    return MsdFit(float(slope), float(math.exp(intercept)), int(np.count_nonzero(sel)))


@dataclass(frozen=True)
class EinsteinCheck:
    ratio: Optional[float]
    mean_shift: float
    msd_free: float
    note: str = ""


def einstein_relation_check(params: FpeParams, F: float, horizon: float, kind: Optional[NidKind] = None,
                            grid: Optional[Grid1D] = None, dt: float = 0.01, width: float = 1.0,
                            advection: str = "flux") -> EinsteinCheck:
    """Ratio ``<x>_F / (F beta <x^2>_0 / 2)`` at ``horizon``, from a forced and a force-free run.

    Both moments are measured as increments over their initial values.  The
    domain defaults to one wide enough that neither run feels the walls.
    """
    if not params.einstein_consistent:
        raise ValueError("Einstein relation check needs einstein_consistent parameters")
    n_steps = int(round(horizon / dt))
    if n_steps < 1:
        raise ValueError("horizon must cover at least one step")
    if grid is None:
        spread = math.sqrt(2.0 * params.K * max(horizon, 1.0)) + width
        half = max(20.0, 10.0 * spread + 2.0 * abs(F) * params.mobility * max(horizon, 1.0))
        grid = Grid1D(-half, half, 2 * int(math.ceil(half / 0.5)))
    if params.lambda_time is None:
        params = replace(params, lambda_time=default_lambda_time(params, grid))
    common = dict(grid=grid, params=params, kind=kind, dt=dt, n_steps=n_steps, bc="reflecting",
                  advection=advection, initial=InitialCondition("gaussian", 0.0, width),
                  cadence=n_steps, x_ref=0.0)
    free = run(SimConfig(potential=Free(), **common)).observables
    msd_free = float(free.msd[-1] - free.msd[0])
    if F == 0.0:
        return EinsteinCheck(None, 0.0, msd_free, "F = 0: ratio undefined")
    forced = run(SimConfig(potential=ConstantForce(F), **common)).observables
    shift = float(forced.mean[-1] - forced.mean[0])
    ratio = shift / (0.5 * F * params.beta_thermo * msd_free)
    return EinsteinCheck(ratio, shift, msd_free)
