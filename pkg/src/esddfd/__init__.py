"""Exact-denominator finite difference kit for integer and non-integer derivative models."""

__version__ = "0.1.0"

from .specfun import gamma, rgamma, ml_one, ml_two, ml_complex, gen_sine  # noqa: E402
from .measures import Tag, NidKind, SolutionFn, mu1, mu1_implicit, mu2, rl_shift  # noqa: E402
from .nid_calculus import fdqr, fdqr_rl, property_suite, ml_division_residual  # noqa: E402
from .master_equations import (  # noqa: E402
    TimeGrid, ScalarSeries, solve_relaxation, solve_relaxation_rl, solve_oscillation,
)
from .fokker_planck import (  # noqa: E402
    Grid1D, FpeParams, Field, SimConfig, InitialCondition, Free, ConstantForce, Harmonic, Tabulated, run,
    stationary_compare, einstein_relation_check, fit_msd,
)
