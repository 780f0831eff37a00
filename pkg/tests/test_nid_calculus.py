import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from esddfd.measures import MeasureDomainError, NidKind, SolutionFn, Tag, mu1
from esddfd.nid_calculus import (
    caputo_conformable_factor, division_sweep, effective_rate, fdqr, fdqr_rl, ml_division_residual,
    property_suite,
)
from esddfd.specfun import ml_one, ml_two

KINDS = [
    NidKind(Tag.MICKENS),
    NidKind(Tag.CONFORMABLE, 0.5),
    NidKind(Tag.HOLDER_CHEN, 0.7),
    NidKind(Tag.HE, 0.6, L0=2.0, k=1.5),
    NidKind(Tag.GENERAL_LOCAL, 0.8, psi=lambda x: x**1.5),
    NidKind(Tag.CAPUTO, 0.5),
    NidKind(Tag.CAPUTO_FABRIZIO, 0.7, lambda_effective=0.8),
    NidKind(Tag.ATANGANA_BALEANU, 0.6, lambda_effective=1.3),
    NidKind(Tag.GENERAL_NONLOCAL, 0.8, psi=lambda x: 2.0 * np.log1p(x)),
]
ids = [k.tag.value for k in KINDS]


def f(t):
    return 2.0 + math.sin(t)


def g(t):
    return 1.0 + t * t


def test_fdqr_identity_example():
    got = fdqr(NidKind(Tag.MICKENS), lambda s: s, 1.0, 0.0, 0.1)
    assert got == pytest.approx(0.1 / -math.expm1(-0.1), rel=1e-15)
    assert got == pytest.approx(1.0508331944, rel=1e-10)


@pytest.mark.parametrize("kind", KINDS, ids=ids)
def test_fdqr_of_solution_is_minus_rate_times_solution(kind):
    u = SolutionFn(kind, 1.4)
    for t in (0.0, 0.3, 2.0):
        got = fdqr(kind, u, 1.4, t, 0.05)
        assert got == pytest.approx(-u.rate * u(t), rel=1e-12)


def test_fdqr_rl_constant_example():
    kind = NidKind(Tag.CAPUTO, 0.5)
    assert fdqr_rl(kind, lambda s: 1.0, 1.0, 1.0, 0.1, 1.0) == pytest.approx(0.5641895835477563, rel=1e-15)


def test_fdqr_rl_reduces_to_caputo_at_alpha_one():
    kind = NidKind(Tag.CAPUTO, 1.0)
    assert fdqr_rl(kind, f, 1.0, 1.0, 0.1, 3.0) == fdqr(kind, f, 1.0, 1.0, 0.1)


@pytest.mark.parametrize("kind", KINDS, ids=ids)
def test_property_suite_algebraic_rules(kind):
    rep = property_suite(kind, f, g, 1.0, 1.0, 0.1)
    assert rep.residuals["linearity"] <= 1e-13
    assert rep.residuals["constant"] == 0.0
    assert rep.residuals["product_rule_discrete"] <= 1e-12
    assert rep.residuals["quotient_rule_discrete"] <= 1e-12
    # the plain Leibniz rule is off by exactly the discrete correction
    m = mu1(kind, 1.0, 1.0, 0.1)
    df = (f(1.1) - f(1.0)) / m
    dg = (g(1.1) - g(1.0)) / m
    assert rep.residuals["product_rule_gap"] == pytest.approx(abs(m * df * dg), rel=1e-12)


@pytest.mark.parametrize("kind", KINDS, ids=ids)
def test_property_suite_limits_shrink(kind):
    rep = property_suite(kind, f, g, 1.0, 1.0, 0.1)
    for name in ("power_rule_limit", "chain_rule_limit"):
        assert rep.limit_ok(name)
        assert rep.limits[name][-1] < 1e-3
    assert set(rep.orders) == {"power_rule_limit", "chain_rule_limit"}
    names = [n for n, _ in rep.rows()]
    assert "linearity" in names and "chain_rule_limit" in names


@settings(max_examples=50, deadline=None)
@given(st.sampled_from(KINDS), st.floats(-5.0, 5.0), st.floats(0.0, 4.0), st.floats(1e-3, 1.0))
def test_constant_rule_everywhere(kind, c, t, h):
    assert fdqr(kind, lambda s: c, 0.7, t, h) == 0.0


def test_caputo_conformable_factor():
    assert caputo_conformable_factor(1.0, 0.7) == pytest.approx(1.0, rel=1e-12)
    # E_a(0)/E_{a,a}(0) = Gamma(a)
    assert caputo_conformable_factor(0.5, 1e-14) == pytest.approx(math.gamma(0.5), rel=1e-5)
    with pytest.raises(MeasureDomainError):
        caputo_conformable_factor(0.5, 0.0)


def test_effective_rate_examples():
    assert effective_rate(NidKind(Tag.MICKENS), 3.0, 1.0) == pytest.approx(3.0, rel=1e-8)
    assert effective_rate(NidKind(Tag.CONFORMABLE, 0.5), 1.0, 4.0) == pytest.approx(0.5, rel=1e-8)
    a, lam, t = 0.6, 1.2, 2.0
    z = -lam * t**a
    expected = lam * t ** (a - 1.0) * ml_two(a, a, z) / ml_one(a, z)
    assert effective_rate(NidKind(Tag.CAPUTO, a), lam, t) == pytest.approx(expected, rel=1e-6)
    with pytest.raises(MeasureDomainError):
        effective_rate(NidKind(Tag.CAPUTO, a), lam, 0.0)


@pytest.mark.parametrize("lam", [0.5, 1.0, 2.0])
@pytest.mark.parametrize("t", [0.5, 1.0, 2.0])
def test_division_formula_identity_at_alpha_one(lam, t):
    for h in (0.5, 0.1, 0.01):
        assert ml_division_residual(1.0, lam, t, h) <= 1e-14


def test_division_formula_zero_step():
    assert ml_division_residual(0.4, 1.0, 1.0, 0.0) <= 1e-15


@pytest.mark.parametrize("alpha", [0.3, 0.5, 0.8])
@pytest.mark.parametrize("lam", [0.5, 1.0, 2.0])
@pytest.mark.parametrize("t", [0.5, 1.0, 2.0])
def test_division_formula_limit(alpha, lam, t):
    seq = [ml_division_residual(alpha, lam, t, h) for h in (1e-1, 1e-2, 1e-3, 1e-4)]
    assert all(b < a for a, b in zip(seq, seq[1:]))
    assert seq[-1] <= 1e-3


def test_division_sweep_shape():
    rows = division_sweep([0.5, 1.0], [1.0], [1.0, 2.0], [0.1, 0.01])
    assert len(rows) == 8
    assert set(rows[0]) == {"alpha", "lambda", "t", "h", "residual"}
    assert all(r["residual"] <= 1e-14 for r in rows if r["alpha"] == 1.0)


@pytest.mark.parametrize("alpha", [0.4, 0.7])
def test_conformable_times_factor_approaches_caputo(alpha):
    t = 1.3
    conf = NidKind(Tag.CONFORMABLE, alpha)
    cap = NidKind(Tag.CAPUTO, alpha)
    factor = caputo_conformable_factor(alpha, t)
    gaps = []
    for h in (1e-1, 1e-2, 1e-3, 1e-4):
        a = factor * fdqr(conf, f, 1.0, t, h)
        b = fdqr(cap, f, 1.0, t, h)
        gaps.append(abs(a - b) / abs(b))
    assert all(y < x for x, y in zip(gaps, gaps[1:]))
    assert gaps[-1] < 1e-3


@pytest.mark.parametrize("kind", KINDS, ids=ids)
def test_continuity(kind):
    t = 0.8
    hs = [10.0 ** -k for k in range(1, 8)]
    m = [mu1(kind, 1.0, t, h) for h in hs]
    df = [abs(f(t + h) - f(t)) for h in hs]
    assert all(b < a for a, b in zip(m, m[1:])) and m[-1] < 1e-6
    assert all(b < a for a, b in zip(df, df[1:])) and df[-1] < 1e-6
