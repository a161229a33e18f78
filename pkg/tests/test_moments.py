import math

import numpy as np
import pytest
from hypothesis import given, strategies as st
from scipy.stats import binom

from slowbond.exceptions import DomainError
from slowbond.moments import (MomentBoundParams, binomial_central_moment, chernoff_check, compute_J, cramer_I,
                              curvature_infimum, verify_moment_bound)


def _literal_I(t, rho):
    """The entropy written term by term with plain logs."""
    return (-(1 - t - rho) * math.log(1 - rho) + (t + rho) * math.log(t + rho)
            + (1 - t - rho) * math.log(1 - rho - t) - (t + rho) * math.log(rho))


def test_endpoint_values():
    for rho in (0.1, 0.3, 0.5, 0.8):
        assert cramer_I(0.0, rho) == 0.0
        assert cramer_I(1 - rho, rho) == pytest.approx(-math.log(rho), rel=1e-15)


def test_small_t_curvature_limit():
    t, rho = 1e-4, 0.3
    assert cramer_I(t, rho) / t ** 2 == pytest.approx(1 / 0.42, abs=1e-2)
    # log1p form keeps digits far below where the literal form cancels
    assert cramer_I(1e-9, rho) / 1e-18 == pytest.approx(1 / 0.42, rel=1e-6)


@given(st.floats(0.02, 0.98), st.floats(0.0, 1.0))
def test_matches_literal_formula(rho, frac):
    t = frac * (1 - rho)
    if 1 - rho - t <= 1e-12:
        return
    assert cramer_I(t, rho) == pytest.approx(_literal_I(t, rho), rel=1e-9, abs=1e-12)


@given(st.floats(0.02, 0.98))
def test_positive_and_continuous(rho):
    t = np.linspace(0, 1 - rho, 513)
    vals = cramer_I(t, rho)
    assert vals[0] == 0 and np.all(vals[1:] > 0)
    assert np.all(np.diff(vals) > 0)
    assert vals[-1] == pytest.approx(-math.log(rho), rel=1e-12)


def test_domain_errors():
    with pytest.raises(DomainError):
        cramer_I(-1e-3, 0.3)
    with pytest.raises(DomainError):
        cramer_I(0.71, 0.3)
    with pytest.raises(DomainError):
        cramer_I(0.1, 1.0)
    with pytest.raises(DomainError):
        cramer_I(np.nan, 0.3)


def test_J_symmetry_and_values():
    half = compute_J(0.5)
    assert abs(half.J1 - half.J2) < 1e-8
    assert half.J == pytest.approx(2.0, abs=1e-9) and half.C == pytest.approx(1.0, abs=1e-9)
    a, b = compute_J(0.2), compute_J(0.8)
    assert a.J == pytest.approx(b.J, rel=1e-12)
    assert a.J1 == pytest.approx(b.J2, rel=1e-12)
    # frozen from the refinement oracle below
    assert a.J == pytest.approx(2.3105, abs=1e-3)
    assert compute_J(0.3).J == pytest.approx(2.1182, abs=1e-3)


@pytest.mark.parametrize("rho", [0.2, 0.3, 0.5, 0.7])
def test_J_grid_refinement(rho):
    coarse = curvature_infimum(rho, 2048)
    fine = curvature_infimum(rho, 32768)
    assert coarse == pytest.approx(fine, abs=1e-6)
    t = np.linspace(1e-6, 1 - rho, 4001)
    assert coarse <= np.min(cramer_I(t, rho) / t ** 2) + 1e-12
    assert coarse <= 1 / (2 * rho * (1 - rho)) + 1e-12


def test_params_derived_quantities():
    p = MomentBoundParams(0.4, 3.0, 2.5)
    assert p.J == 2.5 and p.C == pytest.approx(0.8)


def test_moment_examples():
    C = compute_J(0.5).C
    assert binomial_central_moment(2, 0.5, 2) == 0.125
    assert 0.125 <= C / 2
    checks = verify_moment_bound(0.3, [50], 6)
    assert all(c.ratio <= 1 for c in checks)
    zero = [c for c in verify_moment_bound(0.2, [2, 5], 0)]
    assert all(c.k == 0 and c.moment == 1.0 and c.bound == 1.0 and c.ratio == 1.0 for c in zero)


@pytest.mark.parametrize("M,rho", [(5, 0.3), (10, 0.5), (50, 0.2)])
def test_central_moments_against_scipy(M, rho):
    j = np.arange(M + 1)
    pmf = binom.pmf(j, M, rho)
    for order in range(1, 13):
        ref = np.sum(pmf * (j / M - rho) ** order)
        assert binomial_central_moment(M, rho, order) == pytest.approx(ref, rel=1e-8, abs=1e-15)
    assert binomial_central_moment(M, rho, 2) == pytest.approx(rho * (1 - rho) / M, rel=1e-14)
    assert binomial_central_moment(M, rho, 1) == pytest.approx(0.0, abs=1e-16)


def test_moment_bound_holds_on_grid():
    for rho in (0.2, 0.5):
        checks = verify_moment_bound(rho, [2, 5, 10, 50], 6)
        assert len(checks) == 4 * 7
        assert max(c.ratio for c in checks) <= 1.0


def test_k_max_limits():
    with pytest.raises(ValueError):
        verify_moment_bound(0.5, [2], 9)
    with pytest.raises(ValueError):
        verify_moment_bound(0.5, [2], -1)
    assert max(c.ratio for c in verify_moment_bound(0.3, [3, 7], 8)) <= 1.0


def test_chernoff_bound_exact():
    for rho in (0.2, 0.5):
        checks = chernoff_check(rho, 30, 64)
        assert len(checks) == 30 * 64
        assert all(c.holds() for c in checks)
        assert all(c.bound == 1.0 for c in checks if c.t == 0.0)
        # equality at t = 1 - rho: both sides are rho^M
        last = [c for c in checks if c.t == 1 - rho]
        assert all(c.tail == pytest.approx(rho ** c.M, rel=1e-12) for c in last)
        assert all(c.bound == pytest.approx(rho ** c.M, rel=1e-12) for c in last)


def test_chernoff_tail_against_scipy():
    rho, M = 0.3, 20
    for c in [c for c in chernoff_check(rho, M, 16) if c.M == M]:
        j0 = math.ceil(M * (rho + c.t) - 1e-7)
        assert c.tail == pytest.approx(binom.sf(j0 - 1, M, rho), rel=1e-10, abs=1e-300)
