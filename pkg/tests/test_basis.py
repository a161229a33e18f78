import numpy as np
import pytest
from hypothesis import given, strategies as st
from hypothesis.extra.numpy import arrays
from scipy.integrate import quad
from scipy.optimize import brentq

from slowbond.basis import (FUNCTIONAL, CoefficientVector, basis, bc_residual, d2theta, dtheta, eigenvalue,
                            integrate, laplacian_apply, metric_d, norm_sq, project, solve_wavenumber, theta,
                            wavenumber, wavenumber_equation)

# Frozen from an independent brentq solve of tan(x/2) = -x/2.
K1, K2, K5 = 4.057515676220868, 9.826360878869767, 28.414873450382377


def _oracle_wavenumber(n):
    lo, hi = (2 * n - 1) * np.pi + 1e-9, (2 * n + 1) * np.pi - 1e-9
    return brentq(lambda x: np.tan(x / 2) + x / 2, lo, hi, xtol=1e-15)


def test_wavenumbers_frozen_values():
    assert wavenumber(1) == pytest.approx(K1, rel=1e-13)
    assert wavenumber(2) == pytest.approx(K2, rel=1e-13)
    assert wavenumber(5) == pytest.approx(K5, rel=1e-13)


@pytest.mark.parametrize("n", [1, 3, 10, 25, 50])
def test_wavenumber_matches_tangent_form(n):
    assert wavenumber(n) == pytest.approx(_oracle_wavenumber(n), rel=1e-12)


def test_wavenumber_residual_and_brackets():
    for n in range(1, 51):
        k = solve_wavenumber(n)
        assert (2 * n - 1) * np.pi < k < (2 * n + 1) * np.pi
        assert abs(wavenumber_equation(k)) < 1e-12


def test_eigenvalues_and_norms():
    assert eigenvalue(0) == 0.0
    assert eigenvalue(-3) == pytest.approx(-(6 * np.pi) ** 2)
    assert eigenvalue(1) == pytest.approx(-K1 ** 2)
    assert norm_sq(0) == 1.0 and norm_sq(-2) == 0.5
    for n in (1, 2, 7):
        h, _ = quad(lambda u: theta(n, u) ** 2, 0, 1, epsabs=1e-14)
        assert norm_sq(n) == pytest.approx(h, rel=1e-12)


@pytest.mark.parametrize("n", range(-6, 7))
def test_derivatives_consistent(n):
    u = np.linspace(0, 1, 101)
    eps = 1e-6
    fd = (theta(n, u + eps) - theta(n, u - eps)) / (2 * eps)
    assert np.allclose(dtheta(n, u), fd, atol=1e-6 * max(1, wavenumber(n)) ** 2)
    assert np.allclose(d2theta(n, u), eigenvalue(n) * theta(n, u), atol=1e-10 * max(1, abs(eigenvalue(n))))


def test_table_orthogonality():
    table = basis(20)
    from slowbond.basis import quadrature_rule

    nodes, w = quadrature_rule()
    V = table.values(nodes)
    gram = (V * w) @ V.T
    assert np.max(np.abs(gram - np.diag(table.norms_sq))) < 1e-9


def test_table_is_immutable():
    table = basis(4)
    with pytest.raises(ValueError):
        table.eigenvalues[0] = 1.0
    with pytest.raises(IndexError):
        table.index(5)


coeffs = arrays(np.float64, 2 * 6 + 1, elements=st.floats(-3, 3))


@given(coeffs)
def test_every_combination_satisfies_matching_rule(c):
    r1, r2 = bc_residual(CoefficientVector(c))
    scale = 1 + np.abs(c).sum() * 40
    assert abs(r1) < 1e-12 * scale and abs(r2) < 1e-12 * scale


@given(coeffs)
def test_project_inverts_evaluate(c):
    vec = CoefficientVector(c)
    back = project(vec.evaluate, 6)
    assert np.allclose(back.values, c, atol=1e-10)


def test_project_from_samples():
    u = np.linspace(0, 1, 2001)
    c = project(np.cos(2 * np.pi * u), 3)
    assert c[-1] == pytest.approx(1.0, abs=1e-5)
    assert np.max(np.abs(np.delete(c.values, -1 + 3))) < 1e-5


def test_coefficient_vector_algebra():
    a = CoefficientVector.unit(2, K=3)
    b = CoefficientVector.from_modes({-1: 2.0, 5: 1.0})
    s = a + b
    assert s.K == 8 and s[2] == 1.0 and s[-1] == 2.0 and s[5] == 1.0 and s[9] == 0.0
    assert (2 * a - a)[2] == 1.0
    assert (-a)[2] == -1.0
    assert a.resized(1)[2] == 0.0
    with pytest.raises(ValueError):
        CoefficientVector([1.0, 2.0])
    with pytest.raises(ValueError):
        CoefficientVector([np.inf])
    with pytest.raises(ValueError):
        a + a.as_functional()
    with pytest.raises(ValueError):
        a.as_functional().evaluate(0.3)


def test_as_functional_pairs_with_integral():
    f = CoefficientVector.from_modes({1: 0.7, -2: -0.4, 0: 0.2}, K=3)
    A = f.as_functional()
    g = CoefficientVector.from_modes({1: 1.1, -2: 0.5}, K=3)
    direct = integrate(lambda u: f.evaluate(u) * g.evaluate(u))
    assert np.dot(A.values, g.values) == pytest.approx(direct, rel=1e-12)


def test_laplacian_apply_matches_second_derivative():
    c = CoefficientVector.from_modes({1: 0.3, -1: 1.0, 3: -0.2}, K=4)
    u = np.linspace(0, 1, 33)
    assert np.allclose(laplacian_apply(c).evaluate(u), c.second_derivative(u), atol=1e-10)


@given(arrays(np.float64, 9, elements=st.floats(-5, 5)), arrays(np.float64, 9, elements=st.floats(-5, 5)),
       arrays(np.float64, 9, elements=st.floats(-5, 5)))
def test_metric_axioms(a, b, c):
    A, B, C = (CoefficientVector(x, FUNCTIONAL) for x in (a, b, c))
    assert metric_d(A, A) == 0.0
    assert metric_d(A, B) == pytest.approx(metric_d(B, A))
    assert metric_d(A, C) <= metric_d(A, B) + metric_d(B, C) + 1e-12
    assert metric_d(A, B) < 3.0


def test_metric_requires_functionals():
    with pytest.raises(ValueError):
        metric_d(CoefficientVector.unit(1), CoefficientVector.unit(1))
