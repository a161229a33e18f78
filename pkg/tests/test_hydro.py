import numpy as np
import pytest
from hypothesis import given, strategies as st
from hypothesis.extra.numpy import arrays
from scipy.integrate import solve_ivp

from slowbond.basis import CoefficientVector, basis, integrate
from slowbond.fields import FieldTrajectory, default_grid
from slowbond.hydro import heat_robin_evolve, heat_robin_profile, linear_response, ode_residual, phi1, phi2
from slowbond.rate import TestFunction, slot_weights

RHO = 0.5


def test_evolve_at_zero_is_identity():
    c = CoefficientVector.from_modes({1: 0.3, -2: 1.5, 0: -0.2}, K=4)
    assert np.array_equal(heat_robin_evolve(c, 0.0).values, c.values)


def test_single_cosine_decay():
    out = heat_robin_evolve(CoefficientVector.unit(-1, K=3), 0.1)
    # e^{-0.4 pi^2} = 0.0192963...
    assert out[-1] == pytest.approx(np.exp(-4 * np.pi ** 2 * 0.1), rel=1e-14)
    assert out[-1] == pytest.approx(0.01931, abs=1e-4)
    assert np.count_nonzero(out.values) == 1


@given(arrays(np.float64, 9, elements=st.floats(-3, 3)), st.floats(0, 0.2), st.floats(0, 0.2))
def test_semigroup_and_decay(c, s, t):
    g = CoefficientVector(c)
    two = heat_robin_evolve(heat_robin_evolve(g, s), t)
    one = heat_robin_evolve(g, s + t)
    assert np.allclose(two.values, one.values, rtol=1e-12, atol=1e-300)
    h = basis(4).norms_sq
    norms = [np.sum(h * heat_robin_evolve(g, r).values ** 2) for r in (0.0, s, s + t)]
    assert norms[0] >= norms[1] * (1 - 1e-14) >= norms[2] * (1 - 1e-14) ** 2


def test_profile_solves_heat_equation_pointwise():
    gamma = lambda u: 0.5 + 0.2 * np.cos(2 * np.pi * u)
    u = np.linspace(0, 1, 11)
    got = heat_robin_profile(gamma, 0.05, u, K=10)
    assert np.allclose(got, 0.5 + 0.2 * np.exp(-4 * np.pi ** 2 * 0.05) * np.cos(2 * np.pi * u), atol=1e-9)


def test_phi_functions_continuous_across_switch():
    z = np.array([-1e-2 - 1e-12, -1e-2 + 1e-12, 1e-2 - 1e-12, 1e-2 + 1e-12, 0.0])
    assert np.allclose(phi2(z[:2])[0], phi2(z[:2])[1], rtol=1e-10)
    assert np.allclose(phi2(z[2:4])[0], phi2(z[2:4])[1], rtol=1e-10)
    assert phi1(0.0) == 1.0 and phi2(0.0) == 0.5
    big = np.array([-50.0, -3.0, 2.0])
    assert np.allclose(phi2(big), (np.exp(big) - 1 - big) / big ** 2)


def test_pure_relaxation_of_cosine_mode():
    grid = default_grid(0.2, 41)
    traj = linear_response(CoefficientVector.unit(-1, K=4), TestFunction.zero(4, 0.2), grid, RHO)
    assert np.allclose(traj.mode(-1), 0.5 * np.exp(-4 * np.pi ** 2 * grid), rtol=1e-13)
    others = np.delete(traj.values, traj.K - 1, axis=1)
    assert np.all(others == 0)


def test_constant_forcing_closed_form_and_ode_oracle():
    T = 0.5
    grid = default_grid(T, 101)
    G = TestFunction.constant(CoefficientVector.unit(1, K=3), T)
    traj = linear_response(None, G, grid, RHO)
    w1 = slot_weights(3, RHO)[3 + 1]
    e1 = basis(3).eigenvalues[3 + 1]
    assert np.allclose(traj.mode(1), w1 * (1 - np.exp(e1 * grid)) / -e1, rtol=1e-12, atol=1e-15)
    sol = solve_ivp(lambda t, x: e1 * x + w1, (0, T), [0.0], method="RK45", t_eval=grid, rtol=1e-11, atol=1e-13)
    assert np.allclose(traj.mode(1), sol.y[0], atol=1e-9)


def test_time_varying_forcing_against_ode_oracle():
    T = 0.3
    knots = np.linspace(0, T, 7)
    G = TestFunction.from_callables({1: lambda t: t, -2: lambda t: np.cos(10 * t)}, knots, M=3)
    phi = CoefficientVector.from_modes({-1: 1.0, 2: 0.4}, K=3)
    grid = default_grid(T, 31)
    traj = linear_response(phi, G, grid, RHO, K=3)
    e = basis(3).eigenvalues
    w = slot_weights(3, RHO)
    x0 = phi.values * basis(3).norms_sq

    def rhs(t, x):
        return e * x + w * G.values([t])[:, 0]

    sol = solve_ivp(rhs, (0, T), x0, method="Radau", t_eval=grid, rtol=1e-11, atol=1e-13, max_step=T / 60)
    assert np.max(np.abs(traj.values - sol.y.T)) < 1e-8


def test_linearity():
    T = 0.2
    grid = default_grid(T, 21)
    knots = np.linspace(0, T, 5)
    p1 = CoefficientVector.from_modes({1: 0.4}, K=3)
    p2 = CoefficientVector.from_modes({-1: -0.7, 3: 0.1}, K=3)
    G1 = TestFunction.from_callables({1: lambda t: 1 + t}, knots, M=3)
    G2 = TestFunction.from_callables({-2: np.sin}, np.linspace(0, T, 9), M=3)
    a = linear_response(p1, G1, grid, RHO, K=3)
    b = linear_response(p2, G2, grid, RHO, K=3)
    ab = linear_response(p1 + p2, G1 + G2, grid, RHO, K=3)
    assert np.allclose(ab.values, a.values + b.values, rtol=1e-12, atol=1e-14)


def test_mass_mode_is_constant():
    G = TestFunction.constant(CoefficientVector.from_modes({0: 3.0, 1: 1.0}, K=2), 0.4)
    phi = CoefficientVector.from_modes({0: 0.25, -1: 1.0}, K=2)
    traj = linear_response(phi, G, default_grid(0.4, 21), RHO)
    assert np.all(traj.mode(0) == 0.25)


def test_initial_value_is_projection_of_density():
    phi = CoefficientVector.from_modes({1: 0.8, -3: 0.2}, K=4)
    traj = linear_response(phi, TestFunction.zero(4, 0.1), default_grid(0.1, 3), RHO, K=4)
    for n in (1, -3, 2):
        direct = integrate(lambda u: phi.evaluate(u) * basis(4).values(u)[n + 4])
        assert traj.mode(n)[0] == pytest.approx(direct, abs=1e-12)


def _forced(points):
    T = 0.5
    G = TestFunction.constant(CoefficientVector.unit(1, K=2), T)
    grid = default_grid(T, points)
    return linear_response(None, G, grid, RHO, K=2), G


def test_ode_residual_is_second_order_with_documented_constant():
    w1 = slot_weights(2, RHO)[3]
    e1 = basis(2).eigenvalues[3]
    prev = None
    for points in (101, 201, 401):
        traj, G = _forced(points)
        dt = traj.times[1] - traj.times[0]
        r = ode_residual(traj, G, RHO)
        assert r <= dt ** 2 / 3 * w1 * e1 ** 2
        if prev is not None:
            assert r / prev == pytest.approx(0.25, abs=0.03)
        prev = r


def test_ode_residual_detects_perturbation():
    traj, G = _forced(201)
    bumped = traj.values.copy()
    bumped[100, 3] += 1.0
    dt = traj.times[1] - traj.times[0]
    r = ode_residual(FieldTrajectory(traj.times, bumped), G, RHO)
    assert r > 0.5 / dt - 1


def test_ode_residual_zero_trajectory():
    zero = FieldTrajectory(default_grid(1.0, 11), np.zeros((11, 5)))
    assert ode_residual(zero, TestFunction.zero(2), RHO) == 0.0
