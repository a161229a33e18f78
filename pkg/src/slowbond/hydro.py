"""Deterministic limits at the coefficient level.

``heat_robin_evolve`` solves the heat equation with the slow-bond matching
rule by scaling each basis coefficient. ``linear_response`` solves, mode by
mode, ``x_n' = e_n x_n + <theta_n|G_t>`` with ``x_n(0) = int phi theta_n``.

The two act on different objects. A macroscopic density ``gamma`` near
``rho`` corresponds to the centred field through
``mu(theta_n) ~ (N / a_N) int (gamma - rho) theta_n``; since the heat flow
is linear and leaves constants fixed, evolving ``gamma`` and then centring
and rescaling is the same as evolving the centred coefficients.
"""
from __future__ import annotations

import numpy as np

from .basis import DEFAULT_CUTOFF, FUNCTION, CoefficientVector, basis, project
from .fields import FieldTrajectory
from .rate import TestFunction, slot_weights

_SMALL = 1e-2


def heat_robin_evolve(gamma: CoefficientVector, t: float) -> CoefficientVector:
    """Coefficients of the solution at time ``t`` from initial coefficients ``gamma``."""
    gamma._require(FUNCTION)
    return CoefficientVector(gamma.values * np.exp(basis(gamma.K).eigenvalues * t), FUNCTION)


def heat_robin_profile(gamma, t: float, u, K: int = DEFAULT_CUTOFF):
    """Pointwise truncated solution at time ``t`` for an initial profile callable."""
    c = gamma if isinstance(gamma, CoefficientVector) else project(gamma, K)
    return heat_robin_evolve(c, t).evaluate(u)


def phi1(z):
    """``(e^z - 1) / z`` with value 1 at 0."""
    z = np.asarray(z, dtype=float)
    safe = np.where(z == 0, 1.0, z)
    return np.where(z == 0, 1.0, np.expm1(z) / safe)


def phi2(z):
    """``(e^z - 1 - z) / z^2``, by series near 0."""
    z = np.asarray(z, dtype=float)
    small = np.abs(z) < _SMALL
    safe = np.where(small, 1.0, z)
    direct = (np.expm1(safe) - safe) / safe ** 2
    series = 1 / 2 + z * (1 / 6 + z * (1 / 24 + z * (1 / 120 + z / 720)))
    return np.where(small, series, direct)


def linear_response(phi: CoefficientVector | None, G: TestFunction, grid, rho: float,
                    K: int | None = None) -> FieldTrajectory:
    """Deterministic trajectory driven by ``G`` from the density ``phi``.

    The forcing ``w_n b_n(t)`` is linear between the knots of ``G``, so each
    step uses the exact exponential integrator; no stiffness limit applies.
    """
    grid = np.asarray(grid, dtype=float)
    if K is None:
        K = max(DEFAULT_CUTOFF, G.M, 0 if phi is None else phi.K)
    table = basis(K)
    e = table.eigenvalues
    x = np.zeros(2 * K + 1) if phi is None else phi.resized(K).values * table.norms_sq
    w = slot_weights(K, rho)
    G = G.resized(K)

    inner = G.knots[(G.knots > 0) & (G.knots < grid[-1])]
    steps = np.union1d(np.union1d([0.0], grid), inner)
    forcing = w[:, None] * G.values(steps)
    out = np.empty((grid.size, 2 * K + 1))
    gi = 0
    if grid[0] == 0.0:
        out[0] = x
        gi = 1
    for s in range(steps.size - 1):
        d = steps[s + 1] - steps[s]
        z = e * d
        f1 = forcing[:, s]
        f2 = forcing[:, s + 1]
        x = np.exp(z) * x + d * (phi1(z) * f1 + phi2(z) * (f2 - f1))
        if gi < grid.size and steps[s + 1] == grid[gi]:
            out[gi] = x
            gi += 1
    return FieldTrajectory(grid, out)


def ode_residual(traj: FieldTrajectory, G: TestFunction, rho: float) -> float:
    """Largest mismatch of the mode equations, with second-order differences.

    For a smooth solution on a uniform grid of step ``dt`` the residual is
    about ``dt^2/6 max|x'''|`` inside and ``dt^2/3 max|x'''|`` at the ends;
    kinks of ``G`` between grid points add an ``O(dt * |jump of b'|)`` term.
    """
    K = traj.K
    x = traj.values
    dx = np.gradient(x, traj.times, axis=0, edge_order=2)
    forcing = (slot_weights(K, rho)[:, None] * G.resized(K).values(traj.times)).T
    resid = dx - (basis(K).eigenvalues[None, :] * x + forcing)
    return float(np.max(np.abs(resid)))
