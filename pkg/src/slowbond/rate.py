"""Moderate-deviation rate functionals on the truncated basis.

Space-time test functions are ``G(t, u) = sum_m b_m(t) theta_m(u)`` with
piecewise-linear coefficient functions ``b_m``. The energy form

    <f|g> = 2 rho (1-rho) [ (f(0)-f(1)) (g(0)-g(1)) + int f' g' ]

is diagonal in the basis, ``<theta_n|theta_m> = w_n delta_nm`` with
``w_n = 2 rho (1-rho) |e_n| h_n`` (integrate by parts and use the matching
rule), so every functional below decouples mode by mode.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.linalg import LinAlgError, solveh_banded

from .basis import DEFAULT_CUTOFF, FUNCTION, CoefficientVector, basis, bc_residual, integrate
from .exceptions import CutoffMismatch, SingularSystem
from .fields import FieldTrajectory

KERNEL_TOL = 1e-8


def _check_rho(rho):
    if not 0.0 < rho < 1.0:
        raise ValueError(f"rho must lie in (0, 1), got {rho!r}")


def _interp_rows(t, knots, rows):
    """Row-wise linear interpolation, constant outside the knots."""
    t = np.atleast_1d(np.asarray(t, dtype=float))
    j = np.clip(np.searchsorted(knots, t, side="right") - 1, 0, knots.size - 2)
    dt = knots[j + 1] - knots[j]
    lam = np.clip((t - knots[j]) / dt, 0.0, 1.0)
    return rows[:, j] * (1 - lam) + rows[:, j + 1] * lam


class TestFunction:
    """Coefficient paths ``b_m(t)``, ``|m| <= M``, linear between knots."""

    __test__ = False  # keep pytest from collecting it

    def __init__(self, knots, coeffs):
        knots = np.asarray(knots, dtype=float).ravel()
        coeffs = np.atleast_2d(np.asarray(coeffs, dtype=float))
        if knots.size < 2 or np.any(np.diff(knots) <= 0):
            raise ValueError("knots must be strictly increasing, at least two")
        if coeffs.shape != (coeffs.shape[0], knots.size) or coeffs.shape[0] % 2 != 1:
            raise ValueError("coeffs must have shape (2M+1, len(knots))")
        if not np.all(np.isfinite(coeffs)):
            raise ValueError("coefficients must be finite")
        self.knots = knots
        self.coeffs = coeffs
        knots.setflags(write=False)
        coeffs.setflags(write=False)

    # construction -----------------------------------------------------
    @classmethod
    def zero(cls, M: int = DEFAULT_CUTOFF, T: float = 1.0):
        return cls([0.0, T], np.zeros((2 * M + 1, 2)))

    @classmethod
    def constant(cls, c: CoefficientVector, T: float = 1.0):
        """``G_t = c`` for all ``t`` in ``[0, T]``."""
        return cls([0.0, T], np.repeat(c.values[:, None], 2, axis=1))

    @classmethod
    def separable(cls, c: CoefficientVector, profile, knots):
        """``G_t = profile(t) * c``, sampled at ``knots``."""
        knots = np.asarray(knots, dtype=float)
        return cls(knots, c.values[:, None] * np.asarray(profile(knots), dtype=float)[None, :])

    @classmethod
    def from_callables(cls, funcs: dict, knots, M: int | None = None):
        """``b_m = funcs[m]`` sampled at ``knots``; missing modes are zero."""
        knots = np.asarray(knots, dtype=float)
        M = max([abs(m) for m in funcs] + [DEFAULT_CUTOFF if M is None else M])
        coeffs = np.zeros((2 * M + 1, knots.size))
        for m, f in funcs.items():
            coeffs[m + M] = np.asarray(f(knots), dtype=float) * np.ones_like(knots)
        return cls(knots, coeffs)

    # shape --------------------------------------------------------------
    @property
    def M(self) -> int:
        return (self.coeffs.shape[0] - 1) // 2

    @property
    def T(self) -> float:
        return float(self.knots[-1])

    def resized(self, M: int) -> "TestFunction":
        out = np.zeros((2 * M + 1, self.knots.size))
        m = min(M, self.M)
        out[M - m:M + m + 1] = self.coeffs[self.M - m:self.M + m + 1]
        return TestFunction(self.knots, out)

    def refined(self, knots) -> "TestFunction":
        """Same function on a superset of knots (exact for added knots inside)."""
        knots = np.asarray(knots, dtype=float)
        return TestFunction(knots, _interp_rows(knots, self.knots, self.coeffs))

    # evaluation ---------------------------------------------------------
    def values(self, t) -> np.ndarray:
        """Array ``(2M+1, len(t))`` of ``b_m(t)``."""
        return _interp_rows(t, self.knots, self.coeffs)

    def slopes(self) -> np.ndarray:
        """Array ``(2M+1, len(knots)-1)`` of ``b_m'`` on each knot interval."""
        return np.diff(self.coeffs, axis=1) / np.diff(self.knots)

    def at(self, t: float) -> CoefficientVector:
        return CoefficientVector(self.values([t])[:, 0], FUNCTION)

    def evaluate(self, t: float, u):
        return self.at(t).evaluate(u)

    def boundary_residual(self) -> float:
        """Largest matching-rule residual over the knots."""
        return max(max(abs(r) for r in bc_residual(self.at(t))) for t in self.knots)

    # algebra ------------------------------------------------------------
    def _aligned(self, other):
        knots = np.union1d(self.knots, other.knots)
        M = max(self.M, other.M)
        return knots, self.resized(M).values(knots), other.resized(M).values(knots)

    def __add__(self, other):
        knots, a, b = self._aligned(other)
        return TestFunction(knots, a + b)

    def __sub__(self, other):
        knots, a, b = self._aligned(other)
        return TestFunction(knots, a - b)

    def __mul__(self, scalar):
        return TestFunction(self.knots, self.coeffs * float(scalar))

    __rmul__ = __mul__

    def __neg__(self):
        return self * -1.0

    def __repr__(self):
        return f"TestFunction(M={self.M}, knots={self.knots.size}, T={self.T})"


# --------------------------------------------------------------------------
# Bilinear forms


def slot_weights(K: int, rho: float) -> np.ndarray:
    """Diagonal ``w_n = 2 rho (1-rho) |e_n| h_n`` of the energy form."""
    table = basis(K)
    return 2 * rho * (1 - rho) * np.abs(table.eigenvalues) * table.norms_sq


def slot_inner(f: CoefficientVector, g: CoefficientVector, rho: float, method: str = "closed") -> float:
    """Energy form ``<f|g>`` of two functions.

    ``method="closed"`` uses the diagonal weights; ``method="quadrature"``
    evaluates the defining boundary-jump plus gradient formula directly.
    """
    f._require(FUNCTION)
    g._require(FUNCTION)
    if method == "closed":
        K = max(f.K, g.K)
        return float(np.sum(slot_weights(K, rho) * f.resized(K).values * g.resized(K).values))
    if method == "quadrature":
        ends = np.array([0.0, 1.0])
        fj = f.evaluate(ends)
        gj = g.evaluate(ends)
        grad = integrate(lambda u: f.derivative(u) * g.derivative(u))
        return float(2 * rho * (1 - rho) * ((fj[0] - fj[1]) * (gj[0] - gj[1]) + grad))
    raise ValueError(f"unknown method {method!r}")


def _linear_product_integral(dt, a1, a2, b1, b2):
    """Exact integral over each interval of the product of two linear functions."""
    return dt * (2 * a1 * b1 + a1 * b2 + a2 * b1 + 2 * a2 * b2) / 6.0


def path_inner(F: TestFunction, G: TestFunction, rho: float, T: float | None = None) -> float:
    """``<<F, G>> = int_0^T <F_s|G_s> ds``, exact for piecewise-linear coefficients."""
    T = min(F.T, G.T) if T is None else float(T)
    knots = np.union1d(F.knots, G.knots)
    knots = np.union1d(knots[knots < T], [T])
    if knots[0] > 0:
        knots = np.union1d([0.0], knots)
    M = max(F.M, G.M)
    a = F.resized(M).values(knots)
    b = G.resized(M).values(knots)
    dt = np.diff(knots)
    per_mode = _linear_product_integral(dt, a[:, :-1], a[:, 1:], b[:, :-1], b[:, 1:]).sum(axis=1)
    return float(slot_weights(M, rho) @ per_mode)


# --------------------------------------------------------------------------
# Linear path functional


def _check_cutoffs(mu: FieldTrajectory, G: TestFunction):
    if G.M > mu.K:
        raise CutoffMismatch(f"test function cutoff M={G.M} exceeds trajectory cutoff K={mu.K}")


def ell_T(mu: FieldTrajectory, G: TestFunction) -> float:
    """``mu_T(G_T) - mu_0(G_0) - int mu_t((d/dt + Laplacian) G_t) dt``.

    The time integral uses the piecewise-linear interpolant of ``mu`` on its
    grid, integrated exactly against ``G`` (a second-order rule, identical
    to the trapezoid rule when ``G`` is constant in time and ``mu``'s grid
    contains ``G``'s knots).
    """
    _check_cutoffs(mu, G)
    G = G.resized(mu.K)
    T = mu.T
    knots = np.union1d(mu.times, G.knots[(G.knots > mu.times[0]) & (G.knots < T)])
    V = np.vstack([np.interp(knots, mu.times, row) for row in mu.values.T])
    B = G.values(knots)
    dt = np.diff(knots)
    slope = np.diff(B, axis=1) / dt
    e = basis(mu.K).eigenvalues
    drift = (slope * dt * (V[:, :-1] + V[:, 1:]) / 2).sum(axis=1)
    lap = e * _linear_product_integral(dt, V[:, :-1], V[:, 1:], B[:, :-1], B[:, 1:]).sum(axis=1)
    boundary = V[:, -1] * B[:, -1] - V[:, 0] * B[:, 0]
    return float(np.sum(boundary - drift - lap))


# --------------------------------------------------------------------------
# Rate functionals


def rate_ini(v, rho: float, K: int | None = None) -> float:
    """``sum_{|n|<=K} v(n)^2 / (2 rho (1-rho) h_n)`` for initial values ``v(n) = mu_0(theta_n)``."""
    _check_rho(rho)
    v = v if isinstance(v, CoefficientVector) else CoefficientVector(v)
    K = v.K if K is None else K
    vals = v.resized(K).values
    return float(np.sum(vals ** 2 / (2 * rho * (1 - rho) * basis(K).norms_sq)))


@dataclass
class DynamicRate:
    value: float
    certificate: TestFunction | None
    kernel_violation: bool
    per_mode: np.ndarray


def _hat_mass_banded(t):
    """Upper banded form of the consistent mass matrix of hat functions on ``t``."""
    h = np.diff(t)
    diag = np.zeros(t.size)
    diag[:-1] += h / 3
    diag[1:] += h / 3
    ab = np.zeros((2, t.size))
    ab[0, 1:] = h / 6
    ab[1] = diag
    return ab


def _hat_mass_apply(t, V):
    """``M @ V`` along the last axis."""
    h = np.diff(t)
    out = np.zeros_like(V)
    out[..., :-1] += h * (2 * V[..., :-1] + V[..., 1:]) / 6
    out[..., 1:] += h * (V[..., :-1] + 2 * V[..., 1:]) / 6
    return out


def hat_loads(mu: FieldTrajectory) -> np.ndarray:
    """``ell`` of ``b = phi_j theta_m`` for every hat ``phi_j`` on the grid and every mode.

    Returns ``(2K+1, len(grid))``; equals ``int (V' - e_m V) phi_j`` for the
    piecewise-linear interpolant ``V`` of each mode.
    """
    V = mu.values.T
    e = basis(mu.K).eigenvalues[:, None]
    L = np.zeros_like(V)
    L[:, 0] = (V[:, 1] - V[:, 0]) / 2
    L[:, -1] = (V[:, -1] - V[:, -2]) / 2
    L[:, 1:-1] = (V[:, 2:] - V[:, :-2]) / 2
    return L - e * _hat_mass_apply(mu.times, V)


def rate_dyn(mu: FieldTrajectory, rho: float, M: int | None = None) -> DynamicRate:
    """Dynamical rate restricted to piecewise-linear ``b_m`` on ``mu``'s grid.

    Per mode the concave problem ``sup_b ell_m(b) - (w_m/2) int b^2`` is
    solved through the mass-matrix normal equations; its maximiser is the
    returned certificate. The kernel mode 0 gives ``+inf`` when ``mu``
    changes its mass.
    """
    _check_rho(rho)
    M = mu.K if M is None else int(M)
    if M > mu.K:
        raise CutoffMismatch(f"cutoff M={M} exceeds trajectory cutoff K={mu.K}")
    mu0 = mu.mode(0)
    drift = np.max(np.abs(mu0 - mu0[0]))
    if not np.isfinite(drift) or drift > KERNEL_TOL * max(1.0, abs(mu0[0])):
        return DynamicRate(np.inf, None, True, np.full(2 * M + 1, np.nan))

    sub = FieldTrajectory(mu.times, mu.values[:, mu.K - M:mu.K + M + 1])
    L = hat_loads(sub)
    w = slot_weights(M, rho)
    ab = _hat_mass_banded(mu.times)
    psi = np.zeros_like(L)
    per_mode = np.zeros(2 * M + 1)
    for i in range(2 * M + 1):
        if w[i] == 0.0:
            continue
        try:
            y = solveh_banded(ab, L[i])
        except LinAlgError as exc:
            raise SingularSystem(f"mass matrix not positive definite: {exc}") from exc
        if not np.all(np.isfinite(y)):
            raise SingularSystem("non-finite solution of the mode problem")
        psi[i] = y / w[i]
        per_mode[i] = float(L[i] @ y) / (2 * w[i])
    return DynamicRate(float(per_mode.sum()), TestFunction(mu.times, psi), False, per_mode)


@dataclass
class RateResult:
    I_ini: float
    I_dyn: float
    kernel_violation: bool
    K: int
    M: int
    grid_size: int

    @property
    def total(self) -> float:
        return self.I_ini + self.I_dyn


def rate_function(mu: FieldTrajectory, rho: float, K: int | None = None, M: int | None = None) -> RateResult:
    K = mu.K if K is None else K
    M = mu.K if M is None else M
    ini = rate_ini(CoefficientVector(mu.values[0]), rho, K)
    dyn = rate_dyn(mu, rho, M)
    return RateResult(ini, dyn.value, dyn.kernel_violation, K, M, mu.times.size)
