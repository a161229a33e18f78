"""Trigonometric eigenbasis of the Laplacian with the slow-bond matching rule.

Functions ``G`` on [0, 1] satisfying ``G'(0) = G'(1) = G(0) - G(1)`` are
spanned by

* ``theta_n(u) = sin(k_n (u - 1/2))`` for ``n >= 1``, where ``k_n`` is the
  root of ``tan(x/2) = -x/2`` in ``((2n-1)pi, (2n+1)pi)``;
* ``theta_{-n}(u) = cos(2 pi n u)`` for ``n >= 0``.

They are orthogonal in L2[0, 1] and ``theta_n'' = e_n theta_n`` with
``e_n = -k_n**2`` and ``e_{-n} = -(2 pi n)**2``.

Coefficient arrays are indexed ``n + K`` for ``-K <= n <= K``.
"""
from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache

import numpy as np

DEFAULT_CUTOFF = 8
QUAD_PANELS = 64
QUAD_ORDER = 16

_PI_EXT = np.arccos(np.longdouble(-1))


def wavenumber_equation(x):
    """``sin(x/2) + (x/2) cos(x/2)``; its roots are the sine wavenumbers."""
    half = x / 2
    return np.sin(half) + half * np.cos(half)


def solve_wavenumber(n: int) -> np.longdouble:
    """Root ``k_n`` of the wavenumber equation in ``((2n-1)pi, (2n+1)pi)``.

    Bisection on the pole-free form, carried out in extended precision: the
    equation's slope is about ``k/4``, so float64 rounding alone leaves
    residuals of order 1e-12 once ``k`` is a few hundred.
    """
    if n < 1:
        raise ValueError(f"n must be >= 1, got {n}")
    lo = (2 * n - 1) * _PI_EXT
    hi = (2 * n + 1) * _PI_EXT
    g_lo = wavenumber_equation(lo)
    g_hi = wavenumber_equation(hi)
    assert g_lo * g_hi < 0, "wavenumber bracket has no sign change"
    for _ in range(200):
        mid = (lo + hi) / 2
        if mid <= lo or mid >= hi:
            break
        g_mid = wavenumber_equation(mid)
        if g_mid == 0:
            return mid
        if (g_mid < 0) == (g_lo < 0):
            lo, g_lo = mid, g_mid
        else:
            hi, g_hi = mid, g_mid
    return lo if abs(g_lo) <= abs(g_hi) else hi


@dataclass(frozen=True)
class BasisFunction:
    n: int
    wavenumber: float
    eigenvalue: float
    norm_sq: float


@lru_cache(maxsize=None)
def basis_function(n: int) -> BasisFunction:
    n = int(n)
    if n >= 1:
        k_ext = solve_wavenumber(n)
        k = float(k_ext)
        h = float(np.longdouble(0.5) - np.sin(k_ext) / (2 * k_ext))
        return BasisFunction(n, k, -k * k, h)
    k = 2.0 * np.pi * (-n)
    return BasisFunction(n, k, -k * k, 1.0 if n == 0 else 0.5)


def wavenumber(n: int) -> float:
    return basis_function(n).wavenumber


def eigenvalue(n: int) -> float:
    return basis_function(n).eigenvalue


def norm_sq(n: int) -> float:
    """``integral of theta_n**2`` over [0, 1]."""
    return basis_function(n).norm_sq


def theta(n: int, u):
    k = basis_function(n).wavenumber
    u = np.asarray(u, dtype=float)
    if n >= 1:
        return np.sin(k * (u - 0.5))
    return np.cos(k * u)


def dtheta(n: int, u):
    k = basis_function(n).wavenumber
    u = np.asarray(u, dtype=float)
    if n >= 1:
        return k * np.cos(k * (u - 0.5))
    return -k * np.sin(k * u)


def d2theta(n: int, u):
    """Second derivative, from the analytic formula (not via the eigenvalue)."""
    k = basis_function(n).wavenumber
    u = np.asarray(u, dtype=float)
    if n >= 1:
        return -k * k * np.sin(k * (u - 0.5))
    return -k * k * np.cos(k * u)


class BasisTable:
    """Immutable table of the basis entries ``-K..K``."""

    def __init__(self, K: int):
        self.K = int(K)
        self.indices = np.arange(-self.K, self.K + 1)
        entries = [basis_function(int(n)) for n in self.indices]
        self.wavenumbers = np.array([b.wavenumber for b in entries])
        self.eigenvalues = np.array([b.eigenvalue for b in entries])
        self.norms_sq = np.array([b.norm_sq for b in entries])
        for arr in (self.indices, self.wavenumbers, self.eigenvalues, self.norms_sq):
            arr.setflags(write=False)
        self._sine = self.indices >= 1

    def __len__(self):
        return self.indices.size

    def index(self, n: int) -> int:
        if abs(n) > self.K:
            raise IndexError(f"mode {n} outside cutoff {self.K}")
        return n + self.K

    def _phase(self, u):
        u = np.atleast_1d(np.asarray(u, dtype=float))
        shift = np.where(self._sine, 0.5, 0.0)[:, None]
        return self.wavenumbers[:, None] * (u[None, :] - shift)

    def values(self, u) -> np.ndarray:
        """Array ``(2K+1, len(u))`` of ``theta_n(u)``."""
        ph = self._phase(u)
        return np.where(self._sine[:, None], np.sin(ph), np.cos(ph))

    def derivatives(self, u) -> np.ndarray:
        ph = self._phase(u)
        k = self.wavenumbers[:, None]
        return np.where(self._sine[:, None], k * np.cos(ph), -k * np.sin(ph))

    def second_derivatives(self, u) -> np.ndarray:
        ph = self._phase(u)
        k2 = self.wavenumbers[:, None] ** 2
        return np.where(self._sine[:, None], -k2 * np.sin(ph), -k2 * np.cos(ph))


@lru_cache(maxsize=None)
def basis(K: int = DEFAULT_CUTOFF) -> BasisTable:
    return BasisTable(K)


@lru_cache(maxsize=None)
def _gauss_legendre(panels: int, order: int):
    x, w = np.polynomial.legendre.leggauss(order)
    edges = np.linspace(0.0, 1.0, panels + 1)
    half = np.diff(edges) / 2
    mid = (edges[:-1] + edges[1:]) / 2
    nodes = (mid[:, None] + half[:, None] * x[None, :]).ravel()
    weights = (half[:, None] * w[None, :]).ravel()
    nodes.setflags(write=False)
    weights.setflags(write=False)
    return nodes, weights


def quadrature_rule(panels: int = QUAD_PANELS, order: int = QUAD_ORDER):
    """Composite Gauss-Legendre nodes and weights on [0, 1]."""
    return _gauss_legendre(panels, order)


def integrate(f, panels: int = QUAD_PANELS, order: int = QUAD_ORDER) -> float:
    nodes, weights = quadrature_rule(panels, order)
    return float(np.dot(weights, f(nodes)))


# --------------------------------------------------------------------------
# Coefficient vectors


FUNCTION = "function"
FUNCTIONAL = "functional"


@dataclass(frozen=True, eq=False)
class CoefficientVector:
    """Values indexed by basis modes ``-K..K``.

    With role ``"function"`` the entries are coefficients ``c_n`` of
    ``sum c_n theta_n``; with role ``"functional"`` they are the values
    ``A(theta_n)`` of a linear functional.
    """

    values: np.ndarray
    role: str = FUNCTION

    def __post_init__(self):
        v = np.array(self.values, dtype=float, copy=True).ravel()
        if v.size % 2 != 1:
            raise ValueError("coefficient vectors have odd length 2K+1")
        if not np.all(np.isfinite(v)):
            raise ValueError("coefficients must be finite")
        if self.role not in (FUNCTION, FUNCTIONAL):
            raise ValueError(f"unknown role {self.role!r}")
        v.setflags(write=False)
        object.__setattr__(self, "values", v)

    @property
    def K(self) -> int:
        return (self.values.size - 1) // 2

    @classmethod
    def zeros(cls, K: int, role: str = FUNCTION):
        return cls(np.zeros(2 * K + 1), role)

    @classmethod
    def unit(cls, n: int, K: int | None = None, role: str = FUNCTION, value: float = 1.0):
        K = max(abs(n), DEFAULT_CUTOFF if K is None else K)
        v = np.zeros(2 * K + 1)
        v[n + K] = value
        return cls(v, role)

    @classmethod
    def from_modes(cls, modes: dict, K: int | None = None, role: str = FUNCTION):
        K = max([abs(n) for n in modes] + [DEFAULT_CUTOFF if K is None else K])
        v = np.zeros(2 * K + 1)
        for n, c in modes.items():
            v[n + K] += c
        return cls(v, role)

    def __getitem__(self, n: int) -> float:
        if abs(n) > self.K:
            return 0.0
        return float(self.values[n + self.K])

    def resized(self, K: int) -> "CoefficientVector":
        """Truncate or zero-pad to cutoff ``K``."""
        out = np.zeros(2 * K + 1)
        m = min(K, self.K)
        out[K - m:K + m + 1] = self.values[self.K - m:self.K + m + 1]
        return CoefficientVector(out, self.role)

    def _aligned(self, other):
        if self.role != other.role:
            raise ValueError("cannot combine a function with a functional")
        K = max(self.K, other.K)
        return self.resized(K).values, other.resized(K).values

    def __add__(self, other):
        a, b = self._aligned(other)
        return CoefficientVector(a + b, self.role)

    def __sub__(self, other):
        a, b = self._aligned(other)
        return CoefficientVector(a - b, self.role)

    def __mul__(self, scalar):
        return CoefficientVector(self.values * float(scalar), self.role)

    __rmul__ = __mul__

    def __neg__(self):
        return self * -1.0

    def evaluate(self, u):
        """``sum c_n theta_n(u)`` (function role only)."""
        self._require(FUNCTION)
        return self.values @ basis(self.K).values(u)

    def derivative(self, u):
        self._require(FUNCTION)
        return self.values @ basis(self.K).derivatives(u)

    def second_derivative(self, u):
        self._require(FUNCTION)
        return self.values @ basis(self.K).second_derivatives(u)

    def as_functional(self) -> "CoefficientVector":
        """The functional ``h -> integral of f h`` induced by this function."""
        self._require(FUNCTION)
        return CoefficientVector(self.values * basis(self.K).norms_sq, FUNCTIONAL)

    def _require(self, role):
        if self.role != role:
            raise ValueError(f"operation needs a {role}, got a {self.role}")


def project(f, K: int = DEFAULT_CUTOFF, panels: int = QUAD_PANELS, order: int = QUAD_ORDER) -> CoefficientVector:
    """L2 coefficients ``c_n = integral(f theta_n) / h_n`` for ``|n| <= K``.

    ``f`` is a callable on [0, 1] or an array of samples on a uniform grid
    including both endpoints (linearly interpolated, so O(h^2) accurate).
    """
    nodes, weights = quadrature_rule(panels, order)
    if callable(f):
        fx = np.asarray(f(nodes), dtype=float) * np.ones_like(nodes)
    else:
        samples = np.asarray(f, dtype=float)
        fx = np.interp(nodes, np.linspace(0.0, 1.0, samples.size), samples)
    table = basis(K)
    return CoefficientVector(table.values(nodes) @ (weights * fx) / table.norms_sq)


def laplacian_apply(c: CoefficientVector) -> CoefficientVector:
    c._require(FUNCTION)
    return CoefficientVector(basis(c.K).eigenvalues * c.values, FUNCTION)


def metric_d(A: CoefficientVector, B: CoefficientVector, K: int | None = None) -> float:
    """Truncated metric ``sum 2^-|n| |dA_n| / (1 + |dA_n|)`` over ``|n| <= K``."""
    if A.role != FUNCTIONAL or B.role != FUNCTIONAL:
        raise ValueError("metric_d compares functionals")
    if K is None:
        K = max(A.K, B.K)
    diff = np.abs(A.resized(K).values - B.resized(K).values)
    weights = 0.5 ** np.abs(np.arange(-K, K + 1))
    return float(np.sum(weights * diff / (1.0 + diff)))


def bc_residual(c: CoefficientVector) -> tuple[float, float]:
    """``(G'(0) - G'(1), G'(0) - (G(0) - G(1)))`` for ``G = sum c_n theta_n``."""
    ends = np.array([0.0, 1.0])
    g = c.evaluate(ends)
    dg = c.derivative(ends)
    return float(dg[0] - dg[1]), float(dg[0] - (g[0] - g[1]))
