"""Chernoff-type control of block densities under the product measure.

``cramer_I(t, rho)`` is the relative entropy of Bernoulli(rho + t) with
respect to Bernoulli(rho); the block mean of ``M`` independent sites
exceeds ``rho`` by ``t`` with probability at most ``exp(-M I(t))``. The
curvature infimum ``J = inf I(t)/t^2`` (over both tails) gives the moment
bound ``E[(mean - rho)^(2k)] <= C^k k! / M^k`` with ``C = 2/J``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from fractions import Fraction

import numpy as np
from scipy.optimize import minimize_scalar
from scipy.special import xlog1py

from .exceptions import DomainError

SCAN_POINTS = 2048
MAX_MOMENT_ORDER = 8


def _check_rho(rho):
    if not 0.0 < rho < 1.0:
        raise DomainError(f"rho must lie in (0, 1), got {rho!r}")


def cramer_I(t, rho: float):
    """``(t+rho) log((t+rho)/rho) + (1-rho-t) log((1-rho-t)/(1-rho))`` on ``[0, 1-rho]``.

    Written with ``log1p`` so small ``t`` does not lose digits; the value at
    ``t = 1 - rho`` is ``-log(rho)``.
    """
    _check_rho(rho)
    t_arr = np.asarray(t, dtype=float)
    if np.any(~np.isfinite(t_arr)) or np.any(t_arr < 0) or np.any(t_arr > 1 - rho):
        raise DomainError(f"t must lie in [0, {1 - rho}]")
    out = (t_arr + rho) * np.log1p(t_arr / rho) + xlog1py(1 - rho - t_arr, -t_arr / (1 - rho))
    return float(out) if out.ndim == 0 else out


def _curvature(t, rho):
    """``I(t)/t^2`` with its limit ``1/(2 rho (1-rho))`` at 0."""
    t = np.asarray(t, dtype=float)
    safe = np.where(t == 0, 1.0, t)
    return np.where(t == 0, 1 / (2 * rho * (1 - rho)), cramer_I(np.where(t == 0, 0.0, t), rho) / safe ** 2)


def curvature_infimum(rho: float, points: int = SCAN_POINTS) -> float:
    """``inf_{0 <= t <= 1-rho} I(t)/t^2``: grid scan plus golden-section refinement."""
    _check_rho(rho)
    t = np.linspace(0.0, 1 - rho, points)
    vals = _curvature(t, rho)
    i = int(np.argmin(vals))
    best = float(vals[i])
    if 0 < i < points - 1:
        res = minimize_scalar(lambda s: float(_curvature(s, rho)), bracket=(t[i - 1], t[i], t[i + 1]),
                              method="golden", tol=1e-12)
        if t[i - 1] <= res.x <= t[i + 1]:
            best = min(best, float(res.fun))
    return best


@dataclass(frozen=True)
class MomentBoundParams:
    rho: float
    J1: float
    J2: float

    @property
    def J(self) -> float:
        return min(self.J1, self.J2)

    @property
    def C(self) -> float:
        return 2.0 / self.J


def compute_J(rho: float, points: int = SCAN_POINTS) -> MomentBoundParams:
    """Upper-tail (``J1``) and lower-tail (``J2``) curvature constants.

    The lower tail of density ``rho`` is the upper tail of ``1 - rho`` for
    the flipped configuration, so ``J2(rho) = J1(1 - rho)``.
    """
    return MomentBoundParams(rho, curvature_infimum(rho, points), curvature_infimum(1 - rho, points))


def _binomial_pmf(M: int, rho: float) -> list[Fraction]:
    r = Fraction(rho)
    return [math.comb(M, j) * r ** j * (1 - r) ** (M - j) for j in range(M + 1)]


def binomial_central_moment(M: int, rho: float, order: int) -> float:
    """``E[(S/M - rho)^order]`` for ``S ~ Binomial(M, rho)``.

    Summed in exact rational arithmetic (``rho`` is taken as the exact
    binary value of the float) and rounded once at the end.
    """
    r = Fraction(rho)
    pmf = _binomial_pmf(M, rho)
    return float(sum(p * (Fraction(j, M) - r) ** order for j, p in enumerate(pmf)))


@dataclass(frozen=True)
class MomentCheck:
    rho: float
    M: int
    k: int
    moment: float
    bound: float

    @property
    def ratio(self) -> float:
        return self.moment / self.bound


def verify_moment_bound(rho: float, M_list, k_max: int) -> list[MomentCheck]:
    """Exact ``2k``-th central moments of block means against ``C^k k! / M^k``."""
    if not 0 <= k_max <= MAX_MOMENT_ORDER:
        raise ValueError(f"k_max must lie in [0, {MAX_MOMENT_ORDER}]")
    C = compute_J(rho).C
    out = []
    for M in M_list:
        for k in range(k_max + 1):
            moment = binomial_central_moment(int(M), rho, 2 * k)
            out.append(MomentCheck(rho, int(M), k, moment, C ** k * math.factorial(k) / M ** k))
    return out


@dataclass(frozen=True)
class ChernoffCheck:
    M: int
    t: float
    tail: float
    bound: float

    def holds(self, rtol: float = 1e-9) -> bool:
        """Tail below the bound; ``rtol`` absorbs rounding where they are equal (``t = 0``, ``t = 1 - rho``)."""
        return self.tail <= self.bound * (1 + rtol)


def chernoff_check(rho: float, M_max: int = 30, points: int = 64, slack: float = 1e-9) -> list[ChernoffCheck]:
    """Exact upper tails ``P(S/M - rho >= t)`` next to ``exp(-M I(t))``.

    ``t`` runs over ``points`` values on ``[0, 1-rho]``; ``slack`` keeps
    lattice values ``j/M = rho + t`` inside the tail despite rounding.
    Tails are summed exactly and rounded once.
    """
    _check_rho(rho)
    ts = np.linspace(0.0, 1 - rho, points)
    rates = cramer_I(ts, rho)
    out = []
    for M in range(1, M_max + 1):
        pmf = _binomial_pmf(M, rho)
        for t, rate in zip(ts.tolist(), rates.tolist()):
            tail = float(sum(p for j, p in enumerate(pmf) if j / M - rho >= t - slack))
            out.append(ChernoffCheck(M, t, tail, math.exp(-M * rate)))
    return out
