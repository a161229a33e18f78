"""Exponential and Dynkin martingales along simulated paths.

For a test function ``G`` and ``kappa = a_N / N``,

    log M_t = sum_{jumps} kappa s_b dG_b(tau)
              - sum_b r_b int_0^t (exp(kappa s_b dG_b(s)) - 1) ds

where ``s_b = eta(x) - eta(x+1)`` on bond ``b = x`` and
``dG_b = G(x+1/N) - G(x/N)``. Each bond's integrand only changes when one
of its two sites changes, so the time integrals are accumulated lazily per
bond, in closed form, between such changes. Time is split into segments
(the union of the recording grid and the knots of ``G``) on which ``G``
is linear in ``t``.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from numba import njit

from .basis import basis
from .fields import default_grid
from .process import Configuration, LatticeParams, Observer, simulate, site_positions
from .rate import TestFunction

_SERIES = 1e-2


# --------------------------------------------------------------------------
# Segment tables


@dataclass
class _Segments:
    bounds: np.ndarray       # segment boundaries, 0 .. T
    record: np.ndarray       # boundary indices of the requested grid
    site_values: np.ndarray  # (nb, N) G_t(x/N) at the boundaries
    site_slopes: np.ndarray  # (nb-1, N) dG/dt on each segment
    bond_p: np.ndarray       # (nb-1, N) dG_b at segment start
    bond_q: np.ndarray       # (nb-1, N) its time slope


def _segments(G: TestFunction, grid, N: int, T: float, laplacian: bool = False):
    grid = np.asarray(grid, dtype=float)
    if grid[0] < 0 or grid[-1] > T:
        raise ValueError("grid must lie in [0, T]")
    inner = G.knots[(G.knots > 0) & (G.knots < T)]
    bounds = np.union1d(np.union1d([0.0, T], grid), inner)
    table = basis(G.M)
    theta = table.values(site_positions(N))
    coeffs = G.values(bounds)
    if laplacian:
        coeffs = coeffs * table.eigenvalues[:, None]
    vals = np.ascontiguousarray(coeffs.T @ theta)
    slopes = np.ascontiguousarray(np.diff(vals, axis=0) / np.diff(bounds)[:, None])
    p = np.ascontiguousarray(np.roll(vals[:-1], -1, axis=1) - vals[:-1])
    q = np.ascontiguousarray(np.roll(slopes, -1, axis=1) - slopes)
    record = np.searchsorted(bounds, grid)
    return _Segments(bounds, record, vals, slopes, p, q)


# --------------------------------------------------------------------------
# Closed-form interval integrals


@njit(cache=True, nogil=True, inline="always")
def _expint(u1, u2):
    """``int_0^1 (exp(u1 + (u2-u1) s) - 1) ds``."""
    d = u2 - u1
    if abs(d) < _SERIES:
        p1m1 = d * (0.5 + d * (1.0 / 6 + d * (1.0 / 24 + d * (1.0 / 120 + d / 720))))
    else:
        p1m1 = (np.expm1(d) - d) / d
    return np.expm1(u1) * (1.0 + p1m1) + p1m1


def expint(u1, u2):
    return _expint(float(u1), float(u2))


# --------------------------------------------------------------------------
# Exponential martingale kernel

# float state slots
_TS, _CD, _CL0, _CL1, _ID, _IL, _JUMP, _GEN, _QS, _QF, _TB, _R1, _R3, _BASE = range(14)
FK_COLUMNS = ("log_m", "log_m_direct", "r0", "r1", "r2", "r3", "r4", "generator")


@njit(cache=True, nogil=True)
def _fk_flush_bond(b, t2, k, S, DP, DQ, sb, lastb, kappa, r_fast, r_slow, fst):
    N = sb.size
    t1 = lastb[b]
    lastb[b] = t2
    s = sb[b]
    if s == 0 or t2 <= t1:
        return
    d1 = DP[k, b] + (t1 - S[k]) * DQ[k, b]
    d2 = DP[k, b] + (t2 - S[k]) * DQ[k, b]
    dt = t2 - t1
    r = r_slow if b == N - 1 else r_fast
    fst[_GEN] += r * dt * _expint(kappa * s * d1, kappa * s * d2)
    q = dt * (d1 * d1 + d1 * d2 + d2 * d2) / 3.0
    if b == N - 1:
        fst[_QS] += q
    else:
        fst[_QF] += q


@njit(cache=True, nogil=True)
def _fk_flush_sites(t2, k, S, fst):
    t1 = fst[_TS]
    a1 = t1 - S[k]
    a2 = t2 - S[k]
    fst[_ID] += fst[_CD] * (t2 - t1)
    fst[_IL] += fst[_CL0] * (t2 - t1) + fst[_CL1] * (a2 * a2 - a1 * a1) / 2
    fst[_TS] = t2


@njit(cache=True, nogil=True)
def _fk_flush_boundary(t2, k, S, DP, DQ, sb, occ, rho, fst):
    N = occ.size
    t1 = fst[_TB]
    fst[_TB] = t2
    dt = t2 - t1
    if dt <= 0:
        return
    a1 = t1 - S[k]
    a2 = t2 - S[k]
    slow = (2 * DP[k, N - 1] + (a1 + a2) * DQ[k, N - 1]) / 2
    first = (2 * DP[k, 0] + (a1 + a2) * DQ[k, 0]) / 2
    last = (2 * DP[k, N - 2] + (a1 + a2) * DQ[k, N - 2]) / 2
    fst[_R1] += dt * sb[N - 1] * slow
    fst[_R3] += dt * N * ((occ[0] - rho) * first - (occ[N - 1] - rho) * last)


@njit(cache=True, nogil=True)
def _fk_reset_sums(k, occ, rho, Qg, LP, LQ, fst):
    cd = 0.0
    c0 = 0.0
    c1 = 0.0
    for x in range(occ.size):
        e = occ[x] - rho
        cd += e * Qg[k, x]
        c0 += e * (Qg[k, x] + LP[k, x])
        c1 += e * LQ[k, x]
    fst[_CD] = cd
    fst[_CL0] = c0
    fst[_CL1] = c1


@njit(cache=True, nogil=True)
def _fk_close_segment(k, occ, rho, kappa, inv_a, r_fast, r_slow, S, DP, DQ, Gs, sb, lastb, fst, out):
    N = occ.size
    tb = S[k + 1]
    for b in range(N):
        _fk_flush_bond(b, tb, k, S, DP, DQ, sb, lastb, kappa, r_fast, r_slow, fst)
    _fk_flush_sites(tb, k, S, fst)
    _fk_flush_boundary(tb, k, S, DP, DQ, sb, occ, rho, fst)
    gsum = 0.0
    for x in range(N):
        gsum += (occ[x] - rho) * Gs[k + 1, x]
    row = k + 1
    out[row, 0] = fst[_JUMP] - fst[_GEN]
    out[row, 1] = kappa * (gsum - fst[_BASE] - fst[_ID]) - fst[_GEN]
    out[row, 2] = inv_a * (gsum - fst[_BASE] - fst[_IL])
    out[row, 3] = N * inv_a * fst[_R1]
    out[row, 4] = 0.5 * fst[_QS]
    out[row, 5] = N * inv_a * fst[_R3]
    out[row, 6] = 0.5 * N * fst[_QF]
    out[row, 7] = fst[_GEN]


@njit(cache=True, nogil=True)
def _fk_kernel(times, bonds, occ, rho, kappa, inv_a, r_fast, r_slow,
               S, DP, DQ, Gs, Qg, LP, LQ, sb, lastb, ist, fst, out):
    N = occ.size
    nseg = S.size - 1
    k = ist[0]
    for i in range(times.size):
        tau = times[i]
        while k < nseg and S[k + 1] < tau:
            _fk_close_segment(k, occ, rho, kappa, inv_a, r_fast, r_slow, S, DP, DQ, Gs, sb, lastb, fst, out)
            k += 1
            if k < nseg:
                _fk_reset_sums(k, occ, rho, Qg, LP, LQ, fst)
        b = bonds[i]
        y = b + 1
        if y == N:
            y = 0
        s = occ[b] - occ[y]
        if s == 0:
            continue
        _fk_flush_sites(tau, k, S, fst)
        bl = b - 1 if b > 0 else N - 1
        _fk_flush_bond(bl, tau, k, S, DP, DQ, sb, lastb, kappa, r_fast, r_slow, fst)
        _fk_flush_bond(b, tau, k, S, DP, DQ, sb, lastb, kappa, r_fast, r_slow, fst)
        _fk_flush_bond(y, tau, k, S, DP, DQ, sb, lastb, kappa, r_fast, r_slow, fst)
        if b == N - 2 or b == N - 1 or b == 0:
            _fk_flush_boundary(tau, k, S, DP, DQ, sb, occ, rho, fst)
        fst[_JUMP] += kappa * s * (DP[k, b] + (tau - S[k]) * DQ[k, b])
        fst[_CD] += s * (Qg[k, y] - Qg[k, b])
        fst[_CL0] += s * (Qg[k, y] + LP[k, y] - Qg[k, b] - LP[k, b])
        fst[_CL1] += s * (LQ[k, y] - LQ[k, b])
        occ[b], occ[y] = occ[y], occ[b]
        yy = y + 1
        if yy == N:
            yy = 0
        sb[bl] = occ[bl] - occ[b]
        sb[b] = occ[b] - occ[y]
        sb[y] = occ[y] - occ[yy]
    ist[0] = k


@njit(cache=True, nogil=True)
def _fk_finish(T, occ, rho, kappa, inv_a, r_fast, r_slow, S, DP, DQ, Gs, Qg, LP, LQ, sb, lastb, ist, fst, out):
    nseg = S.size - 1
    k = ist[0]
    while k < nseg and S[k + 1] <= T:
        _fk_close_segment(k, occ, rho, kappa, inv_a, r_fast, r_slow, S, DP, DQ, Gs, sb, lastb, fst, out)
        k += 1
        if k < nseg:
            _fk_reset_sums(k, occ, rho, Qg, LP, LQ, fst)
    ist[0] = k


@dataclass
class MartingalePath:
    """Exponential martingale and its expansion terms on a time grid.

    ``log_m`` is accumulated jump by jump; ``log_m_direct`` recomputes it
    from the field pairing ``<mu_t, G_t>``. ``terms`` holds ``r0`` (the
    linear functional ``ell_t``), the slow-bond terms ``r1``, ``r2``, the
    boundary term ``r3`` and the gradient-square term ``r4``.
    """

    times: np.ndarray
    log_m: np.ndarray
    log_m_direct: np.ndarray
    generator: np.ndarray
    terms: dict
    params: LatticeParams

    @property
    def M(self) -> np.ndarray:
        return np.exp(self.log_m)

    def expansion(self) -> np.ndarray:
        t = self.terms
        return t["r0"] - t["r1"] - t["r2"] - t["r3"] - t["r4"]

    def residual(self) -> np.ndarray:
        """``(N / a_N^2) log M_t`` minus the expansion."""
        p = self.params
        return p.N / p.a_N ** 2 * self.log_m - self.expansion()


class FeynmanKacObserver(Observer):
    """Tracks ``log M_t(G)`` and the expansion terms event by event."""

    def __init__(self, G: TestFunction, grid=None):
        self.G = G
        self.grid = None if grid is None else np.asarray(grid, dtype=float)

    def start(self, occupancy, params):
        N, T = params.N, params.T
        self.params = params
        grid = default_grid(T) if self.grid is None else self.grid
        self.grid = grid
        seg = _segments(self.G, grid, N, T)
        lap = _segments(self.G, grid, N, T, laplacian=True)
        self.seg = seg
        self.S = seg.bounds
        self.Gs = seg.site_values
        self.Qg = seg.site_slopes
        self.LP = np.ascontiguousarray(lap.site_values[:-1])
        self.LQ = lap.site_slopes
        self.occ = occupancy
        o = occupancy.astype(np.int64)
        self.sb = (o - np.roll(o, -1)).astype(np.int8)
        self.lastb = np.zeros(N)
        self.ist = np.zeros(1, np.int64)
        self.fst = np.zeros(14)
        self.fst[_BASE] = float((o - params.rho) @ self.Gs[0])
        self.out = np.zeros((self.S.size, len(FK_COLUMNS)))
        self.kappa = params.a_N / N
        self.consts = (params.rho, self.kappa, 1.0 / params.a_N, float(N) ** 2, float(N))
        if self.S.size > 1:
            _fk_reset_sums(0, self.occ, params.rho, self.Qg, self.LP, self.LQ, self.fst)

    def process(self, times, bonds, effective):
        _fk_kernel(times, bonds, self.occ, *self.consts, self.S, self.seg.bond_p, self.seg.bond_q,
                   self.Gs, self.Qg, self.LP, self.LQ, self.sb, self.lastb, self.ist, self.fst, self.out)

    def finish(self, T):
        _fk_finish(T, self.occ, *self.consts, self.S, self.seg.bond_p, self.seg.bond_q,
                   self.Gs, self.Qg, self.LP, self.LQ, self.sb, self.lastb, self.ist, self.fst, self.out)

    def result(self) -> MartingalePath:
        rows = self.out[self.seg.record]
        col = {name: rows[:, i].copy() for i, name in enumerate(FK_COLUMNS)}
        terms = {name: col[name] for name in ("r0", "r1", "r2", "r3", "r4")}
        return MartingalePath(self.grid, col["log_m"], col["log_m_direct"], col["generator"], terms, self.params)


def feynman_kac_log(cfg0: Configuration, params: LatticeParams, G: TestFunction, grid=None,
                    seed=None, frozen: bool = False) -> MartingalePath:
    obs = FeynmanKacObserver(G, grid)
    simulate(cfg0, params, [obs], seed, frozen=frozen)
    return obs.result()


def expansion_terms(cfg0: Configuration, params: LatticeParams, G: TestFunction, grid=None,
                    seed=None) -> dict:
    """Terms ``r0..r4`` at ``T`` plus the residual of the expansion."""
    path = feynman_kac_log(cfg0, params, G, grid, seed)
    out = {name: float(v[-1]) for name, v in path.terms.items()}
    out["residual"] = float(path.residual()[-1])
    return out


# --------------------------------------------------------------------------
# Dynkin martingales and brackets

DK_COLUMNS = ("lambda1", "lambda2", "predictable", "optional", "fast_rings", "slow_rings")
_C1, _C2, _PRED, _J1, _J2, _OPT, _YF, _YS = range(8)


@njit(cache=True, nogil=True)
def _dk_flush_bond(b, t2, k, S, P1, Q1, P2, Q2, sb, lastb, r_fast, r_slow, fst):
    N = sb.size
    t1 = lastb[b]
    lastb[b] = t2
    s = sb[b]
    if s == 0 or t2 <= t1:
        return
    a1 = t1 - S[k]
    a2 = t2 - S[k]
    x1 = P1[k, b] + a1 * Q1[k, b]
    x2 = P1[k, b] + a2 * Q1[k, b]
    y1 = P2[k, b] + a1 * Q2[k, b]
    y2 = P2[k, b] + a2 * Q2[k, b]
    dt = t2 - t1
    r = r_slow if b == N - 1 else r_fast
    fst[_C1] += r * s * dt * (x1 + x2) / 2
    fst[_C2] += r * s * dt * (y1 + y2) / 2
    fst[_PRED] += r * dt * (2 * x1 * y1 + x1 * y2 + x2 * y1 + 2 * x2 * y2) / 6


@njit(cache=True, nogil=True)
def _dk_close_segment(k, inv_a, r_fast, r_slow, S, P1, Q1, P2, Q2, sb, lastb, fst, out):
    tb = S[k + 1]
    for b in range(sb.size):
        _dk_flush_bond(b, tb, k, S, P1, Q1, P2, Q2, sb, lastb, r_fast, r_slow, fst)
    row = k + 1
    out[row, 0] = fst[_J1] - inv_a * fst[_C1]
    out[row, 1] = fst[_J2] - inv_a * fst[_C2]
    out[row, 2] = inv_a * inv_a * fst[_PRED]
    out[row, 3] = fst[_OPT]
    out[row, 4] = fst[_YF]
    out[row, 5] = fst[_YS]


@njit(cache=True, nogil=True)
def _dk_kernel(times, bonds, occ, inv_a, r_fast, r_slow, S, P1, Q1, P2, Q2, sb, lastb, ist, fst, out):
    N = occ.size
    nseg = S.size - 1
    k = ist[0]
    for i in range(times.size):
        tau = times[i]
        while k < nseg and S[k + 1] < tau:
            _dk_close_segment(k, inv_a, r_fast, r_slow, S, P1, Q1, P2, Q2, sb, lastb, fst, out)
            k += 1
        b = bonds[i]
        if b == N - 1:
            fst[_YS] += 1
        else:
            fst[_YF] += 1
        y = b + 1
        if y == N:
            y = 0
        s = occ[b] - occ[y]
        if s == 0:
            continue
        bl = b - 1 if b > 0 else N - 1
        _dk_flush_bond(bl, tau, k, S, P1, Q1, P2, Q2, sb, lastb, r_fast, r_slow, fst)
        _dk_flush_bond(b, tau, k, S, P1, Q1, P2, Q2, sb, lastb, r_fast, r_slow, fst)
        _dk_flush_bond(y, tau, k, S, P1, Q1, P2, Q2, sb, lastb, r_fast, r_slow, fst)
        a = tau - S[k]
        j1 = inv_a * s * (P1[k, b] + a * Q1[k, b])
        j2 = inv_a * s * (P2[k, b] + a * Q2[k, b])
        fst[_J1] += j1
        fst[_J2] += j2
        fst[_OPT] += j1 * j2
        occ[b], occ[y] = occ[y], occ[b]
        yy = y + 1
        if yy == N:
            yy = 0
        sb[bl] = occ[bl] - occ[b]
        sb[b] = occ[b] - occ[y]
        sb[y] = occ[y] - occ[yy]
    ist[0] = k


@njit(cache=True, nogil=True)
def _dk_finish(T, inv_a, r_fast, r_slow, S, P1, Q1, P2, Q2, sb, lastb, ist, fst, out):
    nseg = S.size - 1
    k = ist[0]
    while k < nseg and S[k + 1] <= T:
        _dk_close_segment(k, inv_a, r_fast, r_slow, S, P1, Q1, P2, Q2, sb, lastb, fst, out)
        k += 1
    ist[0] = k


@dataclass
class DynkinPath:
    """``Lambda_t(F_h1)``, ``Lambda_t(F_h2)``, their brackets and ring counts."""

    times: np.ndarray
    lambda1: np.ndarray
    lambda2: np.ndarray
    predictable: np.ndarray
    optional: np.ndarray
    fast_rings: np.ndarray
    slow_rings: np.ndarray
    params: LatticeParams


class DynkinObserver(Observer):
    """Dynkin martingales of two linear fields with both covariation brackets."""

    def __init__(self, h1: TestFunction, h2: TestFunction | None = None, grid=None):
        self.h1 = h1
        self.h2 = h1 if h2 is None else h2
        self.grid = None if grid is None else np.asarray(grid, dtype=float)

    def start(self, occupancy, params):
        N, T = params.N, params.T
        self.params = params
        grid = default_grid(T) if self.grid is None else self.grid
        self.grid = grid
        knots = np.union1d(self.h1.knots, self.h2.knots)
        # common boundaries so both tables share segments
        s1 = _segments(self.h1.refined(knots), grid, N, T)
        s2 = _segments(self.h2.refined(knots), grid, N, T)
        self.s1, self.s2 = s1, s2
        self.occ = occupancy
        o = occupancy.astype(np.int64)
        self.sb = (o - np.roll(o, -1)).astype(np.int8)
        self.lastb = np.zeros(N)
        self.ist = np.zeros(1, np.int64)
        self.fst = np.zeros(8)
        self.out = np.zeros((s1.bounds.size, len(DK_COLUMNS)))
        self.consts = (1.0 / params.a_N, float(N) ** 2, float(N))

    def _tables(self):
        return (self.s1.bounds, self.s1.bond_p, self.s1.bond_q, self.s2.bond_p, self.s2.bond_q)

    def process(self, times, bonds, effective):
        _dk_kernel(times, bonds, self.occ, *self.consts, *self._tables(), self.sb, self.lastb,
                   self.ist, self.fst, self.out)

    def finish(self, T):
        _dk_finish(T, *self.consts, *self._tables(), self.sb, self.lastb, self.ist, self.fst, self.out)

    def result(self) -> DynkinPath:
        rows = self.out[self.s1.record]
        cols = [rows[:, i].copy() for i in range(len(DK_COLUMNS))]
        return DynkinPath(self.grid, *cols, self.params)


def dynkin_path(cfg0: Configuration, params: LatticeParams, h: TestFunction, grid=None,
                seed=None) -> DynkinPath:
    obs = DynkinObserver(h, None, grid)
    simulate(cfg0, params, [obs], seed)
    return obs.result()


def brackets(cfg0: Configuration, params: LatticeParams, h1: TestFunction, h2: TestFunction | None = None,
             grid=None, seed=None) -> tuple[np.ndarray, np.ndarray]:
    """(predictable, optional) covariation paths of the two Dynkin martingales."""
    obs = DynkinObserver(h1, h2, grid)
    simulate(cfg0, params, [obs], seed)
    path = obs.result()
    return path.predictable, path.optional


# --------------------------------------------------------------------------
# Deterministic bounds


def _derivative_bound(c, order):
    """``sum |c_m| k_m^order``, an upper bound for ``sup |G^(order)|``."""
    table = basis((c.shape[0] - 1) // 2)
    return np.abs(c) @ table.wavenumbers ** order


def sup_norms(h: TestFunction, points: int = 4097) -> tuple[float, float, float]:
    """Upper bounds for ``sup |h|``, ``sup |d_u h|`` and ``sup |d_uu h|`` over ``[0,T] x [0,1]``.

    In ``t`` each coefficient is linear between knots, so for fixed ``u``
    the supremum of ``|h|`` is attained at a knot. In ``u`` a dense grid
    maximum is padded by half a grid step times a bound on the next
    derivative, which makes the result a true upper bound.
    """
    u = np.linspace(0.0, 1.0, points)
    du = u[1] - u[0]
    table = basis(h.M)
    V, D1, D2 = table.values(u), table.derivatives(u), table.second_derivatives(u)
    C = D = E = 0.0
    for c in h.coeffs.T:
        C = max(C, np.max(np.abs(c @ V)) + du / 2 * _derivative_bound(c, 1))
        D = max(D, np.max(np.abs(c @ D1)) + du / 2 * _derivative_bound(c, 2))
        E = max(E, np.max(np.abs(c @ D2)) + du / 2 * _derivative_bound(c, 3))
    return float(C), float(D), float(E)


def bracket_bound(h: TestFunction, params: LatticeParams, fast_rings, slow_rings):
    """Pathwise bound on the optional bracket from realised ring counts.

    ``(4 / a^2) (fast_rings / N^2) D_h^2 + (16 / a^2) C_h^2 slow_rings``.
    """
    C, D, _ = sup_norms(h)
    a2 = params.a_N ** 2
    fast = np.asarray(fast_rings, dtype=float)
    slow = np.asarray(slow_rings, dtype=float)
    return 4.0 / a2 * fast / params.N ** 2 * D ** 2 + 16.0 / a2 * C ** 2 * slow


def boundary_cancellation_bound(G: TestFunction, params: LatticeParams) -> float:
    """Bound on ``|r1 + r3|`` at ``T`` for a time-constant ``G``.

    Taylor expansion of the three bonds next to the slow bond, together with
    ``G'(0) = G'(1) = G(0) - G(1)``, leaves an integrand of size at most
    ``max(rho, 1-rho) (2 |G'(1)| + 4 sup|G''|) / a_N``.
    """
    c = G.coeffs[:, 0]
    if not np.allclose(G.coeffs, c[:, None]):
        raise ValueError("bound applies to time-constant test functions")
    _, _, E = sup_norms(TestFunction.constant(G.at(0.0), params.T))
    slope_end = abs(float(G.at(0.0).derivative([1.0])[0]))
    rho = params.rho
    return max(rho, 1 - rho) * (2 * slope_end + 4 * E) * params.T / params.a_N
