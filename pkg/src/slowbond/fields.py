"""Empirical observables along trajectories.

The central field is ``mu_t(theta_n) = (1/a_N) sum_x (eta_t(x) - rho) theta_n(x/N)``.
Observers here update it event by event; time integrals whose integrand is
piecewise constant between events are accumulated exactly.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from numba import njit
from scipy.integrate import cumulative_trapezoid

from .basis import DEFAULT_CUTOFF, CoefficientVector, FUNCTIONAL, basis
from .process import Configuration, LatticeParams, Observer, simulate, site_positions

DEFAULT_GRID_POINTS = 200


def default_grid(T: float, points: int = DEFAULT_GRID_POINTS) -> np.ndarray:
    return np.linspace(0.0, T, points)


@dataclass
class FieldTrajectory:
    """Values ``mu_{t_j}(theta_n)`` for ``|n| <= K`` on a time grid.

    ``values[j, n + K]``. ``integrals`` (optional) holds the exact running
    integrals ``int_0^{t_j} mu_s(theta_n) ds`` when recorded from a
    simulation.
    """

    times: np.ndarray
    values: np.ndarray
    params: LatticeParams | None = None
    integrals: np.ndarray | None = None

    def __post_init__(self):
        self.times = np.asarray(self.times, dtype=float)
        self.values = np.atleast_2d(np.asarray(self.values, dtype=float))
        if self.values.shape[0] != self.times.size or self.values.shape[1] % 2 != 1:
            raise ValueError("values must have shape (len(times), 2K+1)")
        if np.any(np.diff(self.times) <= 0):
            raise ValueError("times must be strictly increasing")

    @property
    def K(self) -> int:
        return (self.values.shape[1] - 1) // 2

    @property
    def T(self) -> float:
        return float(self.times[-1])

    def mode(self, n: int) -> np.ndarray:
        return self.values[:, n + self.K]

    def at(self, j: int) -> CoefficientVector:
        return CoefficientVector(self.values[j], FUNCTIONAL)

    def scaled(self, c: float) -> "FieldTrajectory":
        integ = None if self.integrals is None else c * self.integrals
        return FieldTrajectory(self.times, c * self.values, self.params, integ)

    def __add__(self, other: "FieldTrajectory") -> "FieldTrajectory":
        if not np.array_equal(self.times, other.times) or self.K != other.K:
            raise ValueError("trajectories must share grid and cutoff")
        return FieldTrajectory(self.times, self.values + other.values, self.params)


@dataclass
class SlowBondIntegrals:
    """Exact time integrals of slow-bond and gradient-square observables.

    ``A  = int (eta(0)(1-eta(-1)) - rho(1-rho)) ds``
    ``A_swapped = int (eta(-1)(1-eta(0)) - rho(1-rho)) ds``
    ``gradsq[x] = int (eta(x) - eta(x+1))^2 ds`` for every bond ``x``
    (``x = N-1`` is the slow bond).
    """

    A: float
    A_swapped: float
    gradsq: np.ndarray
    T: float

    def mean_fast_gradsq(self) -> float:
        """``(1/N) sum_{x != -1} gradsq(x)``."""
        N = self.gradsq.size
        return float(self.gradsq[:-1].sum() / N)


# --------------------------------------------------------------------------
# Instantaneous observables


def empirical_projections(cfg: Configuration, params: LatticeParams, K: int = DEFAULT_CUTOFF) -> np.ndarray:
    """``mu(theta_n)`` for all ``|n| <= K`` as an array indexed ``n + K``."""
    centred = cfg.occupancy.astype(float) - params.rho
    return basis(K).values(site_positions(params.N)) @ centred / params.a_N


def empirical_projection(cfg: Configuration, params: LatticeParams, n: int) -> float:
    return float(empirical_projections(cfg, params, abs(n))[n + abs(n)])


def block_density_profile(cfg: Configuration, block_size: int) -> np.ndarray:
    """Averages over consecutive blocks of sites starting at site 0.

    When ``block_size`` does not divide ``N`` the last block is shorter and
    averaged over the sites it has.
    """
    occ = cfg.occupancy.astype(float)
    if block_size < 1:
        raise ValueError("block_size must be positive")
    starts = np.arange(0, occ.size, block_size)
    sizes = np.diff(np.append(starts, occ.size))
    return np.add.reduceat(occ, starts) / sizes


def time_integrated_field(traj: FieldTrajectory, c: CoefficientVector) -> np.ndarray:
    """Running trapezoid integral of ``<mu_s, G>`` on the trajectory grid.

    ``G = sum c_n theta_n``. The trapezoid error on a grid of spacing ``dt``
    is at most ``T dt^2 max|d^2/dt^2 <mu_t, G>| / 12`` for smooth paths; for
    simulated (jump) paths it is bounded by ``dt * total variation``.
    """
    c = c.resized(traj.K)
    signal = traj.values @ c.values
    return cumulative_trapezoid(signal, traj.times, initial=0.0)


# --------------------------------------------------------------------------
# Kernels


@njit(cache=True, nogil=True)
def _field_kernel(times, bonds, occ, table, inv_a, grid, state_i, state_f, cur, acc, values, integrals):
    N = occ.size
    nm = cur.size
    gi = state_i[0]
    tl = state_f[0]
    for i in range(times.size):
        tau = times[i]
        while gi < grid.size and grid[gi] < tau:
            tg = grid[gi]
            for m in range(nm):
                values[gi, m] = cur[m]
                integrals[gi, m] = acc[m] + cur[m] * (tg - tl)
            gi += 1
        b = bonds[i]
        y = b + 1
        if y == N:
            y = 0
        d = occ[b] - occ[y]
        if d == 0:
            continue
        for m in range(nm):
            acc[m] += cur[m] * (tau - tl)
            cur[m] += inv_a * (table[m, y] - table[m, b]) * d
        tl = tau
        occ[b], occ[y] = occ[y], occ[b]
    state_i[0] = gi
    state_f[0] = tl


@njit(cache=True, nogil=True)
def _field_finish(T, grid, state_i, state_f, cur, acc, values, integrals):
    gi = state_i[0]
    tl = state_f[0]
    while gi < grid.size and grid[gi] <= T:
        for m in range(cur.size):
            values[gi, m] = cur[m]
            integrals[gi, m] = acc[m] + cur[m] * (grid[gi] - tl)
        gi += 1
    state_i[0] = gi


class FieldRecorder(Observer):
    """Records ``mu_t(theta_n)``, ``|n| <= K``, and their exact running integrals.

    Values at a grid time include every event up to and including it.
    """

    def __init__(self, grid, K: int = DEFAULT_CUTOFF):
        self.grid = np.asarray(grid, dtype=float)
        self.K = int(K)

    def start(self, occupancy, params):
        self.params = params
        self.occ = occupancy
        self.table = np.ascontiguousarray(basis(self.K).values(site_positions(params.N)))
        self.cur = self.table @ (occupancy.astype(float) - params.rho) / params.a_N
        self.acc = np.zeros_like(self.cur)
        self.values = np.full((self.grid.size, self.cur.size), np.nan)
        self.integrals = np.full_like(self.values, np.nan)
        self.si = np.zeros(1, np.int64)
        self.sf = np.zeros(1)

    def process(self, times, bonds, effective):
        _field_kernel(times, bonds, self.occ, self.table, 1.0 / self.params.a_N, self.grid,
                      self.si, self.sf, self.cur, self.acc, self.values, self.integrals)

    def finish(self, T):
        _field_finish(T, self.grid, self.si, self.sf, self.cur, self.acc, self.values, self.integrals)

    def result(self) -> FieldTrajectory:
        return FieldTrajectory(self.grid, self.values, self.params, self.integrals)


@njit(cache=True, nogil=True)
def _slowbond_kernel(times, bonds, occ, gs, last, gsum, state):
    # state: [a1, a2, tA, A1int, A2int]
    N = occ.size
    for i in range(times.size):
        b = bonds[i]
        y = b + 1
        if y == N:
            y = 0
        if occ[b] == occ[y]:
            continue
        tau = times[i]
        for k in range(-1, 2):
            j = (b + k) % N
            gsum[j] += gs[j] * (tau - last[j])
            last[j] = tau
        touches = b == 0 or b == N - 1 or y == 0 or y == N - 1
        if touches:
            dt = tau - state[2]
            state[3] += state[0] * dt
            state[4] += state[1] * dt
            state[2] = tau
        occ[b], occ[y] = occ[y], occ[b]
        for k in range(-1, 2):
            j = (b + k) % N
            jy = j + 1
            if jy == N:
                jy = 0
            gs[j] = (occ[j] - occ[jy]) ** 2
        if touches:
            state[0] = occ[0] * (1 - occ[N - 1])
            state[1] = occ[N - 1] * (1 - occ[0])


class SlowBondObserver(Observer):
    """Accumulates :class:`SlowBondIntegrals` event-exactly."""

    def start(self, occupancy, params):
        self.params = params
        self.occ = occupancy
        o = occupancy.astype(np.int64)
        N = params.N
        self.gs = ((o - np.roll(o, -1)) ** 2).astype(np.float64)
        self.last = np.zeros(N)
        self.gsum = np.zeros(N)
        self.state = np.array([o[0] * (1 - o[N - 1]), o[N - 1] * (1 - o[0]), 0.0, 0.0, 0.0], dtype=float)

    def process(self, times, bonds, effective):
        _slowbond_kernel(times, bonds, self.occ, self.gs, self.last, self.gsum, self.state)

    def finish(self, T):
        self.gsum += self.gs * (T - self.last)
        self.last[:] = T
        dt = T - self.state[2]
        self.state[3] += self.state[0] * dt
        self.state[4] += self.state[1] * dt
        self.state[2] = T
        self.T = T

    def result(self) -> SlowBondIntegrals:
        c = self.params.rho * (1 - self.params.rho) * self.T
        return SlowBondIntegrals(self.state[3] - c, self.state[4] - c, self.gsum.copy(), self.T)


@njit(cache=True, nogil=True)
def _snapshot_kernel(times, bonds, occ, grid, state_i, out):
    N = occ.size
    gi = state_i[0]
    for i in range(times.size):
        tau = times[i]
        while gi < grid.size and grid[gi] < tau:
            out[gi, :] = occ
            gi += 1
        b = bonds[i]
        y = b + 1
        if y == N:
            y = 0
        occ[b], occ[y] = occ[y], occ[b]
    state_i[0] = gi


class SnapshotRecorder(Observer):
    """Copies of the occupancy at given times."""

    def __init__(self, times):
        self.grid = np.asarray(times, dtype=float)

    def start(self, occupancy, params):
        self.occ = occupancy
        self.out = np.zeros((self.grid.size, params.N), np.int8)
        self.si = np.zeros(1, np.int64)

    def process(self, times, bonds, effective):
        _snapshot_kernel(times, bonds, self.occ, self.grid, self.si, self.out)

    def finish(self, T):
        gi = int(self.si[0])
        while gi < self.grid.size and self.grid[gi] <= T:
            self.out[gi] = self.occ
            gi += 1
        self.si[0] = gi

    def result(self) -> np.ndarray:
        return self.out


# --------------------------------------------------------------------------
# Convenience drivers


def record_trajectory(cfg0: Configuration, params: LatticeParams, grid=None, K: int = DEFAULT_CUTOFF,
                      seed=None, frozen: bool = False) -> FieldTrajectory:
    grid = default_grid(params.T) if grid is None else grid
    rec = FieldRecorder(grid, K)
    simulate(cfg0, params, [rec], seed, frozen=frozen)
    return rec.result()


def slowbond_observables(cfg0: Configuration, params: LatticeParams, seed=None,
                         frozen: bool = False) -> SlowBondIntegrals:
    obs = SlowBondObserver()
    simulate(cfg0, params, [obs], seed, frozen=frozen)
    return obs.result()
