"""Exact continuous-time simulation of the exclusion process with a slow bond.

The ring has sites ``0, ..., N-1``. Bond ``x`` joins sites ``x`` and
``x+1 (mod N)``; bonds ``0..N-2`` ring at rate ``N**2`` and bond ``N-1``
(between site ``N-1 == -1`` and site ``0``) is the slow bond, ringing at
rate ``N``. Every ring swaps the two occupancies, which is a no-op when they
are equal; no-op rings are still reported as events.

Events are generated in fixed-size chunks and handed to observers, each of
which keeps a private copy of the configuration and replays the swaps.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np
from numba import njit

from .exceptions import OutOfRangeDensity

# Random numbers are drawn in blocks of this size; changing it changes the
# realised trajectories for a given seed.
CHUNK_SIZE = 1 << 16

DEFAULT_ALPHA = 0.75


@dataclass(frozen=True)
class LatticeParams:
    """Size, reference density, moderate-deviation exponent and horizon."""

    N: int
    rho: float
    alpha: float = DEFAULT_ALPHA
    T: float = 1.0

    def __post_init__(self):
        if int(self.N) != self.N or self.N < 2:
            raise ValueError(f"N must be an integer >= 2, got {self.N!r}")
        if not 0.0 <= self.rho <= 1.0:
            raise ValueError(f"rho must lie in [0, 1], got {self.rho!r}")
        if not 0.5 < self.alpha < 1.0:
            raise ValueError(f"alpha must lie in (0.5, 1), got {self.alpha!r}")
        if not self.T > 0:
            raise ValueError(f"T must be positive, got {self.T!r}")

    @property
    def a_N(self) -> float:
        return float(self.N) ** self.alpha

    @property
    def slow_bond(self) -> int:
        return self.N - 1

    def replace(self, **changes) -> "LatticeParams":
        values = dict(N=self.N, rho=self.rho, alpha=self.alpha, T=self.T)
        values.update(changes)
        return LatticeParams(**values)


@dataclass(frozen=True, eq=False)
class Configuration:
    """Occupancy of the ring, one 0/1 value per site (read-only)."""

    occupancy: np.ndarray
    particle_count: int = field(init=False)

    def __post_init__(self):
        occ = np.array(self.occupancy, dtype=np.int8, copy=True).ravel()
        if occ.size and (occ.min() < 0 or occ.max() > 1):
            raise ValueError("occupancy values must be 0 or 1")
        occ.setflags(write=False)
        object.__setattr__(self, "occupancy", occ)
        object.__setattr__(self, "particle_count", int(occ.sum(dtype=np.int64)))

    @property
    def N(self) -> int:
        return self.occupancy.size

    def __eq__(self, other):
        if not isinstance(other, Configuration):
            return NotImplemented
        return np.array_equal(self.occupancy, other.occupancy)

    def __len__(self):
        return self.occupancy.size


@dataclass(frozen=True)
class EventLog:
    """All clock rings of one trajectory, in time order."""

    times: np.ndarray
    bonds: np.ndarray
    effective: np.ndarray

    def __len__(self):
        return self.times.size

    def counts(self, N: int) -> np.ndarray:
        """Number of rings per bond."""
        return np.bincount(self.bonds, minlength=N)


@dataclass
class SimulationResult:
    final: Configuration
    outputs: list
    n_events: int
    log: EventLog | None = None


# --------------------------------------------------------------------------
# Random streams


def make_rng(seed=None) -> np.random.Generator:
    """Counter-based generator (Philox) from an int, SeedSequence or Generator."""
    if isinstance(seed, np.random.Generator):
        return seed
    if not isinstance(seed, np.random.SeedSequence):
        seed = np.random.SeedSequence(seed)
    return np.random.Generator(np.random.Philox(seed))


def replica_seeds(master: int, replica: int) -> tuple[np.random.SeedSequence, np.random.SeedSequence]:
    """Independent (initial-condition, dynamics) streams for one replica.

    Derived only from ``(master, replica)``, so replicas can run in any order
    or in parallel and still reproduce.
    """
    init = np.random.SeedSequence(master, spawn_key=(int(replica), 0))
    dyn = np.random.SeedSequence(master, spawn_key=(int(replica), 1))
    return init, dyn


# --------------------------------------------------------------------------
# Initial conditions


def total_jump_rate(params: LatticeParams) -> float:
    N = params.N
    return float(N * N * (N - 1) + N)


def sample_product(probs, seed=None) -> Configuration:
    """Independent sites with the given occupation probabilities."""
    p = np.asarray(probs, dtype=float)
    if np.any(p < 0.0) or np.any(p > 1.0) or not np.all(np.isfinite(p)):
        bad = np.flatnonzero(~((p >= 0.0) & (p <= 1.0)))
        raise OutOfRangeDensity(
            f"occupation probability outside [0, 1] at sites {bad[:10].tolist()}"
        )
    u = make_rng(seed).random(p.size)
    return Configuration((u < p).astype(np.int8))


def sample_bernoulli_product(params: LatticeParams, seed=None) -> Configuration:
    """Sample from the product measure with density ``params.rho``."""
    return sample_product(np.full(params.N, params.rho), seed)


def site_positions(N: int) -> np.ndarray:
    return np.arange(N) / N


def sample_profile_product(params: LatticeParams, phi, seed=None) -> Configuration:
    """Product measure with marginals ``rho + (a_N/N) * phi(x/N)``.

    ``phi`` is a callable on [0, 1] or a function-role ``CoefficientVector``.
    """
    u = site_positions(params.N)
    values = phi(u) if callable(phi) else phi.evaluate(u)
    probs = params.rho + params.a_N / params.N * np.asarray(values, dtype=float)
    return sample_product(probs, seed)


def sample_density_profile(params: LatticeParams, gamma: Callable, seed=None) -> Configuration:
    """Product measure with macroscopic profile ``gamma(x/N)``."""
    return sample_product(gamma(site_positions(params.N)), seed)


# --------------------------------------------------------------------------
# Dynamics


@njit(cache=True, nogil=True)
def _apply_events(occ, u, p_slow, bonds, effective):
    """Pick the bond for each uniform ``u`` and perform the swap in place."""
    N = occ.size
    n_fast = N - 1
    scale = n_fast / (1.0 - p_slow)
    for i in range(u.size):
        ui = u[i]
        if ui < p_slow:
            b = N - 1
        else:
            b = int((ui - p_slow) * scale)
            if b > n_fast - 1:
                b = n_fast - 1
        bonds[i] = b
        y = b + 1
        if y == N:
            y = 0
        ox = occ[b]
        oy = occ[y]
        if ox != oy:
            occ[b] = oy
            occ[y] = ox
            effective[i] = True
        else:
            effective[i] = False


class Observer:
    """Consumes events of one trajectory.

    ``start`` receives a private copy of the initial occupancy;
    ``process`` receives consecutive chunks of ``(times, bonds, effective)``
    in time order, where ``effective`` tells whether the swap changed the
    configuration; ``finish`` is called once with the horizon.
    """

    def start(self, occupancy: np.ndarray, params: LatticeParams) -> None:
        raise NotImplementedError

    def process(self, times: np.ndarray, bonds: np.ndarray, effective: np.ndarray) -> None:
        raise NotImplementedError

    def finish(self, T: float) -> None:
        pass

    def result(self):
        return None


class CallbackObserver(Observer):
    """Calls ``fn(time, occupancy, (bond, effective))`` after every event.

    ``occupancy`` is the post-event state and is mutated in place afterwards;
    copy it if it must be kept. Pure Python, meant for small systems.
    """

    def __init__(self, fn):
        self.fn = fn

    def start(self, occupancy, params):
        self.occ = occupancy
        self.N = params.N

    def process(self, times, bonds, effective):
        occ, N = self.occ, self.N
        for t, b, e in zip(times.tolist(), bonds.tolist(), effective.tolist()):
            if e:
                y = (b + 1) % N
                occ[b], occ[y] = occ[y], occ[b]
            self.fn(t, occ, (b, e))


def simulate(
    cfg0: Configuration,
    params: LatticeParams,
    observers: Sequence[Observer] = (),
    seed=None,
    *,
    frozen: bool = False,
    record_log: bool = False,
    debug: bool = False,
) -> SimulationResult:
    """Run the dynamics on ``[0, params.T]``.

    Waiting times are exponential with the total rate; each ring selects the
    slow bond with probability ``N / total_rate`` and otherwise a uniformly
    chosen fast bond. With ``frozen=True`` no clock ever rings, which leaves
    the observers to integrate a constant configuration.
    """
    if cfg0.N != params.N:
        raise ValueError(f"configuration has {cfg0.N} sites, params.N={params.N}")
    rng = make_rng(seed)
    N, T = params.N, params.T
    occ = np.array(cfg0.occupancy, dtype=np.int8)
    for ob in observers:
        ob.start(occ.copy(), params)

    rate = total_jump_rate(params)
    p_slow = N / rate
    logs = []
    n_events = 0
    t = 0.0
    while not frozen:
        w = rng.standard_exponential(CHUNK_SIZE)
        u = rng.random(CHUNK_SIZE)
        times = np.cumsum(w)
        times *= 1.0 / rate
        times += t
        cut = int(np.searchsorted(times, T, side="right"))
        times = times[:cut]
        u = u[:cut]
        bonds = np.empty(cut, dtype=np.int32)
        effective = np.empty(cut, dtype=np.bool_)
        _apply_events(occ, u, p_slow, bonds, effective)
        if debug and int(occ.sum(dtype=np.int64)) != cfg0.particle_count:
            raise AssertionError("particle number not conserved")
        for ob in observers:
            ob.process(times, bonds, effective)
        if record_log:
            logs.append((times, bonds, effective))
        n_events += cut
        if cut < CHUNK_SIZE:
            break
        t = float(times[-1])

    for ob in observers:
        ob.finish(T)

    log = None
    if record_log:
        if logs:
            log = EventLog(*(np.concatenate(parts) for parts in zip(*logs)))
        else:
            log = EventLog(np.empty(0), np.empty(0, np.int32), np.empty(0, bool))
    return SimulationResult(Configuration(occ), [ob.result() for ob in observers], n_events, log)


def replay(cfg0: Configuration, log: EventLog, upto: float | None = None) -> Configuration:
    """Configuration after applying the logged swaps (optionally up to a time)."""
    occ = np.array(cfg0.occupancy, dtype=np.int8)
    N = occ.size
    n = len(log) if upto is None else int(np.searchsorted(log.times, upto, side="right"))
    for b in log.bonds[:n].tolist():
        y = (b + 1) % N
        occ[b], occ[y] = occ[y], occ[b]
    return Configuration(occ)
