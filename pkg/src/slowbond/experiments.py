"""Reproducible experiment harness.

A scenario composes the library into a Monte Carlo or deterministic study
and returns flat records. Records that carry a ``passed`` value are checks;
the scenario status is 0 only if every check passed.

Randomness comes only from ``(seed, replica index)``, so results do not
depend on thread count or scheduling. Wall-clock information is written to a
separate ``.meta.json`` file so result files are byte-identical across runs.
"""
from __future__ import annotations

import dataclasses
import json
import math
import os
import platform
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable

import numpy as np

from . import __version__
from .basis import (CoefficientVector, basis, basis_function, bc_residual, norm_sq, project,
                    quadrature_rule, solve_wavenumber, wavenumber_equation)
from .exceptions import AssertionFailure, ConfigError
from .fields import FieldRecorder, SlowBondObserver, SnapshotRecorder, block_density_profile, default_grid
from .hydro import heat_robin_evolve, linear_response
from .martingales import DynkinObserver, FeynmanKacObserver, bracket_bound
from .moments import chernoff_check, compute_J, cramer_I, verify_moment_bound
from .process import (Configuration, LatticeParams, replica_seeds, sample_bernoulli_product,
                      sample_density_profile, simulate, site_positions)
from .rate import TestFunction, path_inner, rate_dyn, rate_ini, slot_inner

SCENARIOS = ("stationarity", "hydrolimit", "martingale", "ratefn", "concentration", "moments", "basis-selftest")
FORMATS = ("csv", "jsonl", "both")

COLUMNS = ("scenario", "metric", "N", "rho", "alpha", "T", "K", "grid", "replicas", "seed",
           "index", "value", "reference", "stderr", "tolerance", "passed", "version")


# --------------------------------------------------------------------------
# Configuration


@dataclass
class ExperimentConfig:
    scenario: str
    N: int = 64
    rho: float = 0.5
    alpha: float = 0.75
    T: float = 1.0
    K: int = 8
    M: int = 8
    grid: int = 200
    replicas: int = 100
    seed: int = 20261015
    threads: int = 1
    out: str = "results"
    format: str = "csv"
    sizes: tuple = ()
    times: tuple = ()
    modes: tuple = ()
    rhos: tuple = ()
    block_sizes: tuple = ()
    block: int = 8
    amplitude: float = 0.5
    k_max: int = 6

    def params(self, N: int | None = None, T: float | None = None) -> LatticeParams:
        return LatticeParams(self.N if N is None else N, self.rho, self.alpha, self.T if T is None else T)

    def validate(self) -> "ExperimentConfig":
        checks = [
            (self.scenario in SCENARIOS, f"unknown scenario {self.scenario!r}; choose from {SCENARIOS}"),
            (self.N >= 2, "N must be >= 2"),
            (0.0 <= self.rho <= 1.0, "rho must lie in [0, 1]"),
            (0.5 < self.alpha < 1.0, "alpha must lie in (0.5, 1)"),
            (self.T > 0, "T must be positive"),
            (self.K >= 0 and self.M >= 0, "cutoffs must be non-negative"),
            (self.grid >= 2, "grid needs at least two points"),
            (self.replicas >= 1, "replicas must be positive"),
            (0 <= self.seed < 2 ** 64, "seed must be an unsigned 64-bit integer"),
            (self.threads >= 1, "threads must be positive"),
            (self.format in FORMATS, f"format must be one of {FORMATS}"),
            (self.block >= 1, "block must be positive"),
            (all(n >= 2 for n in self.sizes), "sizes must be >= 2"),
            (all(t > 0 for t in self.times), "times must be positive"),
            (all(0.0 < r < 1.0 for r in self.rhos), "rhos must lie in (0, 1)"),
            (all(m >= 1 for m in self.block_sizes), "block_sizes must be positive"),
            (0 <= self.k_max <= 8, "k_max must lie in [0, 8]"),
            (all(math.isfinite(float(v)) for v in (self.rho, self.alpha, self.T, self.amplitude)),
             "numeric fields must be finite"),
        ]
        for ok, msg in checks:
            if not ok:
                raise ConfigError(msg)
        return self


# Per-scenario defaults, applied below file and command-line values.
SCENARIO_DEFAULTS = {
    "stationarity": dict(N=128, rho=0.3, T=1.0, replicas=400),
    "hydrolimit": dict(rho=0.5, sizes=(128, 256), times=(0.01, 0.05), replicas=500, block=8, amplitude=0.2),
    "martingale": dict(rho=0.5, T=0.5, sizes=(32, 64), modes=(1, -1), replicas=2000, amplitude=0.5),
    "ratefn": dict(rho=0.5, T=1.0),
    "concentration": dict(rho=0.5, T=1.0, sizes=(32, 64, 128, 256), replicas=400),
    "moments": dict(rhos=(0.2, 0.5), block_sizes=(2, 5, 10, 50), k_max=6),
    "basis-selftest": dict(K=20),
}

_FIELD_TYPES = {f.name: f.type for f in dataclasses.fields(ExperimentConfig)}
_TUPLE_ITEM = {"sizes": int, "times": float, "modes": int, "rhos": float, "block_sizes": int}


def _convert(key: str, raw):
    if key not in _FIELD_TYPES:
        raise ConfigError(f"unknown configuration key {key!r}")
    if not isinstance(raw, str):
        return raw
    raw = raw.strip()
    try:
        if key in _TUPLE_ITEM:
            return tuple(_TUPLE_ITEM[key](x) for x in raw.split(",") if x.strip())
        kind = _FIELD_TYPES[key]
        if kind == "int":
            return int(raw)
        if kind == "float":
            return float(raw)
        return raw
    except ValueError as exc:
        raise ConfigError(f"bad value for {key}: {raw!r}") from exc


def parse_config_text(text: str) -> dict:
    """Flat ``key = value`` lines; ``#`` starts a comment."""
    out = {}
    for lineno, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected key = value")
        key, value = (s.strip() for s in line.split("=", 1))
        out[key] = _convert(key, value)
    return out


def parse_overrides(items) -> dict:
    out = {}
    for item in items or ():
        if "=" not in item:
            raise ConfigError(f"override {item!r} is not key=value")
        key, value = (s.strip() for s in item.split("=", 1))
        out[key] = _convert(key, value)
    return out


def load_config(scenario: str | None = None, path=None, overrides=None, **cli) -> ExperimentConfig:
    """Merge defaults, scenario defaults, config file and CLI values (last wins)."""
    values = {}
    if path is not None:
        try:
            values.update(parse_config_text(Path(path).read_text(encoding="utf-8")))
        except OSError as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from exc
    values.update({k: _convert(k, v) for k, v in cli.items() if v is not None})
    values.update(parse_overrides(overrides))
    if scenario is not None:
        values["scenario"] = scenario
    name = values.get("scenario")
    if name not in SCENARIOS:
        raise ConfigError(f"unknown scenario {name!r}; choose from {SCENARIOS}")
    merged = dict(SCENARIO_DEFAULTS[name])
    merged.update(values)
    try:
        return ExperimentConfig(**merged).validate()
    except TypeError as exc:
        raise ConfigError(str(exc)) from exc


# --------------------------------------------------------------------------
# Records


def make_record(cfg: ExperimentConfig, metric: str, value, **extra) -> dict:
    rec = {c: None for c in COLUMNS}
    rec.update(scenario=cfg.scenario, metric=metric, N=cfg.N, rho=cfg.rho, alpha=cfg.alpha, T=cfg.T,
               K=cfg.K, grid=cfg.grid, replicas=cfg.replicas, seed=cfg.seed, value=value, version=__version__)
    unknown = set(extra) - set(COLUMNS)
    if unknown:
        raise KeyError(f"unknown record fields {sorted(unknown)}")
    rec.update(extra)
    return rec


def check_record(cfg, metric, value, passed, **extra) -> dict:
    return make_record(cfg, metric, value, passed=bool(passed), **extra)


def _format_value(v) -> str | None:
    if v is None:
        return None
    if isinstance(v, (bool, np.bool_)):
        return "true" if v else "false"
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        v = float(v)
        if math.isnan(v):
            return "nan"
        if math.isinf(v):
            return "inf" if v > 0 else "-inf"
        text = format(v, ".17g")
        # keep floats recognisable as floats when read back
        return text if any(ch in text for ch in ".en") else text + ".0"
    return str(v)


def _csv_field(text: str | None) -> str:
    if text is None:
        return ""
    if any(ch in text for ch in ',"\r\n'):
        return '"' + text.replace('"', '""') + '"'
    return text


def _json_field(v) -> str:
    text = _format_value(v)
    if text is None:
        return "null"
    if isinstance(v, (bool, np.bool_)) or isinstance(v, (int, np.integer)):
        return text
    if isinstance(v, (float, np.floating)):
        return text if math.isfinite(float(v)) else json.dumps(text)
    return json.dumps(text, ensure_ascii=False)


def emit(records, path, fmt: str = "csv") -> Path:
    """Write records as CSV (header row, RFC 4180 quoting) or JSON lines.

    Floats use 17 significant digits, so parsing the file gives back the
    same doubles; columns and keys always follow ``COLUMNS``.
    """
    path = Path(path)
    if fmt not in ("csv", "jsonl"):
        raise ValueError(f"format must be csv or jsonl, got {fmt!r}")
    lines = []
    if fmt == "csv":
        lines.append(",".join(COLUMNS))
        for rec in records:
            lines.append(",".join(_csv_field(_format_value(rec.get(c))) for c in COLUMNS))
    else:
        for rec in records:
            body = ", ".join(f"{json.dumps(c)}: {_json_field(rec.get(c))}" for c in COLUMNS)
            lines.append("{" + body + "}")
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8", newline="") as fh:
        fh.write("\r\n".join(lines) + "\r\n" if fmt == "csv" else "".join(l + "\n" for l in lines))
    return path


def read_records(path) -> list[dict]:
    """Parse a file written by :func:`emit`; numbers come back as int or float."""
    import csv

    path = Path(path)

    def number(text):
        if text in ("", None):
            return None
        if text in ("true", "false"):
            return text == "true"
        try:
            return int(text)
        except ValueError:
            pass
        try:
            return float(text)
        except ValueError:
            return text

    if path.suffix == ".jsonl":
        out = []
        for line in path.read_text(encoding="utf-8").splitlines():
            raw = json.loads(line, parse_float=str, parse_int=str)
            out.append({k: number(v) if isinstance(v, str) and k not in ("scenario", "metric", "version")
                        else v for k, v in raw.items()})
        return out
    with open(path, encoding="utf-8", newline="") as fh:
        rows = list(csv.DictReader(fh))
    return [{k: (v if k in ("scenario", "metric", "version") else number(v)) for k, v in row.items()} for row in rows]


# --------------------------------------------------------------------------
# Replicas


def map_replicas(fn: Callable[[int], object], n: int, threads: int = 1) -> list:
    """``[fn(0), ..., fn(n-1)]`` in replica order, optionally on a thread pool."""
    if threads <= 1:
        return [fn(r) for r in range(n)]
    with ThreadPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(fn, range(n)))


def _mean_se(x):
    x = np.asarray(x, dtype=float)
    return float(x.mean()), float(x.std(ddof=1) / math.sqrt(x.size)) if x.size > 1 else float("nan")


def _strictly_decreasing(values) -> bool:
    return all(b < a for a, b in zip(values[:-1], values[1:]))


# --------------------------------------------------------------------------
# Scenarios


def scenario_stationarity(cfg: ExperimentConfig) -> list[dict]:
    p = cfg.params()

    def one(r):
        init, dyn = replica_seeds(cfg.seed, r)
        res = simulate(sample_bernoulli_product(p, init), p, (), dyn)
        occ = res.final.occupancy.astype(float)
        centred = occ - p.rho
        return occ, float(np.mean(centred * np.roll(centred, -1)))

    out = map_replicas(one, cfg.replicas, cfg.threads)
    occ = np.array([o for o, _ in out])
    site_mean = occ.mean(axis=0)
    se = math.sqrt(p.rho * (1 - p.rho) / cfg.replicas)
    within = np.abs(site_mean - p.rho) <= 3 * se
    recs = [make_record(cfg, "site_mean", float(m), index=x, reference=p.rho, stderr=se)
            for x, m in enumerate(site_mean)]
    frac = float(within.mean())
    recs.append(check_record(cfg, "fraction_sites_within_3se", frac, frac >= 0.95, tolerance=0.95))
    cov, cov_se = _mean_se([c for _, c in out])
    recs.append(check_record(cfg, "nearest_neighbour_covariance", cov, abs(cov) <= 3 * cov_se,
                             reference=0.0, stderr=cov_se, tolerance=3 * cov_se))
    return recs


def hydro_block_reference(N: int, block: int, t: float, amplitude: float) -> np.ndarray:
    """Block averages of the limiting profile ``0.5 + amplitude cos(2 pi u)`` evolved to ``t``."""
    gamma = CoefficientVector.from_modes({0: 0.5, -1: amplitude}, K=1)
    prof = heat_robin_evolve(gamma, t).evaluate(site_positions(N))
    starts = np.arange(0, N, block)
    return np.add.reduceat(prof, starts) / np.diff(np.append(starts, N))


def l2_block_distance(mc: np.ndarray, ref: np.ndarray, N: int, block: int) -> float:
    """L2[0,1] distance between two block-constant profiles."""
    sizes = np.diff(np.append(np.arange(0, N, block), N))
    return float(math.sqrt(np.sum((mc - ref) ** 2 * sizes) / N))


def scenario_hydrolimit(cfg: ExperimentConfig) -> list[dict]:
    sizes = cfg.sizes or (cfg.N,)
    times = np.array(sorted(cfg.times or (0.01, 0.05)))
    amp = cfg.amplitude

    def gamma(u):
        return 0.5 + amp * np.cos(2 * np.pi * u)

    recs = []
    l2 = {}
    for N in sizes:
        p = cfg.params(N=N, T=float(times[-1]))
        reps = int(cfg.replicas * (N / sizes[0]) ** 2)

        def one(r, p=p):
            init, dyn = replica_seeds(cfg.seed, r)
            snap = SnapshotRecorder(times)
            simulate(sample_density_profile(p, gamma, init), p, [snap], dyn)
            snaps = snap.result()
            return np.array([block_density_profile(Configuration(s), cfg.block) for s in snaps])

        mean_profile = np.mean(map_replicas(one, reps, cfg.threads), axis=0)
        for j, t in enumerate(times):
            ref = hydro_block_reference(N, cfg.block, float(t), amp)
            for b, (m, e) in enumerate(zip(mean_profile[j], ref)):
                recs.append(make_record(cfg, f"block_density_t={t:g}", float(m), N=N, index=b,
                                        reference=float(e), replicas=reps, T=float(t)))
            dist = l2_block_distance(mean_profile[j], ref, N, cfg.block)
            l2[(N, float(t))] = dist
            recs.append(make_record(cfg, f"l2_error_t={t:g}", dist, N=N, replicas=reps, T=float(t)))
    for t in times:
        first = l2[(sizes[0], float(t))]
        recs.append(check_record(cfg, f"l2_error_smallest_N_t={t:g}", first, first <= 0.04,
                                 N=sizes[0], T=float(t), tolerance=0.04))
        seq = [l2[(N, float(t))] for N in sizes]
        recs.append(check_record(cfg, f"l2_error_decreasing_t={t:g}", seq[-1], _strictly_decreasing(seq),
                                 N=sizes[-1], T=float(t), reference=seq[0]))
    return recs


def scenario_martingale(cfg: ExperimentConfig) -> list[dict]:
    sizes = cfg.sizes or (cfg.N,)
    modes = cfg.modes or (1,)
    recs = []
    for N in sizes:
        p = cfg.params(N=N)
        tests = [TestFunction.constant(CoefficientVector.unit(m, value=cfg.amplitude), p.T) for m in modes]
        h = TestFunction.constant(CoefficientVector.unit(1), p.T)
        dk_grid = np.linspace(0.0, p.T, 21)
        bound_C = None

        def one(r, p=p, tests=tests, h=h):
            init, dyn = replica_seeds(cfg.seed, r)
            fks = [FeynmanKacObserver(G, [0.0, p.T]) for G in tests]
            dk = DynkinObserver(h, grid=dk_grid)
            simulate(sample_bernoulli_product(p, init), p, fks + [dk], dyn)
            paths = [f.result() for f in fks]
            d = dk.result()
            bound = bracket_bound(h, p, d.fast_rings, d.slow_rings)
            return ([q.log_m[-1] for q in paths], [q.residual()[-1] for q in paths],
                    d.lambda1[-1], d.optional[-1] - d.predictable[-1], int(np.sum(d.optional > bound)))

        out = map_replicas(one, cfg.replicas, cfg.threads)
        logm = np.array([o[0] for o in out])
        resid = np.array([o[1] for o in out])
        for i, m in enumerate(modes):
            mean, se = _mean_se(np.exp(logm[:, i]))
            recs.append(check_record(cfg, f"mean_M_T_mode={m}", mean, abs(mean - 1) <= 3 * se, N=N,
                                     index=m, reference=1.0, stderr=se, tolerance=3 * se))
            recs.append(make_record(cfg, f"var_log_M_T_mode={m}", float(np.var(logm[:, i], ddof=1)), N=N, index=m))
            recs.append(make_record(cfg, f"median_abs_residual_mode={m}", float(np.median(np.abs(resid[:, i]))),
                                    N=N, index=m))
        lam_mean, lam_se = _mean_se([o[2] for o in out])
        recs.append(check_record(cfg, "mean_dynkin_T", lam_mean, abs(lam_mean) <= 3 * lam_se, N=N,
                                 reference=0.0, stderr=lam_se, tolerance=3 * lam_se))
        gap_mean, gap_se = _mean_se([o[3] for o in out])
        recs.append(check_record(cfg, "mean_optional_minus_predictable_T", gap_mean,
                                 abs(gap_mean) <= 3 * gap_se, N=N, reference=0.0, stderr=gap_se,
                                 tolerance=3 * gap_se))
        violations = int(sum(o[4] for o in out))
        recs.append(check_record(cfg, "bracket_bound_violations", violations, violations == 0, N=N,
                                 reference=0, tolerance=0))
    return recs


def rate_cases():
    """Named driving functions and initial densities used for the rate checks."""
    psis = {
        "theta1": lambda T: TestFunction.constant(CoefficientVector.unit(1), T),
        "t*theta-1": lambda T: TestFunction.separable(CoefficientVector.unit(-1), lambda t: t, [0.0, T]),
        "theta1+0.3theta-2": lambda T: TestFunction.constant(CoefficientVector.from_modes({1: 1.0, -2: 0.3}), T),
    }
    phis = {"0": None, "theta-1": CoefficientVector.unit(-1)}
    return psis, phis


def scenario_ratefn(cfg: ExperimentConfig) -> list[dict]:
    recs = []
    rho, T = cfg.rho, cfg.T
    psis, phis = rate_cases()
    for pname, make_psi in psis.items():
        psi = make_psi(T)
        exact = 0.5 * path_inner(psi, psi, rho)
        for fname, phi in phis.items():
            for level, (points, tol) in enumerate(((cfg.grid, 0.01), (2 * cfg.grid - 1, 0.0025))):
                grid = np.linspace(0.0, T, points)
                mu = linear_response(phi, psi, grid, rho, cfg.K)
                value = rate_dyn(mu, rho, cfg.M).value
                rel = abs(value - exact) / exact
                recs.append(check_record(cfg, f"rate_dyn[psi={pname},phi={fname}]", value, rel <= tol,
                                         grid=points, index=level, reference=exact, stderr=rel, tolerance=tol))
                if level == 0:
                    v0 = mu.values[0]
                    closed = math.fsum(v0[n + cfg.K] ** 2 / (2 * rho * (1 - rho) * norm_sq(n))
                                       for n in range(-cfg.K, cfg.K + 1))
                    got = rate_ini(CoefficientVector(v0), rho, cfg.K)
                    err = abs(got - closed) / max(1.0, abs(closed))
                    recs.append(check_record(cfg, f"rate_ini[phi={fname}]", got, err <= 1e-13,
                                             reference=closed, stderr=err, tolerance=1e-13))
    worst = slot_diagonality(rho, 12)
    recs.append(check_record(cfg, "slot_form_max_deviation", worst, worst < 1e-9, K=12, tolerance=1e-9))
    return recs


def slot_diagonality(rho: float, K: int) -> float:
    """Largest gap between the quadrature slot form and its diagonal closed form."""
    from .rate import slot_weights

    w = slot_weights(K, rho)
    worst = 0.0
    for n in range(-K, K + 1):
        for m in range(-K, K + 1):
            q = slot_inner(CoefficientVector.unit(n, K), CoefficientVector.unit(m, K), rho, "quadrature")
            closed = w[n + K] if n == m else 0.0
            worst = max(worst, abs(q - closed))
    return worst


def scenario_concentration(cfg: ExperimentConfig) -> list[dict]:
    sizes = cfg.sizes or (cfg.N,)
    recs = []
    var_A, var_sup, grad = [], [], {}
    for N in sizes:
        p = cfg.params(N=N)
        grid = default_grid(p.T, cfg.grid)

        def one(r, p=p, grid=grid):
            init, dyn = replica_seeds(cfg.seed, r)
            sb = SlowBondObserver()
            fr = FieldRecorder(grid, 1)
            simulate(sample_bernoulli_product(p, init), p, [sb, fr], dyn)
            res = sb.result()
            integral = fr.result().integrals[:, 2]  # mode +1
            return res.A, float(np.max(np.abs(integral))), res.mean_fast_gradsq()

        out = np.array(map_replicas(one, cfg.replicas, cfg.threads))
        var_A.append(float(np.var(out[:, 0], ddof=1)))
        var_sup.append(float(np.var(out[:, 1], ddof=1)))
        grad[N] = _mean_se(out[:, 2])
        recs.append(make_record(cfg, "var_slow_bond_integral", var_A[-1], N=N))
        recs.append(make_record(cfg, "var_sup_time_integrated_field", var_sup[-1], N=N))
        recs.append(make_record(cfg, "mean_gradient_square", grad[N][0], N=N, stderr=grad[N][1],
                                reference=2 * p.rho * (1 - p.rho) * p.T))
    recs.append(check_record(cfg, "var_slow_bond_integral_decreasing", var_A[-1], _strictly_decreasing(var_A),
                             N=sizes[-1], reference=var_A[0]))
    recs.append(check_record(cfg, "var_sup_time_integrated_field_decreasing", var_sup[-1],
                             _strictly_decreasing(var_sup), N=sizes[-1], reference=var_sup[0]))
    ref = 2 * cfg.rho * (1 - cfg.rho) * cfg.T
    g = grad[sizes[-1]][0]
    recs.append(check_record(cfg, "mean_gradient_square_largest_N", g, abs(g - ref) <= 0.02 * ref,
                             N=sizes[-1], reference=ref, tolerance=0.02 * ref))
    return recs


def scenario_moments(cfg: ExperimentConfig) -> list[dict]:
    recs = []
    for rho in cfg.rhos or (cfg.rho,):
        mp = compute_J(rho)
        sym = compute_J(1 - rho)
        recs.append(make_record(cfg, "J", mp.J, rho=rho, reference=mp.J1, stderr=mp.J2))
        recs.append(check_record(cfg, "J_symmetry", abs(mp.J - sym.J), abs(mp.J - sym.J) <= 1e-8,
                                 rho=rho, tolerance=1e-8))
        recs.append(check_record(cfg, "I_at_0", cramer_I(0.0, rho), cramer_I(0.0, rho) == 0.0, rho=rho,
                                 reference=0.0))
        end = cramer_I(1 - rho, rho)
        recs.append(check_record(cfg, "I_at_1-rho", end, abs(end + math.log(rho)) <= 1e-12 * abs(math.log(rho)),
                                 rho=rho, reference=-math.log(rho), tolerance=1e-12))
        t = 1e-4
        curv = cramer_I(t, rho) / t ** 2
        limit = 1 / (2 * rho * (1 - rho))
        recs.append(check_record(cfg, "I_small_t_curvature", curv, abs(curv - limit) <= 1e-2, rho=rho,
                                 reference=limit, tolerance=1e-2))
        checks = verify_moment_bound(rho, cfg.block_sizes or (2, 5, 10, 50), cfg.k_max)
        for c in checks:
            recs.append(make_record(cfg, f"moment_ratio_M={c.M}", c.ratio, rho=rho, index=c.k,
                                    reference=c.bound, stderr=c.moment))
        worst = max(c.ratio for c in checks)
        recs.append(check_record(cfg, "moment_ratio_max", worst, worst <= 1.0, rho=rho, tolerance=1.0))
        ch = chernoff_check(rho, 30, 64)
        bad = sum(not c.holds() for c in ch)
        recs.append(check_record(cfg, "chernoff_violations", bad, bad == 0, rho=rho, reference=len(ch),
                                 tolerance=0))
    return recs


def basis_checks(K: int = 20, n_max: int = 50) -> dict:
    """Largest orthogonality, eigen and wavenumber residuals of the basis."""
    nodes, weights = quadrature_rule()
    table = basis(K)
    V = table.values(nodes)
    gram = (V * weights) @ V.T
    off = gram - np.diag(np.diag(gram))
    eig = np.max(np.abs(table.second_derivatives(nodes) - table.eigenvalues[:, None] * V), axis=1)
    scale = np.maximum(np.abs(table.eigenvalues), 1.0)
    wn = max(float(abs(wavenumber_equation(solve_wavenumber(n)))) for n in range(1, n_max + 1))
    bc = max(max(abs(x) for x in bc_residual(CoefficientVector.unit(n, K))) / scale[n + K]
             for n in range(-K, K + 1))
    return dict(orthogonality=float(np.max(np.abs(off))), norms=float(np.max(np.abs(np.diag(gram) - table.norms_sq))),
                eigen=float(np.max(eig / scale)), wavenumber=wn, boundary=float(bc))


def scenario_basis_selftest(cfg: ExperimentConfig) -> list[dict]:
    res = basis_checks(cfg.K, 50)
    tol = dict(orthogonality=1e-9, norms=1e-9, eigen=1e-8, wavenumber=1e-12, boundary=1e-12)
    recs = [check_record(cfg, f"basis_{name}", value, value < tol[name], tolerance=tol[name])
            for name, value in res.items()]
    worst = slot_diagonality(0.5, 12)
    recs.append(check_record(cfg, "slot_form_max_deviation", worst, worst < 1e-9, K=12, tolerance=1e-9))
    return recs


RUNNERS = {
    "stationarity": scenario_stationarity,
    "hydrolimit": scenario_hydrolimit,
    "martingale": scenario_martingale,
    "ratefn": scenario_ratefn,
    "concentration": scenario_concentration,
    "moments": scenario_moments,
    "basis-selftest": scenario_basis_selftest,
}


@dataclass
class ScenarioOutcome:
    records: list
    status: int
    failures: list
    meta: dict = field(default_factory=dict)

    def raise_on_failure(self):
        if self.failures:
            f = self.failures[0]
            raise AssertionFailure(f["metric"], f["value"], f["tolerance"])


def run_scenario(cfg: ExperimentConfig) -> ScenarioOutcome:
    """Run one scenario; status 0 iff every check passed, else 1."""
    cfg.validate()
    start = time.time()
    wall = time.perf_counter()
    records = RUNNERS[cfg.scenario](cfg)
    failures = [r for r in records if r["passed"] is False]
    meta = dict(scenario=cfg.scenario, config=dataclasses.asdict(cfg), started=start,
                wall_seconds=time.perf_counter() - wall, host=platform.node(),
                python=platform.python_version(), version=__version__)
    return ScenarioOutcome(records, 1 if failures else 0, failures, meta)


def write_outcome(outcome: ScenarioOutcome, cfg: ExperimentConfig) -> list[Path]:
    """Result file(s) under ``cfg.out`` plus the timing sidecar."""
    out = Path(cfg.out)
    formats = ("csv", "jsonl") if cfg.format == "both" else (cfg.format,)
    paths = [emit(outcome.records, out / f"{cfg.scenario}.{fmt}", fmt) for fmt in formats]
    meta = out / f"{cfg.scenario}.meta.json"
    meta.write_text(json.dumps(outcome.meta, indent=2, sort_keys=True, default=str) + "\n", encoding="utf-8")
    return paths + [meta]
