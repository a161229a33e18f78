"""One test per acceptance criterion, at the stated sizes and tolerances.

Each test prints a single PASS/FAIL line; the lines are collected again in
the terminal summary. The Monte Carlo criteria use the scenario runners with
their default configuration and the default master seed.
"""
from slowbond.basis import quadrature_rule
from slowbond.experiments import basis_checks, load_config, run_scenario, slot_diagonality, write_outcome
from slowbond.moments import cramer_I

_CACHE = {}


def _outcome(name, *overrides):
    key = (name, overrides)
    if key not in _CACHE:
        _CACHE[key] = run_scenario(load_config(name, overrides=list(overrides)))
    return _CACHE[key]


def _checks(outcome, prefix=""):
    return [r for r in outcome.records if r["passed"] is not None and r["metric"].startswith(prefix)]


def _summary(checks, key="N"):
    return "; ".join(f"{r['metric']}" + (f"[{key}={r[key]}]" if r[key] is not None else "")
                     + f"={r['value']:.4g}" + ("" if r["passed"] else " (failed)") for r in checks)


def test_criterion_01_basis(criterion):
    res = basis_checks(20, 50)
    ok = res["orthogonality"] < 1e-9 and res["eigen"] < 1e-8 and res["wavenumber"] < 1e-12
    nodes, _ = quadrature_rule()
    criterion(1, ok, f"orthogonality {res['orthogonality']:.2e} (< 1e-9), eigen {res['eigen']:.2e} (< 1e-8 |e_n|), "
                     f"wavenumber {res['wavenumber']:.2e} (< 1e-12), {nodes.size} quadrature nodes")
    assert ok


def test_criterion_02_stationarity(criterion):
    out = _outcome("stationarity")
    checks = _checks(out)
    ok = out.status == 0
    criterion(2, ok, "N=128, rho=0.3, 400 replicas: " + _summary(checks))
    assert ok


def test_criterion_03_hydrodynamic_limit(criterion):
    out = _outcome("hydrolimit")
    checks = _checks(out)
    ok = out.status == 0
    l2 = [r for r in out.records if r["metric"].startswith("l2_error_t=")]
    table = ", ".join(f"N={r['N']} t={r['T']:g}: {r['value']:.4f}" for r in l2)
    criterion(3, ok, f"L2 block errors {table}; " + _summary(checks))
    assert ok


def test_criterion_04_mean_one(criterion):
    out = _outcome("martingale")
    checks = _checks(out, "mean_M_T")
    ok = all(r["passed"] for r in checks) and len(checks) == 4
    criterion(4, ok, "; ".join(f"N={r['N']} mode {r['index']}: {r['value']:.4f} +- {r['stderr']:.4f}"
                               + ("" if r["passed"] else " (outside 3 SE)") for r in checks))
    assert ok


def test_criterion_05_brackets(criterion):
    out = _outcome("martingale")
    checks = [r for r in _checks(out) if not r["metric"].startswith("mean_M_T") and r["N"] == 64]
    ok = all(r["passed"] for r in checks) and len(checks) == 3
    criterion(5, ok, "N=64, h=theta_1: " + _summary(checks))
    assert ok


def test_criterion_06_rate_representation(criterion):
    out = _outcome("ratefn")
    dyn = _checks(out, "rate_dyn")
    ini = _checks(out, "rate_ini")
    ok = all(r["passed"] for r in dyn + ini) and len(dyn) == 12 and len(ini) == 6
    worst = {lvl: max(r["stderr"] for r in dyn if r["index"] == lvl) for lvl in (0, 1)}
    criterion(6, ok, f"worst relative error {worst[0]:.2e} (tol 1e-2) at grid 200, {worst[1]:.2e} (tol 2.5e-3) "
                     f"refined; rate_ini worst {max(r['stderr'] for r in ini):.1e}")
    assert ok


def test_criterion_07_slot_diagonality(criterion):
    worst = max(slot_diagonality(rho, 12) for rho in (0.5, 0.3))
    ok = worst < 1e-9
    criterion(7, ok, f"max |quadrature - closed form| over |n|,|m| <= 12: {worst:.2e} (< 1e-9)")
    assert ok


def test_criterion_08_moments(criterion):
    out = _outcome("moments")
    checks = _checks(out)
    ok = out.status == 0
    rho = 0.3
    extra = abs(cramer_I(1e-4, rho) / 1e-8 - 1 / (2 * rho * (1 - rho)))
    ok = ok and extra <= 1e-2
    criterion(8, ok, _summary(checks, "rho") + f"; curvature at rho=0.3 off by {extra:.1e}")
    assert ok


def test_criterion_09_concentration(criterion):
    out = _outcome("concentration")
    variances = [r for r in out.records if r["metric"].startswith("var_")]
    table = ", ".join(f"{r['metric']}[N={r['N']}]={r['value']:.3g}" for r in variances)
    ok = out.status == 0
    criterion(9, ok, _summary(_checks(out)) + "; " + table)
    assert ok


_SMALL = {
    "stationarity": ["N=16", "replicas=8", "T=0.1"],
    "hydrolimit": ["sizes=16,32", "times=0.01", "replicas=4", "block=4"],
    "martingale": ["sizes=16", "replicas=6", "T=0.1"],
    "ratefn": ["grid=50"],
    "concentration": ["sizes=16,32", "replicas=6", "T=0.1", "grid=20"],
    "moments": ["rhos=0.3", "block_sizes=2,5"],
    "basis-selftest": ["K=6"],
}


def test_criterion_10_determinism(criterion, tmp_path):
    differ = []
    for name, overrides in _SMALL.items():
        blobs = []
        for run, threads in enumerate((1, 2)):
            cfg = load_config(name, overrides=overrides + [f"threads={threads}", "format=both"],
                              out=str(tmp_path / f"{name}-{run}"))
            write_outcome(run_scenario(cfg), cfg)
            blobs.append(((tmp_path / f"{name}-{run}" / f"{name}.csv").read_bytes(),
                          (tmp_path / f"{name}-{run}" / f"{name}.jsonl").read_bytes()))
        if blobs[0] != blobs[1]:
            differ.append(name)
    ok = not differ
    criterion(10, ok, f"{len(_SMALL)} scenarios run twice (1 and 2 threads): "
                      + ("byte-identical csv and jsonl" if ok else f"differences in {differ}"))
    assert ok
