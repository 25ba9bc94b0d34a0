"""Acceptance gate: one test group per criterion, run at the stated tolerances.

Each test records a short result with ``record_property("detail", ...)``;
``conftest.py`` prints one PASS/FAIL line per criterion at the end.
Long simulations are computed once per module in fixtures and shared by
the criteria that read them, including the boundedness check.
"""

import time

import numpy as np
import pytest
from scipy.stats import rankdata

from oracles import brute_force_gain, random_model, reference_trace
from whittleq import (
    ArmModel,
    QWhittleLearner,
    circulant_arm,
    restart_arm,
    rvi_solve,
    scaling_check,
    scan_indexability,
    whittle_index,
)
from whittleq import config as cfgmod
from whittleq.harness import compare_rewards, run_experiment, run_single, run_with_baselines

SEEDS = [0, 1, 2, 3, 4]
CIRCULANT_EXACT = np.array([-0.5, 0.5, 1.0, -1.0])
RESTART_PUBLISHED = np.array([-0.90, -0.73, -0.50, -0.26, -0.01])


def crit(cid):
    return pytest.mark.criterion(cid)


def timed(fn, *args, **kwargs):
    t0 = time.perf_counter()
    out = fn(*args, **kwargs)
    return out, time.perf_counter() - t0


# ----------------------------------------------------------------------------
# shared runs


@pytest.fixture(scope="module")
def circulant_indices():
    m = circulant_arm()
    return timed(lambda: np.array([whittle_index(m, k) for k in range(1, 5)]))


@pytest.fixture(scope="module")
def restart_indices():
    m = restart_arm()
    return timed(lambda: np.array([whittle_index(m, k) for k in range(1, 6)]))


@pytest.fixture(scope="module")
def sync_runs():
    def go():
        return [QWhittleLearner(C=0.2).fit(circulant_arm(), n_sweeps=100_000, lambda_frozen=1.0, random_state=s)
                for s in SEEDS]
    return timed(go)


@pytest.fixture(scope="module")
def circulant_learning():
    cfg = cfgmod.load_experiment("circulant_eps01", ["horizon=500000", "cadence=100", "baselines=[]"])
    return timed(run_experiment, cfg)


@pytest.fixture(scope="module")
def efficiency_runs():
    out = {}
    for name in ("circulant_eps01", "circulant_eps001"):
        cfg = cfgmod.load_experiment(name, ["horizon=10000", "baselines=[exact-indices]"])
        out[name] = run_with_baselines(cfg)
    return out


@pytest.fixture(scope="module")
def restart_learning():
    cfg = cfgmod.load_experiment("restart_decreasing", ["baselines=[]"])
    return timed(run_experiment, cfg)


@pytest.fixture(scope="module")
def trace_runs():
    return {}


# ----------------------------------------------------------------------------
# 1  circulant oracle


@crit(1)
def test_c01_circulant_indices(circulant_indices, record_property):
    lam, secs = circulant_indices
    err = np.abs(lam - CIRCULANT_EXACT).max()
    record_property("detail", f"max error {err:.2e} (tol 1e-6), {secs:.3f} s (limit 1 s)")
    assert err <= 1e-6
    assert secs < 1.0


# ----------------------------------------------------------------------------
# 2  restart oracle, one case per state


@crit(2)
@pytest.mark.parametrize("state", [1, 2, 3, 4, 5])
def test_c02_restart_index(state, restart_indices, record_property):
    lam = restart_indices[0][state - 1]
    gap = abs(lam - RESTART_PUBLISHED[state - 1])
    adv = abs(rvi_solve(restart_arm(), lam).advantage[state - 1])
    record_property("detail", f"state {state}: {lam:+.6f} vs {RESTART_PUBLISHED[state - 1]:+.2f}, "
                              f"gap {gap:.4f} (tol 5e-3), |g| {adv:.1e}")
    assert adv <= 1e-6
    assert gap <= 5e-3


@crit(2)
def test_c02_restart_runtime(restart_indices, record_property):
    secs = restart_indices[1]
    record_property("detail", f"{secs:.3f} s (limit 2 s)")
    assert secs < 2.0


# ----------------------------------------------------------------------------
# 3  indexability scans


@crit(3)
def test_c03_scans(record_property):
    grids = {"circulant": (circulant_arm(), -2.0, 2.0), "restart": (restart_arm(), -2.0, 1.0)}
    t0 = time.perf_counter()
    results = {}
    for name, (m, lo, hi) in grids.items():
        grid = np.round(np.arange(lo, hi + 1e-9, 0.05), 10)
        results[name] = scan_indexability(m, grid).passed
    secs = time.perf_counter() - t0
    record_property("detail", f"{results}, {secs:.2f} s (limit 30 s)")
    assert all(results.values())
    assert secs < 30.0


# ----------------------------------------------------------------------------
# 4  scaling law


@crit(4)
@pytest.mark.parametrize("lam", [-1.0, -0.5, 0.5, 1.0])
def test_c04_scaling(lam, record_property):
    value = scaling_check(circulant_arm(), lam, 1e4)
    record_property("detail", f"lambda {lam:+}: {value:+.5f}")
    assert abs(value + lam) <= 1e-2


# ----------------------------------------------------------------------------
# 5  synchronous Q convergence


@crit(5)
def test_c05_sync_convergence(sync_runs, record_property):
    ests, secs = sync_runs
    target = rvi_solve(circulant_arm(), 1.0).q[:, :, None]
    dists = [float(np.abs(e.state_.table(0) - target).max()) for e in ests]
    med = float(np.median(dists))
    record_property("detail", f"median sup distance {med:.4f} (tol 0.05), {secs:.1f} s (limit 60 s)")
    assert med <= 0.05
    assert secs < 60.0


# ----------------------------------------------------------------------------
# 6  learning convergence on the circulant arm


@crit(6)
def test_c06_circulant_learning(circulant_learning, record_property):
    recs, secs = circulant_learning
    errs = [rec.index_error()[-1] for rec in recs]
    exact_rank = rankdata(CIRCULANT_EXACT)
    held = []
    for rec in recs:
        late = rec.steps > rec.horizon // 2
        ranks = np.array([rankdata(row) for row in rec.lambdas[late, 0, :4]])
        held.append(bool(np.all(ranks == exact_rank)))
    med = float(np.median(errs))
    record_property("detail", f"median max error {med:.4f} (tol 0.15), ranking held {held}, {secs:.0f} s (limit 300 s)")
    assert med <= 0.15
    assert all(held)
    assert secs < 300.0


# ----------------------------------------------------------------------------
# 7  reward efficiency


@crit(7)
def test_c07_efficiency_eps01(efficiency_runs, record_property):
    sets = efficiency_runs["circulant_eps01"]
    ratio = compare_rewards(sets["learned-indices"], sets["exact-indices"]).final_ratio
    record_property("detail", f"eps 0.1: ratio {ratio:.4f} (band [0.85, 0.95])")
    assert 0.85 <= ratio <= 0.95


@crit(7)
def test_c07_efficiency_eps001(efficiency_runs, record_property):
    sets = efficiency_runs["circulant_eps001"]
    ratio = compare_rewards(sets["learned-indices"], sets["exact-indices"]).final_ratio
    record_property("detail", f"eps 0.01: ratio {ratio:.4f} (min 0.97)")
    assert ratio >= 0.97


# ----------------------------------------------------------------------------
# 8  restart learning


@crit(8)
def test_c08_restart_learning(restart_learning, record_property):
    recs, secs = restart_learning
    errs = np.array([np.abs(r.lambdas[-1, 0, :5] - r.exact_indices[0, :5]) for r in recs])
    med = np.median(errs, axis=0)
    record_property("detail", "median errors " + ", ".join(f"{e:.3f}" for e in med)
                    + f" (tol 0.1 for states 1-3, 0.25 for 4-5), {secs:.0f} s")
    assert np.all(med[:3] <= 0.1)
    assert np.all(med[3:] <= 0.25)


# ----------------------------------------------------------------------------
# 9  reference-step equivalence


@crit(9)
@pytest.mark.parametrize("gate", [100, 1])
@pytest.mark.parametrize("seed", [0, 7])
def test_c09_reference_trace(seed, gate, trace_runs, record_property):
    m = circulant_arm()
    cfg = cfgmod.load_experiment(
        "circulant_eps01", ["horizon=10", "cadence=1", "baselines=[]", f"schedule.gate={gate}"]
    )
    rec = run_single(cfg, seed)
    trace_runs[seed, gate] = rec
    totals, lam_hist, q = reference_trace(m.p0, m.p1, m.r0, m.r1, 100, 20, 0.1, 0.3, 1.0, gate, seed, 10)
    same = (
        rec.totals.tolist() == totals,
        rec.lambdas[:, 0, :].tolist() == lam_hist,
        rec.final_state.table(0).tolist() == q,
    )
    record_property("detail", f"seed {seed} gate {gate}: totals/lambda/Q identical {same}")
    assert all(same)


# ----------------------------------------------------------------------------
# 10  boundedness across every run above


@crit(10)
def test_c10_boundedness(sync_runs, circulant_learning, efficiency_runs, restart_learning, trace_runs, record_property):
    records = list(circulant_learning[0]) + list(restart_learning[0]) + list(trace_runs.values())
    for sets in efficiency_runs.values():
        records += sets["learned-indices"]
    finite = all(
        np.isfinite(r.lambdas).all() and np.isfinite(r.q_sup).all() and r.final_state.is_finite()
        for r in records
    )
    finite &= all(e.state_.is_finite() for e in sync_runs[0])
    sup_q = max(float(r.q_sup.max()) for r in records)
    sup_lam = max(float(np.abs(r.lambdas).max()) for r in records)
    record_property("detail", f"{len(records)} harness runs + {len(sync_runs[0])} sync runs finite={finite}, "
                              f"sup|Q| {sup_q:.3f}, sup|lambda| {sup_lam:.3f}")
    assert finite


# ----------------------------------------------------------------------------
# 11  brute-force gain equivalence


@crit(11)
def test_c11_brute_force(record_property):
    worst = 0.0
    for seed in range(20):
        rng = np.random.default_rng(1000 + seed)
        d = 1 + seed % 4
        p0, p1, r0, r1 = random_model(rng, d)
        lam = float(rng.uniform(-2, 2))
        beta = rvi_solve(ArmModel(p0=p0, p1=p1, r0=r0, r1=r1), lam).beta
        worst = max(worst, abs(beta - brute_force_gain(p0, p1, r0, r1, lam)))
    record_property("detail", f"20 models, worst |beta gap| {worst:.2e} (tol 1e-8)")
    assert worst <= 1e-8
