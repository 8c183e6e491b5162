import json

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from edgesim.audit import audit_plan
from edgesim.errors import InvalidFractional
from edgesim.formulation import Fractional, solve_window
from edgesim.rounding import (CLOUD, RoundedPlan, _sample, cocar_window, dump_report,
                              expectation_check, repair, round_plan, violation_report)
from edgesim.scenario import RequestBatch, Scenario
from oracles import line_network, small_instance, tiny_catalog


def test_one_hot_input_is_reproduced():
    scn, prev, reqs = small_instance(0)
    N, M, W = scn.n_bs, scn.n_models, scn.catalog.width
    rng = np.random.default_rng(1)
    h = rng.integers(0, 4, (N, M))
    x = (np.arange(W) == h[..., None]).astype(float)
    A = x[:, reqs.model, :] * (rng.random((N, len(reqs), 1)) < 0.3)
    A[:, :, 0] = 0
    frac = Fractional(x, A, 0.0)
    for seed in range(5):
        rp = round_plan(frac, reqs.model, scn.catalog.levels, scn.catalog.precision, np.random.default_rng(seed))
        assert np.array_equal(rp.x, x) and np.array_equal(rp.A, A)
        assert np.array_equal(rp.cache, h)


def test_multinoulli_frequencies():
    xn = np.array([[[0.2, 0.3, 0.5]]])
    idx, _ = _sample(xn, np.zeros((1, 0, 3)), np.zeros(0, int), np.random.default_rng(7), 100_000)
    freq = np.bincount(idx.ravel(), minlength=3) / 1e5
    sigma = np.sqrt(np.array([0.2, 0.3, 0.5]) * np.array([0.8, 0.7, 0.5]) / 1e5)
    assert np.all(np.abs(freq - [0.2, 0.3, 0.5]) <= 3 * sigma)


def test_route_equal_to_cache_is_always_kept():
    # A = x: whenever the sampled submodel has mass, the route survives
    x = np.array([[[0.0, 0.4, 0.6]]])
    A = x.copy()
    A[..., 0] = 0
    frac = Fractional(x, A, 0.0)
    prec = np.array([[0.0, 0.5, 0.9]])
    for seed in range(50):
        rp = round_plan(frac, np.array([0]), np.array([3]), prec, np.random.default_rng(seed))
        h = rp.cache[0, 0]
        assert rp.A[0, 0, h] == 1 and rp.A.sum() == 1


def test_invalid_fractional():
    x = np.array([[[0.5, 0.5]]])
    with pytest.raises(InvalidFractional):
        round_plan(Fractional(x, np.array([[[0.0, 0.6]]]), 0.0), np.array([0]), np.array([2]),
                   np.array([[0.0, 1.0]]), np.random.default_rng(0))
    with pytest.raises(InvalidFractional):
        round_plan(Fractional(np.array([[[0.5, 0.4]]]), np.zeros((1, 1, 2)), 0.0), np.array([0]), np.array([2]),
                   np.array([[0.0, 1.0]]), np.random.default_rng(0))


def test_zero_over_zero_never_routes():
    x = np.array([[[1.0, 0.0]]])
    frac = Fractional(x, np.zeros((1, 1, 2)), 0.0)
    rp = round_plan(frac, np.array([0]), np.array([2]), np.array([[0.0, 1.0]]), np.random.default_rng(0))
    assert rp.A.sum() == 0 and not rp.y.any()


def single_bs(memory_mb, levels=3, users=1, deadline=0.3):
    scn = Scenario(tiny_catalog(1, levels), line_network(1, memory_mb=memory_mb))
    reqs = RequestBatch([0] * users, [0] * users, [0.144] * users, [deadline] * users, [2.0] * users)
    return scn, np.zeros((1, 1), int), reqs


def plan_at(h, W, users):
    x = np.zeros((1, 1, W), dtype=np.int8)
    x[0, 0, h] = 1
    A = np.zeros((1, users, W), dtype=np.int8)
    A[0, :, h] = 1
    return RoundedPlan(x, A, 0.0)


def test_repair_downgrades_vit_to_fit():
    scn, prev, reqs = single_bs(300.0, deadline=1.0)
    fp = repair(plan_at(3, 4, 1), scn, prev, reqs)
    assert fp.cache[0, 0] == 2  # 227.42 MB fits, 342.05 MB does not
    assert scn.catalog.size[0, 2] == 227.42
    assert fp.route[0] == 0 and fp.precision[0] == 0.9413
    assert audit_plan(scn, prev, reqs, fp.cache, fp.route) == []


def test_repair_evicts_when_nothing_fits():
    scn, prev, reqs = single_bs(100.0)
    fp = repair(plan_at(2, 4, 1), scn, prev, reqs)
    assert fp.cache[0, 0] == 0 and fp.route[0] == CLOUD and fp.objective == 0.0


def test_repair_deadline_violation_goes_to_cloud():
    scn, prev, reqs = single_bs(500.0, deadline=0.1)
    fp = repair(plan_at(3, 4, 1), scn, prev, reqs)
    assert fp.cache[0, 0] == 3
    assert fp.route[0] == CLOUD and fp.precision[0] == 0.0


def test_repair_keeps_feasible_plan():
    scn, prev, reqs = single_bs(500.0, users=2)
    rp = plan_at(2, 4, 2)
    fp = repair(rp, scn, prev, reqs)
    assert fp.cache[0, 0] == 2 and fp.route.tolist() == [0, 0]
    assert fp.objective == pytest.approx(2 * 0.9413)


def test_eviction_prefers_least_benefit_then_largest():
    scn = Scenario(tiny_catalog(2, 2), line_network(1, memory_mb=300.0))
    reqs = RequestBatch([0, 1, 1], [0] * 3, [0.144] * 3, [0.3] * 3, [2.0] * 3)
    x = np.zeros((1, 2, 3), dtype=np.int8)
    x[0, :, 1] = 1  # 174.32 + 156.89 > 300
    A = np.zeros((1, 3, 3), dtype=np.int8)
    A[0, :, 1] = 1
    fp = repair(RoundedPlan(x, A, 0.0), scn, np.zeros((1, 2), int), reqs)
    # model 0 serves one user, model 1 serves two: model 0 goes
    assert fp.cache.tolist() == [[0, 1]]
    assert fp.route.tolist() == [CLOUD, 0, 0]
    # no routes at all: equal benefit, the larger model 0 goes
    fp = repair(RoundedPlan(x, np.zeros_like(A), 0.0), scn, np.zeros((1, 2), int), reqs)
    assert fp.cache.tolist() == [[0, 1]]


def test_multiple_routes_keep_most_precise():
    scn = Scenario(tiny_catalog(1, 3), line_network(2))
    reqs = RequestBatch([0], [0], [0.144], [0.3], [2.0])
    x = np.zeros((2, 1, 4), dtype=np.int8)
    x[0, 0, 1] = 1
    x[1, 0, 2] = 1
    A = np.zeros((2, 1, 4), dtype=np.int8)
    A[0, 0, 1] = A[1, 0, 2] = 1
    fp = repair(RoundedPlan(x, A, 0.0), scn, np.zeros((2, 1), int), reqs)
    assert fp.route.tolist() == [1] and fp.precision[0] == 0.9413


@settings(max_examples=30, deadline=None)
@given(seed=st.integers(0, 2**32 - 1), mem=st.sampled_from([200.0, 350.0, 500.0]))
def test_rounded_plans_one_hot_and_repaired_plans_audit_clean(seed, mem):
    scn, prev, reqs = small_instance(seed, memory_mb=mem)
    res = cocar_window(scn, prev, reqs, np.random.default_rng(seed))
    rp, fp = res.rounded, res.plan
    assert np.all(rp.x.sum(axis=2) == 1)
    assert np.all(rp.A <= rp.x[:, reqs.model, :])
    assert audit_plan(scn, prev, reqs, fp.cache, fp.route) == []
    assert fp.objective <= rp.objective + 1e-9
    again = repair(fp, scn, prev, reqs)
    assert np.array_equal(again.cache, fp.cache) and np.array_equal(again.route, fp.route)


def test_best_of_k_not_worse():
    scn, prev, reqs = small_instance(3)
    one = cocar_window(scn, prev, reqs, np.random.default_rng(5), k=1)
    many = cocar_window(scn, prev, reqs, np.random.default_rng(5), k=8)
    assert many.plan.objective >= one.plan.objective
    with pytest.raises(ValueError):
        cocar_window(scn, prev, reqs, np.random.default_rng(5), k=0)


def test_violation_report_and_dump(tmp_path):
    scn, prev, reqs = small_instance(2)
    frac = solve_window(scn, prev, reqs)
    rp = round_plan(frac, reqs.model, scn.catalog.levels, scn.catalog.precision, np.random.default_rng(0))
    rep = violation_report(rp, scn, prev, reqs, frac.objective)
    assert set(rep) >= {"memory", "route", "deadline", "load", "objective_ratio", "delta"}
    dump_report(rep, tmp_path / "r.json")
    assert json.loads((tmp_path / "r.json").read_text()).keys() == rep.keys()


def test_expectation_check_integral_is_exact():
    scn, prev, reqs = small_instance(1)
    fp = cocar_window(scn, prev, reqs, np.random.default_rng(0)).plan
    W = scn.catalog.width
    x = (np.arange(W) == fp.cache[..., None]).astype(float)
    A = np.zeros((scn.n_bs, len(reqs), W))
    for u, n in enumerate(fp.route):
        if n >= 0:
            A[n, u, fp.cache[n, reqs.model[u]]] = 1.0
    frac = Fractional(x, A, fp.objective)
    rep = expectation_check(frac, scn, prev, reqs, trials=1000)
    assert rep["one_hot"] and rep["flagged"] == []
    assert rep["objective_mean"] == pytest.approx(fp.objective, abs=1e-9)
    for row in rep["rows"].values():
        assert np.all(row["se"] <= 1e-12)
    with pytest.raises(ValueError):
        expectation_check(frac, scn, prev, reqs, trials=999)
