import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from edgesim.audit import audit_online, audit_plan
from edgesim.baselines import LFU, LFUMAD, RandomOnline, offline_greedy, offline_random, popularity_order
from edgesim.catalog import default_catalog
from edgesim.cocar_ol import step
from edgesim.online import OnlineState, apply_action
from edgesim.rounding import CLOUD
from edgesim.scenario import RequestBatch, Scenario
from edgesim.workload import WorkloadConfig, gen_workload
from oracles import line_network, make_ctx, small_instance, tiny_catalog


def batch(models, homes=None, start=2.0):
    U = len(models)
    return RequestBatch(models, homes if homes is not None else [0] * U, [0.144] * U, [0.3] * U, [start] * U)


def test_greedy_unconstrained_caches_largest():
    cat = default_catalog(8)
    scn = Scenario(cat, line_network(2, memory_mb=float(cat.size.max(axis=1).sum())))
    fp = offline_greedy(scn, batch([0, 1, 2]), np.zeros((2, 8), int))
    assert np.array_equal(fp.cache, np.tile(cat.levels - 1, (2, 1)))


def test_greedy_single_vit_sub3():
    cat = default_catalog(8)
    scn = Scenario(cat, line_network(1, memory_mb=342.05))
    prev = np.full((1, 8), 0)
    prev[0, 0] = 3
    fp = offline_greedy(scn, batch([0, 0, 0]), prev)
    assert fp.cache.tolist() == [[3, 0, 0, 0, 0, 0, 0, 0]]
    assert fp.route.tolist() == [0, 0, 0]
    assert fp.precision.tolist() == [0.9894] * 3


def test_greedy_empty_popularity_is_model_order():
    assert popularity_order(RequestBatch.empty(), 4).tolist() == [0, 1, 2, 3]
    assert popularity_order(batch([2, 2, 1]), 4).tolist() == [2, 1, 0, 3]


def test_greedy_routes_home_or_cloud():
    scn = Scenario(tiny_catalog(2, 2), line_network(2, memory_mb=200.0))
    # model 0 most popular takes BS memory, model 1 cannot fit alongside
    fp = offline_greedy(scn, batch([0, 0, 1], homes=[0, 1, 1]), np.ones((2, 2), int))
    assert fp.cache.tolist() == [[1, 0], [1, 0]]
    assert fp.route.tolist() == [0, 1, CLOUD]


def test_random_reproducible_and_fallback():
    scn, prev, reqs = small_instance(5)
    a = offline_random(scn, reqs, prev, np.random.default_rng(3))
    b = offline_random(scn, reqs, prev, np.random.default_rng(3))
    assert np.array_equal(a.cache, b.cache) and np.array_equal(a.route, b.route)
    tiny = scn.with_network(scn.network.with_memory(100.0))
    fp = offline_random(tiny, reqs, prev, np.random.default_rng(3))
    assert np.all(fp.cache == 0) and np.all(fp.route == CLOUD)


def test_random_unconstrained_draw_is_kept():
    scn = Scenario(tiny_catalog(2, 3), line_network(1, memory_mb=1e4))
    fp = offline_random(scn, batch([0]), np.zeros((1, 2), int), np.random.default_rng(0))
    assert fp.cache.tolist() == [np.random.default_rng(0).integers(0, scn.catalog.levels).tolist()]


@settings(max_examples=25, deadline=None)
@given(seed=st.integers(0, 2**32 - 1), mem=st.sampled_from([150.0, 300.0, 500.0]))
def test_offline_baselines_pass_auditor(seed, mem):
    scn, prev, reqs = small_instance(seed, memory_mb=mem)
    for fp in (offline_greedy(scn, reqs, prev), offline_random(scn, reqs, prev, np.random.default_rng(seed))):
        assert audit_plan(scn, prev, reqs, fp.cache, fp.route) == []


def lfu_setup(models=3, memory_mb=500.0, n_bs=1):
    scn = Scenario(tiny_catalog(models, 3), line_network(n_bs, memory_mb=memory_mb))
    return scn, OnlineState(scn), make_ctx(scn, users=10)


def test_lfu_zero_demand_noop():
    scn, state, ctx = lfu_setup()
    assert LFU().decide(state, 0, ctx) is None
    ctx.tracker.push(RequestBatch.empty())
    assert LFU().decide(state, 0, ctx) is None


def test_lfu_tie_lower_id_and_one_step():
    scn, state, ctx = lfu_setup()
    ctx.tracker.push(batch([1, 2]))
    a = LFU().decide(state, 0, ctx)
    assert (a.m, a.h_from, a.h_to) == (1, 0, 1)


def test_lfu_point_mass_reaches_largest():
    scn, state, ctx = lfu_setup()
    reqs = batch([2] * 10)
    for _ in range(40):
        step(state, reqs, LFU(), ctx, 1)
    assert state.cached[0, 2] == scn.catalog.levels[2] - 1


def test_lfu_shrinks_less_frequent_to_fit():
    scn, state, ctx = lfu_setup(models=2, memory_mb=350.0)
    state.cached[0] = [1, 1]  # 174.32 + 156.89, and 227.42 + 156.89 > 350
    ctx.tracker.push(batch([0, 0, 0, 1]))
    a = LFU().decide(state, 0, ctx)
    assert (a.m, a.h_to) == (0, 2) and a.companions == ((1, 0),)
    apply_action(state, a)
    assert audit_online(scn, state.cached, state.pending_top()) == []
    # equal counts: nothing may be evicted, so no room
    state = OnlineState(scn, [[1, 1]])
    ctx.tracker.hist.clear()
    ctx.tracker.push(batch([0, 1]))
    assert LFU().decide(state, 0, ctx) is None


def test_lfu_counts_one_hop_neighbours():
    scn, state, ctx = lfu_setup(n_bs=3)
    ctx.tracker.push(batch([1, 1, 0], homes=[1, 1, 2]))
    # BS 0 sees BS 1 (one hop) but not BS 2
    a = LFU().decide(state, 0, ctx)
    assert a.m == 1
    assert LFU().scores(state, 0, ctx).tolist() == [0, 2, 0]


def test_lfu_mad_rho_one_is_lfu_and_flip_is_faster():
    scn, state, ctx = lfu_setup()
    for _ in range(6):
        ctx.tracker.push(batch([0] * 5))
    for _ in range(3):
        ctx.tracker.push(batch([1] * 5))
    # counts 30 vs 15; decayed 9.44 vs 12.2
    assert np.array_equal(LFUMAD(1.0).scores(state, 0, ctx), LFU().scores(state, 0, ctx))
    assert LFU().decide(state, 0, ctx).m == 0
    assert LFUMAD(0.8).decide(state, 0, ctx).m == 1
    with pytest.raises(ValueError):
        LFUMAD(0.0)


def test_lfu_mad_uniform_history_same_ranking():
    scn, state, ctx = lfu_setup()
    for _ in range(4):
        ctx.tracker.push(batch([0, 0, 2]))
    assert np.argsort(-LFUMAD().scores(state, 0, ctx), kind="stable").tolist() == \
        np.argsort(-LFU().scores(state, 0, ctx), kind="stable").tolist()


def test_random_online_single_model_monotone():
    scn, state, ctx = lfu_setup(models=1)
    seen = []
    for _ in range(30):
        step(state, batch([0]), RandomOnline(), ctx, 1)
        seen.append(int(max(state.cached[0, 0], state.pending_top()[0, 0])))
    assert seen == sorted(seen) and seen[-1] == 3


def run_online(policy, seed, catalog_np=False, slots=20):
    wl = gen_workload(WorkloadConfig(seed=seed, n_users=40, n_slots=slots), "online")
    scn = wl.scenario
    if catalog_np:
        scn = scn.with_catalog(scn.catalog.no_partition())
    state = OnlineState(scn)
    ctx = make_ctx(scn, users=40, seed=seed)
    trace = []
    for reqs in wl.requests:
        o = step(state, reqs, policy, ctx, 3)
        assert audit_online(scn, state.cached, state.pending_top()) == []
        trace.append([a.to_dict() for a in o.decisions])
    return state, trace


@pytest.mark.parametrize("policy", [LFU(), LFUMAD(), RandomOnline()], ids=lambda p: p.name)
def test_online_baselines_memory_and_determinism(policy):
    a = run_online(policy, 6)
    b = run_online(policy, 6)
    assert a[1] == b[1]


@pytest.mark.parametrize("policy", [LFU(), RandomOnline()], ids=lambda p: p.name)
def test_no_partition_only_empty_or_full(policy):
    state, _ = run_online(policy, 2, catalog_np=True)
    full = default_catalog(8)
    np_cat = state.scn.catalog
    assert np.all(np.isin(state.cached, [0, 1]))
    assert np.array_equal(np_cat.size[:, 1], full.size[np.arange(8), full.levels - 1])
