import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.sparse.csgraph import shortest_path

from edgesim.errors import ConfigError, TopologyGenerationFailed
from edgesim.workload import (PopularitySchedule, Workload, WorkloadConfig, gen_requests, gen_schedule, gen_topology,
                              gen_workload, stream, warmup_interpolate, zipf_popularity)
from edgesim import workload as wl_mod


def test_zipf_uniform_limit():
    assert np.allclose(zipf_popularity(8, 0.0), 0.125)


def test_zipf_two_models():
    p = zipf_popularity(2, 1.0, np.random.default_rng(3))
    assert sorted(p) == pytest.approx([1 / 3, 2 / 3])


def test_zipf_default_max():
    expected = 1.0 / sum(j ** -0.8 for j in range(1, 9))
    p = zipf_popularity(8, 0.8, np.random.default_rng(0))
    assert p.max() == pytest.approx(expected, abs=1e-12)
    # direct summation: 1 / 3.2342... = 0.3092
    assert round(p.max(), 4) == 0.3092


def test_topology_singleton_and_forced_edge():
    assert gen_topology(WorkloadConfig(n_bs=1)).hops.tolist() == [[0]]
    assert gen_topology(WorkloadConfig(n_bs=2, er_p=1.0)).hops[0, 1] == 1


def test_topology_default_connected_bfs():
    net = gen_topology(WorkloadConfig(seed=7))
    assert np.all(net.hops <= 4)
    ref = shortest_path(net.adjacency.astype(float), unweighted=True, directed=False)
    assert np.array_equal(net.hops, ref.astype(int))
    h = net.hops
    # triangle inequality
    for k in range(net.n_bs):
        assert np.all(h <= h[:, [k]] + h[[k], :])


def test_topology_failure(monkeypatch):
    monkeypatch.setattr(wl_mod, "MAX_TOPOLOGY_ATTEMPTS", 3)
    with pytest.raises(TopologyGenerationFailed):
        gen_topology(WorkloadConfig(n_bs=30, er_p=0.01))


def test_requests_empty_and_point_mass():
    cfg = WorkloadConfig(n_users=0)
    sched = gen_schedule(cfg, 1, per_bs=False)
    assert len(gen_requests(cfg, sched, 0)) == 0
    cfg = WorkloadConfig(n_users=50, n_models=4)
    point = PopularitySchedule(np.array([[1.0, 0, 0, 0]]))
    assert np.all(gen_requests(cfg, point, 0).model == 0)


def test_request_frequencies_match_zipf():
    cfg = WorkloadConfig(seed=11, n_users=600, n_windows=1)
    sched = gen_schedule(cfg, 1, per_bs=False)
    reqs = gen_requests(cfg, sched, 0)
    p = sched[0]
    counts = np.bincount(reqs.model, minlength=8)
    sigma = np.sqrt(600 * p * (1 - p))
    assert np.all(np.abs(counts - 600 * p) <= 3 * sigma)
    assert np.all((reqs.start_s >= 0) & (reqs.start_s < cfg.window_s))


def test_warmup_interpolate():
    assert warmup_interpolate([1, 0], [0, 1], 0, 5).tolist() == [1, 0]
    assert warmup_interpolate([1, 0], [0, 1], 5, 5).tolist() == [0, 1]
    assert warmup_interpolate([1, 0], [0, 1], 2, 5) == pytest.approx([0.6, 0.4])
    with pytest.raises(ValueError):
        warmup_interpolate([1, 0], [0, 1], 6, 5)


def test_schedule_changes_with_warmup():
    cfg = WorkloadConfig(seed=2, change_every=20, warmup=5)
    s = gen_schedule(cfg, 60, per_bs=True)
    assert s.probs.shape == (60, 5, 8)
    assert np.array_equal(s[0], s[14])
    assert not np.array_equal(s[14], s[15])  # warm-up begins
    assert not np.array_equal(s[0], s[20])


@settings(max_examples=25, deadline=None)
@given(seed=st.integers(0, 2**32 - 1), s=st.floats(0, 2), every=st.integers(0, 7), warm=st.integers(0, 4))
def test_schedule_on_simplex(seed, s, every, warm):
    cfg = WorkloadConfig(seed=seed, zipf_s=s, change_every=every, warmup=warm, n_bs=3)
    for per_bs in (False, True):
        p = gen_schedule(cfg, 12, per_bs).probs
        assert np.all(p >= 0)
        assert np.allclose(p.sum(axis=-1), 1.0, atol=1e-9)


def test_config_validation():
    with pytest.raises(ConfigError):
        WorkloadConfig(n_bs=0)
    with pytest.raises(ConfigError):
        WorkloadConfig(zipf_s=-1)
    with pytest.raises(ConfigError):
        WorkloadConfig.from_dict({"bogus": 1})


def test_streams_are_independent():
    a = stream(5, 1).random(4)
    b = stream(5, 2).random(4)
    assert not np.array_equal(a, b)
    assert np.array_equal(a, stream(5, 1).random(4))


def test_workload_dump_replay_bit_exact(tmp_path):
    w = gen_workload(WorkloadConfig(seed=4, n_users=20, n_slots=6), "online")
    w.dump(tmp_path / "w.json")
    back = Workload.load(tmp_path / "w.json")
    assert back.to_dict() == w.to_dict()
    for a, b in zip(w.requests, back.requests):
        assert np.array_equal(a.start_s, b.start_s) and np.array_equal(a.model, b.model)


def test_same_seed_identical_workload():
    a = gen_workload(WorkloadConfig(seed=9, n_users=30)).to_dict()
    b = gen_workload(WorkloadConfig(seed=9, n_users=30)).to_dict()
    assert a == b
