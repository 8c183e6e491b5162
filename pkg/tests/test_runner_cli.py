import json

import pytest

from edgesim.cli import main
from edgesim.errors import ConfigError
from edgesim.runner import ExperimentConfig, parse_policy, run_cell, run_grid, run_online_cell
from edgesim.workload import WorkloadConfig

SMALL = {"n_users": 30, "n_windows": 2, "n_slots": 12}


def test_defaults_match_reference_settings():
    w = WorkloadConfig()
    assert (w.n_bs, w.n_users, w.window_s, w.n_windows, w.wireless_mbps, w.wired_mbps, w.cloud_mbps) == \
        (5, 600, 3, 10, 20, 100, 800)
    assert (w.hop_delay_s, w.memory_mb, w.compute_gflops, w.n_models, w.zipf_s, w.data_mb, w.deadline_s) == \
        (0.01, 500, 70, 8, 0.8, 0.144, 0.3)
    assert (w.slot_s, w.n_slots, w.change_every, w.warmup) == (0.5, 100, 20, 5)
    e = ExperimentConfig(mode="online")
    assert (e.rounds, e.history, e.horizon, e.alpha, e.gamma) == (3, 10, 5, 0.9, 0.9)


def test_config_validation():
    with pytest.raises(ConfigError):
        ExperimentConfig(mode="batch")
    with pytest.raises(ConfigError):
        ExperimentConfig(mode="offline", policies=["lfu"])
    with pytest.raises(ConfigError):
        ExperimentConfig(sweep="memory", values=[])
    with pytest.raises(ConfigError):
        ExperimentConfig(sweep="colour", values=[1])
    with pytest.raises(ConfigError):
        ExperimentConfig.from_dict({"mode": "offline", "typo": 1})
    with pytest.raises(ConfigError):
        ExperimentConfig(workload={"n_bs": 0})
    assert parse_policy("online", "lfu/np") == ("lfu", False)
    with pytest.raises(ConfigError):
        parse_policy("offline", "cocar/np")


def test_online_emits_one_record_per_slot():
    exp = ExperimentConfig(mode="online", workload={"n_users": 20, "n_slots": 100}, policies=["lfu"])
    recs, m = run_cell(exp, "lfu", None, 0)
    assert len(recs) == 100 and [r.period for r in recs] == list(range(100))
    assert m.n_periods == 100


def test_online_zero_slots_is_an_error():
    exp = ExperimentConfig(mode="online", workload={"n_slots": 0, "n_users": 5}, policies=["lfu"])
    with pytest.raises(ConfigError):
        run_online_cell(exp, "lfu", None, 0, "x")


def test_offline_single_window_equals_plan_score():
    exp = ExperimentConfig(mode="offline", workload={"n_users": 20, "n_windows": 1}, policies=["cocar"])
    recs, m = run_cell(exp, "cocar", None, 1)
    assert len(recs) == 1
    assert m.avg_precision == recs[0].avg_precision
    assert recs[0].objective <= recs[0].lp_bound + 1e-9


@pytest.mark.parametrize("mode,policy", [("offline", "cocar"), ("offline", "random"), ("online", "cocar-ol"),
                                         ("online", "random/np")])
def test_csv_bytes_deterministic(tmp_path, mode, policy):
    exp = ExperimentConfig(mode=mode, workload=SMALL, policies=[policy], seeds=[3])
    run_grid(exp, tmp_path / "a")
    run_grid(exp, tmp_path / "b")
    rel = f"default/{policy.replace('/', '-')}/3.csv"
    assert (tmp_path / "a" / rel).read_bytes() == (tmp_path / "b" / rel).read_bytes()


def test_sweep_cells_independent(tmp_path):
    full = ExperimentConfig(mode="offline", workload=SMALL, policies=["greedy", "random"], sweep="memory",
                            values=[200, 500], seeds=[0, 1])
    part = ExperimentConfig(mode="offline", workload=SMALL, policies=["random"], sweep="memory",
                            values=[500], seeds=[1])
    run_grid(full, tmp_path / "full")
    run_grid(part, tmp_path / "part")
    rel = "memory-500/random/1.csv"
    assert (tmp_path / "full" / rel).read_bytes() == (tmp_path / "part" / rel).read_bytes()
    assert len(list((tmp_path / "full").rglob("*.csv"))) == 8


def write_cfg(tmp_path, d):
    p = tmp_path / "cfg.json"
    p.write_text(json.dumps(d))
    return str(p)


def test_cli_run_and_validate(tmp_path, capsys):
    cfg = write_cfg(tmp_path, {"mode": "offline", "workload": SMALL})
    assert main(["validate-config", "--config", cfg, "--policy", "greedy"]) == 0
    assert "1 cells" in capsys.readouterr().out
    out = tmp_path / "out"
    assert main(["run", "--config", cfg, "--policy", "greedy", "--sweep", "memory=300,500", "--seeds", "0",
                 "--out", str(out)]) == 0
    assert (out / "memory-300" / "greedy" / "0.csv").exists()
    summary = json.loads((out / "summary.json").read_text())
    assert len(summary) == 2


def test_cli_env_output_dir(tmp_path, monkeypatch):
    monkeypatch.setenv("EDGESIM_OUT", str(tmp_path / "env"))
    cfg = write_cfg(tmp_path, {"mode": "online", "workload": SMALL, "policies": ["lfu"]})
    assert main(["run", "--config", cfg]) == 0
    assert (tmp_path / "env" / "default" / "lfu" / "0.csv").exists()


def test_cli_errors(tmp_path, capsys):
    assert main(["validate-config", "--config", write_cfg(tmp_path, {"mode": "sideways"})]) == 2
    assert main(["run", "--config", str(tmp_path / "missing.json")]) == 2
    bad = write_cfg(tmp_path, {"mode": "online", "workload": {"n_slots": 0, "n_users": 5}, "policies": ["lfu"]})
    assert main(["run", "--config", bad, "--out", str(tmp_path / "o")]) == 1
    assert "FAIL" in capsys.readouterr().err


def test_cli_dump_and_replay(tmp_path):
    wcfg = write_cfg(tmp_path, {"seed": 2, "n_users": 20, "n_windows": 2})
    dump = tmp_path / "w.json"
    assert main(["dump-workload", "--config", wcfg, "--mode", "offline", str(dump)]) == 0
    out = tmp_path / "rp"
    assert main(["replay", "--scenario", str(dump), "--policy", "greedy", "--out", str(out)]) == 0
    replayed = (out / "replay" / "greedy" / "2.csv").read_text().splitlines()
    exp = ExperimentConfig(mode="offline", workload={"n_users": 20, "n_windows": 2}, policies=["greedy"])
    recs, _ = run_cell(exp, "greedy", None, 2)
    assert [line.split(",")[5:] for line in replayed[1:]] == [r.row()[5:] for r in recs]
