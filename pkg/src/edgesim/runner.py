"""Experiment grids: policy x sweep value x seed, offline (windows) or online (slots)."""

from __future__ import annotations

import json
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, fields, replace
from pathlib import Path

import numpy as np

from .baselines import LFU, LFUMAD, RandomOnline, offline_greedy, offline_random
from .cocar_ol import CocarOL, DecisionContext, step, write_decisions
from .errors import ConfigError, LpError
from .metrics import PeriodRecord, aggregate, collate, write_csv, write_summary
from .online import FrequencyTracker, OnlineState, QoEParams, min_latency, qoe, qoe_table, warm_cache
from .rounding import CLOUD, cocar_window
from .scenario import RequestBatch, Scenario
from .workload import POLICY, ROUNDING, Workload, WorkloadConfig, gen_workload, stream

OFFLINE_POLICIES = ("cocar", "greedy", "random")
ONLINE_POLICIES = ("cocar-ol", "lfu", "lfu-mad", "random")
SWEEP_AXES = {
    "memory": "memory_mb",
    "zipf": "zipf_s",
    "change": "change_every",
    "window": "window_s",
    "slots": "n_slots",
}
OUT_ENV = "EDGESIM_OUT"


@dataclass
class ExperimentConfig:
    mode: str = "offline"
    workload: dict = field(default_factory=dict)  # WorkloadConfig overrides
    policies: list = field(default_factory=list)
    sweep: str | None = None
    values: list = field(default_factory=list)
    seeds: list = field(default_factory=lambda: [0])
    # online
    rounds: int = 3
    history: int = 10
    horizon: int = 5
    alpha: float = 0.9
    gamma: float = 0.9
    theta: float | None = None
    rho: float = 0.8
    decision_log: bool = False
    # offline
    rounding_k: int = 1
    var_cap: int = 20_000

    def __post_init__(self):
        self.validate()

    def validate(self) -> None:
        if self.mode not in ("offline", "online"):
            raise ConfigError(f"mode must be offline or online, not {self.mode!r}")
        if not self.policies:
            self.policies = list(OFFLINE_POLICIES if self.mode == "offline" else ("cocar-ol", "lfu"))
        for p in self.policies:
            parse_policy(self.mode, p)
        if self.sweep is not None:
            if self.sweep not in SWEEP_AXES:
                raise ConfigError(f"unknown sweep axis {self.sweep!r}; choose from {sorted(SWEEP_AXES)}")
            if not self.values:
                raise ConfigError("a sweep needs at least one value")
        if not self.seeds:
            raise ConfigError("need at least one seed")
        for name in ("rounds", "history", "horizon", "rounding_k", "var_cap"):
            if getattr(self, name) < (0 if name == "rounds" else 1):
                raise ConfigError(f"{name} is out of range")
        if self.alpha < 0 or not 0 < self.gamma <= 1 or not 0 < self.rho <= 1:
            raise ConfigError("alpha >= 0, gamma and rho in (0, 1] required")
        self.workload_config()  # validates overrides

    def workload_config(self, value=None) -> WorkloadConfig:
        d = dict(self.workload)
        if self.sweep is not None and value is not None:
            d[SWEEP_AXES[self.sweep]] = value
        return WorkloadConfig.from_dict(d)

    def cells(self) -> list[tuple]:
        vals = self.values if self.sweep is not None else [None]
        return [(p, v, s) for p in self.policies for v in vals for s in self.seeds]

    @classmethod
    def from_dict(cls, d: dict) -> "ExperimentConfig":
        known = {f.name for f in fields(cls)}
        unknown = set(d) - known
        if unknown:
            raise ConfigError(f"unknown config keys: {sorted(unknown)}")
        return cls(**d)

    @classmethod
    def load(cls, path: str | Path) -> "ExperimentConfig":
        try:
            return cls.from_dict(json.loads(Path(path).read_text()))
        except json.JSONDecodeError as e:
            raise ConfigError(f"{path}: {e}") from e

    def to_dict(self) -> dict:
        return asdict(self)


def parse_policy(mode: str, name: str) -> tuple[str, bool]:
    """Split ``name[/np]`` into (policy, partitioned)."""
    base, _, flag = name.partition("/")
    if flag not in ("", "np"):
        raise ConfigError(f"unknown policy suffix in {name!r}")
    allowed = OFFLINE_POLICIES if mode == "offline" else ONLINE_POLICIES
    if base not in allowed:
        raise ConfigError(f"unknown {mode} policy {base!r}; choose from {allowed}")
    if mode == "offline" and flag:
        raise ConfigError("offline policies already choose submodels; no /np variant")
    return base, flag != "np"


def cell_label(policy: str) -> str:
    return policy.replace("/", "-")


def utilization(scn: Scenario, cache: np.ndarray) -> float:
    cat = scn.catalog
    used = cat.size[np.arange(len(cat))[None, :], cache].sum(axis=1)
    R = scn.network.memory_mb
    return float(np.mean(np.where(R > 0, used / np.where(R > 0, R, 1.0), 0.0)))


def run_offline_cell(exp: ExperimentConfig, policy: str, value, seed: int, run_id: str,
                     workload: Workload | None = None) -> list[PeriodRecord]:
    wcfg = workload.config if workload is not None else replace(exp.workload_config(value), seed=seed)
    wl = workload or gen_workload(wcfg, "offline")
    scn = wl.scenario
    N, M = scn.n_bs, len(scn.catalog)
    theta = exp.theta if exp.theta is not None else min_latency(scn, wcfg.data_mb)
    params = QoEParams(theta, exp.alpha, exp.gamma)
    prev = np.zeros((N, M), dtype=np.int64)
    r_rng = stream(seed, ROUNDING)
    p_rng = stream(seed, POLICY)
    out = []
    for tau, reqs in enumerate(wl.requests):
        bound = None
        if policy == "cocar":
            try:
                res = cocar_window(scn, prev, reqs, r_rng, k=exp.rounding_k, var_cap=exp.var_cap)
            except LpError as e:
                raise LpError(f"seed {seed}, window {tau}: {e}") from e
            plan, bound = res.plan, res.fractional.objective
        elif policy == "greedy":
            plan = offline_greedy(scn, reqs, prev)
        else:
            plan = offline_random(scn, reqs, prev, p_rng)
        U = len(reqs)
        hit = plan.route != CLOUD
        served = np.flatnonzero(hit)
        lat = np.zeros(U)
        if len(served):
            full = scn.request_latency(reqs)
            h = plan.cache[plan.route[served], reqs.model[served]]
            lat[served] = full[plan.route[served], served, h]
        q = np.where(hit, qoe(plan.precision, lat, params), 0.0) if U else np.zeros(0)
        out.append(PeriodRecord(
            run_id, seed, policy, True, tau, U, int(hit.sum()),
            float(plan.precision.mean()) if U else 0.0, float(q.mean()) if U else 0.0,
            float(hit.mean()) if U else 0.0, utilization(scn, plan.cache),
            objective=plan.objective, lp_bound=bound,
        ))
        prev = plan.cache
    return out


def make_online_policy(name: str, exp: ExperimentConfig):
    if name == "cocar-ol":
        return CocarOL()
    if name == "lfu":
        return LFU()
    if name == "lfu-mad":
        return LFUMAD(exp.rho)
    return RandomOnline()


def run_online_cell(exp: ExperimentConfig, policy: str, value, seed: int, run_id: str,
                    workload: Workload | None = None, log_path: Path | None = None) -> list[PeriodRecord]:
    base, partitioned = parse_policy("online", policy)
    wcfg = workload.config if workload is not None else replace(exp.workload_config(value), seed=seed)
    wl = workload or gen_workload(wcfg, "online")
    if wl.n_periods == 0:
        raise ConfigError("online run needs at least one slot")
    scn = wl.scenario if partitioned else wl.scenario.with_catalog(wl.scenario.catalog.no_partition())
    theta = exp.theta if exp.theta is not None else min_latency(wl.scenario, wcfg.data_mb)
    params = QoEParams(theta, exp.alpha, exp.gamma)
    state = OnlineState(scn, warm_cache(scn, wl.schedule[0]))
    ctx = DecisionContext(
        Q=qoe_table(scn, params, wcfg.data_mb, wcfg.deadline_s), params=params, users=wcfg.n_users,
        horizon=exp.horizon, dt=scn.slot_s,
        tracker=FrequencyTracker(scn.n_bs, len(scn.catalog), exp.history, wcfg.n_users),
        rng=stream(seed, POLICY),
    )
    pol = make_online_policy(base, exp)
    out = []
    log = open(log_path, "w") if log_path is not None else None
    try:
        for t, reqs in enumerate(wl.requests):
            o = step(state, reqs, pol, ctx, exp.rounds)
            r = o.routing
            U = len(reqs)
            hits = int((r.target != CLOUD).sum())
            out.append(PeriodRecord(
                run_id, seed, policy, partitioned, t, U, hits,
                float(r.precision.mean()) if U else 0.0, float(r.qoe.mean()) if U else 0.0,
                hits / U if U else 0.0, o.memory_utilization,
                objective=float(r.qoe.sum()), bytes_in_flight=o.bytes_in_flight,
            ))
            if log is not None:
                write_decisions(log, t, o.decisions)
    finally:
        if log is not None:
            log.close()
    return out


def cell_paths(out: Path, exp: ExperimentConfig, policy: str, value, seed: int) -> tuple[Path, str]:
    tag = f"{exp.sweep}-{value}" if exp.sweep is not None else "default"
    return out / tag / cell_label(policy) / f"{seed}", tag


def run_cell(exp: ExperimentConfig, policy: str, value, seed: int, out: Path | None = None):
    """Run one grid cell; writes ``<out>/<sweep>-<value>/<policy>/<seed>.csv`` and ``.json`` when ``out`` is given."""
    stem, tag = cell_paths(out or Path("."), exp, policy, value, seed)
    run_id = f"{exp.mode}:{tag}"
    if exp.mode == "offline":
        recs = run_offline_cell(exp, policy, value, seed, run_id)
    else:
        log = stem.with_suffix(".decisions.jsonl") if out is not None and exp.decision_log else None
        if log is not None:
            log.parent.mkdir(parents=True, exist_ok=True)
        recs = run_online_cell(exp, policy, value, seed, run_id, log_path=log)
    metrics = aggregate(recs)
    if out is not None:
        write_csv(stem.with_suffix(".csv"), recs)
        write_summary(stem.with_suffix(".json"), exp.to_dict(),
                      metrics, {"policy": policy, "seed": seed, "sweep": exp.sweep, "value": value})
    return recs, metrics


def _run_cell_safe(args):
    exp, policy, value, seed, out = args
    try:
        _, m = run_cell(exp, policy, value, seed, out)
        return policy, value, seed, m.to_dict(), None
    except Exception as e:  # reported per cell; the grid keeps going
        return policy, value, seed, None, f"{type(e).__name__}: {e}"


def run_grid(exp: ExperimentConfig, out: Path, jobs: int = 1) -> list[tuple]:
    """Run every cell; returns (policy, value, seed, metrics | None, error | None) per cell."""
    out = Path(out)
    out.mkdir(parents=True, exist_ok=True)
    tasks = [(exp, p, v, s, out) for p, v, s in exp.cells()]
    if jobs > 1:
        with ProcessPoolExecutor(max_workers=jobs) as ex:
            results = list(ex.map(_run_cell_safe, tasks))
    else:
        results = [_run_cell_safe(t) for t in tasks]
    (out / "summary.json").write_text(json.dumps(collate(out), indent=2, sort_keys=True) + "\n")
    return results


def output_dir(cli_value: str | None) -> Path:
    return Path(cli_value or os.environ.get(OUT_ENV) or "out")
