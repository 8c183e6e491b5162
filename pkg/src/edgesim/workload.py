"""Reproducible scenario and request-stream generation.

All randomness comes from PCG64 generators keyed by ``SeedSequence(seed,
spawn_key=(stream, ...))`` so topology, requests, rounding and policy draws
never perturb one another.
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path

import numpy as np
from scipy.sparse.csgraph import connected_components, shortest_path

from .catalog import ModelCatalog, default_catalog
from .errors import ConfigError, TopologyGenerationFailed
from .scenario import Network, RequestBatch, Scenario

# stream ids
TOPOLOGY, POPULARITY, REQUESTS, ROUNDING, POLICY = range(5)

MAX_TOPOLOGY_ATTEMPTS = 10_000


def stream(seed: int, *key: int) -> np.random.Generator:
    """Independent PCG64 generator for ``(seed, key...)``."""
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence(seed, spawn_key=tuple(key))))


@dataclass
class WorkloadConfig:
    seed: int = 0
    n_bs: int = 5
    n_users: int = 600
    n_models: int = 8
    zipf_s: float = 0.8
    window_s: float = 3.0
    n_windows: int = 10
    slot_s: float = 0.5
    n_slots: int = 100
    change_every: int = 20  # periods between popularity reshuffles (0 = never)
    warmup: int = 5
    er_p: float = 0.5
    coverage_m: float = 150.0
    data_mb: float = 0.144
    deadline_s: float = 0.3
    memory_mb: float = 500.0
    compute_gflops: float = 70.0
    cloud_mbps: float = 800.0
    wireless_mbps: float = 20.0
    wired_mbps: float = 100.0
    hop_delay_s: float = 0.01

    def __post_init__(self):
        self.validate()

    def validate(self) -> None:
        for name in ("n_bs", "n_models", "n_windows"):
            if getattr(self, name) < 1:
                raise ConfigError(f"{name} must be >= 1")
        for name in ("n_users", "n_slots", "change_every", "warmup"):
            if getattr(self, name) < 0:
                raise ConfigError(f"{name} must be >= 0")
        if self.zipf_s < 0:
            raise ConfigError("zipf_s must be >= 0")
        if not 0 < self.er_p <= 1:
            raise ConfigError("er_p must lie in (0, 1]")
        for name in ("window_s", "slot_s", "deadline_s", "compute_gflops", "cloud_mbps",
                     "wireless_mbps", "wired_mbps"):
            if getattr(self, name) <= 0:
                raise ConfigError(f"{name} must be positive")
        if self.memory_mb < 0 or self.data_mb < 0 or self.hop_delay_s < 0:
            raise ConfigError("memory_mb, data_mb and hop_delay_s must be non-negative")

    @classmethod
    def from_dict(cls, d: dict) -> "WorkloadConfig":
        known = {f.name for f in fields(cls)}
        unknown = set(d) - known
        if unknown:
            raise ConfigError(f"unknown workload keys: {sorted(unknown)}")
        return cls(**d)

    def to_dict(self) -> dict:
        return asdict(self)


def zipf_popularity(n_models: int, s: float, rng: np.random.Generator | None = None) -> np.ndarray:
    """Zipf(s) probabilities over ``n_models`` ids, randomly permuted when ``rng`` is given."""
    ranks = np.arange(1, n_models + 1, dtype=float)
    w = ranks ** (-s)
    p = w / w.sum()
    if rng is not None:
        p = p[rng.permutation(n_models)]
    return p


def warmup_interpolate(old, new, k: int, K: int) -> np.ndarray:
    if not 0 <= k <= K:
        raise ValueError("need 0 <= k <= K")
    w = k / K if K else 1.0
    p = (1.0 - w) * np.asarray(old, dtype=float) + w * np.asarray(new, dtype=float)
    return p / p.sum(axis=-1, keepdims=True)


def gen_topology(cfg: WorkloadConfig) -> Network:
    """Connected Erdos-Renyi graph over the BSs with BFS hop counts."""
    rng = stream(cfg.seed, TOPOLOGY)
    n = cfg.n_bs
    iu = np.triu_indices(n, k=1)
    for _ in range(MAX_TOPOLOGY_ATTEMPTS):
        adj = np.zeros((n, n), dtype=bool)
        adj[iu] = rng.random(len(iu[0])) < cfg.er_p
        adj |= adj.T
        n_comp, _ = connected_components(adj, directed=False)
        if n_comp == 1:
            break
    else:
        raise TopologyGenerationFailed(f"no connected ER({n}, {cfg.er_p}) graph in {MAX_TOPOLOGY_ATTEMPTS} draws")
    hops = shortest_path(adj.astype(float), unweighted=True, directed=False).astype(np.int64)
    return Network.uniform(
        hops, memory_mb=cfg.memory_mb, compute_gflops=cfg.compute_gflops, cloud_mbps=cfg.cloud_mbps,
        wireless_mbps=cfg.wireless_mbps, wired_mbps=cfg.wired_mbps, hop_delay_s=cfg.hop_delay_s,
    )


@dataclass(frozen=True, eq=False)
class PopularitySchedule:
    """probs[t] is (M,) for a global schedule or (N, M) for per-BS popularity."""

    probs: np.ndarray

    def __post_init__(self):
        p = np.asarray(self.probs, dtype=float)
        if np.any(p < 0) or np.any(np.abs(p.sum(axis=-1) - 1.0) > 1e-9):
            raise ValueError("popularity vectors must lie on the simplex")
        p.setflags(write=False)
        object.__setattr__(self, "probs", p)

    @property
    def per_bs(self) -> bool:
        return self.probs.ndim == 3

    def __len__(self) -> int:
        return self.probs.shape[0]

    def __getitem__(self, t: int) -> np.ndarray:
        return self.probs[t]


def gen_schedule(cfg: WorkloadConfig, n_periods: int, per_bs: bool) -> PopularitySchedule:
    """Zipf popularity reshuffled every ``change_every`` periods, blended in over ``warmup`` periods."""
    rng = stream(cfg.seed, POPULARITY)
    shape = (cfg.n_bs,) if per_bs else ()
    period = cfg.change_every if cfg.change_every > 0 else max(n_periods, 1)
    n_epochs = (max(n_periods, 1) - 1) // period + 2

    def draw():
        if per_bs:
            return np.stack([zipf_popularity(cfg.n_models, cfg.zipf_s, rng) for _ in range(cfg.n_bs)])
        return zipf_popularity(cfg.n_models, cfg.zipf_s, rng)

    epochs = [draw() for _ in range(n_epochs)]
    out = np.empty((n_periods,) + shape + (cfg.n_models,))
    K = cfg.warmup
    for t in range(n_periods):
        e = t // period
        p = epochs[e]
        nxt = (e + 1) * period
        lead = nxt - t  # periods until the next change
        if cfg.change_every > 0 and K > 0 and lead <= K and nxt < n_periods:
            p = warmup_interpolate(epochs[e], epochs[e + 1], K - lead, K)
        out[t] = p
    return PopularitySchedule(out)


def gen_requests(cfg: WorkloadConfig, schedule: PopularitySchedule, period: int) -> RequestBatch:
    """The ``n_users`` requests of one window (global popularity) or slot (per-BS popularity)."""
    if period >= len(schedule):
        raise ValueError(f"schedule has no period {period}")
    rng = stream(cfg.seed, REQUESTS, period)
    U = cfg.n_users
    home = rng.integers(0, cfg.n_bs, size=U)
    p = schedule[period]
    if schedule.per_bs:
        cum = np.cumsum(p, axis=1)[home]
        draws = rng.random(U)
        model = np.minimum((draws[:, None] >= cum).sum(axis=1), cfg.n_models - 1)
        start = np.zeros(U)
    else:
        model = np.minimum(np.searchsorted(np.cumsum(p), rng.random(U), side="right"), cfg.n_models - 1)
        start = rng.uniform(0.0, cfg.window_s, size=U)
    return RequestBatch(model=model, home=home, data_mb=np.full(U, cfg.data_mb),
                        deadline_s=np.full(U, cfg.deadline_s), start_s=start)


@dataclass(frozen=True, eq=False)
class Workload:
    """A scenario plus its full per-period request stream; replayable from JSON."""

    config: WorkloadConfig
    mode: str
    scenario: Scenario
    schedule: PopularitySchedule
    requests: tuple[RequestBatch, ...] = field(default=())

    @property
    def n_periods(self) -> int:
        return len(self.requests)

    def to_dict(self) -> dict:
        net = self.scenario.network
        return {
            "mode": self.mode,
            "config": self.config.to_dict(),
            "catalog": self.scenario.catalog.to_dict(),
            "network": {
                "memory_mb": net.memory_mb.tolist(), "compute_gflops": net.compute_gflops.tolist(),
                "cloud_mbps": net.cloud_mbps.tolist(), "wireless_mbps": net.wireless_mbps.tolist(),
                "wired_mbps": net.wired_mbps.tolist(), "hops": net.hops.tolist(),
                "hop_delay_s": net.hop_delay_s,
            },
            "window_s": self.scenario.window_s,
            "slot_s": self.scenario.slot_s,
            "schedule": self.schedule.probs.tolist(),
            "requests": [r.to_dict() for r in self.requests],
        }

    @classmethod
    def from_dict(cls, d: dict) -> "Workload":
        net = Network(**d["network"])
        scn = Scenario(ModelCatalog.from_dict(d["catalog"]), net, d["window_s"], d["slot_s"])
        return cls(WorkloadConfig.from_dict(d["config"]), d["mode"], scn,
                   PopularitySchedule(np.array(d["schedule"])),
                   tuple(RequestBatch.from_dict(r) for r in d["requests"]))

    def dump(self, path: str | Path) -> None:
        Path(path).write_text(json.dumps(self.to_dict()))

    @classmethod
    def load(cls, path: str | Path) -> "Workload":
        return cls.from_dict(json.loads(Path(path).read_text()))


def gen_workload(cfg: WorkloadConfig, mode: str = "offline", catalog: ModelCatalog | None = None) -> Workload:
    if mode not in ("offline", "online"):
        raise ConfigError(f"unknown mode {mode!r}")
    catalog = catalog or default_catalog(cfg.n_models)
    if len(catalog) != cfg.n_models:
        raise ConfigError("catalog size does not match n_models")
    net = gen_topology(cfg)
    scn = Scenario(catalog, net, cfg.window_s, cfg.slot_s)
    online = mode == "online"
    n = cfg.n_slots if online else cfg.n_windows
    sched = gen_schedule(cfg, n, per_bs=online)
    reqs = tuple(gen_requests(cfg, sched, t) for t in range(n))
    return Workload(cfg, mode, scn, sched, reqs)
