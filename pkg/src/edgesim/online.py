"""Per-slot online state: download queues, cache flags, QoE and routing.

Each BS pulls submodel increments from the cloud over a single link of
``W_n / 8`` MB/s.  Increments are served FIFO in decision order, so a chain
h1 -> h2 -> h3 of one model is downloaded in submodel order and different
models at the same BS queue behind each other.  Shrinking is instantaneous.
"""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass, field

import numpy as np

from .scenario import MBIT_PER_MB, RequestBatch, Scenario

CLOUD = -1


@dataclass(frozen=True)
class QoEParams:
    theta: float  # normalization latency (s)
    alpha: float = 0.9  # 1/s
    gamma: float = 0.9

    def __post_init__(self):
        if self.alpha < 0:
            raise ValueError("alpha must be >= 0")
        if not 0 < self.gamma <= 1:
            raise ValueError("gamma must lie in (0, 1]")


def qoe(precision, latency, params: QoEParams):
    """precision * max(0, 1 - (latency - theta) * alpha)."""
    pen = np.maximum(0.0, 1.0 - (np.asarray(latency, dtype=float) - params.theta) * params.alpha)
    out = np.asarray(precision, dtype=float) * pen
    return float(out) if out.ndim == 0 else out


def min_latency(scn: Scenario, data_mb: float) -> float:
    """Smallest end-to-end latency of any request over every BS pair and nonempty submodel."""
    comm = scn.comm_matrix(data_mb)
    infer = scn.infer_matrix()
    return float((comm[:, :, None, None] + infer[None]).min())


class OnlineState:
    """Cache flags ``X`` and pending bytes ``O`` per (BS, model, submodel) plus per-BS queues."""

    def __init__(self, scn: Scenario, cached: np.ndarray | None = None):
        self.scn = scn
        cat = scn.catalog
        N, M, W = scn.n_bs, len(cat), cat.width
        self.cached = np.zeros((N, M), dtype=np.int64) if cached is None else np.array(cached, dtype=np.int64)
        if self.cached.shape != (N, M):
            raise ValueError("initial cache must be N x M")
        self.O = np.zeros((N, M, W))
        self.queue: list[deque] = [deque() for _ in range(N)]
        self.rate = scn.network.cloud_mbps / MBIT_PER_MB  # MB/s
        self._size = np.where(np.isfinite(cat.size), cat.size, 0.0)

    @property
    def X(self) -> np.ndarray:
        W = self.scn.catalog.width
        x = (np.arange(W)[None, None, :] == self.cached[..., None]).astype(np.int8)
        x[..., 0] = 0  # h0 is implicit
        return x

    def copy(self) -> "OnlineState":
        out = OnlineState(self.scn, self.cached)
        out.O = self.O.copy()
        out.queue = [deque(q) for q in self.queue]
        return out

    def pending_top(self) -> np.ndarray:
        """(N, M) largest submodel still downloading (0 if none)."""
        W = self.O.shape[2]
        has = self.O > 0
        return np.where(has.any(axis=2), W - 1 - np.argmax(has[..., ::-1], axis=2), 0)

    def downloading(self, n: int) -> np.ndarray:
        return (self.O[n] > 0).any(axis=1)

    def footprint(self) -> np.ndarray:
        """(N, M) memory held per model: the larger of cached and pending target."""
        top = np.maximum(self.cached, self.pending_top())
        return self._size[np.arange(self.cached.shape[1])[None, :], top]

    def memory_used(self) -> np.ndarray:
        return self.footprint().sum(axis=1)

    def cached_bytes(self) -> np.ndarray:
        return self._size[np.arange(self.cached.shape[1])[None, :], self.cached].sum(axis=1)

    def bytes_in_flight(self) -> float:
        return float(self.O.sum())

    def enlarge(self, n: int, m: int, target: int) -> None:
        cur = max(int(self.cached[n, m]), int(self.pending_top()[n, m]))
        if target <= cur:
            raise ValueError(f"enlarge target {target} is not above {cur}")
        if target >= self.scn.catalog.levels[m]:
            raise ValueError(f"model {m} has no submodel {target}")
        for h in range(cur + 1, target + 1):
            self.O[n, m, h] = self.scn.catalog.delta[m, h]
            self.queue[n].append((m, h))

    def shrink(self, n: int, m: int, target: int) -> None:
        if self.downloading(n)[m]:
            raise ValueError("cannot shrink a model that is downloading")
        if not 0 <= target <= self.cached[n, m]:
            raise ValueError(f"shrink target {target} is not below {self.cached[n, m]}")
        self.cached[n, m] = target

    def advance_downloads(self, dt: float) -> np.ndarray:
        """Spend one slot of link time on the queues; returns the (N, M, W) finished flags."""
        g = np.zeros(self.O.shape, dtype=bool)
        for n, q in enumerate(self.queue):
            rate = float(self.rate[n])
            ahead = 0.0  # MB pending before this entry at slot start
            for m, h in q:
                o = self.O[n, m, h]
                tbar = dt - min(ahead / rate, dt)
                new = max(o - tbar * rate, 0.0)
                ahead += o
                self.O[n, m, h] = new
                g[n, m, h] = o > 0 and new == 0.0
            while q and self.O[n, q[0][0], q[0][1]] == 0.0:
                q.popleft()
        return g

    def settle(self, g: np.ndarray) -> None:
        """Largest finished submodel per (n, m) becomes the cached one."""
        done = g.any(axis=2)
        if done.any():
            W = g.shape[2]
            top = W - 1 - np.argmax(g[..., ::-1], axis=2)
            self.cached = np.where(done, np.maximum(top, self.cached), self.cached)

    def tick(self, dt: float) -> np.ndarray:
        g = self.advance_downloads(dt)
        self.settle(g)
        return g


@dataclass(frozen=True, eq=False)
class Routing:
    target: np.ndarray  # (U,)
    qoe: np.ndarray
    precision: np.ndarray
    latency: np.ndarray


def route_best(scn: Scenario, cached: np.ndarray, reqs: RequestBatch, params: QoEParams) -> Routing:
    """Send each request to the BS with the highest QoE; cloud when none is positive."""
    U = len(reqs)
    if U == 0:
        z = np.zeros(0)
        return Routing(np.zeros(0, dtype=np.int64), z, z, z)
    cat = scn.catalog
    h = cached[:, reqs.model]  # (N, U)
    lat = np.take_along_axis(scn.request_latency(reqs), h[:, :, None], axis=2)[:, :, 0]
    prec = cat.precision[reqs.model[None, :], h]
    ok = (h > 0) & (lat <= reqs.deadline_s[None, :])
    q = np.where(ok, qoe(prec, np.where(ok, lat, 0.0), params), 0.0)
    lat_key = np.where(ok, lat, np.inf)
    N = scn.n_bs
    # argmax of QoE, then lowest latency, then lowest id
    order = np.lexsort((np.broadcast_to(np.arange(N)[:, None], (N, U)), lat_key, -q), axis=0)
    best = order[0]
    cols = np.arange(U)
    bq = q[best, cols]
    hit = bq > 0
    target = np.where(hit, best, CLOUD)
    return Routing(target, np.where(hit, bq, 0.0), np.where(hit, prec[best, cols], 0.0),
                   np.where(hit, lat[best, cols], np.nan))


def qoe_table(scn: Scenario, params: QoEParams, data_mb: float, deadline_s: float) -> np.ndarray:
    """Q[home, target, m, h]: QoE of a request homed at ``home`` served by submodel h at ``target``."""
    lat = scn.comm_matrix(data_mb)[:, :, None, None] + scn.infer_matrix()[None]
    prec = scn.catalog.precision[None, None]
    ok = np.isfinite(lat) & (lat <= deadline_s)
    return np.where(ok, qoe(prec, np.where(ok, lat, 0.0), params), 0.0)


class FrequencyTracker:
    """Sliding window over the last ``window`` slots of per-(BS, model) request counts."""

    def __init__(self, n_bs: int, n_models: int, window: int, users_per_slot: int):
        if window < 1:
            raise ValueError("window must be >= 1")
        self.window = window
        self.users = users_per_slot
        self.hist: deque = deque(maxlen=window)
        self.shape = (n_bs, n_models)

    def push(self, reqs: RequestBatch) -> None:
        c = np.zeros(self.shape, dtype=np.int64)
        np.add.at(c, (reqs.home, reqs.model), 1)
        self.hist.append(c)

    def __len__(self) -> int:
        return len(self.hist)

    def counts(self, decay: float = 1.0) -> np.ndarray:
        """Summed counts, the most recent slot weighted 1 and older ones ``decay**age``."""
        out = np.zeros(self.shape)
        for age, c in enumerate(reversed(self.hist)):
            out += c * decay ** age
        return out

    def frequency(self) -> np.ndarray:
        if not self.hist or self.users == 0:
            return np.zeros(self.shape)
        return self.counts() / (len(self.hist) * self.users)


@dataclass(frozen=True)
class SwitchAction:
    n: int
    m: int  # -1 when only companions change
    h_from: int
    h_to: int
    companions: tuple = field(default=())  # ((m, h), ...) shrinks of other models
    gain: float = 0.0

    def to_dict(self) -> dict:
        return {"bs": self.n, "model": self.m, "from": self.h_from, "to": self.h_to,
                "companions": [list(c) for c in self.companions], "gain": self.gain}


def apply_action(state: OnlineState, a: SwitchAction) -> None:
    for m, h in a.companions:
        if h < state.cached[a.n, m]:
            state.shrink(a.n, m, h)
    if a.m >= 0 and a.h_to > a.h_from:
        state.enlarge(a.n, a.m, a.h_to)


def action_space(state: OnlineState, n: int, m: int, dt: float) -> list[int]:
    """Enlargement targets of (n, m): every submodel up to and including the first whose
    cumulative increment over the cached one exceeds one slot of link capacity."""
    cat = state.scn.catalog
    cur = int(state.cached[n, m])
    budget = float(state.rate[n]) * dt
    out = []
    cum = 0.0
    for h in range(cur + 1, int(cat.levels[m])):
        cum += cat.delta[m, h]
        out.append(h)
        if cum > budget:
            break
    return out


def warm_cache(scn: Scenario, popularity: np.ndarray) -> np.ndarray:
    """Fill each BS with the smallest nonempty submodels, most popular model first, while they fit."""
    cat = scn.catalog
    N, M = scn.n_bs, len(cat)
    cached = np.zeros((N, M), dtype=np.int64)
    pop = np.broadcast_to(popularity, (N, M))
    for n in range(N):
        used = 0.0
        for m in np.lexsort((np.arange(M), -pop[n])):
            if cat.levels[m] > 1 and used + cat.size[m, 1] <= scn.network.memory_mb[n]:
                cached[n, m] = 1
                used += cat.size[m, 1]
    return cached
