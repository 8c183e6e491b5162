"""Reference policies.

Offline: popularity-greedy and uniform-random cache plans.
Online: LFU over the BS and its one-hop neighbours, a recency-weighted LFU
variant, and uniform random enlargement with a random feasible shrink set.
"""

from __future__ import annotations

import numpy as np

from .cocar_ol import DecisionContext
from .knapsack import _grid, to_size_units
from .online import OnlineState, SwitchAction
from .rounding import CLOUD, FeasiblePlan
from .scenario import RequestBatch, Scenario

MAX_REDRAWS = 100


def _route_home_or_cloud(scn: Scenario, prev: np.ndarray, reqs: RequestBatch, cache: np.ndarray,
                         target: np.ndarray) -> FeasiblePlan:
    cat = scn.catalog
    U = len(reqs)
    route = np.full(U, CLOUD, dtype=np.int64)
    precision = np.zeros(U)
    if U:
        h = cache[target, reqs.model]
        lat = scn.request_latency(reqs)[target, np.arange(U), h]
        load = cat.switch[reqs.model, np.asarray(prev)[target, reqs.model], h]
        ok = (h > 0) & (lat <= reqs.deadline_s) & (load <= reqs.start_s)
        route[ok] = target[ok]
        precision[ok] = cat.precision[reqs.model[ok], h[ok]]
    return FeasiblePlan(cache, route, precision)


def popularity_order(reqs: RequestBatch, n_models: int) -> np.ndarray:
    counts = np.bincount(reqs.model, minlength=n_models)
    return np.lexsort((np.arange(n_models), -counts))


def offline_greedy(scn: Scenario, reqs: RequestBatch, prev: np.ndarray) -> FeasiblePlan:
    """Most requested models first, each at the most precise submodel that still fits; serve at home."""
    cat = scn.catalog
    N, M = scn.n_bs, len(cat)
    cache = np.zeros((N, M), dtype=np.int64)
    order = popularity_order(reqs, M)
    for n in range(N):
        used = 0.0
        for m in order:
            for h in range(int(cat.levels[m]) - 1, 0, -1):
                if used + cat.size[m, h] <= scn.network.memory_mb[n]:
                    cache[n, m] = h
                    used += cat.size[m, h]
                    break
    return _route_home_or_cloud(scn, prev, reqs, cache, reqs.home)


def _fits(cat, row, cap) -> bool:
    return cat.size[np.arange(len(row)), row].sum() <= cap


def offline_random(scn: Scenario, reqs: RequestBatch, prev: np.ndarray, rng: np.random.Generator) -> FeasiblePlan:
    """Uniform submodel per (BS, model), redrawn until it fits, then shrunk if it never does."""
    cat = scn.catalog
    N, M = scn.n_bs, len(cat)
    cache = np.zeros((N, M), dtype=np.int64)
    for n in range(N):
        cap = scn.network.memory_mb[n]
        for _ in range(MAX_REDRAWS):
            row = rng.integers(0, cat.levels)
            if _fits(cat, row, cap):
                break
        while not _fits(cat, row, cap):
            # shrink the biggest model one step (lowest id on ties)
            fp = cat.size[np.arange(M), row]
            row[int(np.argmax(fp))] -= 1
        cache[n] = row
    target = rng.integers(0, N, size=len(reqs)) if len(reqs) else np.zeros(0, dtype=np.int64)
    return _route_home_or_cloud(scn, prev, reqs, cache, target)


def _neighbourhood(state: OnlineState, n: int) -> np.ndarray:
    nb = state.scn.network.adjacency[n].copy()
    nb[n] = True
    return nb


class LFU:
    """Enlarge the most requested model one step; shrink strictly less requested ones to make room."""

    name = "lfu"
    decay = 1.0

    def scores(self, state: OnlineState, n: int, ctx: DecisionContext) -> np.ndarray:
        return ctx.tracker.counts(self.decay)[_neighbourhood(state, n)].sum(axis=0)

    def decide(self, state: OnlineState, n: int, ctx: DecisionContext) -> SwitchAction | None:
        cat = state.scn.catalog
        M = len(cat)
        score = self.scores(state, n, ctx)
        busy = state.downloading(n)
        pick = None
        for m in np.lexsort((np.arange(M), -score)):
            if score[m] <= 0:
                break
            if not busy[m] and state.cached[n, m] < cat.levels[m] - 1:
                pick = int(m)
                break
        if pick is None:
            return None
        cur = int(state.cached[n, pick])
        fp = to_size_units(state.footprint()[n])
        cap = int(to_size_units(state.scn.network.memory_mb[n]))
        need = int(fp.sum() - fp[pick] + to_size_units(cat.size[pick, cur + 1]))
        comp = []
        victims = [int(v) for v in np.lexsort((np.arange(M), score))
                   if v != pick and not busy[v] and score[v] < score[pick] and state.cached[n, v] > 0]
        for v in victims:
            if need <= cap:
                break
            h = int(state.cached[n, v])
            while h > 0 and need > cap:
                need -= int(to_size_units(cat.size[v, h])) - int(to_size_units(cat.size[v, h - 1] if h > 1 else 0.0))
                h -= 1
            comp.append((v, h))
        if need > cap:
            return None
        return SwitchAction(n, pick, cur, cur + 1, tuple(comp))


class LFUMAD(LFU):
    """LFU with request counts weighted ``rho**age`` so recent demand dominates."""

    name = "lfu-mad"

    def __init__(self, rho: float = 0.8):
        if not 0 < rho <= 1:
            raise ValueError("rho must lie in (0, 1]")
        self.decay = rho


class RandomOnline:
    """Enlarge a uniformly chosen model one step, then keep a uniformly chosen feasible shrink set."""

    name = "random"
    enum_limit = 100_000
    max_samples = 1000

    def decide(self, state: OnlineState, n: int, ctx: DecisionContext) -> SwitchAction | None:
        cat = state.scn.catalog
        M = len(cat)
        busy = state.downloading(n)
        grow = [m for m in range(M) if not busy[m] and state.cached[n, m] < cat.levels[m] - 1]
        if not grow:
            return None
        rng = ctx.rng
        m = int(grow[rng.integers(len(grow))])
        cur = int(state.cached[n, m])
        fp = to_size_units(state.footprint()[n])
        cap = int(to_size_units(state.scn.network.memory_mb[n])) - int(fp[busy].sum())
        cap -= int(to_size_units(cat.size[m, cur + 1]))
        comp = [k for k in range(M) if k != m and not busy[k]]
        sizes = [to_size_units(np.where(np.arange(state.cached[n, k] + 1) > 0,
                                        cat.size[k, :state.cached[n, k] + 1], 0.0)) for k in comp]
        shape = tuple(len(s) for s in sizes)
        total = int(np.prod(shape)) if shape else 1
        if total <= self.enum_limit:
            idx = _grid(shape) if shape else np.zeros((1, 0), dtype=np.int64)
            tot = np.zeros(len(idx), dtype=np.int64)
            for g, s in enumerate(sizes):
                tot += s[idx[:, g]]
            ok = np.flatnonzero(tot <= cap)
            if not len(ok):
                return None
            choice = idx[ok[rng.integers(len(ok))]]
        else:
            choice = None
            for _ in range(self.max_samples):
                c = np.array([rng.integers(k) for k in shape])
                if sum(int(s[i]) for s, i in zip(sizes, c)) <= cap:
                    choice = c
                    break
            if choice is None:
                return None
        companions = tuple((k, int(h)) for k, h in zip(comp, choice) if h != state.cached[n, k])
        return SwitchAction(n, m, cur, cur + 1, companions)
