"""Online cache switching driven by discounted future-gain estimates.

For a BS ``n`` and model ``m`` the value of keeping submodel ``h`` for one
future slot is ``v[h] = sum_n' f[n', m] * U * max(best elsewhere, Q[n', n, m, h])``
with every other BS frozen at its current cache.  A cache trajectory over
the next ``horizon`` slots is worth ``sum_t gamma**t * v[traj[t]]``.  Since
models only interact through the memory cap, the total gain of a switch
plus companion shrinks is the sum of per-model gains, and the best switch
is a multiple-choice knapsack per candidate enlargement.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from .knapsack import solve_mck, to_gain_units, to_size_units
from .online import (FrequencyTracker, OnlineState, QoEParams, SwitchAction, action_space,
                     apply_action, route_best)
from .scenario import RequestBatch


@dataclass
class DecisionContext:
    Q: np.ndarray  # (N_home, N_target, M, W) qoe table
    params: QoEParams
    users: int  # expected requests per slot
    horizon: int  # future slots considered
    dt: float
    tracker: FrequencyTracker
    rng: np.random.Generator
    extra: dict = field(default_factory=dict)


def value_per_slot(state: OnlineState, n: int, m: int, f: np.ndarray, ctx: DecisionContext) -> np.ndarray:
    """(W,) one-slot reward of model ``m`` when BS ``n`` holds each submodel."""
    N = state.cached.shape[0]
    Qm = ctx.Q[:, :, m, :]  # (home, target, h)
    others = np.array([k for k in range(N) if k != n], dtype=np.int64)
    if len(others):
        best_other = Qm[:, others, state.cached[others, m]].max(axis=1)
    else:
        best_other = np.zeros(N)
    w = f[:, m] * ctx.users
    return (w[:, None] * np.maximum(best_other[:, None], Qm[:, n, :])).sum(axis=0)


def trajectory(state: OnlineState, n: int, m: int, target: int, ctx: DecisionContext) -> np.ndarray:
    """Submodel of (n, m) serving in each of the next ``horizon`` slots if ``target`` is requested now."""
    cur = int(state.cached[n, m])
    traj = np.full(ctx.horizon, cur, dtype=np.int64)
    if target <= cur:
        traj[:] = target
        return traj
    cat = state.scn.catalog
    rate = float(state.rate[n]) * ctx.dt
    need = float(state.O[n].sum())  # queued bytes ahead of this request
    for h in range(cur + 1, target + 1):
        need += cat.delta[m, h]
        # ready in the first slot whose cumulative link budget covers it
        t = int(np.ceil(need / rate - 1e-12))
        if t <= ctx.horizon:
            traj[max(t, 1) - 1:] = h
    return traj


def future_reward(state: OnlineState, n: int, m: int, target: int, f: np.ndarray,
                  ctx: DecisionContext, v: np.ndarray | None = None) -> float:
    if v is None:
        v = value_per_slot(state, n, m, f, ctx)
    traj = trajectory(state, n, m, target, ctx)
    disc = ctx.params.gamma ** np.arange(1, ctx.horizon + 1)
    return float((disc * v[traj]).sum())


def future_gain(state: OnlineState, n: int, m: int, target: int, f: np.ndarray,
                ctx: DecisionContext, v: np.ndarray | None = None) -> float:
    if v is None:
        v = value_per_slot(state, n, m, f, ctx)
    cur = int(state.cached[n, m])
    if target == cur:
        return 0.0
    return future_reward(state, n, m, target, f, ctx, v) - future_reward(state, n, m, cur, f, ctx, v)


def choose_switch(state: OnlineState, n: int, f: np.ndarray, ctx: DecisionContext) -> SwitchAction | None:
    """Best enlargement plus companion shrinks at BS ``n``, or None when no gain is positive."""
    cat = state.scn.catalog
    M = len(cat)
    busy = state.downloading(n)
    free = [m for m in range(M) if not busy[m]]
    fp = state.footprint()[n]
    cap = int(to_size_units(state.scn.network.memory_mb[n])) - int(to_size_units(fp[busy]).sum())
    vals = {m: value_per_slot(state, n, m, f, ctx) for m in free}
    # companion options per model: keep, then each smaller submodel down to h0
    opts, osz, ogn = {}, {}, {}
    for m in free:
        cur = int(state.cached[n, m])
        hs = np.arange(cur, -1, -1)
        opts[m] = hs
        osz[m] = to_size_units(np.where(hs > 0, cat.size[m, hs], 0.0))
        ogn[m] = to_gain_units([future_gain(state, n, m, int(h), f, ctx, vals[m]) for h in hs])
    best = None  # (gain units, action)
    cands = [(-1, -1)] + [(m, h) for m in free for h in action_space(state, n, m, ctx.dt)]
    for m, h in cands:
        comp = [k for k in free if k != m]
        if m >= 0:
            g0 = int(to_gain_units(future_gain(state, n, m, h, f, ctx, vals[m])))
            c = cap - int(to_size_units(cat.size[m, h]))
        else:
            g0, c = 0, cap
        res = solve_mck([osz[k] for k in comp], [ogn[k] for k in comp], c)
        if res is None:
            continue
        total = g0 + res[0]
        if best is None or total > best[0]:
            companions = tuple((k, int(opts[k][o])) for k, o in zip(comp, res[1]) if o > 0)
            h_from = int(state.cached[n, m]) if m >= 0 else -1
            best = (total, SwitchAction(n, m, h_from, h, companions, total * 1e-9))
    if best is None or best[0] <= 0:
        return None
    return best[1]


class CocarOL:
    name = "cocar-ol"

    def decide(self, state: OnlineState, n: int, ctx: DecisionContext) -> SwitchAction | None:
        return choose_switch(state, n, ctx.tracker.frequency(), ctx)


@dataclass
class SlotOutcome:
    routing: object
    decisions: list
    memory_utilization: float
    bytes_in_flight: float


def step(state: OnlineState, reqs: RequestBatch, policy, ctx: DecisionContext, rounds: int) -> SlotOutcome:
    """One slot: downloads progress, requests are routed, frequencies update, then ``rounds`` decisions."""
    state.tick(ctx.dt)
    routing = route_best(state.scn, state.cached, reqs, ctx.params)
    util = float(np.mean(state.cached_bytes() / np.where(state.scn.network.memory_mb > 0,
                                                          state.scn.network.memory_mb, np.inf)))
    ctx.tracker.push(reqs)
    decisions = []
    N = state.scn.n_bs
    for _ in range(rounds):
        n = int(ctx.rng.integers(N))
        a = policy.decide(state, n, ctx)
        if a is not None:
            apply_action(state, a)
            decisions.append(a)
    return SlotOutcome(routing, decisions, util, state.bytes_in_flight())


def write_decisions(fh, slot: int, decisions) -> None:
    for a in decisions:
        fh.write(json.dumps({"slot": slot, **a.to_dict()}) + "\n")

