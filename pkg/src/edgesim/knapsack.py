"""Exact multiple-choice knapsack: pick one option per group, maximize gain under a size cap.

Sizes and gains are integers, so ties are exact.  Among optimal choices the
lexicographically smallest choice vector wins (option 0 first), for both
the enumeration and the DP solver.
"""

from __future__ import annotations

from functools import lru_cache
from typing import Sequence

import numpy as np

ENUM_LIMIT = 100_000
SIZE_UNIT_MB = 0.01
GAIN_UNIT = 1e-9
_NEG = np.iinfo(np.int64).min // 4


def to_size_units(mb) -> np.ndarray:
    return np.rint(np.asarray(mb, dtype=float) / SIZE_UNIT_MB).astype(np.int64)


def to_gain_units(g) -> np.ndarray:
    return np.rint(np.asarray(g, dtype=float) / GAIN_UNIT).astype(np.int64)


@lru_cache(maxsize=64)
def _grid(shape: tuple) -> np.ndarray:
    # C-order enumeration == lexicographic order of choice vectors
    return np.indices(shape).reshape(len(shape), -1).T.copy()


def solve_enum(sizes: Sequence[np.ndarray], gains: Sequence[np.ndarray], cap: int):
    """Brute force; returns (gain, choice) or None when nothing fits."""
    if not sizes:
        return (0, ()) if cap >= 0 else None
    shape = tuple(len(s) for s in sizes)
    idx = _grid(shape)
    tot_s = np.zeros(len(idx), dtype=np.int64)
    tot_g = np.zeros(len(idx), dtype=np.int64)
    for g, (s, v) in enumerate(zip(sizes, gains)):
        tot_s += np.asarray(s, dtype=np.int64)[idx[:, g]]
        tot_g += np.asarray(v, dtype=np.int64)[idx[:, g]]
    ok = tot_s <= cap
    if not ok.any():
        return None
    masked = np.where(ok, tot_g, _NEG)
    k = int(np.argmax(masked))  # first maximum = lexicographically smallest
    return int(tot_g[k]), tuple(int(i) for i in idx[k])


def solve_dp(sizes: Sequence[np.ndarray], gains: Sequence[np.ndarray], cap: int):
    """DP over remaining capacity; returns (gain, choice) or None when nothing fits."""
    G = len(sizes)
    if cap < 0:
        return None
    if G == 0:
        return 0, ()
    sizes = [np.asarray(s, dtype=np.int64) for s in sizes]
    gains = [np.asarray(v, dtype=np.int64) for v in gains]
    c = np.arange(cap + 1)
    V = np.empty((G + 1, cap + 1), dtype=np.int64)
    V[G] = 0
    for g in range(G - 1, -1, -1):
        best = np.full(cap + 1, _NEG, dtype=np.int64)
        for s, v in zip(sizes[g], gains[g]):
            rest = c - s
            ok = rest >= 0
            cand = np.full(cap + 1, _NEG, dtype=np.int64)
            nxt = V[g + 1][np.where(ok, rest, 0)]
            feas = ok & (nxt > _NEG)
            cand[feas] = nxt[feas] + v
            best = np.maximum(best, cand)
        V[g] = best
    if V[0, cap] == _NEG:
        return None
    choice = []
    rem = cap
    for g in range(G):
        target = V[g, rem]
        for o, (s, v) in enumerate(zip(sizes[g], gains[g])):
            if s <= rem and V[g + 1, rem - s] > _NEG and V[g + 1, rem - s] + v == target:
                choice.append(o)
                rem -= int(s)
                break
    return int(V[0, cap]), tuple(choice)


def solve_mck(sizes, gains, cap: int, limit: int = ENUM_LIMIT):
    """Enumeration when the choice space is small, DP otherwise."""
    n = 1
    for s in sizes:
        n *= len(s)
    if n <= limit:
        return solve_enum(sizes, gains, cap)
    return solve_dp(sizes, gains, cap)
