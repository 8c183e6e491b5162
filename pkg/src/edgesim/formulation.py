"""Relaxed joint caching/routing LP for one observation window.

Columns are ``x[n, h]`` (BS ``n`` caches submodel ``h``) for every submodel of
every model, followed by ``A[n, u, h]`` (user ``u`` is served by submodel ``h``
at BS ``n``) for the submodels of the user's model.  Rows, in order:

* one submodel per (BS, model)            sum_h x[n,h] = 1
* BS memory                               sum_h x[n,h] r_h <= R_n
* at most one route per user              sum_{n,h} A[n,u,h] <= 1
* route only to cached submodels          A[n,u,h] - x[n,h] <= 0
* end-to-end deadline                     sum A[n,u,h] T[n,u,h] <= ddl_u
* loaded before the request starts        sum A[n,u,h] D(prev[n,m_u], h) <= s_u
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import LpError
from .lp import EQ, LE, LpBuilder, LpProblem, LpSolution, solve
from .scenario import RequestBatch, Scenario

CLAMP_TOL = 1e-6


@dataclass(frozen=True, eq=False)
class VarIndex:
    x_col: np.ndarray  # (N, M, W) column of x[n, m, h], -1 past the model's last level
    a_col: np.ndarray  # (N, U, W) column of A[n, u, h], -1 past the user's model's last level
    n_cols: int

    @property
    def n_x(self) -> int:
        return int((self.x_col >= 0).sum())

    def names(self) -> list[str]:
        out = [""] * self.n_cols
        for (n, m, h), c in np.ndenumerate(self.x_col):
            if c >= 0:
                out[c] = f"x_{n}_{m}_{h}"
        for (n, u, h), c in np.ndenumerate(self.a_col):
            if c >= 0:
                out[c] = f"A_{n}_{u}_{h}"
        return out


def make_index(scn: Scenario, reqs: RequestBatch) -> VarIndex:
    levels = scn.catalog.levels
    N, M, W, U = scn.n_bs, scn.n_models, scn.catalog.width, len(reqs)
    h = np.arange(W)
    x_valid = np.broadcast_to(h[None, :] < levels[:, None], (N, M, W))
    x_col = np.full((N, M, W), -1, dtype=np.int64)
    x_col[x_valid] = np.arange(int(x_valid.sum()))
    n_x = int(x_valid.sum())
    a_valid = np.broadcast_to(h[None, None, :] < levels[reqs.model][None, :, None], (N, U, W))
    # user-major so each user's block is contiguous
    a_col = np.full((U, N, W), -1, dtype=np.int64)
    a_valid_un = np.transpose(a_valid, (1, 0, 2))
    a_col[a_valid_un] = n_x + np.arange(int(a_valid.sum()))
    return VarIndex(x_col, np.ascontiguousarray(np.transpose(a_col, (1, 0, 2))), n_x + int(a_valid.sum()))


def expected_row_count(scn: Scenario, reqs: RequestBatch) -> int:
    N, M, U = scn.n_bs, scn.n_models, len(reqs)
    return N * M + N + 3 * U + int(N * scn.catalog.levels[reqs.model].sum())


def build_p1lr(scn: Scenario, prev: np.ndarray, reqs: RequestBatch,
               fix_infeasible: bool = True) -> tuple[LpProblem, VarIndex]:
    """Assemble the relaxed problem for one window.

    ``prev`` is the (N, M) integral cache deployed in the previous window.
    With ``fix_infeasible`` every A column whose own deadline or loading
    coefficient already exceeds the user's bound is fixed to 0; this removes
    no integral solution and leaves the row/column layout untouched.
    """
    cat = scn.catalog
    N, M, W, U = scn.n_bs, scn.n_models, cat.width, len(reqs)
    if U and (reqs.model.min() < 0 or reqs.model.max() >= M):
        raise LpError("request references an unknown model")
    if np.any(reqs.home < 0) or np.any(reqs.home >= N):
        raise LpError("request references an unknown BS")
    prev = np.asarray(prev, dtype=np.int64)
    if prev.shape != (N, M) or np.any(prev < 0) or np.any(prev >= cat.levels[None, :]):
        raise LpError("previous cache must assign a valid submodel to every (BS, model)")
    idx = make_index(scn, reqs)
    b = LpBuilder(idx.n_cols)
    lo = np.zeros(idx.n_cols)
    hi = np.ones(idx.n_cols)
    c = np.zeros(idx.n_cols)

    xv = idx.x_col >= 0
    av = idx.a_col >= 0
    # objective: precision of the serving submodel
    prec = cat.precision[reqs.model]  # (U, W)
    c[idx.a_col[av]] = np.broadcast_to(prec[None], (N, U, W))[av]

    # one submodel per (n, m)
    nm = np.broadcast_to(np.arange(N * M).reshape(N, M, 1), (N, M, W))
    b.add_coo(nm[xv], idx.x_col[xv], np.ones(int(xv.sum())), EQ, np.ones(N * M),
              [f"one_{n}_{m}" for n in range(N) for m in range(M)])
    # memory
    nn = np.broadcast_to(np.arange(N).reshape(N, 1, 1), (N, M, W))
    size = np.broadcast_to(cat.size[None], (N, M, W))
    b.add_coo(nn[xv], idx.x_col[xv], size[xv], LE, scn.network.memory_mb, [f"mem_{n}" for n in range(N)])
    # at most one route
    uu = np.broadcast_to(np.arange(U).reshape(1, U, 1), (N, U, W))
    b.add_coo(uu[av], idx.a_col[av], np.ones(int(av.sum())), LE, np.ones(U), [f"route_{u}" for u in range(U)])
    # A <= x
    n_link = int(av.sum())
    x_of_a = idx.x_col[np.arange(N)[:, None, None], reqs.model[None, :, None], np.arange(W)[None, None, :]]
    rows = np.arange(n_link)
    b.add_coo(np.concatenate([rows, rows]), np.concatenate([idx.a_col[av], x_of_a[av]]),
              np.concatenate([np.ones(n_link), -np.ones(n_link)]), LE, np.zeros(n_link))
    # deadline
    lat = scn.request_latency(reqs)  # (N, U, W); inf at the empty submodel
    comm = scn.request_comm(reqs)
    lat = np.where(np.arange(W)[None, None, :] == 0, comm[:, :, None], lat)
    b.add_coo(uu[av], idx.a_col[av], lat[av], LE, reqs.deadline_s, [f"ddl_{u}" for u in range(U)])
    # loading before start
    load = load_coefficients(scn, prev, reqs)
    b.add_coo(uu[av], idx.a_col[av], load[av], LE, reqs.start_s, [f"load_{u}" for u in range(U)])

    a_hi = np.ones((N, U, W))
    a_hi[:, :, 0] = 0.0  # routing to the empty submodel serves nothing
    if fix_infeasible:
        bad = (lat > reqs.deadline_s[None, :, None]) | (load > reqs.start_s[None, :, None])
        a_hi[bad] = 0.0
    hi[idx.a_col[av]] = a_hi[av]
    b.c = c.tolist()
    b.lo = lo.tolist()
    b.hi = hi.tolist()
    return b.build(), idx


def load_coefficients(scn: Scenario, prev: np.ndarray, reqs: RequestBatch) -> np.ndarray:
    """(N, U, W) seconds to reach each submodel of the user's model from the deployed cache."""
    cat = scn.catalog
    prev_u = np.asarray(prev)[:, reqs.model]  # (N, U)
    load = cat.switch[reqs.model[None, :], prev_u, :]  # (N, U, W)
    return np.where(np.isfinite(load), load, 0.0)


@dataclass(frozen=True, eq=False)
class Fractional:
    x: np.ndarray  # (N, M, W)
    A: np.ndarray  # (N, U, W)
    objective: float
    approximate: bool = False

    @property
    def y(self) -> np.ndarray:
        """(N, U) fractional routing support."""
        return self.A.sum(axis=2)


def decode(sol: LpSolution, idx: VarIndex) -> Fractional:
    if not sol.optimal:
        raise LpError(f"cannot decode a {sol.status.value} LP solution")
    v = np.clip(sol.x, 0.0, 1.0)
    x = np.where(idx.x_col >= 0, v[np.maximum(idx.x_col, 0)], 0.0)
    A = np.where(idx.a_col >= 0, v[np.maximum(idx.a_col, 0)], 0.0)
    return Fractional(x, A, float(sol.objective))


def solve_window(scn: Scenario, prev: np.ndarray, reqs: RequestBatch, var_cap: int = 20_000,
                 rng: np.random.Generator | None = None, fix_infeasible: bool = True) -> Fractional:
    """Solve the window LP; shard users when the column count exceeds ``var_cap``.

    Sharding solves the first random batch with free cache columns, then routes
    the remaining batches against that cache.  The result is flagged
    ``approximate``.
    """
    N, W, U = scn.n_bs, scn.catalog.width, len(reqs)
    n_cols = int((make_index(scn, reqs).a_col >= 0).sum()) + scn.n_models * W * N
    if n_cols <= var_cap or U <= 1:
        p, idx = build_p1lr(scn, prev, reqs, fix_infeasible)
        sol = solve(p)
        if not sol.optimal:
            raise LpError(f"window LP is {sol.status.value}")
        return decode(sol, idx)

    rng = rng or np.random.default_rng(0)
    per_user = N * W
    batch = max(1, (var_cap - scn.n_models * W * N) // per_user)
    order = rng.permutation(U)
    A = np.zeros((N, U, W))
    x_fixed = None
    total = 0.0
    for start in range(0, U, batch):
        users = np.sort(order[start:start + batch])
        sub = _subset(reqs, users)
        p, idx = build_p1lr(scn, prev, sub, fix_infeasible)
        if x_fixed is not None:
            cols = idx.x_col[idx.x_col >= 0]
            p.lo[cols] = x_fixed[idx.x_col >= 0]
            p.hi[cols] = x_fixed[idx.x_col >= 0]
        sol = solve(p)
        if not sol.optimal:
            raise LpError(f"sharded window LP is {sol.status.value}")
        frac = decode(sol, idx)
        if x_fixed is None:
            x_fixed = frac.x
        A[:, users, :] = frac.A
        total += frac.objective
    return Fractional(x_fixed, A, total, approximate=True)


def _subset(reqs: RequestBatch, users: np.ndarray) -> RequestBatch:
    return RequestBatch(reqs.model[users], reqs.home[users], reqs.data_mb[users],
                        reqs.deadline_s[users], reqs.start_s[users])
