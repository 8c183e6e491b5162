"""Randomized rounding of the window LP and the feasibility repair pass.

Rounding samples one submodel per (BS, model) from the fractional cache
column (multinoulli), then keeps each fractional route ``A[n,u,h]`` with
probability ``A/x`` on the sampled submodel.  Both steps preserve
expectations, so every linear row holds in expectation.  ``repair`` then
downsizes caches and drops routes until every row holds exactly.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

import numpy as np

from .errors import InvalidFractional
from .formulation import Fractional, load_coefficients, solve_window
from .scenario import RequestBatch, Scenario

FRAC_TOL = 1e-6
CLOUD = -1


@dataclass(frozen=True, eq=False)
class RoundedPlan:
    x: np.ndarray  # (N, M, W) one-hot
    A: np.ndarray  # (N, U, W) 0/1
    objective: float
    violations: dict = field(default_factory=dict)

    @property
    def cache(self) -> np.ndarray:
        return self.x.argmax(axis=2)

    @property
    def y(self) -> np.ndarray:
        return self.A.sum(axis=2) > 0


@dataclass(frozen=True, eq=False)
class FeasiblePlan:
    cache: np.ndarray  # (N, M) submodel index per (BS, model)
    route: np.ndarray  # (U,) serving BS, CLOUD for the cloud
    precision: np.ndarray  # (U,)

    @property
    def objective(self) -> float:
        return math.fsum(self.precision.tolist())

    @property
    def hits(self) -> int:
        return int((self.route != CLOUD).sum())


def _check_fractional(x: np.ndarray, A: np.ndarray, model: np.ndarray, levels: np.ndarray):
    N, M, W = x.shape
    pad = np.arange(W)[None, :] >= levels[:, None]
    if np.any(np.abs(x[:, pad]) > FRAC_TOL):
        raise InvalidFractional("cache mass on a submodel the model does not have")
    s = x.sum(axis=2)
    if np.any(np.abs(s - 1.0) > FRAC_TOL) or np.any(x < -FRAC_TOL):
        raise InvalidFractional("cache columns must lie on the simplex")
    xu = x[:, model, :]  # (N, U, W)
    if np.any(A - xu > FRAC_TOL) or np.any(A < -FRAC_TOL):
        raise InvalidFractional("route mass exceeds cache mass")
    xn = np.clip(x, 0.0, None)
    xn = xn / xn.sum(axis=2, keepdims=True)
    xu = xn[:, model, :]
    with np.errstate(invalid="ignore", divide="ignore"):
        ratio = np.where(xu > 0, np.clip(A, 0.0, None) / xu, 0.0)
    return xn, np.clip(ratio, 0.0, 1.0)


def _sample(xn, ratio, model, rng, trials):
    """Draw ``trials`` independent (x-index, phi) pairs, vectorized."""
    N, M, W = xn.shape
    cum = np.cumsum(xn, axis=2)
    cum[..., -1] = 1.0
    r = rng.random((trials, N, M))
    idx = (r[..., None] >= cum[None]).sum(axis=3)
    idx = np.minimum(idx, W - 1)
    phi = rng.random((trials,) + ratio.shape) < ratio[None]
    return idx, phi


def round_plan(frac: Fractional, model: np.ndarray, levels: np.ndarray, prec: np.ndarray,
               rng: np.random.Generator) -> RoundedPlan:
    """One rounded plan; ``prec`` is the (M, W) precision table."""
    x, A = frac.x, frac.A
    xn, ratio = _check_fractional(x, A, model, levels)
    idx, phi = _sample(xn, ratio, model, rng, 1)
    idx, phi = idx[0], phi[0]
    N, M, W = x.shape
    xt = np.zeros((N, M, W), dtype=np.int8)
    xt[np.arange(N)[:, None], np.arange(M)[None, :], idx] = 1
    At = (xt[:, model, :].astype(bool) & phi).astype(np.int8)
    obj = float((At * prec[model][None]).sum())
    return RoundedPlan(xt, At, obj)


def violation_report(plan: RoundedPlan, scn: Scenario, prev: np.ndarray, reqs: RequestBatch,
                     lp_objective: float) -> dict:
    """Worst multiplicative excess per constraint family (1.0 = tight, >1 violated)."""
    cat = scn.catalog
    N, M = plan.cache.shape
    used = cat.size[np.arange(M)[None, :], plan.cache].sum(axis=1)
    R = scn.network.memory_mb
    lat = _route_latency(scn, reqs)
    load = load_coefficients(scn, prev, reqs)
    routes = plan.A.sum(axis=(0, 2))
    ddl = (plan.A * np.where(plan.A > 0, lat, 0.0)).sum(axis=(0, 2))
    ld = (plan.A * load).sum(axis=(0, 2))

    def ratio(lhs, rhs):
        with np.errstate(divide="ignore", invalid="ignore"):
            r = np.where(rhs > 0, lhs / np.where(rhs > 0, rhs, 1.0), np.where(lhs > 0, np.inf, 0.0))
        return float(r.max()) if len(r) else 0.0

    n_sub = cat.n_submodels
    delta = math.sqrt(4 * math.log(max(n_sub, 2)) / lp_objective) if lp_objective > 0 else math.inf
    return {
        "memory": ratio(used, R),
        "route": float(routes.max()) if len(routes) else 0.0,
        "deadline": ratio(ddl, reqs.deadline_s),
        "load": ratio(ld, reqs.start_s),
        "objective_ratio": plan.objective / lp_objective if lp_objective > 0 else math.nan,
        "delta": delta,
    }


def dump_report(report: dict, path) -> None:
    with open(path, "w") as fh:
        json.dump(report, fh, indent=2, allow_nan=True)


def _route_latency(scn: Scenario, reqs: RequestBatch) -> np.ndarray:
    lat = scn.request_latency(reqs)
    return np.where(np.isfinite(lat), lat, np.inf)


def expectation_check(frac: Fractional, scn: Scenario, prev: np.ndarray, reqs: RequestBatch,
                      trials: int = 10_000, rng: np.random.Generator | None = None,
                      chunk: int = 500) -> dict:
    """Monte Carlo means of the objective and every row LHS against the fractional values."""
    if trials < 1000:
        raise ValueError("expectation_check needs at least 1000 trials")
    rng = rng or np.random.default_rng(0)
    cat = scn.catalog
    model = reqs.model
    xn, ratio = _check_fractional(frac.x, frac.A, model, cat.levels)
    N, M, W = frac.x.shape
    U = len(reqs)
    size = np.where(np.isfinite(cat.size), cat.size, 0.0)
    prec = cat.precision[model]  # (U, W)
    lat = scn.request_latency(reqs)
    lat = np.where(np.isfinite(lat), lat, 0.0)
    load = load_coefficients(scn, prev, reqs)

    def rows(x_idx, At):
        # x_idx (T, N, M), At (T, N, U, W) -> dict of (T, k) LHS arrays
        mem = size[np.arange(M)[None, None, :], x_idx].sum(axis=2)
        return {
            "objective": (At * prec[None, None]).sum(axis=(1, 2, 3))[:, None],
            "memory": mem,
            "route": At.sum(axis=(1, 3)),
            "deadline": (At * lat[None]).sum(axis=(1, 3)),
            "load": (At * load[None]).sum(axis=(1, 3)),
        }

    frac_rows = {
        "objective": np.array([(frac.A * prec[None]).sum()]),
        "memory": (frac.x * size[None]).sum(axis=(1, 2)),
        "route": frac.A.sum(axis=(0, 2)),
        "deadline": (frac.A * lat).sum(axis=(0, 2)),
        "load": (frac.A * load).sum(axis=(0, 2)),
    }
    s1 = {k: np.zeros_like(v) for k, v in frac_rows.items()}
    s2 = {k: np.zeros_like(v) for k, v in frac_rows.items()}
    one_hot_ok = True
    done = 0
    while done < trials:
        t = min(chunk, trials - done)
        idx, phi = _sample(xn, ratio, model, rng, t)
        xt = np.arange(W)[None, None, None, :] == idx[..., None]  # (T, N, M, W)
        one_hot_ok &= bool(np.all(xt.sum(axis=3) == 1))
        At = (xt[:, :, model, :] & phi).astype(float)
        for k, v in rows(idx, At).items():
            d = v - frac_rows[k]  # shifted to keep the variance free of cancellation
            s1[k] += d.sum(axis=0)
            s2[k] += (d * d).sum(axis=0)
        done += t
    out = {"trials": trials, "one_hot": one_hot_ok, "rows": {}}
    flagged = []
    for k, fv in frac_rows.items():
        shift = s1[k] / trials
        mean = fv + shift
        var = np.maximum(s2[k] / trials - shift * shift, 0.0)
        se = np.sqrt(var / trials)
        bad = mean > fv + 3 * se + 1e-9
        out["rows"][k] = {"mean": mean, "se": se, "fractional": fv, "flagged": bad}
        if k != "objective" and bad.any():
            flagged.append(k)
    out["flagged"] = flagged
    obj = out["rows"]["objective"]
    out["objective_mean"] = float(obj["mean"][0])
    out["objective_frac"] = float(obj["fractional"][0])
    return out


def repair(plan: RoundedPlan | FeasiblePlan, scn: Scenario, prev: np.ndarray,
           reqs: RequestBatch) -> FeasiblePlan:
    """Make a rounded plan satisfy every constraint exactly.

    Memory: while a BS is over capacity, the model whose currently-routed
    users earn the least summed precision is downsized to the largest
    smaller submodel that fits (ties: largest footprint, then lowest id),
    or evicted with its users falling back to the cloud.  Then routes that
    miss the deadline or the loading time are dropped, and a user with
    several routes keeps the most precise one (then lowest latency, then
    lowest BS id).
    """
    cat = scn.catalog
    model = reqs.model
    N, M = scn.n_bs, len(cat)
    U = len(reqs)
    if isinstance(plan, FeasiblePlan):
        cache = plan.cache.astype(np.int64).copy()
        routed = np.zeros((N, U), dtype=bool)
        users = np.flatnonzero(plan.route != CLOUD)
        routed[plan.route[users], users] = True
    else:
        cache = plan.cache.astype(np.int64).copy()
        routed = plan.A.sum(axis=2) > 0
    # a route is only meaningful on a nonempty cached submodel of the user's model
    routed &= cache[:, model] > 0
    size = cat.size
    R = scn.network.memory_mb
    mrange = np.arange(M)

    for n in range(N):
        while True:
            fp = size[mrange, cache[n]]
            total = fp.sum()
            if total <= R[n]:
                break
            cached = np.flatnonzero(cache[n] > 0)
            p_now = cat.precision[mrange, cache[n]]
            benefit = np.array([p_now[m] * routed[n, model == m].sum() for m in cached])
            # least benefit first, then largest footprint, then lowest id
            order = np.lexsort((cached, -fp[cached], benefit))
            m = int(cached[order[0]])
            cur = int(cache[n, m])
            rest = total - fp[m]
            new = 0
            for h in range(cur - 1, 0, -1):
                if rest + size[m, h] <= R[n]:
                    new = h
                    break
            cache[n, m] = new
            if new == 0:
                routed[n, model == m] = False

    lat = scn.request_latency(reqs)  # (N, U, W)
    h_u = cache[:, model]  # (N, U)
    lat_u = np.take_along_axis(lat, h_u[:, :, None], axis=2)[:, :, 0]
    load_u = cat.switch[model[None, :], np.asarray(prev)[:, model], h_u]
    ok = (lat_u <= reqs.deadline_s[None, :]) & (load_u <= reqs.start_s[None, :]) & (h_u > 0)
    routed &= ok

    prec_u = cat.precision[model[None, :], h_u]  # (N, U)
    route = np.full(U, CLOUD, dtype=np.int64)
    precision = np.zeros(U)
    for u in np.flatnonzero(routed.any(axis=0)):
        cand = np.flatnonzero(routed[:, u])
        best = cand[np.lexsort((cand, lat_u[cand, u], -prec_u[cand, u]))[0]]
        route[u] = best
        precision[u] = prec_u[best, u]
    return FeasiblePlan(cache, route, precision)


@dataclass(frozen=True, eq=False)
class WindowResult:
    plan: FeasiblePlan
    fractional: Fractional
    rounded: RoundedPlan


def cocar_window(scn: Scenario, prev: np.ndarray, reqs: RequestBatch, rng: np.random.Generator,
                 k: int = 1, var_cap: int = 20_000) -> WindowResult:
    """Solve, round and repair one window; with ``k > 1`` keep the best of ``k`` repaired draws."""
    if k < 1:
        raise ValueError("k must be >= 1")
    frac = solve_window(scn, prev, reqs, var_cap=var_cap, rng=rng)
    best = None
    for _ in range(k):
        rp = round_plan(frac, reqs.model, scn.catalog.levels, scn.catalog.precision, rng)
        rp = RoundedPlan(rp.x, rp.A, rp.objective, violation_report(rp, scn, prev, reqs, frac.objective))
        fp = repair(rp, scn, prev, reqs)
        if best is None or fp.objective > best[0].objective:
            best = (fp, rp)
    return WindowResult(best[0], frac, best[1])
