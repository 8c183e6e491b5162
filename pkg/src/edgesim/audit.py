"""Independent constraint checker.

Re-evaluates every cache/routing constraint from the raw scenario with plain
loops and the scalar latency functions, sharing no code with the LP builder
or the repair pass.
"""

from __future__ import annotations

import numpy as np

from .catalog import SubmodelRef, load_latency
from .scenario import RequestBatch, Scenario, end_to_end_latency

SIZE_SLACK_MB = 1e-9


def audit_plan(scn: Scenario, prev, reqs: RequestBatch, cache, route) -> list[str]:
    """Return a list of human-readable violations (empty when the plan is feasible).

    ``cache[n][m]`` is the cached submodel index, ``route[u]`` the serving BS
    or a negative value for the cloud.
    """
    cat = scn.catalog
    net = scn.network
    out = []
    N, M = net.n_bs, len(cat)
    cache = np.asarray(cache)
    if cache.shape != (N, M):
        return [f"cache shape {cache.shape} != {(N, M)}"]
    for n in range(N):
        used = 0.0
        for m in range(M):
            h = int(cache[n, m])
            if not 0 <= h < cat.models[m].n_levels:
                out.append(f"bs {n} model {m}: submodel {h} does not exist")
                continue
            used += cat.models[m].submodels[h].size_mb
        if used > float(net.memory_mb[n]) + SIZE_SLACK_MB:
            out.append(f"bs {n}: memory {used:.4f} MB > {float(net.memory_mb[n])} MB")
    if len(route) != len(reqs):
        out.append("route length differs from request count")
        return out
    for req in reqs:
        target = int(route[req.user])
        if target < 0:
            continue
        if target >= N:
            out.append(f"user {req.user}: unknown BS {target}")
            continue
        h = int(cache[target, req.model])
        if h == 0:
            out.append(f"user {req.user}: routed to bs {target} which does not cache model {req.model}")
            continue
        sub = cat.models[req.model].submodels[h]
        t = end_to_end_latency(req, target, sub, net)
        if t > req.deadline_s:
            out.append(f"user {req.user}: latency {t:.5f} s > deadline {req.deadline_s} s")
        p = int(prev[target][req.model])
        d = load_latency(SubmodelRef(req.model, p), SubmodelRef(req.model, h), cat)
        if d > req.start_s:
            out.append(f"user {req.user}: load time {d:.5f} s > start {req.start_s:.5f} s")
    return out


def audit_online(scn: Scenario, cached, pending_top=None) -> list[str]:
    """Memory check for an online cache; ``pending_top`` adds in-flight download targets."""
    cat = scn.catalog
    out = []
    cached = np.asarray(cached)
    for n in range(scn.n_bs):
        used = 0.0
        for m in range(len(cat)):
            h = int(cached[n, m])
            if pending_top is not None:
                h = max(h, int(pending_top[n, m]))
            used += cat.models[m].submodels[h].size_mb
        if used > float(scn.network.memory_mb[n]) + SIZE_SLACK_MB:
            out.append(f"bs {n}: memory {used:.4f} MB > {float(scn.network.memory_mb[n])} MB")
    return out
