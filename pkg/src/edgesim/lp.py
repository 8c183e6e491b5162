"""Sparse linear programs: ``max c.x`` s.t. ``A_i.x (<= | =) b_i``, ``lo <= x <= hi``.

``solve`` dispatches to HiGHS (through scipy) by default.  A small dense
two-phase simplex with Bland's rule is available as ``method="simplex"`` for
tiny problems and for cross-checking.

Tolerances used everywhere downstream: feasibility 1e-6 absolute,
optimality 1e-6 relative.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import scipy.sparse as sp
from scipy.optimize import linprog

from .errors import LpError

FEAS_TOL = 1e-6
OPT_TOL = 1e-6
BOUND_TOL = 1e-9

LE, EQ = "<=", "="


class LpStatus(enum.Enum):
    OPTIMAL = "optimal"
    INFEASIBLE = "infeasible"
    UNBOUNDED = "unbounded"


@dataclass(eq=False)
class LpProblem:
    c: np.ndarray
    A: sp.csr_matrix
    sense: np.ndarray  # per row, LE or EQ
    rhs: np.ndarray
    lo: np.ndarray
    hi: np.ndarray
    row_names: list[str] | None = None

    @property
    def n_vars(self) -> int:
        return len(self.c)

    @property
    def n_rows(self) -> int:
        return self.A.shape[0]

    def validate(self) -> None:
        V = self.n_vars
        if self.A.shape[1] != V or len(self.lo) != V or len(self.hi) != V:
            raise LpError("dimension mismatch between objective, matrix and bounds")
        if len(self.rhs) != self.n_rows or len(self.sense) != self.n_rows:
            raise LpError("dimension mismatch between rows and right-hand sides")
        if not (np.all(np.isfinite(self.c)) and np.all(np.isfinite(self.A.data)) and np.all(np.isfinite(self.rhs))):
            raise LpError("coefficients must be finite")
        if np.any(np.isnan(self.lo)) or np.any(np.isnan(self.hi)) or np.any(self.lo > self.hi):
            raise LpError("bounds must satisfy lo <= hi")
        if not np.all(np.isin(self.sense, (LE, EQ))):
            raise LpError("row relation must be '<=' or '='")

    def row_activity(self, x: np.ndarray) -> np.ndarray:
        return self.A @ x

    def max_violation(self, x: np.ndarray) -> float:
        act = self.row_activity(x)
        le = self.sense == LE
        viol = np.concatenate([
            np.maximum(act[le] - self.rhs[le], 0.0),
            np.abs(act[~le] - self.rhs[~le]),
        ])
        return float(viol.max()) if len(viol) else 0.0


class LpBuilder:
    """Accumulates rows as COO triplets; ``build()`` freezes to ``LpProblem``."""

    def __init__(self, n_vars: int = 0):
        self.c: list[float] = [0.0] * n_vars
        self.lo: list[float] = [0.0] * n_vars
        self.hi: list[float] = [np.inf] * n_vars
        self._rows: list[np.ndarray] = []
        self._cols: list[np.ndarray] = []
        self._vals: list[np.ndarray] = []
        self.sense: list[str] = []
        self.rhs: list[float] = []
        self.names: list[str] = []

    def add_var(self, obj: float = 0.0, lo: float = 0.0, hi: float = np.inf) -> int:
        self.c.append(obj)
        self.lo.append(lo)
        self.hi.append(hi)
        return len(self.c) - 1

    def add_row(self, cols, vals, sense: str, rhs: float, name: str = "") -> int:
        i = len(self.rhs)
        cols = np.asarray(cols, dtype=np.int64)
        self._rows.append(np.full(len(cols), i, dtype=np.int64))
        self._cols.append(cols)
        self._vals.append(np.broadcast_to(np.asarray(vals, dtype=float), cols.shape))
        self.sense.append(sense)
        self.rhs.append(float(rhs))
        self.names.append(name)
        return i

    def add_coo(self, rows, cols, vals, sense, rhs, names=None) -> None:
        """Append ``len(rhs)`` rows at once from COO triplets with row-local indices."""
        base = len(self.rhs)
        rhs = np.asarray(rhs, dtype=float)
        self._rows.append(np.asarray(rows, dtype=np.int64) + base)
        self._cols.append(np.asarray(cols, dtype=np.int64))
        self._vals.append(np.asarray(vals, dtype=float))
        self.sense.extend([sense] * len(rhs))
        self.rhs.extend(rhs.tolist())
        self.names.extend(names if names is not None else [""] * len(rhs))

    def build(self) -> LpProblem:
        V = len(self.c)
        m = len(self.rhs)
        if self._rows:
            r = np.concatenate(self._rows)
            c = np.concatenate(self._cols)
            v = np.concatenate(self._vals)
        else:
            r = c = np.zeros(0, dtype=np.int64)
            v = np.zeros(0)
        A = sp.csr_matrix((v, (r, c)), shape=(m, V))
        A.sum_duplicates()
        return LpProblem(np.array(self.c, dtype=float), A, np.array(self.sense, dtype=object),
                         np.array(self.rhs, dtype=float), np.array(self.lo, dtype=float),
                         np.array(self.hi, dtype=float), self.names)


@dataclass(eq=False)
class LpSolution:
    status: LpStatus
    x: np.ndarray | None = None
    objective: float | None = None
    # dual certificate for max c.x: y for rows (y >= 0 on <= rows), z_lo <= 0, z_hi >= 0 reduced costs
    y: np.ndarray | None = None
    extra: dict = field(default_factory=dict)

    @property
    def optimal(self) -> bool:
        return self.status is LpStatus.OPTIMAL


def solve(p: LpProblem, method: str = "highs") -> LpSolution:
    p.validate()
    if method == "highs":
        return _solve_highs(p)
    if method == "simplex":
        return _solve_dense_simplex(p)
    raise LpError(f"unknown LP method {method!r}")


def _solve_highs(p: LpProblem) -> LpSolution:
    le = p.sense == LE
    A = p.A.tocsr()
    bounds = np.column_stack([p.lo, p.hi])
    kw = {}
    if le.any():
        kw.update(A_ub=A[le], b_ub=p.rhs[le])
    if (~le).any():
        kw.update(A_eq=A[~le], b_eq=p.rhs[~le])
    res = linprog(-p.c, bounds=bounds, method="highs", **kw)
    if res.status == 2:
        return LpSolution(LpStatus.INFEASIBLE)
    if res.status == 3:
        return LpSolution(LpStatus.UNBOUNDED)
    if res.status != 0:
        raise LpError(f"HiGHS failed: {res.message}")
    x = np.clip(res.x, p.lo, p.hi)
    y = np.zeros(p.n_rows)
    if le.any():
        y[le] = -res.ineqlin.marginals
    if (~le).any():
        y[~le] = -res.eqlin.marginals
    return LpSolution(LpStatus.OPTIMAL, x, float(p.c @ x), y,
                      {"dual_lo": -res.lower.marginals, "dual_hi": -res.upper.marginals})


def dual_bound(p: LpProblem, sol: LpSolution) -> float:
    """Objective of the dual certificate; an upper bound on any feasible ``c.x`` when dual feasible."""
    if sol.y is None:
        raise LpError("solution carries no dual certificate")
    zl = sol.extra["dual_lo"]
    zh = sol.extra["dual_hi"]
    total = float(p.rhs @ sol.y)
    total += float(np.sum(np.where(zl != 0, zl * np.where(np.isfinite(p.lo), p.lo, 0.0), 0.0)))
    total += float(np.sum(np.where(zh != 0, zh * np.where(np.isfinite(p.hi), p.hi, 0.0), 0.0)))
    return total


# --- dense simplex ------------------------------------------------------------

_EPS = 1e-9


def _solve_dense_simplex(p: LpProblem) -> LpSolution:
    """Two-phase tableau simplex with Bland's rule (smallest-index entering/leaving)."""
    A = p.A.toarray()
    V = p.n_vars
    # substitute x = lo + x' (finite lo) or x = hi - x' (only hi finite) or x = x+ - x- (free)
    cols = []  # (orig var, sign, shift)
    for j in range(V):
        lo, hi = p.lo[j], p.hi[j]
        if np.isfinite(lo):
            cols.append((j, 1.0, lo))
        elif np.isfinite(hi):
            cols.append((j, -1.0, hi))
        else:
            cols.append((j, 1.0, 0.0))
            cols.append((j, -1.0, 0.0))
    K = len(cols)
    T = np.zeros((A.shape[0], K))
    shift = np.zeros(V)
    c = np.zeros(K)
    for k, (j, s, sh) in enumerate(cols):
        T[:, k] = s * A[:, j]
        c[k] = s * p.c[j]
        shift[j] = sh
    b = p.rhs - A @ shift
    rows = [(T[i], p.sense[i], b[i]) for i in range(A.shape[0])]
    # finite upper bound on a shifted variable becomes a row
    for k, (j, s, sh) in enumerate(cols):
        if s > 0 and np.isfinite(p.lo[j]) and np.isfinite(p.hi[j]):
            e = np.zeros(K)
            e[k] = 1.0
            rows.append((e, LE, p.hi[j] - p.lo[j]))
    m = len(rows)
    n_slack = sum(1 for r in rows if r[1] == LE)
    n_cols = K + n_slack + m  # structural, slack, artificial
    tab = np.zeros((m, n_cols + 1))
    basis = np.zeros(m, dtype=int)
    si = K
    for i, (coef, sense, rhs) in enumerate(rows):
        tab[i, :K] = coef
        if sense == LE:
            tab[i, si] = 1.0
            si += 1
        if rhs < 0:
            tab[i, :n_cols] *= -1
            rhs = -rhs
        tab[i, -1] = rhs
        tab[i, K + n_slack + i] = 1.0
        basis[i] = K + n_slack + i
    art = np.arange(K + n_slack, n_cols)

    # phase 1: minimise sum of artificials == maximise -sum
    obj1 = np.zeros(n_cols)
    obj1[art] = -1.0
    status = _simplex_iter(tab, basis, obj1, allowed=np.ones(n_cols, dtype=bool))
    val1 = obj1[basis] @ tab[:, -1]
    if val1 < -FEAS_TOL:
        return LpSolution(LpStatus.INFEASIBLE)
    # drive artificials out of the basis where possible
    for i in range(m):
        if basis[i] >= K + n_slack:
            nz = np.flatnonzero(np.abs(tab[i, :K + n_slack]) > _EPS)
            if len(nz):
                _pivot(tab, basis, i, nz[0])
    allowed = np.ones(n_cols, dtype=bool)
    allowed[art] = False
    obj2 = np.zeros(n_cols)
    obj2[:K] = c
    status = _simplex_iter(tab, basis, obj2, allowed)
    if status == "unbounded":
        return LpSolution(LpStatus.UNBOUNDED)
    z = np.zeros(n_cols)
    z[basis] = tab[:, -1]
    x = shift.copy()
    for k, (j, s, sh) in enumerate(cols):
        x[j] += s * z[k]
    x = np.clip(x, p.lo, p.hi)
    return LpSolution(LpStatus.OPTIMAL, x, float(p.c @ x))


def _pivot(tab, basis, r, e):
    tab[r] /= tab[r, e]
    for i in range(tab.shape[0]):
        if i != r and tab[i, e] != 0.0:
            tab[i] -= tab[i, e] * tab[r]
    basis[r] = e


def _simplex_iter(tab, basis, obj, allowed, max_iter=50_000):
    n_cols = tab.shape[1] - 1
    for _ in range(max_iter):
        cb = obj[basis]
        reduced = obj[:n_cols] - cb @ tab[:, :n_cols]
        reduced[basis] = 0.0
        cand = np.flatnonzero((reduced > _EPS) & allowed)
        if not len(cand):
            return "optimal"
        e = cand[0]
        col = tab[:, e]
        pos = col > _EPS
        if not pos.any():
            return "unbounded"
        ratios = np.full(len(col), np.inf)
        ratios[pos] = tab[pos, -1] / col[pos]
        best = ratios.min()
        ties = np.flatnonzero(ratios <= best + _EPS)
        r = ties[np.argmin(basis[ties])]
        _pivot(tab, basis, r, e)
    raise LpError("simplex iteration limit reached")


# --- LP text dump -------------------------------------------------------------

def to_lp_text(p: LpProblem, var_names: list[str] | None = None) -> str:
    """CPLEX LP format, for cross-checking with external solvers."""
    names = var_names or [f"v{j}" for j in range(p.n_vars)]

    def expr(idx, vals):
        parts = []
        for j, v in zip(idx, vals):
            sign = "-" if v < 0 else "+"
            parts.append(f"{sign} {abs(v):.17g} {names[j]}")
        s = " ".join(parts) or "0 " + names[0]
        return s[2:] if s.startswith("+ ") else s

    nz = np.flatnonzero(p.c)
    lines = ["Maximize", " obj: " + expr(nz, p.c[nz]), "Subject To"]
    A = p.A.tocsr()
    for i in range(p.n_rows):
        lo, hi = A.indptr[i], A.indptr[i + 1]
        op = "<=" if p.sense[i] == LE else "="
        rname = (p.row_names[i] if p.row_names and p.row_names[i] else f"r{i}")
        rname = rname.replace("[", "_").replace("]", "").replace(",", "_")
        lines.append(f" {rname}: {expr(A.indices[lo:hi], A.data[lo:hi])} {op} {p.rhs[i]:.17g}")
    lines.append("Bounds")
    for j in range(p.n_vars):
        lo = "-inf" if np.isneginf(p.lo[j]) else f"{p.lo[j]:.17g}"
        hi = "+inf" if np.isposinf(p.hi[j]) else f"{p.hi[j]:.17g}"
        lines.append(f" {lo} <= {names[j]} <= {hi}")
    lines.append("End")
    return "\n".join(lines) + "\n"


def dump_lp(p: LpProblem, path: str | Path, var_names: list[str] | None = None) -> None:
    Path(path).write_text(to_lp_text(p, var_names))
