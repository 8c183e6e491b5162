"""Per-period records, run-level aggregation and CSV/JSON persistence.

Floats are rounded to 9 significant digits when a record is created, so a
record written to CSV and read back compares equal to the in-memory one and
aggregates to the same bits.
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import asdict, dataclass
from pathlib import Path
from typing import Iterable

HEADER = (
    "run_id", "seed", "policy", "partitioned", "period", "n_requests", "n_hits", "avg_precision",
    "avg_qoe", "hit_rate", "memory_utilization", "objective", "lp_bound", "bytes_in_flight",
)
_FLOATS = ("avg_precision", "avg_qoe", "hit_rate", "memory_utilization", "objective", "lp_bound",
           "bytes_in_flight")


def canon(x: float | None) -> float | None:
    if x is None:
        return None
    return float(f"{float(x):.9g}")


def _fmt(x) -> str:
    if x is None:
        return ""
    if isinstance(x, bool):
        return "1" if x else "0"
    if isinstance(x, float):
        return f"{x:.9g}"
    return str(x)


@dataclass(frozen=True)
class PeriodRecord:
    run_id: str
    seed: int
    policy: str
    partitioned: bool
    period: int
    n_requests: int
    n_hits: int
    avg_precision: float
    avg_qoe: float
    hit_rate: float
    memory_utilization: float
    objective: float | None = None
    lp_bound: float | None = None
    bytes_in_flight: float | None = None

    def __post_init__(self):
        for name in _FLOATS:
            object.__setattr__(self, name, canon(getattr(self, name)))
        if not 0 <= self.n_hits <= self.n_requests:
            raise ValueError("n_hits must lie in [0, n_requests]")

    def row(self) -> list[str]:
        return [_fmt(getattr(self, k)) for k in HEADER]

    @classmethod
    def from_row(cls, row: dict) -> "PeriodRecord":
        def opt(k):
            return float(row[k]) if row[k] != "" else None

        return cls(
            run_id=row["run_id"], seed=int(row["seed"]), policy=row["policy"],
            partitioned=row["partitioned"] == "1", period=int(row["period"]),
            n_requests=int(row["n_requests"]), n_hits=int(row["n_hits"]),
            avg_precision=float(row["avg_precision"]), avg_qoe=float(row["avg_qoe"]),
            hit_rate=float(row["hit_rate"]), memory_utilization=float(row["memory_utilization"]),
            objective=opt("objective"), lp_bound=opt("lp_bound"), bytes_in_flight=opt("bytes_in_flight"),
        )


@dataclass(frozen=True)
class RunMetrics:
    avg_precision: float
    avg_qoe: float
    hit_rate: float
    memory_utilization: float
    n_requests: int
    n_hits: int
    n_periods: int
    objective: float | None
    lp_bound: float | None

    def to_dict(self) -> dict:
        return asdict(self)


def _wmean(vals, weights) -> float:
    total = sum(weights)
    if total == 0:
        return 0.0
    return math.fsum(v * w for v, w in zip(vals, weights)) / total


def aggregate(records: Iterable[PeriodRecord]) -> RunMetrics:
    """Request-weighted precision/QoE, pooled hit rate, period-mean utilization."""
    recs = list(records)
    if not recs:
        raise ValueError("cannot aggregate an empty record stream")
    n = [r.n_requests for r in recs]
    hits = sum(r.n_hits for r in recs)
    total = sum(n)
    objs = [r.objective for r in recs if r.objective is not None]
    bounds = [r.lp_bound for r in recs if r.lp_bound is not None]
    return RunMetrics(
        avg_precision=_wmean([r.avg_precision for r in recs], n),
        avg_qoe=_wmean([r.avg_qoe for r in recs], n),
        hit_rate=hits / total if total else 0.0,
        memory_utilization=math.fsum(r.memory_utilization for r in recs) / len(recs),
        n_requests=total,
        n_hits=hits,
        n_periods=len(recs),
        objective=math.fsum(objs) if objs else None,
        lp_bound=math.fsum(bounds) if bounds else None,
    )


def write_csv(path: str | Path, records: Iterable[PeriodRecord]) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(HEADER)
        for r in records:
            w.writerow(r.row())


def read_csv(path: str | Path) -> list[PeriodRecord]:
    with Path(path).open(newline="") as fh:
        reader = csv.DictReader(fh)
        if tuple(reader.fieldnames or ()) != HEADER:
            raise ValueError(f"unexpected CSV header in {path}")
        return [PeriodRecord.from_row(row) for row in reader]


def write_summary(path: str | Path, config: dict, metrics: RunMetrics, extra: dict | None = None) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    body = {"config": config, "metrics": metrics.to_dict()}
    if extra:
        body.update(extra)
    path.write_text(json.dumps(body, indent=2, sort_keys=True) + "\n")


def collate(root: str | Path) -> list[dict]:
    """Gather every per-run summary JSON under ``root`` (sorted by path)."""
    root = Path(root)
    out = []
    for p in sorted(root.rglob("*.json")):
        if p.name == "summary.json":
            continue
        d = json.loads(p.read_text())
        if "metrics" in d:
            d["path"] = str(p.relative_to(root))
            out.append(d)
    return out

