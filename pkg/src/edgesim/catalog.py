"""Dynamic-DNN model catalog: nested submodels and their switching costs.

Every model type owns an ordered list of submodels ``h0 <= h1 <= ... <= hH``
where ``h0`` is the empty placeholder (nothing cached).  Submodel ``j`` of a
model is built from submodel ``j-1`` by adding ``delta_mb`` megabytes of
layers, so sizes, flops and precision all grow along the list.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path
from typing import NamedTuple, Sequence

import numpy as np

from .errors import CatalogError, IncomparableSubmodels

SIZE_TOL_MB = 1e-6

# Attributes of the three ViT submodels (memory MB, GFlops, precision).
VIT_SUBMODELS = (
    (174.32, 5.70, 0.8417),
    (227.42, 7.56, 0.9413),
    (342.05, 11.29, 0.9894),
)

# Loading time in seconds; row = original submodel (0 = not cached), col = final submodel 1..3.
VIT_LOAD_S = (
    (0.68860, 0.87696, 1.05821),
    (0.00000, 0.24794, 0.46098),
    (0.04238, 0.00000, 0.25082),
    (0.04725, 0.04242, 0.00000),
)

DEFAULT_MODEL_NAMES = (
    "vit", "swin", "deit", "resnet50", "convnext", "efficientnet", "regnet", "mobilevit",
)
CATALOG_SEED = 20250


@dataclass(frozen=True)
class SubmodelSpec:
    size_mb: float
    gflops: float
    precision: float
    delta_mb: float

    @property
    def is_empty(self) -> bool:
        return self.size_mb == 0.0 and self.gflops == 0.0


EMPTY = SubmodelSpec(0.0, 0.0, 0.0, 0.0)


class SubmodelRef(NamedTuple):
    """A (model index, submodel index) pair; index 0 is the empty submodel."""

    model: int
    index: int


@dataclass(frozen=True, eq=False)
class ModelType:
    name: str
    submodels: tuple[SubmodelSpec, ...]
    switch_s: np.ndarray  # (H+1, H+1): switch_s[from, to], row/col 0 = empty submodel

    def __post_init__(self):
        subs = self.submodels
        if not subs or not subs[0].is_empty or subs[0].precision != 0.0:
            raise CatalogError(f"{self.name}: first submodel must be the empty one")
        for a, b in zip(subs, subs[1:]):
            if not (b.size_mb > a.size_mb and b.gflops > a.gflops and b.precision > a.precision):
                raise CatalogError(f"{self.name}: submodels must strictly grow in size, flops and precision")
        if any(not 0.0 <= s.precision <= 1.0 for s in subs):
            raise CatalogError(f"{self.name}: precision outside [0, 1]")
        cum = np.cumsum([s.delta_mb for s in subs])
        if np.any(np.abs(cum - [s.size_mb for s in subs]) > SIZE_TOL_MB):
            raise CatalogError(f"{self.name}: delta sizes do not add up to submodel sizes")
        d = np.asarray(self.switch_s, dtype=float)
        k = len(subs)
        if d.shape != (k, k):
            raise CatalogError(f"{self.name}: switch matrix must be {k}x{k}")
        if np.any(d < 0) or np.any(np.diag(d) != 0):
            raise CatalogError(f"{self.name}: switch times must be >= 0 with a zero diagonal")
        if k > 1 and np.any(d[0, 1:] < d[1:, 1:].max(axis=0)):
            raise CatalogError(f"{self.name}: fresh loads must cost at least as much as switches")
        d.setflags(write=False)
        object.__setattr__(self, "switch_s", d)

    @property
    def n_levels(self) -> int:
        """Number of submodels including the empty one."""
        return len(self.submodels)

    @property
    def top(self) -> int:
        return len(self.submodels) - 1


@dataclass(frozen=True, eq=False)
class ModelCatalog:
    models: tuple[ModelType, ...]
    partitioned: bool = True
    # dense (M, Hmax+1) views, padded past each model's last level
    size: np.ndarray = field(init=False, repr=False)
    gflops: np.ndarray = field(init=False, repr=False)
    precision: np.ndarray = field(init=False, repr=False)
    delta: np.ndarray = field(init=False, repr=False)
    switch: np.ndarray = field(init=False, repr=False)
    levels: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        if not self.models:
            raise CatalogError("catalog needs at least one model")
        width = max(m.n_levels for m in self.models)
        M = len(self.models)
        size = np.full((M, width), np.inf)
        flops = np.full((M, width), np.inf)
        prec = np.zeros((M, width))
        delta = np.full((M, width), np.inf)
        switch = np.full((M, width, width), np.inf)
        for i, m in enumerate(self.models):
            k = m.n_levels
            size[i, :k] = [s.size_mb for s in m.submodels]
            flops[i, :k] = [s.gflops for s in m.submodels]
            prec[i, :k] = [s.precision for s in m.submodels]
            delta[i, :k] = [s.delta_mb for s in m.submodels]
            switch[i, :k, :k] = m.switch_s
        levels = np.array([m.n_levels for m in self.models])
        for name, arr in (("size", size), ("gflops", flops), ("precision", prec),
                          ("delta", delta), ("switch", switch), ("levels", levels)):
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)

    def __len__(self) -> int:
        return len(self.models)

    @property
    def width(self) -> int:
        return self.size.shape[1]

    @property
    def n_submodels(self) -> int:
        """|H|: total submodel count including each model's empty submodel."""
        return int(self.levels.sum())

    def spec(self, ref: SubmodelRef) -> SubmodelSpec:
        return self.models[ref.model].submodels[ref.index]

    def no_partition(self) -> "ModelCatalog":
        """Catalog where each model is either absent or cached whole."""
        out = []
        for m in self.models:
            full = m.submodels[-1]
            keep = [0, m.top]
            sw = m.switch_s[np.ix_(keep, keep)]
            out.append(ModelType(m.name, (EMPTY, SubmodelSpec(full.size_mb, full.gflops, full.precision, full.size_mb)), sw))
        return ModelCatalog(tuple(out), partitioned=False)

    def to_dict(self) -> dict:
        return {
            "models": [
                {
                    "name": m.name,
                    "submodels": [
                        {"size_mb": s.size_mb, "gflops": s.gflops, "precision": s.precision, "delta_mb": s.delta_mb}
                        for s in m.submodels[1:]
                    ],
                    "switch_s": m.switch_s.tolist(),
                }
                for m in self.models
            ]
        }

    @classmethod
    def from_dict(cls, data: dict) -> "ModelCatalog":
        models = []
        for entry in data["models"]:
            subs = [EMPTY] + [
                SubmodelSpec(float(s["size_mb"]), float(s["gflops"]), float(s["precision"]), float(s["delta_mb"]))
                for s in entry["submodels"]
            ]
            models.append(ModelType(entry["name"], tuple(subs), np.array(entry["switch_s"], dtype=float)))
        return cls(tuple(models))


def load_latency(prev: SubmodelRef, nxt: SubmodelRef, catalog: ModelCatalog) -> float:
    """Seconds needed to go from cached submodel ``prev`` to ``nxt`` of the same model."""
    if prev.model != nxt.model:
        raise IncomparableSubmodels(f"submodels of models {prev.model} and {nxt.model} are incomparable")
    return float(catalog.models[prev.model].switch_s[prev.index, nxt.index])


def vit_model() -> ModelType:
    subs = [EMPTY]
    prev = 0.0
    for size, flops, prec in VIT_SUBMODELS:
        subs.append(SubmodelSpec(size, flops, prec, round(size - prev, 2)))
        prev = size
    return ModelType("vit", tuple(subs), _switch_from_table(VIT_LOAD_S))


def _switch_from_table(rows: Sequence[Sequence[float]]) -> np.ndarray:
    k = len(rows)
    d = np.zeros((k, k))
    d[:, 1:] = rows  # switching down to the empty submodel is free
    return d


def scaled_model(name: str, size_f: float, flops_f: float, err_f: float) -> ModelType:
    """ViT rows rescaled by per-model factors.

    Sizes (and load times, which track bytes) scale by ``size_f``, flops by
    ``flops_f``; precision is rescaled through its error rate ``1 - p`` so it
    stays inside [0, 1].
    """
    sizes = [round(s * size_f, 2) for s, _, _ in VIT_SUBMODELS]
    flops = [round(f * flops_f, 2) for _, f, _ in VIT_SUBMODELS]
    precs = [round(1.0 - (1.0 - p) * err_f, 4) for _, _, p in VIT_SUBMODELS]
    for i in range(1, len(sizes)):
        sizes[i] = max(sizes[i], round(sizes[i - 1] + 0.01, 2))
        flops[i] = max(flops[i], round(flops[i - 1] + 0.01, 2))
        precs[i] = max(precs[i], round(precs[i - 1] + 1e-4, 4))
    subs = [EMPTY]
    prev = 0.0
    for s, f, p in zip(sizes, flops, precs):
        subs.append(SubmodelSpec(s, f, p, round(s - prev, 2)))
        prev = s
    table = np.round(np.asarray(VIT_LOAD_S) * size_f, 5)
    return ModelType(name, tuple(subs), _switch_from_table(table))


def generate_catalog(n_models: int = 8, seed: int = CATALOG_SEED) -> ModelCatalog:
    """ViT verbatim plus ``n_models - 1`` rescaled variants (factors ~ U[0.6, 1.4])."""
    rng = np.random.Generator(np.random.PCG64(seed))
    models = [vit_model()]
    for i in range(1, n_models):
        size_f, flops_f, err_f = rng.uniform(0.6, 1.4, size=3)
        name = DEFAULT_MODEL_NAMES[i] if i < len(DEFAULT_MODEL_NAMES) else f"model{i}"
        models.append(scaled_model(name, float(size_f), float(flops_f), float(err_f)))
    return ModelCatalog(tuple(models))


def default_catalog(n_models: int = 8) -> ModelCatalog:
    """The bundled catalog (first ``n_models`` entries)."""
    text = resources.files("edgesim").joinpath("data/catalog.json").read_text()
    data = json.loads(text)
    if n_models > len(data["models"]):
        return generate_catalog(n_models)
    data["models"] = data["models"][:n_models]
    return ModelCatalog.from_dict(data)


def load_catalog(path: str | Path) -> ModelCatalog:
    return ModelCatalog.from_dict(json.loads(Path(path).read_text()))


def save_catalog(catalog: ModelCatalog, path: str | Path) -> None:
    Path(path).write_text(json.dumps(catalog.to_dict(), indent=2) + "\n")
