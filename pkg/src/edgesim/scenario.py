"""Base stations, requests and the latency model.

Units: sizes in MB, rates in Mbps, compute in Gflops/s, times in seconds.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import Iterator

import numpy as np

from .catalog import ModelCatalog, SubmodelSpec
from .errors import InferenceOnEmptySubmodel

MBIT_PER_MB = 8.0


def _frozen(a, dtype=float) -> np.ndarray:
    a = np.array(a, dtype=dtype)
    a.setflags(write=False)
    return a


@dataclass(frozen=True, eq=False)
class Network:
    memory_mb: np.ndarray  # (N,)
    compute_gflops: np.ndarray  # (N,)
    cloud_mbps: np.ndarray  # (N,)
    wireless_mbps: np.ndarray  # (N,)
    wired_mbps: np.ndarray  # (N, N)
    hops: np.ndarray  # (N, N) shortest-path hop counts
    hop_delay_s: float = 0.01

    def __post_init__(self):
        for name in ("memory_mb", "compute_gflops", "cloud_mbps", "wireless_mbps", "wired_mbps"):
            object.__setattr__(self, name, _frozen(getattr(self, name)))
        object.__setattr__(self, "hops", _frozen(self.hops, dtype=np.int64))
        n = self.n_bs
        for name in ("memory_mb", "compute_gflops", "cloud_mbps", "wireless_mbps"):
            if getattr(self, name).shape != (n,):
                raise ValueError(f"{name} must have shape ({n},)")
        if self.wired_mbps.shape != (n, n) or self.hops.shape != (n, n):
            raise ValueError("wired_mbps and hops must be N x N")
        if not (np.array_equal(self.hops, self.hops.T) and np.all(np.diag(self.hops) == 0)):
            raise ValueError("hop matrix must be symmetric with a zero diagonal")
        if np.any(self.hops < 0):
            raise ValueError("hop matrix must be finite (connected topology)")
        for name in ("compute_gflops", "cloud_mbps", "wireless_mbps", "wired_mbps"):
            if np.any(getattr(self, name) <= 0):
                raise ValueError(f"{name} must be positive")
        if np.any(self.memory_mb < 0):
            raise ValueError("memory_mb must be non-negative")

    @property
    def n_bs(self) -> int:
        return len(self.memory_mb)

    @property
    def adjacency(self) -> np.ndarray:
        return self.hops == 1

    def propagation_s(self) -> np.ndarray:
        """(N, N) round-trip propagation: user<->home plus home<->target, both ways."""
        return 2.0 * (1 + self.hops) * self.hop_delay_s

    def with_memory(self, memory_mb: float | np.ndarray) -> "Network":
        return replace(self, memory_mb=np.broadcast_to(memory_mb, (self.n_bs,)).astype(float))

    @classmethod
    def uniform(cls, hops, memory_mb=500.0, compute_gflops=70.0, cloud_mbps=800.0,
                wireless_mbps=20.0, wired_mbps=100.0, hop_delay_s=0.01) -> "Network":
        hops = np.asarray(hops)
        n = hops.shape[0]
        return cls(
            memory_mb=np.full(n, memory_mb, dtype=float),
            compute_gflops=np.full(n, compute_gflops, dtype=float),
            cloud_mbps=np.full(n, cloud_mbps, dtype=float),
            wireless_mbps=np.full(n, wireless_mbps, dtype=float),
            wired_mbps=np.full((n, n), wired_mbps, dtype=float),
            hops=hops,
            hop_delay_s=hop_delay_s,
        )


@dataclass(frozen=True)
class Request:
    user: int
    model: int
    home: int
    data_mb: float
    deadline_s: float
    start_s: float = 0.0


@dataclass(frozen=True, eq=False)
class RequestBatch:
    """Column-oriented requests of one window or slot."""

    model: np.ndarray
    home: np.ndarray
    data_mb: np.ndarray
    deadline_s: np.ndarray
    start_s: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "model", _frozen(self.model, np.int64))
        object.__setattr__(self, "home", _frozen(self.home, np.int64))
        for name in ("data_mb", "deadline_s", "start_s"):
            object.__setattr__(self, name, _frozen(getattr(self, name)))
        n = len(self.model)
        if any(len(getattr(self, k)) != n for k in ("home", "data_mb", "deadline_s", "start_s")):
            raise ValueError("request columns must have equal length")

    def __len__(self) -> int:
        return len(self.model)

    def __getitem__(self, u: int) -> Request:
        return Request(u, int(self.model[u]), int(self.home[u]), float(self.data_mb[u]),
                       float(self.deadline_s[u]), float(self.start_s[u]))

    def __iter__(self) -> Iterator[Request]:
        return (self[u] for u in range(len(self)))

    @classmethod
    def from_requests(cls, reqs) -> "RequestBatch":
        reqs = list(reqs)
        return cls(
            model=[r.model for r in reqs], home=[r.home for r in reqs],
            data_mb=[r.data_mb for r in reqs], deadline_s=[r.deadline_s for r in reqs],
            start_s=[r.start_s for r in reqs],
        )

    @classmethod
    def empty(cls) -> "RequestBatch":
        return cls([], [], [], [], [])

    def to_dict(self) -> dict:
        return {k: getattr(self, k).tolist() for k in ("model", "home", "data_mb", "deadline_s", "start_s")}

    @classmethod
    def from_dict(cls, d: dict) -> "RequestBatch":
        return cls(d["model"], d["home"], d["data_mb"], d["deadline_s"], d["start_s"])


@dataclass(frozen=True, eq=False)
class Scenario:
    catalog: ModelCatalog
    network: Network
    window_s: float = 3.0
    slot_s: float = 0.5
    _lat: dict = field(default_factory=dict, init=False, repr=False, compare=False)

    @property
    def n_bs(self) -> int:
        return self.network.n_bs

    @property
    def n_models(self) -> int:
        return len(self.catalog)

    def comm_matrix(self, data_mb: float) -> np.ndarray:
        """(N_home, N_target) communication latency for a ``data_mb`` payload."""
        key = ("comm", float(data_mb))
        if key not in self._lat:
            net = self.network
            mbit = data_mb * MBIT_PER_MB
            self._lat[key] = mbit / net.wireless_mbps[:, None] + mbit / net.wired_mbps + net.propagation_s()
        return self._lat[key]

    def infer_matrix(self) -> np.ndarray:
        """(N, M, H+1) inference seconds; inf where the submodel is empty or padded."""
        if "infer" not in self._lat:
            flops = np.where(self.catalog.gflops > 0, self.catalog.gflops, np.inf)
            self._lat["infer"] = flops[None, :, :] / self.network.compute_gflops[:, None, None]
        return self._lat["infer"]

    def request_comm(self, reqs: RequestBatch) -> np.ndarray:
        """(N, U) communication latency of serving each user at each BS."""
        net = self.network
        mbit = reqs.data_mb * MBIT_PER_MB
        return (mbit[None, :] / net.wireless_mbps[reqs.home][None, :]
                + mbit[None, :] / net.wired_mbps[reqs.home].T
                + net.propagation_s()[reqs.home].T)

    def request_latency(self, reqs: RequestBatch) -> np.ndarray:
        """(N, U, H+1) end-to-end latency of serving each user at each BS/submodel."""
        infer = self.infer_matrix()[:, reqs.model, :]
        return self.request_comm(reqs)[:, :, None] + infer

    def with_catalog(self, catalog: ModelCatalog) -> "Scenario":
        return Scenario(catalog, self.network, self.window_s, self.slot_s)

    def with_network(self, network: Network) -> "Scenario":
        return Scenario(self.catalog, network, self.window_s, self.slot_s)


def comm_latency(req: Request, target: int, net: Network) -> float:
    """Uplink + inter-BS transfer + round-trip propagation for ``req`` served at ``target``."""
    home = req.home
    mbit = req.data_mb * MBIT_PER_MB
    prop = 2.0 * (1 + int(net.hops[home, target])) * net.hop_delay_s
    return mbit / float(net.wireless_mbps[home]) + mbit / float(net.wired_mbps[home, target]) + prop


def infer_latency(req: Request, sub: SubmodelSpec, compute_gflops: float) -> float:
    # one forward pass per request; data size only enters the transfer terms
    if sub.is_empty:
        raise InferenceOnEmptySubmodel("cannot run inference on the empty submodel")
    return sub.gflops / compute_gflops


def end_to_end_latency(req: Request, target: int, sub: SubmodelSpec, net: Network) -> float:
    return comm_latency(req, target, net) + infer_latency(req, sub, float(net.compute_gflops[target]))
