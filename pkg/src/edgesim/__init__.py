"""Joint dynamic-DNN submodel caching and request routing for multi-BS edge networks."""

from .catalog import ModelCatalog, ModelType, SubmodelRef, SubmodelSpec, default_catalog, load_latency
from .errors import (CatalogError, ConfigError, EdgeSimError, IncomparableSubmodels, InferenceOnEmptySubmodel,
                     InvalidFractional, LpError, TopologyGenerationFailed)
from .formulation import build_p1lr, decode, solve_window
from .lp import LpProblem, LpSolution, LpStatus, solve
from .metrics import PeriodRecord, RunMetrics, aggregate
from .online import OnlineState, QoEParams, qoe, route_best
from .rounding import FeasiblePlan, RoundedPlan, cocar_window, expectation_check, repair, round_plan
from .scenario import Network, Request, RequestBatch, Scenario, comm_latency, end_to_end_latency, infer_latency
from .workload import WorkloadConfig, gen_workload

__version__ = "0.1.0"
