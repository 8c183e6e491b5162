"""Exception types raised across the package."""


class EdgeSimError(Exception):
    pass


class CatalogError(EdgeSimError, ValueError):
    pass


class InferenceOnEmptySubmodel(EdgeSimError, ValueError):
    pass


class IncomparableSubmodels(EdgeSimError, ValueError):
    pass


class TopologyGenerationFailed(EdgeSimError, RuntimeError):
    pass


class InvalidFractional(EdgeSimError, ValueError):
    pass


class LpError(EdgeSimError, ValueError):
    """Malformed LP, or a non-optimal solution used where an optimum is required."""


class ConfigError(EdgeSimError, ValueError):
    pass
