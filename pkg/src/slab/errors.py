"""Exception hierarchy shared by all slab modules."""


class SlabError(Exception):
    """Base class for every error raised by slab."""


class ConfigurationError(SlabError):
    """Invalid grid, parameter or configuration value."""


class MetricError(SlabError):
    """Metric is not symmetric positive definite or violates a bound."""


class StructureError(SlabError):
    """Metric lacks the block-diagonal structure required for doubling."""


class BoundaryConditionError(SlabError):
    """Field violates the compatibility condition of the requested extension."""


class ResolutionError(SlabError):
    """Grid cannot resolve the requested frequency band or table."""


class MollificationError(SlabError):
    """Mollified metric degenerates or its scale is out of range."""


class ContractError(SlabError):
    """A callable does not satisfy the contract it was declared with."""


class CausticError(SlabError):
    """Characteristic flow degenerated before the requested time."""


class TransportError(SlabError):
    """Transport amplitudes left their chart or blew up."""


class FitError(SlabError):
    """Not enough data for a scaling fit."""


class CapacityError(SlabError):
    """Problem size exceeds a configured capacity."""


class SolverError(SlabError):
    """An iterative linear solver failed to converge."""


class QuadratureError(SlabError):
    """Time quadrature nodes are unsuitable."""


class DivergenceError(SlabError):
    """Picard iteration failed to contract."""

    def __init__(self, message, distances=None):
        super().__init__(message)
        self.distances = list(distances or [])


class InstabilityError(SlabError):
    """Long-time iteration lost conservation or finiteness."""
