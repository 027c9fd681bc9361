"""Exception taxonomy shared across the package.

Every error raised deliberately by roughsk derives from RoughSKError so
callers (and the CLI) can separate expected failure modes from bugs.
"""


class RoughSKError(Exception):
    """Base class for all roughsk errors."""


class ValidationError(RoughSKError):
    """A configuration value or argument violates its contract."""


class UnknownModel(RoughSKError):
    """A model name is not present in the registry."""


class NonFiniteField(RoughSKError):
    """A model field evaluation produced NaN or infinity."""


class SingularSystem(RoughSKError):
    """A linear system required by a solver is numerically singular."""


class StabilityViolation(RoughSKError):
    """The requested step size violates the scheme's stability guard."""


class BlowUp(RoughSKError):
    """A simulated state left the finite-simulation region."""


class GridMismatch(RoughSKError):
    """Two grid-indexed objects do not live on compatible grids."""


class InsufficientData(RoughSKError):
    """Not enough samples or grid points for the requested statistic."""
