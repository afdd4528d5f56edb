class CellrouteError(Exception):
    """Base class for all solver errors."""


class InstanceError(CellrouteError, ValueError):
    """Malformed instance data."""


class InvalidTourError(CellrouteError, ValueError):
    pass


class PartitionError(CellrouteError, ValueError):
    """Tours do not partition the task set."""

    def __init__(self, message, task=None):
        super().__init__(message)
        self.task = task


class InfeasibleError(CellrouteError):
    """No feasible solution exists (or none was found where that is final)."""

    def __init__(self, message, diagnostics=None):
        super().__init__(message)
        self.diagnostics = list(diagnostics or [])


class SizeLimitError(CellrouteError, ValueError):
    """Problem too large for the requested method."""
