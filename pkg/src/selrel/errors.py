"""Exception types shared across the toolkit.

Plain ``ValueError`` is used for generic invalid arguments; the classes here
exist where callers need to distinguish failure kinds (file format problems,
solver non-convergence, coverage gaps in external score files, and so on).
"""


class SelrelError(Exception):
    """Base class for all toolkit-specific errors."""


class FormatError(SelrelError):
    """Malformed gradient container file.

    Carries the byte offset at which the problem was detected.
    """

    def __init__(self, message: str, offset: int | None = None):
        if offset is not None:
            message = f"{message} (at byte offset {offset})"
        super().__init__(message)
        self.offset = offset


class ContractError(SelrelError, ValueError):
    """An input violates a documented numeric contract (e.g. not normalized)."""


class CoverageError(SelrelError, ValueError):
    """An external score file does not cover the training set exactly."""


class BudgetError(SelrelError, ValueError):
    """Requested selection budget exceeds the available candidates."""


class EmptySelectionError(SelrelError, ValueError):
    """A reconstruction was requested for an empty selection."""


class DegenerateGradientError(SelrelError, ValueError):
    """A gradient row is exactly zero where a nonzero gradient is required."""


class ConvergenceError(SelrelError, RuntimeError):
    """An iterative solver hit its iteration cap before reaching tolerance."""


class TrainingError(SelrelError, RuntimeError):
    """Toy-model training diverged (non-finite loss)."""


class UndefinedCorrelationError(SelrelError, ValueError):
    """Rank correlation is undefined (constant input)."""


class PairingError(SelrelError, ValueError):
    """Result rows could not be matched cell-by-cell for comparison."""


class IncompleteSeriesError(SelrelError, ValueError):
    """A budget series is missing entries required for aggregation."""


class ConfigurationError(SelrelError, ValueError):
    """An experiment configuration is invalid or inconsistent."""
