"""Exception hierarchy shared by the solver, the diagnostics and the CLI."""
from typing import List, Optional, Sequence, Tuple


class RTActionError(Exception):
    """Base class for all errors raised by the package."""


class DomainError(RTActionError, ValueError):
    """An argument lies outside the domain of a function or a parameter set."""


class GridIndexError(RTActionError, IndexError):
    """A cell or node index lies outside the grid."""


class EvaluationError(RTActionError):
    """A cellwise integrand produced a non-finite value."""

    def __init__(self, message: str, cell: Optional[Tuple[int, int]] = None):
        super().__init__(message)
        self.cell = cell


class NonConvergenceError(RTActionError):
    """Newton iteration exhausted its budget.

    Carries the last iterate and the report accumulated so far so callers
    can still write artifacts.
    """

    def __init__(self, message: str, last_iterate=None, report=None, eps: Optional[float] = None):
        super().__init__(message)
        self.last_iterate = last_iterate
        self.report = report
        self.eps = eps


class PreconditionError(RTActionError):
    """An operation was called on inputs violating its precondition."""


class DegenerateCellError(RTActionError):
    """Cells where 1 - rho^2 (or 1 +- rho) vanishes were asked to carry momentum."""

    def __init__(self, message: str, cells: Sequence[Tuple[int, int]] = ()):
        super().__init__(message)
        self.cells = list(cells)


class ConfigError(RTActionError):
    """A run file could not be parsed or failed validation."""

    def __init__(self, messages: List[str]):
        super().__init__("Configuration errors: " + "; ".join(messages))
        self.messages = list(messages)
