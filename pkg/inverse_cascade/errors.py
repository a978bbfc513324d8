"""Exceptions raised by the cascade toolkit."""

from typing import Optional, Tuple


class CascadeError(Exception):
    """Base class for every error the toolkit raises on purpose."""


class GridMismatchError(CascadeError, ValueError):
    """Two fields live on different grids."""


class RankError(CascadeError, ValueError):
    """A field has the wrong rank for the operator."""


class DyadicError(CascadeError, ValueError):
    """A Littlewood-Paley frequency is not a power of two."""


class ConfigError(CascadeError, ValueError):
    """A configuration file or override is invalid."""


class OffLatticeError(CascadeError, ValueError):
    """A rescaling would move a frequency off the integer lattice."""


class OutOfBallError(CascadeError, ValueError):
    """A decomposition was evaluated outside its admissible ball around Id."""

    def __init__(self, margin: float, worst_point: Optional[Tuple[int, ...]] = None):
        self.margin = margin
        self.worst_point = worst_point
        where = f" at grid index {worst_point}" if worst_point is not None else ""
        super().__init__(f"tensor outside admissible ball (margin {margin:.3e}){where}")


class GridOverflowError(CascadeError):
    """Frequencies of a level do not fit within the anti-aliasing margin of the grid."""


class OrderingError(CascadeError):
    """A frequency ordering inequality fails in asymptotic mode."""


class ResolutionError(CascadeError):
    """A geometric feature is too thin for the grid."""


class StepCollapseError(CascadeError):
    """The semigroup integrator needs more steps than allowed."""


class DivergenceError(CascadeError):
    """The Picard iteration stopped contracting."""

    def __init__(self, message: str, budget_line: str = ""):
        self.budget_line = budget_line
        super().__init__(f"{message}: {budget_line}" if budget_line else message)


class SnapshotError(CascadeError, ValueError):
    """A snapshot file is truncated or not in CFF1 format."""
