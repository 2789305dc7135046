"""Domain exceptions shared across the package."""

from __future__ import annotations


class AdlError(Exception):
    """Base class for every domain error raised by adl_lab."""


class EmptyFeasibleSetError(AdlError):
    """The requested budget lies outside [0, sum of capacities]."""


class InfeasiblePointError(AdlError):
    """A point handed to a geometric predicate does not lie in the polytope."""


class BudgetExceedsCapacityError(AdlError):
    """A policy was asked for more budget than the winner set can absorb."""


class NoCapacityError(AdlError):
    """Positive budget requested against a winner set with zero total capacity."""


class GridInfeasibleError(AdlError):
    """No lot-grid allocation lands within one lot of the requested budget."""

    def __init__(self, message: str, best_residual: float) -> None:
        super().__init__(message)
        self.best_residual = best_residual


class NonpositiveExecPriceError(AdlError):
    """Linear impact drove the execution price to zero or below."""


class EmptyRoundError(AdlError):
    """An operation that needs at least one winner got an empty round."""


class DegenerateEpisodeError(AdlError):
    """Episode-level statistic undefined, e.g. all deficits are zero."""


class DegenerateSlopesError(AdlError):
    """Slope pair does not satisfy alpha_min < alpha_max."""


class NoJumpWitnessError(AdlError):
    """Perturbation probe needs two winners able to absorb the full budget."""


class NoExecutionError(AdlError):
    """Effective slope undefined: no executed quantity in the round."""


class DecompositionViolatedError(AdlError):
    """Loss decomposition slack fell below the floating-point floor."""


class ScenarioFormatError(AdlError):
    """Replay CSV violates the scenario schema; carries file/row/column context."""

    def __init__(
        self,
        message: str,
        *,
        path: str | None = None,
        row: int | None = None,
        column: str | None = None,
    ) -> None:
        where = []
        if path is not None:
            where.append(str(path))
        if row is not None:
            where.append(f"row {row}")
        if column is not None:
            where.append(f"column {column!r}")
        prefix = " ".join(where)
        super().__init__(f"{prefix}: {message}" if prefix else message)
        self.path = path
        self.row = row
        self.column = column


class ConfigError(AdlError):
    """Run configuration file is malformed or self-contradictory."""


class InternalInvariantError(AdlError):
    """Results failed a self-consistency audit; indicates a bug, not bad input."""
