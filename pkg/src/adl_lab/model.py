"""Round domain model and capped-simplex geometry.

One round exposes a deficit D, a winner set with per-account capacities u_i,
and the allocation polytope

    X(B, u) = {x : 0 <= x_i <= u_i for all i, sum_i x_i = B},

a box cut by one budget hyperplane.  Extreme points of X(B, u) have at most
one coordinate strictly inside its box interval; that fact is what separates
queue-style allocations from socialized ones, so the predicate lives here
next to the projection.

Allocation vectors are keyed by winner id; any positional encoding uses ids
sorted ascending.
"""

from __future__ import annotations

import math
from collections.abc import Mapping, Sequence
from dataclasses import dataclass, field

import numpy as np

from .errors import EmptyFeasibleSetError, InfeasiblePointError

DEFAULT_EPSILON = 1e-6

_BISECT_ITERS = 128


def budget_tolerance(budget: float) -> float:
    """Absolute slack allowed on the budget-sum equality constraint."""
    return max(1e-9 * abs(budget), 1e-6)


def boundary_tolerance(capacity: float) -> float:
    """Slack below which a coordinate counts as sitting on a box face."""
    return 1e-9 * max(capacity, 1.0)


@dataclass(frozen=True)
class WinnerAccount:
    """One winning account: its haircut capacity plus an optional lot grid."""

    id: str
    capacity: float
    lot_size: float | None = None

    def __post_init__(self) -> None:
        if not self.id:
            raise ValueError("winner id must be a non-empty string")
        if not (math.isfinite(self.capacity) and self.capacity >= 0):
            raise ValueError(f"capacity must be finite and >= 0, got {self.capacity!r}")
        if self.lot_size is not None and not (
            math.isfinite(self.lot_size) and self.lot_size > 0
        ):
            raise ValueError(f"lot_size must be positive when set, got {self.lot_size!r}")

    def lot_grid(self) -> np.ndarray:
        """Feasible haircut levels {0, lot, 2*lot, ...} intersected with [0, capacity]."""
        if self.lot_size is None:
            raise ValueError(f"winner {self.id!r} has no lot_size, so no lot grid")
        steps = int(math.floor(self.capacity / self.lot_size + 1e-9))
        return np.arange(steps + 1, dtype=float) * self.lot_size


@dataclass(frozen=True)
class RoundState:
    """Everything revealed at the start of a round.

    Winners are canonicalized to id-ascending order so vector encodings are
    deterministic.  epsilon regularizes burden ratios x_i / (u_i + epsilon)
    downstream and must stay strictly positive.
    """

    round_id: int
    deficit: float
    winners: tuple[WinnerAccount, ...]
    context: Mapping[str, float] = field(default_factory=dict)
    epsilon: float = DEFAULT_EPSILON

    def __post_init__(self) -> None:
        if not (math.isfinite(self.deficit) and self.deficit >= 0):
            raise ValueError(f"deficit must be finite and >= 0, got {self.deficit!r}")
        if not (math.isfinite(self.epsilon) and self.epsilon > 0):
            raise ValueError(f"epsilon must be finite and > 0, got {self.epsilon!r}")
        winners = tuple(sorted(self.winners, key=lambda w: w.id))
        ids = [w.id for w in winners]
        if len(set(ids)) != len(ids):
            raise ValueError(f"duplicate winner ids in round {self.round_id}")
        object.__setattr__(self, "winners", winners)
        object.__setattr__(self, "context", dict(self.context))

    @property
    def ids(self) -> tuple[str, ...]:
        return tuple(w.id for w in self.winners)

    def capacity_vector(self) -> np.ndarray:
        return np.array([w.capacity for w in self.winners], dtype=float)

    @property
    def total_capacity(self) -> float:
        return float(np.sum(self.capacity_vector())) if self.winners else 0.0

    def with_winners(self, winners: Sequence[WinnerAccount]) -> "RoundState":
        """Same round with a restricted winner set (account churn)."""
        return RoundState(
            round_id=self.round_id,
            deficit=self.deficit,
            winners=tuple(winners),
            context=dict(self.context),
            epsilon=self.epsilon,
        )


@dataclass(frozen=True)
class Action:
    """A severity/allocation decision: total budget plus per-winner haircuts.

    severity is the unitless theta = budget / (deficit + epsilon) when the
    deficit context is known; informational only, not validated here because
    box and budget constraints need the round state (see validate_action).
    """

    budget: float
    allocation: Mapping[str, float]
    severity: float | None = None

    def __post_init__(self) -> None:
        object.__setattr__(self, "allocation", dict(self.allocation))

    @property
    def total(self) -> float:
        return float(np.sum(np.fromiter(self.allocation.values(), dtype=float, count=len(self.allocation)))) if self.allocation else 0.0

    def vector(self, state: RoundState) -> np.ndarray:
        return np.array([self.allocation.get(i, 0.0) for i in state.ids], dtype=float)

    @classmethod
    def from_vector(
        cls,
        state: RoundState,
        x: Sequence[float] | np.ndarray,
        budget: float | None = None,
    ) -> "Action":
        arr = np.asarray(x, dtype=float)
        if arr.shape != (len(state.winners),):
            raise ValueError(
                f"allocation vector has shape {arr.shape}, round has {len(state.winners)} winners"
            )
        b = float(np.sum(arr)) if budget is None else float(budget)
        theta = b / (state.deficit + state.epsilon)
        return cls(budget=b, allocation=dict(zip(state.ids, arr.tolist())), severity=theta)


@dataclass(frozen=True)
class ValidationReport:
    ok: bool
    violations: tuple[str, ...] = ()


def validate_action(state: RoundState, action: Action) -> ValidationReport:
    """Check box, budget-sum, and budget-capacity constraints; list every breach."""
    violations: list[str] = []
    known = set(state.ids)
    for wid in sorted(set(action.allocation) - known):
        violations.append(f"allocation names unknown winner {wid!r}")
    u = state.capacity_vector()
    x = action.vector(state)
    for i, wid in enumerate(state.ids):
        tol = boundary_tolerance(u[i])
        if x[i] < -tol:
            violations.append(f"x[{wid}]={x[i]!r} below 0")
        if x[i] > u[i] + tol:
            violations.append(f"x[{wid}]={x[i]!r} above capacity {u[i]!r}")
    total_alloc = action.total
    if abs(total_alloc - action.budget) > budget_tolerance(action.budget):
        violations.append(
            f"allocation sum {total_alloc!r} != budget {action.budget!r} beyond tolerance"
        )
    total_cap = state.total_capacity
    cap_tol = max(budget_tolerance(action.budget), budget_tolerance(total_cap))
    if action.budget < -cap_tol:
        violations.append(f"budget {action.budget!r} below 0")
    if action.budget > total_cap + cap_tol:
        violations.append(
            f"budget {action.budget!r} above total capacity {total_cap!r}"
        )
    return ValidationReport(ok=not violations, violations=tuple(violations))


@dataclass(frozen=True)
class FeasibleSet:
    """The polytope X(B, u) as a value: budget plus capacity box."""

    budget: float
    capacities: tuple[float, ...]

    def __post_init__(self) -> None:
        caps = tuple(float(c) for c in self.capacities)
        for c in caps:
            if not (math.isfinite(c) and c >= 0):
                raise ValueError(f"capacity must be finite and >= 0, got {c!r}")
        object.__setattr__(self, "capacities", caps)

    @property
    def total_capacity(self) -> float:
        return float(np.sum(np.asarray(self.capacities, dtype=float))) if self.capacities else 0.0

    @property
    def is_empty(self) -> bool:
        tol = budget_tolerance(self.budget)
        return self.budget < -tol or self.budget > self.total_capacity + tol

    def contains(self, x: Sequence[float] | np.ndarray) -> bool:
        arr = np.asarray(x, dtype=float)
        u = np.asarray(self.capacities, dtype=float)
        if arr.shape != u.shape:
            return False
        tols = np.array([boundary_tolerance(c) for c in self.capacities])
        if np.any(arr < -tols) or np.any(arr > u + tols):
            return False
        return abs(float(np.sum(arr)) - self.budget) <= budget_tolerance(self.budget)

    def project(self, v: Sequence[float] | np.ndarray) -> np.ndarray:
        return project_capped_simplex(v, self.budget, self.capacities)


def project_capped_simplex(
    v: Sequence[float] | np.ndarray,
    budget: float,
    capacities: Sequence[float] | np.ndarray,
) -> np.ndarray:
    """Euclidean projection of v onto X(budget, capacities).

    Bisects the dual shift tau in x_i(tau) = clip(v_i - tau, 0, u_i); the
    coordinate sum is continuous and non-increasing in tau, so the bracket
    below always contains a root.  A final correction spreads the residual
    over strictly interior coordinates so the output passes validate_action.
    """
    u = np.asarray(capacities, dtype=float)
    vv = np.asarray(v, dtype=float)
    if vv.shape != u.shape:
        raise ValueError(f"shape mismatch: v {vv.shape} vs capacities {u.shape}")
    total = float(np.sum(u))
    tol = budget_tolerance(budget)
    if budget < -tol or budget > total + tol:
        raise EmptyFeasibleSetError(
            f"budget {budget!r} outside [0, {total!r}]: X(B, u) is empty"
        )
    b = min(max(float(budget), 0.0), total)
    if u.size == 0 or b <= 0.0:
        return np.zeros_like(u)
    if b >= total:
        return u.copy()

    lo = float(np.min(vv) - np.max(u) - 1.0)  # sum == total here
    hi = float(np.max(vv) + 1.0)  # sum == 0 here
    for _ in range(_BISECT_ITERS):
        mid = 0.5 * (lo + hi)
        if float(np.sum(np.clip(vv - mid, 0.0, u))) > b:
            lo = mid
        else:
            hi = mid
    x = np.clip(vv - 0.5 * (lo + hi), 0.0, u)

    for _ in range(4):
        gap = b - float(np.sum(x))
        if abs(gap) <= 1e-12 * max(1.0, abs(b)):
            break
        interior = (x > 0.0) & (x < u)
        if not np.any(interior):
            break
        x[interior] += gap / int(np.count_nonzero(interior))
        np.clip(x, 0.0, u, out=x)
    return x


def is_extreme_point(
    x: Sequence[float] | np.ndarray,
    budget: float,
    capacities: Sequence[float] | np.ndarray,
) -> bool:
    """True iff x is a vertex of X(budget, capacities).

    A feasible point is extreme exactly when at most one coordinate is
    strictly between its box faces (counted with boundary tolerance).
    Raises InfeasiblePointError if x is not in the polytope.
    """
    u = np.asarray(capacities, dtype=float)
    arr = np.asarray(x, dtype=float)
    if arr.shape != u.shape:
        raise ValueError(f"shape mismatch: x {arr.shape} vs capacities {u.shape}")
    tols = np.array([boundary_tolerance(c) for c in u.tolist()])
    if np.any(arr < -tols) or np.any(arr > u + tols):
        raise InfeasiblePointError("point violates box constraints")
    if abs(float(np.sum(arr)) - budget) > budget_tolerance(budget):
        raise InfeasiblePointError("point misses the budget hyperplane")
    interior = int(np.count_nonzero((arr > tols) & (arr < u - tols)))
    return interior <= 1
