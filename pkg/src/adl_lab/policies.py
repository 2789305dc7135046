"""Allocation policies over the capped simplex.

Five families:

* greedy score queue: fill winners in score order until the budget runs out;
  always lands on a vertex of X(B, u);
* continuous pro-rata: x_i = (u_i / U) * B, the unique minimizer of the
  worst burden max_i x_i / u_i;
* integer pro-rata: continuous pro-rata rounded to per-account lot grids by
  largest remainder;
* min-max lot program: minimize max_i x_i / (u_i + eps) over grid
  allocations whose sum hits the budget (exact search under a size cap,
  rounding plus local swaps above it);
* vector subgradient descent on the surrogate loss, with the budget taken
  from the iterate's coordinate sum.
"""

from __future__ import annotations

import math
from collections.abc import Mapping, Sequence
from dataclasses import dataclass

import numpy as np

from .errors import (
    BudgetExceedsCapacityError,
    GridInfeasibleError,
    NoCapacityError,
)
from .metrics import LossWeights, surrogate_subgradient
from .model import (
    Action,
    RoundState,
    budget_tolerance,
    project_capped_simplex,
)

POLICY_KINDS = (
    "queue",
    "pro_rata",
    "integer_pro_rata",
    "minmax_ilp",
    "vector_md",
    "production",
    "comparator",
)

MD_INIT_RULES = ("zero", "pro_rata")

ILP_SEARCH_LIMIT = 1_000_000


@dataclass(frozen=True)
class PolicySpec:
    """Declarative policy description used by run configs.

    score_source applies to queue policies: "score" reads the scenario's
    per-round score vectors, "capacity" ranks by capacity, "context:<key>"
    broadcasts a round context signal. severity optionally overrides the
    run-level budget mode for this policy.
    """

    kind: str
    name: str | None = None
    score_source: str = "score"
    eta: float | None = None
    init: str = "zero"
    severity: str | None = None

    def __post_init__(self) -> None:
        if self.kind not in POLICY_KINDS:
            raise ValueError(f"unknown policy kind {self.kind!r}")
        if self.kind == "vector_md":
            if self.eta is None or not (math.isfinite(self.eta) and self.eta > 0):
                raise ValueError("vector_md needs eta > 0")
            if self.init not in MD_INIT_RULES:
                raise ValueError(f"unknown vector_md init rule {self.init!r}")

    @property
    def label(self) -> str:
        return self.name or self.kind


@dataclass(frozen=True)
class ScoredWinners:
    """Scores aligned to a round's id-sorted winners plus the queue order.

    permutation holds winner indices in strictly descending queue priority;
    score ties break by id ascending, so the order is total and
    deterministic.
    """

    scores: tuple[float, ...]
    permutation: tuple[int, ...]

    @classmethod
    def from_scores(
        cls,
        state: RoundState,
        scores: Mapping[str, float] | Sequence[float] | np.ndarray,
    ) -> "ScoredWinners":
        ids = state.ids
        if isinstance(scores, Mapping):
            missing = [i for i in ids if i not in scores]
            if missing:
                raise ValueError(f"scores missing winners {missing!r}")
            values = [float(scores[i]) for i in ids]
        else:
            arr = [float(s) for s in scores]
            if len(arr) != len(ids):
                raise ValueError(
                    f"got {len(arr)} scores for {len(ids)} winners"
                )
            values = arr
        order = sorted(range(len(ids)), key=lambda i: (-values[i], ids[i]))
        return cls(scores=tuple(values), permutation=tuple(order))


def queue_allocate(state: RoundState, budget: float, scores: ScoredWinners) -> Action:
    """Greedy fill along the queue order: x_sigma(k) = min(u_sigma(k), remaining)."""
    if not (math.isfinite(budget) and budget >= 0):
        raise ValueError(f"budget must be finite and >= 0, got {budget!r}")
    u = state.capacity_vector()
    total = float(np.sum(u)) if u.size else 0.0
    if budget > total + budget_tolerance(budget):
        raise BudgetExceedsCapacityError(
            f"budget {budget!r} exceeds total capacity {total!r}"
        )
    x = np.zeros_like(u)
    remaining = min(budget, total)
    for idx in scores.permutation:
        if remaining <= 0.0:
            break
        take = min(float(u[idx]), remaining)
        x[idx] = take
        remaining -= take
    return Action.from_vector(state, x)


def pro_rata_allocate(state: RoundState, budget: float) -> Action:
    """Socialized allocation x_i = (u_i / U) * B; every coordinate interior for 0 < B < U."""
    if not (math.isfinite(budget) and budget >= 0):
        raise ValueError(f"budget must be finite and >= 0, got {budget!r}")
    u = state.capacity_vector()
    total = float(np.sum(u)) if u.size else 0.0
    if total <= 0.0:
        if budget > budget_tolerance(budget):
            raise NoCapacityError("positive budget with zero total capacity")
        return Action.from_vector(state, np.zeros_like(u))
    if budget > total + budget_tolerance(budget):
        raise BudgetExceedsCapacityError(
            f"budget {budget!r} exceeds total capacity {total!r}"
        )
    x = np.minimum(u * (min(budget, total) / total), u)
    return Action.from_vector(state, x)


@dataclass(frozen=True)
class MinMaxSolution:
    action: Action
    worst_burden: float
    dual_value: float


def minmax_allocate(state: RoundState, budget: float) -> MinMaxSolution:
    """Continuous min-max burden allocation.

    The optimizer is pro-rata with worst burden z = B / U; the dual problem
    max y*B subject to y * sum u_i <= 1 certifies it with y = 1 / U, so
    worst_burden and dual_value must coincide up to rounding.
    """
    action = pro_rata_allocate(state, budget)
    u = state.capacity_vector()
    x = action.vector(state)
    positive = u > 0.0
    z = float(np.max(x[positive] / u[positive])) if np.any(positive) else 0.0
    total = float(np.sum(u)) if u.size else 0.0
    dual = float(budget) / total if total > 0.0 else 0.0
    return MinMaxSolution(action=action, worst_burden=z, dual_value=dual)


@dataclass(frozen=True)
class IlpSolution:
    action: Action
    worst_burden: float
    exact: bool
    budget_residual: float


def _lot_vectors(state: RoundState) -> np.ndarray:
    lots = []
    for w in state.winners:
        if w.lot_size is None:
            raise ValueError(f"winner {w.id!r} has no lot_size; lot grid required")
        lots.append(w.lot_size)
    return np.asarray(lots, dtype=float)


def integer_pro_rata(state: RoundState, budget: float) -> Action:
    """Continuous pro-rata rounded down to lot grids, residual spread by largest remainder.

    Remainder ratio is (x_i^PR - x_i) / u_i; lots are added one at a time
    (ties to the lowest id) until the residual drops below the smallest lot
    or no account can take another lot without leaving its grid.
    """
    lots = _lot_vectors(state)
    continuous = pro_rata_allocate(state, budget).vector(state)
    u = state.capacity_vector()
    if u.size == 0:
        return Action.from_vector(state, np.zeros(0))
    grid_caps = np.floor(u / lots + 1e-9) * lots
    x = np.floor(continuous / lots + 1e-9) * lots
    min_lot = float(np.min(lots))
    for _ in range(10_000_000):
        residual = budget - float(np.sum(x))
        if residual < min_lot * (1.0 - 1e-9):
            break
        in_grid = (x + lots <= grid_caps + 1e-9 * lots) & (u > 0.0)
        if not np.any(in_grid):
            break
        ratio = np.where(u > 0.0, (continuous - x) / np.where(u > 0.0, u, 1.0), -np.inf)
        ratio[~in_grid] = -np.inf
        pick = int(np.argmax(ratio))
        x[pick] += lots[pick]
    residual = abs(budget - float(np.sum(x)))
    if residual >= min_lot * (1.0 - 1e-9):
        raise GridInfeasibleError(
            f"cannot place budget {budget!r} within one lot on the grids", residual
        )
    return Action.from_vector(state, x)


def _ilp_exact_search(
    grids: list[np.ndarray],
    ratios: list[np.ndarray],
    budget: float,
) -> tuple[np.ndarray, float, float]:
    """Branch-and-bound on the lexicographic objective (|sum - B|, max burden)."""
    n = len(grids)
    suffix_max = np.zeros(n + 1)
    for i in range(n - 1, -1, -1):
        suffix_max[i] = suffix_max[i + 1] + float(grids[i][-1])
    res_tol = budget_tolerance(budget)
    best_res = math.inf
    best_z = math.inf
    best_x = np.zeros(n)
    stack_x = np.zeros(n)

    def rec(i: int, total: float, zmax: float) -> None:
        nonlocal best_res, best_z, best_x
        if total - budget > best_res + res_tol:
            return
        if budget - (total + suffix_max[i]) > best_res + res_tol:
            return
        if i == n:
            r = abs(total - budget)
            if r < best_res - res_tol or (
                abs(r - best_res) <= res_tol and zmax < best_z - 1e-15
            ):
                best_res, best_z, best_x = r, zmax, stack_x.copy()
            return
        g = grids[i]
        h = ratios[i]
        for k in range(g.size):
            stack_x[i] = g[k]
            rec(i + 1, total + float(g[k]), max(zmax, float(h[k])))
        stack_x[i] = 0.0

    rec(0, 0.0, 0.0)
    return best_x, best_res, best_z


def _two_swap_improve(
    x: np.ndarray,
    lots: np.ndarray,
    grid_caps: np.ndarray,
    burden_div: np.ndarray,
    max_passes: int = 1000,
) -> np.ndarray:
    """Move single lots off the worst-burdened account while that lowers the max.

    Only equal-lot pairs preserve the budget sum, so swaps are restricted to
    them; heterogeneous-lot instances keep the rounding solution.
    """
    x = x.copy()
    for _ in range(max_passes):
        burdens = x / burden_div
        top = int(np.argmax(burdens))
        z = float(burdens[top])
        improved = False
        for j in range(x.size):
            if j == top or lots[j] != lots[top]:
                continue
            if x[top] < lots[top] - 1e-12 or x[j] + lots[j] > grid_caps[j] + 1e-9 * lots[j]:
                continue
            new_top = (x[top] - lots[top]) / burden_div[top]
            new_j = (x[j] + lots[j]) / burden_div[j]
            others = np.delete(burdens, [top, j])
            new_z = max(new_top, new_j, float(np.max(others)) if others.size else 0.0)
            if new_z < z - 1e-15:
                x[top] -= lots[top]
                x[j] += lots[j]
                improved = True
                break
        if not improved:
            break
    return x


def solve_minmax_ilp(
    state: RoundState,
    budget: float,
    *,
    search_limit: int = ILP_SEARCH_LIMIT,
) -> IlpSolution:
    """Min-max burden over lot-grid allocations summing to the budget.

    Exact branch-and-bound when the product of grid sizes is at most
    search_limit; otherwise largest-remainder rounding plus a 2-swap pass,
    flagged exact=False. Raises GridInfeasibleError when no grid point gets
    within one (smallest) lot of the budget.
    """
    if not (math.isfinite(budget) and budget >= 0):
        raise ValueError(f"budget must be finite and >= 0, got {budget!r}")
    lots = _lot_vectors(state)
    u = state.capacity_vector()
    eps = state.epsilon
    if u.size == 0:
        if budget > budget_tolerance(budget):
            raise NoCapacityError("positive budget with no winners")
        return IlpSolution(
            action=Action.from_vector(state, np.zeros(0)),
            worst_burden=0.0,
            exact=True,
            budget_residual=abs(budget),
        )
    grids = [w.lot_grid() for w in state.winners]
    sizes = [g.size for g in grids]
    min_lot = float(np.min(lots))
    product = 1
    for s in sizes:
        product *= s
        if product > search_limit:
            break

    if product <= search_limit:
        ratios = [g / (cap + eps) for g, cap in zip(grids, u)]
        x, residual, z = _ilp_exact_search(grids, ratios, budget)
        if residual > min_lot * (1.0 + 1e-9):
            raise GridInfeasibleError(
                f"best grid residual {residual!r} exceeds one lot {min_lot!r}",
                residual,
            )
        return IlpSolution(
            action=Action.from_vector(state, x),
            worst_burden=float(z),
            exact=True,
            budget_residual=float(residual),
        )

    base = integer_pro_rata(state, budget).vector(state)
    grid_caps = np.floor(u / lots + 1e-9) * lots
    x = _two_swap_improve(base, lots, grid_caps, u + eps)
    residual = abs(budget - float(np.sum(x)))
    z = float(np.max(x / (u + eps)))
    return IlpSolution(
        action=Action.from_vector(state, x),
        worst_burden=z,
        exact=False,
        budget_residual=residual,
    )


def vector_md_step(
    prev_action: Action,
    state: RoundState,
    target: float,
    weights: LossWeights,
    eta: float,
) -> Action:
    """One projected subgradient step on the surrogate, budget from the iterate.

    The previous allocation is re-indexed onto the current winner set (new
    winners start at 0, departed ones are dropped) and clipped to the box;
    after the step y = x - eta*g the budget is B = clip(1'y, 0, U) and the
    iterate is the Euclidean projection of y onto X(B, u).
    """
    if not (math.isfinite(eta) and eta >= 0):
        raise ValueError(f"eta must be finite and >= 0, got {eta!r}")
    if not math.isfinite(target):
        raise ValueError(f"target must be finite, got {target!r}")
    u = state.capacity_vector()
    x0 = np.clip(prev_action.vector(state), 0.0, u)
    g = surrogate_subgradient(x0, u, target, weights, state.epsilon)
    y = x0 - eta * g
    total = float(np.sum(u)) if u.size else 0.0
    b = min(max(float(np.sum(y)), 0.0), total)
    x = project_capped_simplex(y, b, u)
    return Action.from_vector(state, x)


class VectorMDController:
    """Carries the descent iterate across the rounds of one episode."""

    def __init__(
        self,
        weights: LossWeights,
        eta: float,
        init: str = "zero",
    ) -> None:
        if not (math.isfinite(eta) and eta > 0):
            raise ValueError(f"eta must be finite and > 0, got {eta!r}")
        if init not in MD_INIT_RULES:
            raise ValueError(f"unknown init rule {init!r}")
        self._weights = weights
        self._eta = eta
        self._init = init
        self._prev: Action | None = None

    def step(self, state: RoundState, target: float) -> Action:
        prev = self._prev
        if prev is None:
            if self._init == "pro_rata":
                total = state.total_capacity
                seed_budget = min(max(target, 0.0), total)
                prev = pro_rata_allocate(state, seed_budget)
            else:
                prev = Action(budget=0.0, allocation={})
        action = vector_md_step(prev, state, target, self._weights, self._eta)
        self._prev = action
        return action
