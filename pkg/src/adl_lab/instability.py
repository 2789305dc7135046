"""Allocation-stability diagnostics.

Four probes of how violently a policy's output moves under small input
changes: capacity-monotonicity of residuals, rank correlation of burdens
across rounds, a two-score swap that flips a queue's entire budget, and the
effective impact slope realized by the executed mix (whose round-to-round
variation separates queues from socialized rules under account churn).
"""

from __future__ import annotations

import math
from collections.abc import Callable, Mapping, Sequence
from dataclasses import dataclass

import numpy as np
from scipy import stats

from .errors import NoExecutionError, NoJumpWitnessError
from .metrics import path_variation
from .model import Action, RoundState, boundary_tolerance
from .policies import ScoredWinners, pro_rata_allocate, queue_allocate

Allocator = Callable[[RoundState, float, Sequence[float]], Action]


@dataclass(frozen=True)
class DiagnosticsReport:
    """Episode-level stability summary for one policy.

    inversion_rate averages per-round violation fractions; the pooled
    variant divides total violations by total adjacent pairs, which weighs
    big rounds more. rank_stability is the mean adjacent-round Spearman
    correlation of burdens over shared winners (None when never defined).
    """

    inversion_rate: float
    inversion_rate_pooled: float
    rank_stability: float | None
    perturbation_jump: float | None
    effective_slope_path: tuple[float, ...] | None
    effective_slope_variation: float | None


def monotonicity_counts(
    capacities: Sequence[float] | np.ndarray,
    haircuts: Sequence[float] | np.ndarray,
) -> tuple[int, int]:
    """(violations, adjacent pairs) of the residual ordering r = u - x.

    Winners sorted by capacity descending (stable on ties) should keep
    residuals non-increasing: larger accounts retain at least as much
    absolute headroom. A pair violates when the higher-capacity side keeps
    strictly less residual beyond the slack 1e-9 * max(u); capacity ties are
    never violations.
    """
    u = np.asarray(capacities, dtype=float)
    x = np.asarray(haircuts, dtype=float)
    if u.shape != x.shape:
        raise ValueError(f"shape mismatch: {u.shape} vs {x.shape}")
    n = u.size
    if n <= 1:
        return 0, 0
    order = np.lexsort((np.arange(n), -u))
    u_sorted = u[order]
    r_sorted = (u - x)[order]
    slack = 1e-9 * float(np.max(u)) if np.max(u) > 0 else 1e-9
    violations = 0
    for k in range(n - 1):
        if u_sorted[k] - u_sorted[k + 1] <= slack:
            continue
        if r_sorted[k] < r_sorted[k + 1] - slack:
            violations += 1
    return violations, n - 1


def monotonicity_violations(
    capacities: Sequence[float] | np.ndarray,
    haircuts: Sequence[float] | np.ndarray,
) -> float:
    """Fraction of adjacent capacity-ordered pairs with inverted residuals."""
    violations, pairs = monotonicity_counts(capacities, haircuts)
    return violations / pairs if pairs else 0.0


def rank_stability(
    burdens_prev: Mapping[str, float],
    burdens_curr: Mapping[str, float],
) -> float | None:
    """Spearman correlation of burdens across two rounds' shared winners.

    Average ranks on ties. None when fewer than three winners overlap or
    either side is constant (the correlation is undefined there, not zero).
    """
    shared = sorted(set(burdens_prev) & set(burdens_curr))
    if len(shared) < 3:
        return None
    a = np.array([burdens_prev[i] for i in shared], dtype=float)
    b = np.array([burdens_curr[i] for i in shared], dtype=float)
    if np.all(a == a[0]) or np.all(b == b[0]):
        return None
    rho = stats.spearmanr(a, b).correlation
    if rho is None or not math.isfinite(rho):
        return None
    return float(rho)


def _queue_by_vector(state: RoundState, budget: float, scores: Sequence[float]) -> Action:
    return queue_allocate(state, budget, ScoredWinners.from_scores(state, scores))


def pro_rata_probe_allocator(
    state: RoundState, budget: float, scores: Sequence[float]
) -> Action:
    """Score-blind allocator for probing socialized policies."""
    del scores
    return pro_rata_allocate(state, budget)


def perturbation_probe(
    state: RoundState,
    budget: float,
    base_scores: Sequence[float] | np.ndarray,
    delta: float,
    allocator: Allocator | None = None,
) -> float:
    """L1 jump of the allocation when the top two scores swap by delta.

    Picks the two best-scored winners whose capacity covers the whole
    budget, hands the allocator scores (delta, 0, -1, ..., -1) and the
    swapped pair, and returns ||x - x'||_1. A score queue moves its entire
    budget between the two witnesses, so the jump is exactly 2B however
    small delta is; budget-continuous policies return 0.
    """
    if not (math.isfinite(delta) and delta > 0):
        raise ValueError(f"delta must be finite and > 0, got {delta!r}")
    if not (math.isfinite(budget) and budget > 0):
        raise ValueError(f"budget must be finite and > 0, got {budget!r}")
    u = state.capacity_vector()
    scores_arr = np.asarray(base_scores, dtype=float)
    if scores_arr.shape != u.shape:
        raise ValueError(f"got {scores_arr.size} scores for {u.size} winners")
    eligible = [i for i in range(u.size) if u[i] >= budget * (1.0 - 1e-12)]
    if len(eligible) < 2:
        raise NoJumpWitnessError(
            f"need two winners with capacity >= {budget!r}, found {len(eligible)}"
        )
    eligible.sort(key=lambda i: (-scores_arr[i], state.ids[i]))
    top, second = eligible[0], eligible[1]
    probe = np.full(u.size, -1.0)
    probe[top] = delta
    probe[second] = 0.0
    swapped = probe.copy()
    swapped[top], swapped[second] = probe[second], probe[top]
    alloc = allocator or _queue_by_vector
    x1 = alloc(state, budget, probe).vector(state)
    x2 = alloc(state, budget, swapped).vector(state)
    return float(np.sum(np.abs(x1 - x2)))


def effective_slope(
    alphas: Sequence[float] | np.ndarray,
    quantities: Sequence[float] | np.ndarray,
) -> float:
    """Volume-squared-weighted slope sum(a_i q_i^2) / sum(q_i^2) of an executed mix."""
    a = np.asarray(alphas, dtype=float)
    q = np.asarray(quantities, dtype=float)
    if a.shape != q.shape:
        raise ValueError(f"shape mismatch: {a.shape} vs {q.shape}")
    denom = float(np.sum(q * q))
    if denom <= 0.0:
        raise NoExecutionError("no executed quantity: effective slope undefined")
    return float(np.sum(a * q * q)) / denom


@dataclass(frozen=True)
class ChurnResult:
    effective_slopes: tuple[float, ...]
    variation: float


def churn_experiment(
    horizon: int,
    alpha_min: float,
    alpha_max: float,
    policy: str | Callable[[RoundState, float], Action] = "queue",
) -> ChurnResult:
    """Run the alternating-slope churn construction and track the effective slope.

    2T unit-capacity winners with slopes alternating (alpha_min, alpha_max,
    ...) along the id order; each round socializes budget 1 and any fully
    haircut account leaves the pool. A queue burns through one account per
    round, so its effective slope alternates and accumulates variation
    (T-1)(alpha_max - alpha_min); pro-rata executes the same mix every round
    and accumulates none.
    """
    from .scenarios import gen_churn_instance

    scenario = gen_churn_instance(horizon, alpha_min, alpha_max)
    slopes = scenario.ground_truth.account_slopes
    assert slopes is not None
    if isinstance(policy, str):
        if policy == "queue":
            def act(state: RoundState, budget: float) -> Action:
                assert scenario.scores is not None
                per_round = scenario.scores[0]
                ranked = ScoredWinners.from_scores(
                    state, {i: per_round[i] for i in state.ids}
                )
                return queue_allocate(state, budget, ranked)
        elif policy == "pro_rata":
            def act(state: RoundState, budget: float) -> Action:
                return pro_rata_allocate(state, budget)
        else:
            raise ValueError(f"unknown churn policy {policy!r}")
    else:
        act = policy

    removed: set[str] = set()
    path: list[float] = []
    for state in scenario.rounds:
        live = [w for w in state.winners if w.id not in removed]
        live_state = state.with_winners(live)
        action = act(live_state, state.deficit)
        x = action.vector(live_state)
        a = np.array([slopes[w.id] for w in live_state.winners], dtype=float)
        path.append(effective_slope(a, x))
        for w, xi in zip(live_state.winners, x):
            if xi >= w.capacity - boundary_tolerance(w.capacity):
                removed.add(w.id)
    return ChurnResult(
        effective_slopes=tuple(path), variation=path_variation(path)
    )
