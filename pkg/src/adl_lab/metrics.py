"""Loss, regret, failure, and bound computations.

Notation used throughout: H is a round's executed haircut total, b the
needed-budget benchmark for the same round, m = max_i x_i / (u_i + eps) the
concentration of an allocation. Cumulative series run through numpy's
pairwise summation, which keeps long episodes free of naive accumulation
error.
"""

from __future__ import annotations

import math
from collections.abc import Mapping, Sequence
from dataclasses import dataclass

import numpy as np

from .errors import DecompositionViolatedError, EmptyRoundError
from .model import DEFAULT_EPSILON

_ARGMAX_TIE_REL = 1e-12


@dataclass(frozen=True)
class LossWeights:
    """Non-negative weights shared by the asymmetric, surrogate, and empirical losses."""

    lambda_track: float = 1.0
    lambda_fair: float = 1.0
    lambda_under: float = 1.0
    lambda_over: float = 1.0
    lambda_empirical: float = 1.0

    def __post_init__(self) -> None:
        for name in (
            "lambda_track",
            "lambda_fair",
            "lambda_under",
            "lambda_over",
            "lambda_empirical",
        ):
            value = getattr(self, name)
            if not (math.isfinite(value) and value >= 0):
                raise ValueError(f"{name} must be finite and >= 0, got {value!r}")


@dataclass(frozen=True)
class RoundLossBreakdown:
    """Surrogate loss of one round split into its additive parts.

    total = tracking + fairness; overshoot and undershoot are the raw
    (unweighted) positive parts of H - target, so their product is zero.
    """

    tracking: float
    fairness: float
    total: float
    overshoot: float
    undershoot: float
    concentration: float


def concentration_ratio(
    x: Sequence[float] | np.ndarray,
    u: Sequence[float] | np.ndarray,
    epsilon: float = DEFAULT_EPSILON,
) -> float:
    """m = max_i x_i / (u_i + epsilon); raises EmptyRoundError on no winners."""
    arr = np.asarray(x, dtype=float)
    caps = np.asarray(u, dtype=float)
    if arr.size == 0:
        raise EmptyRoundError("concentration undefined for an empty winner set")
    return float(np.max(arr / (caps + epsilon)))


def surrogate_subgradient(
    x: Sequence[float] | np.ndarray,
    u: Sequence[float] | np.ndarray,
    target: float,
    weights: LossWeights,
    epsilon: float = DEFAULT_EPSILON,
) -> np.ndarray:
    """Subgradient of l(x) = lt*|1'x - target| + lf*max_i x_i/(u_i+eps).

    sign(0) contributes 0; the max term splits its weight uniformly over the
    argmax set.
    """
    arr = np.asarray(x, dtype=float)
    caps = np.asarray(u, dtype=float)
    g = np.zeros_like(arr)
    if weights.lambda_track > 0:
        g += weights.lambda_track * np.sign(float(np.sum(arr)) - target)
    if weights.lambda_fair > 0 and arr.size:
        ratios = arr / (caps + epsilon)
        m = float(np.max(ratios))
        ties = ratios >= m - _ARGMAX_TIE_REL * max(1.0, abs(m))
        k = int(np.count_nonzero(ties))
        g[ties] += weights.lambda_fair / (k * (caps[ties] + epsilon))
    return g


def round_loss_surrogate(
    x: Sequence[float] | np.ndarray,
    u: Sequence[float] | np.ndarray,
    target: float,
    weights: LossWeights,
    epsilon: float = DEFAULT_EPSILON,
) -> RoundLossBreakdown:
    """Convex per-round loss: weighted tracking gap plus weighted concentration."""
    arr = np.asarray(x, dtype=float)
    h = float(np.sum(arr))
    gap = h - target
    tracking = weights.lambda_track * abs(gap)
    fairness = 0.0
    concentration = 0.0
    if arr.size:
        concentration = concentration_ratio(arr, u, epsilon)
        fairness = weights.lambda_fair * concentration
    return RoundLossBreakdown(
        tracking=tracking,
        fairness=fairness,
        total=tracking + fairness,
        overshoot=max(gap, 0.0),
        undershoot=max(-gap, 0.0),
        concentration=concentration,
    )


def round_loss_asymmetric(
    h: float,
    b_needed: float,
    x: Sequence[float] | np.ndarray,
    u: Sequence[float] | np.ndarray,
    weights: LossWeights,
    epsilon: float = DEFAULT_EPSILON,
    concentration_fn=None,
) -> float:
    """Under/over-shoot charged at separate rates plus a concentration penalty."""
    under = weights.lambda_under * max(b_needed - h, 0.0)
    over = weights.lambda_over * max(h - b_needed, 0.0)
    fair = 0.0
    if weights.lambda_fair > 0:
        if concentration_fn is not None:
            fair = weights.lambda_fair * float(concentration_fn(x, u))
        else:
            fair = weights.lambda_fair * concentration_ratio(x, u, epsilon)
    return under + over + fair


def empirical_round_loss(
    h: float,
    b_needed: float,
    m: float,
    m_ilp: float,
    lam: float,
) -> float:
    """|H - b| + lam * b * |m - m_ilp|: tracking plus scaled concentration gap."""
    if not (math.isfinite(lam) and lam >= 0):
        raise ValueError(f"lam must be finite and >= 0, got {lam!r}")
    return abs(h - b_needed) + lam * b_needed * abs(m - m_ilp)


def regret(
    policy_losses: Sequence[float] | np.ndarray,
    comparator_losses: Sequence[float] | np.ndarray,
) -> float:
    """Sum of policy losses minus sum of comparator losses (same horizon)."""
    a = np.asarray(policy_losses, dtype=float)
    b = np.asarray(comparator_losses, dtype=float)
    if a.shape != b.shape:
        raise ValueError(f"horizon mismatch: {a.shape} vs {b.shape}")
    return float(np.sum(a) - np.sum(b))


def policy_class_regret(
    policy_losses: Sequence[float] | np.ndarray,
    library: Mapping[str, Sequence[float]],
) -> float:
    """Regret against the best total among a finite policy library."""
    if not library:
        raise ValueError("policy library is empty")
    totals = {name: float(np.sum(np.asarray(s, dtype=float))) for name, s in library.items()}
    return float(np.sum(np.asarray(policy_losses, dtype=float))) - min(totals.values())


@dataclass(frozen=True)
class TrackingMetrics:
    tracking: tuple[float, ...]
    overshoot: tuple[float, ...]
    undershoot: tuple[float, ...]
    cumulative_tracking: float
    cumulative_overshoot: float
    cumulative_undershoot: float
    tracking_regret: float | None


def tracking_metrics(
    h_series: Sequence[float] | np.ndarray,
    b_series: Sequence[float] | np.ndarray,
    library: Mapping[str, Sequence[float]] | None = None,
) -> TrackingMetrics:
    """Per-round |H - b| split into overshoot/undershoot, plus library regret.

    library maps policy names to their H series on the same rounds; the
    regret compares cumulative tracking error against the library's best.
    """
    h = np.asarray(h_series, dtype=float)
    b = np.asarray(b_series, dtype=float)
    if h.shape != b.shape:
        raise ValueError(f"horizon mismatch: {h.shape} vs {b.shape}")
    gap = h - b
    over = np.maximum(gap, 0.0)
    under = np.maximum(-gap, 0.0)
    track = np.abs(gap)
    reg: float | None = None
    if library is not None:
        totals = []
        for other in library.values():
            o = np.asarray(other, dtype=float)
            if o.shape != b.shape:
                raise ValueError("library series horizon mismatch")
            totals.append(float(np.sum(np.abs(o - b))))
        if not totals:
            raise ValueError("tracking library is empty")
        reg = float(np.sum(track)) - min(totals)
    return TrackingMetrics(
        tracking=tuple(track.tolist()),
        overshoot=tuple(over.tolist()),
        undershoot=tuple(under.tolist()),
        cumulative_tracking=float(np.sum(track)),
        cumulative_overshoot=float(np.sum(over)),
        cumulative_undershoot=float(np.sum(under)),
        tracking_regret=reg,
    )


def cumulative_failure(
    h_series: Sequence[float] | np.ndarray,
    b_series: Sequence[float] | np.ndarray,
) -> float:
    """V_T = sum of [b - H]_+ : budget shortfall accumulated over the episode."""
    h = np.asarray(h_series, dtype=float)
    b = np.asarray(b_series, dtype=float)
    if h.shape != b.shape:
        raise ValueError(f"horizon mismatch: {h.shape} vs {b.shape}")
    return float(np.sum(np.maximum(b - h, 0.0)))


def path_variation(series: Sequence[float] | np.ndarray) -> float:
    """P = sum_t |s_t - s_{t-1}|; zero for constant or single-entry series."""
    s = np.asarray(series, dtype=float)
    if s.size == 0:
        raise ValueError("path variation needs at least one entry")
    if s.size == 1:
        return 0.0
    return float(np.sum(np.abs(np.diff(s))))


def instance_bound(p: float, deficits: Sequence[float] | np.ndarray) -> float:
    """sqrt((1 + 2P) * sum D_t^2): the instance-calibrated regret envelope."""
    if not (math.isfinite(p) and p >= 0):
        raise ValueError(f"path variation must be finite and >= 0, got {p!r}")
    d = np.asarray(deficits, dtype=float)
    return float(math.sqrt((1.0 + 2.0 * p) * float(np.sum(d * d))))


def instance_bound_prefix(
    theta_star: Sequence[float] | np.ndarray,
    deficits: Sequence[float] | np.ndarray,
) -> np.ndarray:
    """Per-round prefix of the envelope: bound_t over rounds 1..t."""
    ts = np.asarray(theta_star, dtype=float)
    d = np.asarray(deficits, dtype=float)
    if ts.shape != d.shape:
        raise ValueError(f"horizon mismatch: {ts.shape} vs {d.shape}")
    if ts.size == 0:
        return np.zeros(0)
    p_prefix = np.concatenate([[0.0], np.cumsum(np.abs(np.diff(ts)))])
    d_sq_prefix = np.cumsum(d * d)
    return np.sqrt((1.0 + 2.0 * p_prefix) * d_sq_prefix)


@dataclass(frozen=True)
class FixedActionResult:
    x: tuple[float, ...]
    total_loss: float
    approximate: bool


def best_fixed_action(
    capacity_rows: Sequence[Sequence[float]] | np.ndarray,
    targets: Sequence[float] | np.ndarray,
    weights: LossWeights,
    epsilon: float = DEFAULT_EPSILON,
    *,
    grid_points: int = 33,
    descent_iters: int = 2000,
) -> FixedActionResult:
    """Best fixed allocation for the surrogate over an episode.

    The comparator domain is the coordinatewise intersection box
    [0, min_t u_{i,t}] (ids missing from a round enter with capacity 0).
    Exhaustive grid search for n <= 3, projected subgradient descent with a
    decaying step otherwise; the latter is flagged approximate.
    """
    caps = np.asarray(capacity_rows, dtype=float)
    b = np.asarray(targets, dtype=float)
    if caps.ndim != 2 or caps.shape[0] != b.shape[0]:
        raise ValueError("capacity_rows must be (T, n) matching targets")
    t_len, n = caps.shape
    if t_len == 0 or n == 0:
        raise ValueError("episode must have at least one round and one winner")
    box = caps.min(axis=0)

    def total_loss_many(points: np.ndarray) -> np.ndarray:
        sums = points.sum(axis=1)
        track = weights.lambda_track * np.abs(sums[:, None] - b[None, :])
        ratios = points[:, None, :] / (caps[None, :, :] + epsilon)
        fair = weights.lambda_fair * ratios.max(axis=2)
        return (track + fair).sum(axis=1)

    if n <= 3:
        axes = [np.linspace(0.0, box[i], grid_points) for i in range(n)]
        mesh = np.meshgrid(*axes, indexing="ij")
        points = np.stack([m.ravel() for m in mesh], axis=1)
        losses = total_loss_many(points)
        best = int(np.argmin(losses))
        return FixedActionResult(
            x=tuple(points[best].tolist()),
            total_loss=float(losses[best]),
            approximate=False,
        )

    x = 0.5 * box
    best_x = x.copy()
    best_loss = float(total_loss_many(x[None, :])[0])
    radius = float(np.linalg.norm(box)) or 1.0
    g_scale = weights.lambda_track * math.sqrt(n) + weights.lambda_fair / epsilon
    for k in range(1, descent_iters + 1):
        g = np.zeros(n)
        for t in range(t_len):
            g += surrogate_subgradient(x, caps[t], float(b[t]), weights, epsilon)
        step = radius / (g_scale * math.sqrt(k))
        x = np.clip(x - step * g / max(t_len, 1), 0.0, box)
        loss = float(total_loss_many(x[None, :])[0])
        if loss < best_loss:
            best_loss = loss
            best_x = x.copy()
    return FixedActionResult(
        x=tuple(best_x.tolist()), total_loss=best_loss, approximate=True
    )


def static_regret(
    policy_losses: Sequence[float] | np.ndarray,
    capacity_rows: Sequence[Sequence[float]] | np.ndarray,
    targets: Sequence[float] | np.ndarray,
    weights: LossWeights,
    epsilon: float = DEFAULT_EPSILON,
) -> tuple[float, bool]:
    """Regret against the best fixed allocation; second value flags approximation."""
    comparator = best_fixed_action(capacity_rows, targets, weights, epsilon)
    total = float(np.sum(np.asarray(policy_losses, dtype=float)))
    return total - comparator.total_loss, comparator.approximate


def surrogate_ogd(
    capacity_rows: Sequence[Sequence[float]] | np.ndarray,
    targets: Sequence[float] | np.ndarray,
    weights: LossWeights,
    epsilon: float = DEFAULT_EPSILON,
    *,
    eta: float,
    x0: Sequence[float] | np.ndarray | None = None,
) -> tuple[np.ndarray, np.ndarray]:
    """Box-projected online subgradient descent on the surrogate.

    Plays x_t, observes l_t, steps x_{t+1} = clip(x_t - eta * g_t, 0, u_t).
    Returns (losses, iterates) with iterates of shape (T, n).
    """
    caps = np.asarray(capacity_rows, dtype=float)
    b = np.asarray(targets, dtype=float)
    if caps.ndim != 2 or caps.shape[0] != b.shape[0]:
        raise ValueError("capacity_rows must be (T, n) matching targets")
    if not (math.isfinite(eta) and eta > 0):
        raise ValueError(f"eta must be finite and > 0, got {eta!r}")
    t_len, n = caps.shape
    x = np.zeros(n) if x0 is None else np.clip(np.asarray(x0, dtype=float), 0.0, caps[0])
    losses = np.zeros(t_len)
    iterates = np.zeros((t_len, n))
    for t in range(t_len):
        x = np.clip(x, 0.0, caps[t])
        iterates[t] = x
        losses[t] = round_loss_surrogate(x, caps[t], float(b[t]), weights, epsilon).total
        g = surrogate_subgradient(x, caps[t], float(b[t]), weights, epsilon)
        x = np.clip(x - eta * g, 0.0, caps[t])
    return losses, iterates


def decomposition_gap(
    policy_losses: Sequence[float] | np.ndarray,
    *,
    best_comparator_total: float,
    regret_est: float,
    track_weight: float,
    benchmark_gaps: Sequence[float] | np.ndarray,
    tolerance: float = 1e-6,
) -> float:
    """Slack of the transfer bound

        sum l(x_t) <= best comparator total + regret under the estimated
        targets + 2 * lambda_track * sum |b - b_hat|.

    Returns the slack (rhs - lhs); negative slack beyond tolerance raises
    DecompositionViolatedError because the inequality holds for arbitrary
    allocation sequences.
    """
    lhs = float(np.sum(np.asarray(policy_losses, dtype=float)))
    gaps = np.asarray(benchmark_gaps, dtype=float)
    rhs = best_comparator_total + regret_est + 2.0 * track_weight * float(np.sum(np.abs(gaps)))
    slack = rhs - lhs
    if slack < -tolerance:
        raise DecompositionViolatedError(
            f"decomposition slack {slack!r} below -{tolerance!r}"
        )
    return slack


@dataclass(frozen=True)
class EpisodeMetrics:
    """Per-policy episode summary serialized into the run's JSON report."""

    policy: str
    delta: int
    objective_total: float
    tracking_component: float
    fairness_component: float
    cumulative_failure: float
    path_variation: float
    instance_bound: float
    bound_ratio: float | None
    static_regret: float | None
    static_regret_approximate: bool
    dynamic_regret: float | None
    policy_class_regret: float | None
    tracking_regret: float | None
