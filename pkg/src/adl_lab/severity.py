"""Severity control and execution-cost estimation.

Severity theta in [0, 1] scales the round deficit into a budget B = theta*D.
The needed budget of a round is what closing the winning positions actually
costs against their bankruptcy prices,

    B_needed = sum_k |p_exec,k - p_bankruptcy,k| * |q_k|,

and execution prices come from a linear impact model p(q) = p_mark -/+
alpha*q (minus when closing longs into the book, plus for shorts). Both the
severity and the impact slope are tracked online with sign-based projected
subgradient steps.
"""

from __future__ import annotations

import math
from collections.abc import Iterable, Sequence
from dataclasses import dataclass, replace
from enum import Enum

import numpy as np

from .errors import (
    DegenerateEpisodeError,
    NoExecutionError,
    NonpositiveExecPriceError,
)
from .model import DEFAULT_EPSILON


class CloseSide(str, Enum):
    """Direction of the forced close: longs sell into the book, shorts buy."""

    LONG = "long_close"
    SHORT = "short_close"


@dataclass(frozen=True)
class FillRecord:
    """One executed (or estimator-implied) close: prices plus absolute size."""

    exec_price: float
    bankruptcy_price: float
    quantity: float
    side: CloseSide = CloseSide.LONG

    def __post_init__(self) -> None:
        if not (math.isfinite(self.exec_price) and self.exec_price > 0):
            raise ValueError(f"exec_price must be positive, got {self.exec_price!r}")
        if not (math.isfinite(self.bankruptcy_price) and self.bankruptcy_price > 0):
            raise ValueError(
                f"bankruptcy_price must be positive, got {self.bankruptcy_price!r}"
            )
        if not (math.isfinite(self.quantity) and self.quantity != 0):
            raise ValueError(f"quantity must be finite and nonzero, got {self.quantity!r}")


@dataclass(frozen=True)
class LinearImpactModel:
    """p_exec(q) = mark_price -/+ slope * q for a close of size q >= 0."""

    mark_price: float
    slope: float
    side: CloseSide = CloseSide.LONG

    def __post_init__(self) -> None:
        if not (math.isfinite(self.mark_price) and self.mark_price > 0):
            raise ValueError(f"mark_price must be positive, got {self.mark_price!r}")
        if not (math.isfinite(self.slope) and self.slope >= 0):
            raise ValueError(f"slope must be finite and >= 0, got {self.slope!r}")


def exec_price(model: LinearImpactModel, quantity: float) -> float:
    """Execution price for a close of size quantity under linear impact."""
    if not (math.isfinite(quantity) and quantity >= 0):
        raise ValueError(f"quantity must be finite and >= 0, got {quantity!r}")
    shift = model.slope * quantity
    price = (
        model.mark_price - shift
        if model.side is CloseSide.LONG
        else model.mark_price + shift
    )
    if price <= 0.0:
        raise NonpositiveExecPriceError(
            f"impact drove execution price to {price!r} (mark {model.mark_price!r}, "
            f"slope {model.slope!r}, q {quantity!r})"
        )
    return float(price)


def fill_from_model(
    model: LinearImpactModel,
    quantity: float,
    bankruptcy_price: float | None = None,
) -> FillRecord:
    """Build the fill a model implies for a close; bankruptcy defaults to mark."""
    bk = model.mark_price if bankruptcy_price is None else bankruptcy_price
    return FillRecord(
        exec_price=exec_price(model, quantity),
        bankruptcy_price=bk,
        quantity=quantity,
        side=model.side,
    )


def needed_budget(fills: Iterable[FillRecord]) -> float:
    """sum |p_exec - p_bankruptcy| * |q| over fills; 0 for no fills."""
    terms = np.array(
        [abs(f.exec_price - f.bankruptcy_price) * abs(f.quantity) for f in fills],
        dtype=float,
    )
    return float(np.sum(terms)) if terms.size else 0.0


def estimated_needed_budget(fills: Iterable[FillRecord]) -> float:
    """Same accumulation over estimator-implied fills (see fill_from_model)."""
    return needed_budget(fills)


def observed_slope(fills: Iterable[FillRecord], mark_price: float) -> float:
    """Volume-weighted |p_exec - p_mark| / |q| across fills.

    This is the realized impact slope a linear model would need to explain
    the fills; raises NoExecutionError when there is no volume.
    """
    if not (math.isfinite(mark_price) and mark_price > 0):
        raise ValueError(f"mark_price must be positive, got {mark_price!r}")
    fs = list(fills)
    volume = float(np.sum(np.array([abs(f.quantity) for f in fs], dtype=float))) if fs else 0.0
    if volume <= 0.0:
        raise NoExecutionError("no executed quantity: observed slope undefined")
    weighted = np.array(
        [abs(f.quantity) * (abs(f.exec_price - mark_price) / abs(f.quantity)) for f in fs],
        dtype=float,
    )
    return float(np.sum(weighted)) / volume


def theta_needed(b_needed: float, deficit: float, epsilon: float = DEFAULT_EPSILON) -> float:
    """Severity that would have funded the round: min(1, B_needed / (D + eps))."""
    if not (math.isfinite(b_needed) and b_needed >= 0):
        raise ValueError(f"b_needed must be finite and >= 0, got {b_needed!r}")
    if not (math.isfinite(deficit) and deficit >= 0):
        raise ValueError(f"deficit must be finite and >= 0, got {deficit!r}")
    if not (math.isfinite(epsilon) and epsilon > 0):
        raise ValueError(f"epsilon must be finite and > 0, got {epsilon!r}")
    return min(1.0, b_needed / (deficit + epsilon))


@dataclass(frozen=True)
class SeverityController:
    """Online severity state.

    step is the fixed OGD step size; None selects the adaptive schedule
    eta_t = 1 / sqrt(sum_{tau<=t} D_tau^2 + 1), for which the controller
    accumulates squared deficits.
    """

    theta: float = 0.0
    step: float | None = None
    deficit_sq_sum: float = 0.0

    def __post_init__(self) -> None:
        if not (0.0 <= self.theta <= 1.0):
            raise ValueError(f"theta must lie in [0, 1], got {self.theta!r}")
        if self.step is not None and not (math.isfinite(self.step) and self.step > 0):
            raise ValueError(f"step must be positive when fixed, got {self.step!r}")
        if not (math.isfinite(self.deficit_sq_sum) and self.deficit_sq_sum >= 0):
            raise ValueError(
                f"deficit_sq_sum must be finite and >= 0, got {self.deficit_sq_sum!r}"
            )


def theta_ogd_step(
    controller: SeverityController,
    deficit: float,
    theta_needed: float,
) -> SeverityController:
    """theta <- clip(theta - eta * D * sign(theta - theta_needed), 0, 1).

    The deficit scales the subgradient, so heavy rounds move the severity
    more; sign(0) contributes nothing.
    """
    if not (math.isfinite(deficit) and deficit >= 0):
        raise ValueError(f"deficit must be finite and >= 0, got {deficit!r}")
    if not (0.0 <= theta_needed <= 1.0):
        raise ValueError(f"theta_needed must lie in [0, 1], got {theta_needed!r}")
    sq = controller.deficit_sq_sum + deficit * deficit
    eta = controller.step if controller.step is not None else 1.0 / math.sqrt(sq + 1.0)
    g = deficit * math.copysign(1.0, controller.theta - theta_needed) if controller.theta != theta_needed else 0.0
    theta = min(1.0, max(0.0, controller.theta - eta * g))
    return replace(controller, theta=theta, deficit_sq_sum=sq)


@dataclass(frozen=True)
class SlopeEstimator:
    """Projected sign-descent tracker for the impact slope, clipped to [0, alpha_max]."""

    estimate: float = 0.0
    step: float = 0.1
    alpha_max: float = math.inf

    def __post_init__(self) -> None:
        if not (math.isfinite(self.step) and self.step > 0):
            raise ValueError(f"step must be positive, got {self.step!r}")
        if not self.alpha_max > 0:
            raise ValueError(f"alpha_max must be positive, got {self.alpha_max!r}")
        if not (0.0 <= self.estimate <= self.alpha_max):
            raise ValueError(
                f"estimate must lie in [0, alpha_max], got {self.estimate!r}"
            )


def slope_ogd_step(estimator: SlopeEstimator, alpha_observed: float) -> SlopeEstimator:
    """alpha_hat <- clip(alpha_hat - eta * sign(alpha_hat - alpha_obs), 0, alpha_max)."""
    if not (math.isfinite(alpha_observed) and alpha_observed >= 0):
        raise ValueError(f"alpha_observed must be finite and >= 0, got {alpha_observed!r}")
    if estimator.estimate == alpha_observed:
        return estimator
    g = math.copysign(1.0, estimator.estimate - alpha_observed)
    cap = estimator.alpha_max if math.isfinite(estimator.alpha_max) else math.inf
    value = estimator.estimate - estimator.step * g
    value = min(cap, max(0.0, value)) if math.isfinite(cap) else max(0.0, value)
    return replace(estimator, estimate=value)


def optimal_step_size(p: float, deficits: Sequence[float] | np.ndarray) -> float:
    """eta* = sqrt((1 + 2P) / sum D_t^2), the fixed step matching the envelope.

    P is the path variation of the comparator severity path; plugging eta*
    into the usual (1 + 2P)/(2 eta) + (eta / 2) sum D^2 regret split yields
    sqrt((1 + 2P) sum D^2).
    """
    if not (math.isfinite(p) and p >= 0):
        raise ValueError(f"path variation must be finite and >= 0, got {p!r}")
    d = np.asarray(deficits, dtype=float)
    total_sq = float(np.sum(d * d))
    if total_sq <= 0.0:
        raise DegenerateEpisodeError("all deficits are zero: step size undefined")
    return float(math.sqrt((1.0 + 2.0 * p) / total_sq))


def scalar_needed_budget(alpha: float, q_scale: float) -> float:
    """Scalar benchmark B = alpha * Q^2 used by generated episodes."""
    if not (math.isfinite(alpha) and alpha >= 0):
        raise ValueError(f"alpha must be finite and >= 0, got {alpha!r}")
    if not (math.isfinite(q_scale) and q_scale >= 0):
        raise ValueError(f"q_scale must be finite and >= 0, got {q_scale!r}")
    return alpha * q_scale * q_scale
