"""Batch evaluation of policy libraries over scenarios.

A run crosses policies with markout horizons and a fairness-weight grid,
producing one row per (policy, round, delta): executed haircut, needed
budget, tracking split, concentration against the min-max reference, and
the empirical loss |H - b| + lambda * b * |m - m_ilp|. Episode summaries
add regrets, cumulative failure, and the instance-calibrated bound.

Budgets follow the policy's severity mode:

* ``needed``      B = clip(B_needed, 0, U), the ex post reference coupling
                  (continuous pro-rata and the min-max program default here);
* ``track_hat``   B = clip(B_hat, 0, U) from the start-of-round estimate
                  chain (benchmark hats, else slope tracking alpha_hat*Q^2,
                  else the previous round's realized needed budget);
* ``fixed:<t>``   B = clip(theta * D, 0, U);
* ``ogd[:<eta>]`` theta follows the deficit-scaled sign descent against
                  realized needed severities (adaptive step when no eta).

Vector descent ignores the mode: its budget is the iterate sum, targeted at
the estimate chain. Production and comparator replay recorded haircuts.
"""

from __future__ import annotations

import math
import os
from collections.abc import Mapping, Sequence
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from .errors import AdlError, ConfigError, InternalInvariantError
from .instability import (
    monotonicity_counts,
    perturbation_probe,
    rank_stability,
)
from .metrics import (
    EpisodeMetrics,
    LossWeights,
    concentration_ratio,
    cumulative_failure,
    empirical_round_loss,
    instance_bound,
    instance_bound_prefix,
    path_variation,
    regret,
    round_loss_surrogate,
    static_regret,
)
from .model import Action, RoundState, boundary_tolerance
from .policies import (
    PolicySpec,
    ScoredWinners,
    VectorMDController,
    integer_pro_rata,
    minmax_allocate,
    pro_rata_allocate,
    queue_allocate,
    solve_minmax_ilp,
)
from .scenarios import (
    BenchmarkSeries,
    DiagnosticsRow,
    ResultRow,
    Scenario,
    format_number,
    gen_alternating_capacity,
    gen_churn_instance,
    gen_random_episode,
    load_replay_csv,
    read_results_csv,
    write_diagnostics_csv,
    write_episode_json,
    write_results_csv,
    RandomEpisodeParams,
)
from .severity import (
    SeverityController,
    SlopeEstimator,
    scalar_needed_budget,
    slope_ogd_step,
    theta_needed,
    theta_ogd_step,
)

THREADS_ENV = "ADL_LAB_THREADS"

PROBE_DELTA = 1e-9

_STATIC_REGRET_MAX_IDS = 32

_SEVERITY_DEFAULTS = {
    "pro_rata": "needed",
    "minmax_ilp": "needed",
}


@dataclass(frozen=True)
class RunConfig:
    """Everything one run needs; paths are resolved by load_config."""

    scenario: str
    policies: tuple[PolicySpec, ...]
    generator_params: Mapping[str, object] = field(default_factory=dict)
    weights: LossWeights = field(default_factory=LossWeights)
    lambda_sweep: tuple[float, ...] = ()
    deltas: tuple[int, ...] | None = None
    severity: str = "track_hat"
    theta0: float = 0.0
    out_dir: str = "results"
    seed: int = 0

    def __post_init__(self) -> None:
        if not self.policies:
            raise ConfigError("policy library is empty")
        labels = [p.label for p in self.policies]
        if len(set(labels)) != len(labels):
            raise ConfigError(f"duplicate policy labels {labels!r}")
        _parse_severity_mode(self.severity)
        if not (0.0 <= self.theta0 <= 1.0):
            raise ConfigError(f"theta0 must lie in [0, 1], got {self.theta0!r}")

    def sweep(self) -> tuple[float, ...]:
        return self.lambda_sweep or (self.weights.lambda_empirical,)


def _parse_severity_mode(mode: str) -> tuple[str, float | None]:
    if mode in ("needed", "track_hat"):
        return mode, None
    if mode in ("ogd", "ogd:adaptive"):
        return "ogd", None
    if mode.startswith("ogd:"):
        try:
            eta = float(mode.split(":", 1)[1])
        except ValueError:
            raise ConfigError(f"bad severity mode {mode!r}") from None
        if not (math.isfinite(eta) and eta > 0):
            raise ConfigError(f"severity ogd step must be > 0, got {eta!r}")
        return "ogd", eta
    if mode.startswith("fixed:"):
        try:
            theta = float(mode.split(":", 1)[1])
        except ValueError:
            raise ConfigError(f"bad severity mode {mode!r}") from None
        if not (0.0 <= theta <= 1.0):
            raise ConfigError(f"fixed severity must lie in [0, 1], got {theta!r}")
        return "fixed", theta
    raise ConfigError(f"unknown severity mode {mode!r}")


_POLICY_LINE_KEYS = ("score", "eta", "init", "severity", "name")


def parse_policy_line(text: str) -> PolicySpec:
    """``kind key=value ...`` with keys score, eta, init, severity, name."""
    tokens = text.split()
    if not tokens:
        raise ConfigError("empty policy line")
    kind = tokens[0]
    kwargs: dict[str, object] = {}
    for token in tokens[1:]:
        if "=" not in token:
            raise ConfigError(f"bad policy token {token!r} (expected key=value)")
        key, _, value = token.partition("=")
        if key not in _POLICY_LINE_KEYS:
            raise ConfigError(f"unknown policy key {key!r}")
        if key == "eta":
            try:
                kwargs["eta"] = float(value)
            except ValueError:
                raise ConfigError(f"bad eta {value!r}") from None
        elif key == "score":
            kwargs["score_source"] = value
        else:
            kwargs[key] = value
    try:
        return PolicySpec(kind=kind, **kwargs)  # type: ignore[arg-type]
    except ValueError as exc:
        raise ConfigError(str(exc)) from None


_SCALAR_KEYS = (
    "scenario",
    "severity",
    "theta0",
    "out",
    "seed",
    "lambda_track",
    "lambda_under",
    "lambda_over",
    "lambda_empirical",
)


def load_config(path: str | Path) -> RunConfig:
    """Flat ``key = value`` text; repeated ``policy``, ``delta``, and
    ``lambda_fair`` keys accumulate; ``gen.<name>`` keys feed the generator.
    Relative paths resolve against the config file's directory."""
    p = Path(path)
    if not p.is_file():
        raise ConfigError(f"config file {p} does not exist")
    scalars: dict[str, str] = {}
    policies: list[PolicySpec] = []
    deltas: list[int] = []
    lambda_fair: list[float] = []
    gen_params: dict[str, object] = {}
    for lineno, raw in enumerate(p.read_text().splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"{p}:{lineno}: expected key = value, got {raw!r}")
        key, _, value = (s.strip() for s in line.partition("="))
        if key == "policy":
            policies.append(parse_policy_line(value))
        elif key == "delta":
            try:
                deltas.append(int(value))
            except ValueError:
                raise ConfigError(f"{p}:{lineno}: bad delta {value!r}") from None
        elif key == "lambda_fair":
            try:
                lambda_fair.append(float(value))
            except ValueError:
                raise ConfigError(f"{p}:{lineno}: bad lambda_fair {value!r}") from None
        elif key.startswith("gen."):
            name = key[4:]
            try:
                gen_params[name] = int(value)
            except ValueError:
                try:
                    gen_params[name] = float(value)
                except ValueError:
                    gen_params[name] = value
        elif key in _SCALAR_KEYS:
            if key in scalars:
                raise ConfigError(f"{p}:{lineno}: duplicate key {key!r}")
            scalars[key] = value
        else:
            raise ConfigError(f"{p}:{lineno}: unknown key {key!r}")

    if "scenario" not in scalars:
        raise ConfigError(f"{p}: missing required key 'scenario'")
    scenario = scalars["scenario"]
    if scenario.startswith("replay:"):
        target = scenario.split(":", 1)[1]
        resolved = (p.parent / target).resolve() if not Path(target).is_absolute() else Path(target)
        scenario = f"replay:{resolved}"

    def _float(key: str, default: float) -> float:
        if key not in scalars:
            return default
        try:
            return float(scalars[key])
        except ValueError:
            raise ConfigError(f"{p}: bad {key} {scalars[key]!r}") from None

    weights = LossWeights(
        lambda_track=_float("lambda_track", 1.0),
        lambda_fair=lambda_fair[0] if lambda_fair else 1.0,
        lambda_under=_float("lambda_under", 1.0),
        lambda_over=_float("lambda_over", 1.0),
        lambda_empirical=_float(
            "lambda_empirical", lambda_fair[0] if lambda_fair else 1.0
        ),
    )
    out_dir = scalars.get("out", "results")
    if not Path(out_dir).is_absolute():
        out_dir = str((p.parent / out_dir).resolve())
    try:
        seed = int(scalars.get("seed", "0"))
    except ValueError:
        raise ConfigError(f"{p}: bad seed {scalars['seed']!r}") from None
    return RunConfig(
        scenario=scenario,
        policies=tuple(policies),
        generator_params=gen_params,
        weights=weights,
        lambda_sweep=tuple(lambda_fair) if len(lambda_fair) > 1 else (),
        deltas=tuple(deltas) if deltas else None,
        severity=scalars.get("severity", "track_hat"),
        theta0=_float("theta0", 0.0),
        out_dir=out_dir,
        seed=seed,
    )


def resolve_scenario(config: RunConfig) -> Scenario:
    spec = config.scenario
    if spec.startswith("replay:"):
        return load_replay_csv(spec.split(":", 1)[1])
    if spec.startswith("generator:"):
        kind = spec.split(":", 1)[1]
        params = dict(config.generator_params)
        if kind == "alternating":
            return gen_alternating_capacity(
                int(params.get("T", 16)), float(params.get("M", 2.0))
            )
        if kind == "churn":
            return gen_churn_instance(
                int(params.get("T", 16)),
                float(params.get("alpha_min", 0.0)),
                float(params.get("alpha_max", 1.0)),
            )
        if kind == "random":
            fields: dict[str, object] = {}
            if "T" in params:
                fields["horizon"] = int(params["T"])
            for name in ("alpha_low", "alpha_high", "stay_probability", "lot_size", "epsilon"):
                if name in params:
                    fields[name] = float(params[name])
            return gen_random_episode(config.seed, RandomEpisodeParams(**fields))  # type: ignore[arg-type]
        raise ConfigError(f"unknown generator {kind!r}")
    raise ConfigError(
        f"scenario must be 'replay:<dir>' or 'generator:<kind>', got {spec!r}"
    )


class _NeededEstimator:
    """Start-of-round B_hat chain; one instance per policy evaluation."""

    def __init__(self, series: BenchmarkSeries, scenario: Scenario) -> None:
        self._series = series
        self._alpha_based = series.alpha_true is not None and series.q_scale is not None
        self._estimator: SlopeEstimator | None = None
        if self._alpha_based:
            horizon = max(len(series.b_needed), 1)
            cap = scenario.params.get("alpha_max") or scenario.params.get("alpha_high")
            if isinstance(cap, (int, float)) and cap > 0:
                self._estimator = SlopeEstimator(
                    estimate=0.0, step=float(cap) / math.sqrt(horizon), alpha_max=float(cap)
                )
            else:
                self._estimator = SlopeEstimator(
                    estimate=0.0, step=1.0 / math.sqrt(horizon), alpha_max=math.inf
                )

    def estimate(self, t: int) -> float:
        if self._series.b_needed_hat is not None:
            return self._series.b_needed_hat[t]
        if self._alpha_based and self._estimator is not None:
            assert self._series.q_scale is not None
            return scalar_needed_budget(
                self._estimator.estimate, self._series.q_scale[t]
            )
        return self._series.b_needed[t - 1] if t > 0 else 0.0

    def observe(self, t: int) -> None:
        if self._alpha_based and self._estimator is not None:
            assert self._series.alpha_true is not None
            self._estimator = slope_ogd_step(
                self._estimator, self._series.alpha_true[t]
            )


@dataclass
class _PolicyRun:
    spec: PolicySpec
    rows: list[ResultRow]
    surrogate_losses: list[float]
    h_series: list[float]
    diagnostics: DiagnosticsRow | None


def _reference_concentrations(
    scenario: Scenario, series: BenchmarkSeries
) -> list[float]:
    """Concentration of the min-max reference at B = clip(b, 0, U), per round."""
    out: list[float] = []
    for t, state in enumerate(scenario.rounds):
        u = state.capacity_vector()
        total = float(np.sum(u)) if u.size else 0.0
        budget = min(max(series.b_needed[t], 0.0), total)
        if u.size == 0 or budget <= 0.0:
            out.append(0.0)
            continue
        if all(w.lot_size is not None for w in state.winners):
            solution = solve_minmax_ilp(state, budget)
            x = solution.action.vector(state)
        else:
            x = minmax_allocate(state, budget).action.vector(state)
        out.append(concentration_ratio(x, u, state.epsilon))
    return out


def _queue_scores(
    spec: PolicySpec, scenario: Scenario, t: int, state: RoundState
) -> ScoredWinners:
    source = spec.score_source
    if source == "score":
        if scenario.scores is None:
            raise ConfigError(
                f"policy {spec.label!r} needs recorded scores, scenario has none"
            )
        per_round = scenario.scores[t]
        missing = [i for i in state.ids if i not in per_round]
        if missing:
            raise ConfigError(f"scores missing winners {missing!r} in round {state.round_id}")
        return ScoredWinners.from_scores(state, {i: per_round[i] for i in state.ids})
    if source == "capacity":
        return ScoredWinners.from_scores(state, state.capacity_vector())
    if source.startswith("context:"):
        key = source.split(":", 1)[1]
        if key not in state.context:
            raise ConfigError(
                f"round {state.round_id} context has no signal {key!r}"
            )
        value = float(state.context[key])
        return ScoredWinners.from_scores(state, [value] * len(state.winners))
    raise ConfigError(f"unknown score source {source!r}")


def _evaluate_policy(
    scenario: Scenario,
    spec: PolicySpec,
    series: BenchmarkSeries,
    weights: LossWeights,
    lam: float,
    severity_mode: str,
    theta0: float,
    m_ilp: Sequence[float],
    with_diagnostics: bool,
) -> _PolicyRun:
    mode, mode_value = _parse_severity_mode(
        spec.severity or _SEVERITY_DEFAULTS.get(spec.kind, severity_mode)
    )
    estimator = _NeededEstimator(series, scenario)
    controller = SeverityController(
        theta=theta0, step=mode_value if mode == "ogd" else None
    )
    md: VectorMDController | None = None
    if spec.kind == "vector_md":
        assert spec.eta is not None
        md = VectorMDController(weights, spec.eta, spec.init)

    if spec.kind == "production" and scenario.ground_truth.production is None:
        raise ConfigError("production policy needs recorded production haircuts")
    if spec.kind == "comparator" and scenario.ground_truth.comparator is None:
        raise ConfigError("comparator policy needs a recorded comparator path")

    removed: set[str] = set()
    rows: list[ResultRow] = []
    surrogate: list[float] = []
    h_series: list[float] = []
    inv_rates: list[float] = []
    inv_violations = 0
    inv_pairs = 0
    jumps: list[float] = []
    burden_rounds: list[dict[str, float]] = []

    for t, full_state in enumerate(scenario.rounds):
        if scenario.removal_rule and removed:
            state = full_state.with_winners(
                [w for w in full_state.winners if w.id not in removed]
            )
        else:
            state = full_state
        u = state.capacity_vector()
        total_cap = float(np.sum(u)) if u.size else 0.0
        b = series.b_needed[t]

        if spec.kind == "production":
            assert scenario.ground_truth.production is not None
            recorded = scenario.ground_truth.production[t]
            alloc = {i: recorded.get(i, 0.0) for i in state.ids}
            action = Action(budget=float(np.sum(list(alloc.values()))), allocation=alloc)
        elif spec.kind == "comparator":
            assert scenario.ground_truth.comparator is not None
            recorded = scenario.ground_truth.comparator[t]
            alloc = {i: recorded.get(i, 0.0) for i in state.ids}
            action = Action(budget=float(np.sum(list(alloc.values()))), allocation=alloc)
        elif spec.kind == "vector_md":
            assert md is not None
            action = md.step(state, estimator.estimate(t))
        else:
            if mode == "needed":
                budget = min(max(b, 0.0), total_cap)
            elif mode == "track_hat":
                budget = min(max(estimator.estimate(t), 0.0), total_cap)
            elif mode == "fixed":
                assert mode_value is not None
                budget = min(mode_value * state.deficit, total_cap)
            else:  # ogd
                budget = min(controller.theta * state.deficit, total_cap)
            if spec.kind == "queue":
                action = queue_allocate(state, budget, _queue_scores(spec, scenario, t, state))
            elif spec.kind == "pro_rata":
                action = pro_rata_allocate(state, budget)
            elif spec.kind == "integer_pro_rata":
                action = integer_pro_rata(state, budget)
            elif spec.kind == "minmax_ilp":
                action = solve_minmax_ilp(state, budget).action
            else:
                raise ConfigError(f"unhandled policy kind {spec.kind!r}")

        x = action.vector(state)
        h = action.total
        m = concentration_ratio(x, u, state.epsilon) if u.size else 0.0
        gap = h - b
        tracking = abs(gap)
        fairness = lam * b * abs(m - m_ilp[t])
        rows.append(
            ResultRow(
                policy=spec.label,
                round_id=full_state.round_id,
                delta=series.delta,
                h=h,
                b_needed=b,
                tracking=tracking,
                overshoot=max(gap, 0.0),
                undershoot=max(-gap, 0.0),
                fairness=fairness,
                m=m,
                m_ilp=m_ilp[t],
                loss_total=empirical_round_loss(h, b, m, m_ilp[t], lam),
            )
        )
        surrogate.append(round_loss_surrogate(x, u, b, weights, state.epsilon).total)
        h_series.append(h)

        if with_diagnostics:
            violations, pairs = monotonicity_counts(u, x)
            inv_rates.append(violations / pairs if pairs else 0.0)
            inv_violations += violations
            inv_pairs += pairs
            burden_rounds.append(
                {
                    wid: float(xi) / (w.capacity + state.epsilon)
                    for wid, xi, w in zip(state.ids, x, state.winners)
                }
            )
            if spec.kind in ("queue", "pro_rata", "integer_pro_rata", "minmax_ilp"):
                jump = _probe_jump(spec, scenario, t, state, action.budget)
                if jump is not None:
                    jumps.append(jump)

        if scenario.removal_rule:
            for w, xi in zip(state.winners, x):
                if xi >= w.capacity - boundary_tolerance(w.capacity):
                    removed.add(w.id)
        controller = theta_ogd_step(
            controller, full_state.deficit, theta_needed(b, full_state.deficit, full_state.epsilon)
        )
        estimator.observe(t)

    diagnostics = None
    if with_diagnostics:
        stabilities = [
            rho
            for prev, curr in zip(burden_rounds, burden_rounds[1:])
            if (rho := rank_stability(prev, curr)) is not None
        ]
        slope_variation = None
        if scenario.ground_truth.account_slopes is not None:
            slope_variation = _effective_slope_variation(scenario, spec, weights)
        diagnostics = DiagnosticsRow(
            policy=spec.label,
            delta=series.delta,
            inversion_rate=float(np.mean(inv_rates)) if inv_rates else 0.0,
            inversion_rate_pooled=(inv_violations / inv_pairs) if inv_pairs else 0.0,
            rank_stability=float(np.mean(stabilities)) if stabilities else None,
            perturbation_jump=float(np.mean(jumps)) if jumps else None,
            effective_slope_variation=slope_variation,
        )
    return _PolicyRun(
        spec=spec,
        rows=rows,
        surrogate_losses=surrogate,
        h_series=h_series,
        diagnostics=diagnostics,
    )


def _probe_jump(
    spec: PolicySpec,
    scenario: Scenario,
    t: int,
    state: RoundState,
    budget: float,
) -> float | None:
    if budget <= 0.0 or len(state.winners) < 2:
        return None
    u = state.capacity_vector()
    if int(np.count_nonzero(u >= budget * (1.0 - 1e-12))) < 2:
        return None
    if spec.kind == "queue":
        allocator = None
    elif spec.kind == "pro_rata":
        allocator = lambda s, bgt, scores: pro_rata_allocate(s, bgt)
    elif spec.kind == "integer_pro_rata":
        allocator = lambda s, bgt, scores: integer_pro_rata(s, bgt)
    else:
        allocator = lambda s, bgt, scores: solve_minmax_ilp(s, bgt).action
    try:
        base = _queue_scores(spec, scenario, t, state).scores if spec.kind == "queue" else tuple(
            float(v) for v in u
        )
        return perturbation_probe(state, budget, base, PROBE_DELTA, allocator)
    except AdlError:
        return None


def _effective_slope_variation(
    scenario: Scenario, spec: PolicySpec, weights: LossWeights
) -> float | None:
    """Re-run the policy under the removal rule tracking the executed slope mix."""
    from .instability import effective_slope

    slopes = scenario.ground_truth.account_slopes
    assert slopes is not None
    removed: set[str] = set()
    estimator_series = scenario.ground_truth.benchmark(scenario.ground_truth.deltas[0])
    path: list[float] = []
    md = (
        VectorMDController(weights, spec.eta, spec.init)
        if spec.kind == "vector_md" and spec.eta is not None
        else None
    )
    for t, full_state in enumerate(scenario.rounds):
        state = (
            full_state.with_winners([w for w in full_state.winners if w.id not in removed])
            if scenario.removal_rule and removed
            else full_state
        )
        u = state.capacity_vector()
        total_cap = float(np.sum(u)) if u.size else 0.0
        budget = min(max(estimator_series.b_needed[t], 0.0), total_cap)
        try:
            if spec.kind == "queue":
                action = queue_allocate(state, budget, _queue_scores(spec, scenario, t, state))
            elif spec.kind == "pro_rata":
                action = pro_rata_allocate(state, budget)
            elif spec.kind == "integer_pro_rata":
                action = integer_pro_rata(state, budget)
            elif spec.kind == "minmax_ilp":
                action = solve_minmax_ilp(state, budget).action
            elif md is not None:
                action = md.step(state, budget)
            else:
                return None
        except AdlError:
            return None
        x = action.vector(state)
        if float(np.sum(x * x)) > 0.0:
            a = np.array([slopes.get(w.id, 0.0) for w in state.winners])
            path.append(effective_slope(a, x))
        if scenario.removal_rule:
            for w, xi in zip(state.winners, x):
                if xi >= w.capacity - boundary_tolerance(w.capacity):
                    removed.add(w.id)
    return path_variation(path) if path else None


@dataclass(frozen=True)
class RunResult:
    scenario: Scenario
    config: RunConfig
    deltas: tuple[int, ...]
    results: Mapping[float, tuple[ResultRow, ...]]
    episodes: Mapping[float, tuple[EpisodeMetrics, ...]]
    diagnostics: tuple[DiagnosticsRow, ...]
    bound_paths: Mapping[int, tuple[float, ...]]


def _worker_count(tasks: int) -> int:
    env = os.environ.get(THREADS_ENV)
    if env is not None:
        try:
            cap = int(env)
        except ValueError:
            raise ConfigError(f"{THREADS_ENV} must be an integer, got {env!r}") from None
        if cap < 1:
            raise ConfigError(f"{THREADS_ENV} must be >= 1, got {cap}")
    else:
        cap = os.cpu_count() or 1
    return max(1, min(cap, tasks))


def evaluate(config: RunConfig) -> RunResult:
    """Run the whole grid; deterministic for a fixed config and scenario."""
    scenario = resolve_scenario(config)
    truth = scenario.ground_truth
    if not truth.benchmarks:
        raise ConfigError(
            f"scenario {scenario.name!r} has no needed-budget benchmarks; cannot evaluate"
        )
    deltas = config.deltas if config.deltas is not None else truth.deltas
    for delta in deltas:
        truth.benchmark(delta)
    if not deltas:
        raise ConfigError("no markout horizons selected")

    sweep = config.sweep()
    series_by_delta = {d: truth.benchmark(d) for d in deltas}
    m_ilp_by_delta = {
        d: _reference_concentrations(scenario, s) for d, s in series_by_delta.items()
    }

    tasks = [
        (lam, spec, delta)
        for lam in sweep
        for spec in config.policies
        for delta in deltas
    ]

    def run_task(task: tuple[float, PolicySpec, int]) -> tuple[tuple[float, str, int], _PolicyRun]:
        lam, spec, delta = task
        weights = replace(config.weights, lambda_fair=lam, lambda_empirical=lam)
        run = _evaluate_policy(
            scenario,
            spec,
            series_by_delta[delta],
            weights,
            lam,
            config.severity,
            config.theta0,
            m_ilp_by_delta[delta],
            with_diagnostics=(lam == sweep[0]),
        )
        return (lam, spec.label, delta), run

    with ThreadPoolExecutor(max_workers=_worker_count(len(tasks))) as pool:
        runs = dict(pool.map(run_task, tasks))

    deficits = scenario.deficits()
    bound_paths: dict[int, tuple[float, ...]] = {}
    theta_star_by_delta: dict[int, np.ndarray] = {}
    for delta in deltas:
        series = series_by_delta[delta]
        theta_star = np.array(
            [
                theta_needed(series.b_needed[t], r.deficit, r.epsilon)
                for t, r in enumerate(scenario.rounds)
            ]
        )
        theta_star_by_delta[delta] = theta_star
        bound_paths[delta] = tuple(
            float(v) for v in instance_bound_prefix(theta_star, deficits)
        )

    comparator_surrogates: dict[tuple[float, int], np.ndarray] = {}
    if truth.comparator is not None:
        for lam in sweep:
            weights = replace(config.weights, lambda_fair=lam, lambda_empirical=lam)
            for delta in deltas:
                series = series_by_delta[delta]
                losses = []
                for t, state in enumerate(scenario.rounds):
                    alloc = truth.comparator[t]
                    x = np.array([alloc.get(i, 0.0) for i in state.ids])
                    losses.append(
                        round_loss_surrogate(
                            x, state.capacity_vector(), series.b_needed[t], weights, state.epsilon
                        ).total
                    )
                comparator_surrogates[(lam, delta)] = np.asarray(losses)

    union_ids = sorted({w.id for state in scenario.rounds for w in state.winners})
    capacity_rows: np.ndarray | None = None
    if len(union_ids) <= _STATIC_REGRET_MAX_IDS:
        capacity_rows = np.zeros((scenario.horizon, len(union_ids)))
        index = {wid: k for k, wid in enumerate(union_ids)}
        for t, state in enumerate(scenario.rounds):
            for w in state.winners:
                capacity_rows[t, index[w.id]] = w.capacity

    results: dict[float, tuple[ResultRow, ...]] = {}
    episodes: dict[float, tuple[EpisodeMetrics, ...]] = {}
    diagnostics: list[DiagnosticsRow] = []
    for lam in sweep:
        weights = replace(config.weights, lambda_fair=lam, lambda_empirical=lam)
        rows: list[ResultRow] = []
        metrics_list: list[EpisodeMetrics] = []
        for spec in config.policies:
            for delta in deltas:
                run = runs[(lam, spec.label, delta)]
                rows.extend(run.rows)
                if lam == sweep[0] and run.diagnostics is not None:
                    diagnostics.append(run.diagnostics)
                series = series_by_delta[delta]
                b = np.asarray(series.b_needed)
                loss_total = float(np.sum([r.loss_total for r in run.rows]))
                library = {
                    other.label: [r.loss_total for r in runs[(lam, other.label, delta)].rows]
                    for other in config.policies
                }
                h_library = {
                    other.label: runs[(lam, other.label, delta)].h_series
                    for other in config.policies
                }
                totals = {
                    name: float(np.sum(np.asarray(s))) for name, s in library.items()
                }
                track_totals = {
                    name: float(np.sum(np.abs(np.asarray(s) - b)))
                    for name, s in h_library.items()
                }
                dynamic = None
                if (lam, delta) in comparator_surrogates:
                    dynamic = regret(
                        run.surrogate_losses, comparator_surrogates[(lam, delta)]
                    )
                static = None
                static_approx = False
                if capacity_rows is not None:
                    static, static_approx = static_regret(
                        run.surrogate_losses,
                        capacity_rows,
                        b,
                        weights,
                        scenario.rounds[0].epsilon,
                    )
                p_var = path_variation(theta_star_by_delta[delta])
                bound = instance_bound(p_var, deficits)
                metrics_list.append(
                    EpisodeMetrics(
                        policy=spec.label,
                        delta=delta,
                        objective_total=loss_total,
                        tracking_component=float(
                            np.sum([r.tracking for r in run.rows])
                        ),
                        fairness_component=float(
                            np.sum([r.fairness for r in run.rows])
                        ),
                        cumulative_failure=cumulative_failure(run.h_series, b),
                        path_variation=p_var,
                        instance_bound=bound,
                        bound_ratio=loss_total / bound if bound > 0 else None,
                        static_regret=static,
                        static_regret_approximate=static_approx,
                        dynamic_regret=dynamic,
                        policy_class_regret=loss_total - min(totals.values()),
                        tracking_regret=float(np.sum(np.abs(np.asarray(run.h_series) - b)))
                        - min(track_totals.values()),
                    )
                )
        rows.sort(key=lambda r: (r.policy, r.round_id, r.delta))
        results[lam] = tuple(rows)
        episodes[lam] = tuple(metrics_list)

    diagnostics.sort(key=lambda d: (d.policy, d.delta))
    return RunResult(
        scenario=scenario,
        config=config,
        deltas=tuple(deltas),
        results=results,
        episodes=episodes,
        diagnostics=tuple(diagnostics),
        bound_paths=bound_paths,
    )


def results_filename(lam: float) -> str:
    return f"results_lambda-{format_number(lam)}.csv"


def summary_filename(lam: float) -> str:
    return f"episode_summary_lambda-{format_number(lam)}.json"


def write_outputs(result: RunResult, out_dir: str | Path | None = None) -> list[Path]:
    """Write results CSVs (one per lambda), diagnostics, and episode JSONs."""
    out = Path(out_dir if out_dir is not None else result.config.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    written: list[Path] = []
    for lam, rows in result.results.items():
        path = out / results_filename(lam)
        write_results_csv(rows, path)
        written.append(path)
        payload = {
            "scenario": result.scenario.name,
            "seed": result.config.seed,
            "lambda_empirical": lam,
            "deltas": list(result.deltas),
            "instance_bound_path": {
                str(d): list(p) for d, p in result.bound_paths.items()
            },
            "episodes": [
                {
                    "policy": m.policy,
                    "delta": m.delta,
                    "objective_total": m.objective_total,
                    "tracking_component": m.tracking_component,
                    "fairness_component": m.fairness_component,
                    "cumulative_failure": m.cumulative_failure,
                    "path_variation": m.path_variation,
                    "instance_bound": m.instance_bound,
                    "bound_ratio": m.bound_ratio,
                    "static_regret": m.static_regret,
                    "static_regret_approximate": m.static_regret_approximate,
                    "dynamic_regret": m.dynamic_regret,
                    "policy_class_regret": m.policy_class_regret,
                    "tracking_regret": m.tracking_regret,
                }
                for m in result.episodes[lam]
            ],
        }
        json_path = out / summary_filename(lam)
        write_episode_json(payload, json_path)
        written.append(json_path)
    diag_path = out / "diagnostics.csv"
    write_diagnostics_csv(result.diagnostics, diag_path)
    written.append(diag_path)
    return written


def _audit_tolerance(row: ResultRow) -> float:
    scale = max(1.0, abs(row.b_needed), abs(row.h))
    return 1e-6 + 1e-8 * scale


def audit_results(out_dir: str | Path) -> dict[str, object]:
    """Recompute loss columns from (h, b, m, m_ilp) and cross-check every row.

    Raises InternalInvariantError on the first inconsistency; returns an
    aggregate summary payload otherwise.
    """
    out = Path(out_dir)
    files = sorted(out.glob("results_lambda-*.csv"))
    if not files:
        raise ConfigError(f"no results_lambda-*.csv files under {out}")
    aggregates: dict[str, dict[str, float]] = {}
    for path in files:
        lam_text = path.stem.split("results_lambda-", 1)[1]
        lam = float(lam_text)
        for i, row in enumerate(read_results_csv(path), start=2):
            tol = _audit_tolerance(row)
            checks = {
                "tracking": abs(row.h - row.b_needed),
                "overshoot": max(row.h - row.b_needed, 0.0),
                "undershoot": max(row.b_needed - row.h, 0.0),
                "fairness": lam * row.b_needed * abs(row.m - row.m_ilp),
                "loss_total": empirical_round_loss(
                    row.h, row.b_needed, row.m, row.m_ilp, lam
                ),
            }
            for column, expected in checks.items():
                got = getattr(row, column)
                if abs(got - expected) > tol:
                    raise InternalInvariantError(
                        f"{path} row {i}: {column}={got!r} but recomputation gives {expected!r}"
                    )
            key = f"{row.policy}|delta={row.delta}|lambda={format_number(lam)}"
            agg = aggregates.setdefault(
                key,
                {
                    "objective_total": 0.0,
                    "tracking_total": 0.0,
                    "fairness_total": 0.0,
                    "overshoot_total": 0.0,
                    "undershoot_total": 0.0,
                    "rounds": 0.0,
                },
            )
            agg["objective_total"] += row.loss_total
            agg["tracking_total"] += row.tracking
            agg["fairness_total"] += row.fairness
            agg["overshoot_total"] += row.overshoot
            agg["undershoot_total"] += row.undershoot
            agg["rounds"] += 1.0
    return {
        "audited_files": [p.name for p in files],
        "policies": aggregates,
        "status": "consistent",
    }
