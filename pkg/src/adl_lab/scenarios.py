"""Scenario construction and the replay/results file contract.

A scenario is an ordered list of rounds plus optional ground truth: per-round
needed budgets keyed by markout horizon, recorded production haircuts, a
dynamic comparator path, per-account impact slopes, queue score vectors.

On disk a scenario is a directory:

* rounds.csv      round_id, deficit, epsilon, context (``key=value;...``)
* winners.csv     round_id, winner_id, capacity, lot_size, then optional
                  production_haircut, score, comparator_haircut, impact_slope
* benchmarks.csv  round_id, delta_horizon, b_needed, then optional
                  b_needed_hat, alpha_true, q_scale (entire columns)
* meta.json       name, seed, generator params, removal-rule flag

Numbers are decimal strings with at most 9 fractional digits. Generators
quantize every value to that grid, so write -> load reproduces a generated
scenario field-for-field and repeated writes are byte-identical.
"""

from __future__ import annotations

import csv
import json
import math
from collections.abc import Mapping, Sequence
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import DegenerateSlopesError, ScenarioFormatError
from .model import DEFAULT_EPSILON, RoundState, WinnerAccount
from .severity import FillRecord, scalar_needed_budget

ROUNDS_FILE = "rounds.csv"
WINNERS_FILE = "winners.csv"
BENCHMARKS_FILE = "benchmarks.csv"
META_FILE = "meta.json"

_ROUNDS_COLUMNS = ("round_id", "deficit", "epsilon", "context")
_WINNERS_REQUIRED = ("round_id", "winner_id", "capacity", "lot_size")
_WINNERS_OPTIONAL = ("production_haircut", "score", "comparator_haircut", "impact_slope")
_BENCHMARKS_REQUIRED = ("round_id", "delta_horizon", "b_needed")
_BENCHMARKS_OPTIONAL = ("b_needed_hat", "alpha_true", "q_scale")


def quantize(x: float) -> float:
    """Nearest binary64 to x rounded at 9 fractional decimal digits."""
    if not math.isfinite(x):
        raise ValueError(f"cannot quantize non-finite value {x!r}")
    return float(f"{x:.9f}")


def format_number(x: float) -> str:
    """Decimal string with up to 9 fractional digits, trailing zeros trimmed.

    Values the fixed form cannot represent exactly (for example a 1e-12
    regularizer) fall back to the shortest exact decimal so a write/load
    round trip never changes a stored number.
    """
    if not math.isfinite(x):
        raise ValueError(f"cannot serialize non-finite value {x!r}")
    s = f"{x:.9f}".rstrip("0").rstrip(".")
    if s in ("-0", ""):
        s = "0"
    if float(s) == x:
        return s
    return repr(x)


def parse_number(text: str) -> float:
    return float(text)


@dataclass(frozen=True)
class BenchmarkSeries:
    """Needed-budget ground truth for one markout horizon, aligned to rounds."""

    delta: int
    b_needed: tuple[float, ...]
    b_needed_hat: tuple[float, ...] | None = None
    alpha_true: tuple[float, ...] | None = None
    q_scale: tuple[float, ...] | None = None

    def __post_init__(self) -> None:
        if self.delta < 0:
            raise ValueError(f"delta horizon must be >= 0, got {self.delta!r}")
        for name in ("b_needed", "b_needed_hat", "alpha_true", "q_scale"):
            series = getattr(self, name)
            if series is None:
                continue
            object.__setattr__(self, name, tuple(float(v) for v in series))
            if name != "b_needed" and len(getattr(self, name)) != len(self.b_needed):
                raise ValueError(f"{name} length differs from b_needed")


@dataclass(frozen=True)
class GroundTruth:
    """Optional per-round truths; fills exist in memory only (no CSV form)."""

    benchmarks: tuple[BenchmarkSeries, ...] = ()
    production: tuple[dict[str, float], ...] | None = None
    comparator: tuple[dict[str, float], ...] | None = None
    account_slopes: dict[str, float] | None = None
    fills: tuple[tuple[FillRecord, ...], ...] | None = None

    def __post_init__(self) -> None:
        object.__setattr__(self, "benchmarks", tuple(self.benchmarks))
        deltas = [b.delta for b in self.benchmarks]
        if len(set(deltas)) != len(deltas):
            raise ValueError(f"duplicate benchmark deltas {deltas!r}")
        if self.production is not None:
            object.__setattr__(
                self, "production", tuple(dict(p) for p in self.production)
            )
        if self.comparator is not None:
            object.__setattr__(
                self, "comparator", tuple(dict(c) for c in self.comparator)
            )
        if self.account_slopes is not None:
            object.__setattr__(self, "account_slopes", dict(self.account_slopes))

    def benchmark(self, delta: int) -> BenchmarkSeries:
        for series in self.benchmarks:
            if series.delta == delta:
                return series
        raise ValueError(f"no benchmark series for delta horizon {delta!r}")

    @property
    def deltas(self) -> tuple[int, ...]:
        return tuple(sorted(b.delta for b in self.benchmarks))


@dataclass(frozen=True)
class Scenario:
    name: str
    rounds: tuple[RoundState, ...]
    ground_truth: GroundTruth = field(default_factory=GroundTruth)
    scores: tuple[dict[str, float], ...] | None = None
    seed: int | None = None
    params: Mapping[str, object] = field(default_factory=dict)
    removal_rule: bool = False

    def __post_init__(self) -> None:
        rounds = tuple(self.rounds)
        if not rounds:
            raise ValueError("scenario needs at least one round")
        ids = [r.round_id for r in rounds]
        if any(b <= a for a, b in zip(ids, ids[1:])):
            raise ValueError(f"round ids must be strictly increasing, got {ids!r}")
        object.__setattr__(self, "rounds", rounds)
        object.__setattr__(self, "params", dict(self.params))
        if self.scores is not None:
            object.__setattr__(self, "scores", tuple(dict(s) for s in self.scores))
            if len(self.scores) != len(rounds):
                raise ValueError("scores length differs from rounds")
        t = len(rounds)
        gt = self.ground_truth
        for series in gt.benchmarks:
            if len(series.b_needed) != t:
                raise ValueError(
                    f"benchmark delta {series.delta} has {len(series.b_needed)} rounds, scenario has {t}"
                )
        for name in ("production", "comparator", "fills"):
            series = getattr(gt, name)
            if series is not None and len(series) != t:
                raise ValueError(f"ground truth {name} length differs from rounds")

    @property
    def horizon(self) -> int:
        return len(self.rounds)

    def deficits(self) -> np.ndarray:
        return np.array([r.deficit for r in self.rounds], dtype=float)


def gen_alternating_capacity(horizon: int, m: float) -> Scenario:
    """Two winners whose capacities (1, M) swap every round, budget 1 per round.

    Scores pin account one to the head of the queue; the bundled comparator
    path follows the momentarily large account. epsilon is 1e-12 here, far
    below the default, so burden ratios match the unregularized construction
    to well under the acceptance tolerance.
    """
    if horizon < 2 or horizon % 2 != 0:
        raise ValueError(f"alternating scenario requires an even horizon >= 2, got {horizon!r}")
    if not (math.isfinite(m) and m > 1):
        raise ValueError(f"capacity ratio M must be > 1, got {m!r}")
    m = quantize(m)
    rounds = []
    comparator = []
    scores = []
    for t in range(1, horizon + 1):
        odd = t % 2 == 1
        caps = (1.0, m) if odd else (m, 1.0)
        rounds.append(
            RoundState(
                round_id=t,
                deficit=1.0,
                winners=(
                    WinnerAccount(id="w1", capacity=caps[0]),
                    WinnerAccount(id="w2", capacity=caps[1]),
                ),
                epsilon=1e-12,
            )
        )
        comparator.append({"w1": 0.0, "w2": 1.0} if odd else {"w1": 1.0, "w2": 0.0})
        scores.append({"w1": 1.0, "w2": 0.0})
    ones = tuple(1.0 for _ in range(horizon))
    truth = GroundTruth(
        benchmarks=(BenchmarkSeries(delta=0, b_needed=ones, b_needed_hat=ones),),
        comparator=tuple(comparator),
    )
    return Scenario(
        name=f"alternating-T{horizon}-M{format_number(m)}",
        rounds=tuple(rounds),
        ground_truth=truth,
        scores=tuple(scores),
        params={"T": horizon, "M": m},
    )


def gen_churn_instance(horizon: int, alpha_min: float, alpha_max: float) -> Scenario:
    """2T unit-capacity winners, alternating impact slopes, removal rule on.

    Budget 1 per round; scores descend along the id order so a queue closes
    exactly one account per round, walking the alternating slope sequence.
    """
    if horizon < 2:
        raise ValueError(f"horizon must be >= 2, got {horizon!r}")
    for name, value in (("alpha_min", alpha_min), ("alpha_max", alpha_max)):
        if not (math.isfinite(value) and value >= 0):
            raise ValueError(f"{name} must be finite and >= 0, got {value!r}")
    if not alpha_min < alpha_max:
        raise DegenerateSlopesError(
            f"need alpha_min < alpha_max, got {alpha_min!r} >= {alpha_max!r}"
        )
    alpha_min = quantize(alpha_min)
    alpha_max = quantize(alpha_max)
    count = 2 * horizon
    width = len(str(count))
    ids = [f"w{i:0{width}d}" for i in range(1, count + 1)]
    slopes = {
        wid: (alpha_min if i % 2 == 1 else alpha_max)
        for i, wid in enumerate(ids, start=1)
    }
    winners = tuple(WinnerAccount(id=wid, capacity=1.0) for wid in ids)
    score_row = {wid: float(count - i) for i, wid in enumerate(ids)}
    rounds = tuple(
        RoundState(round_id=t, deficit=1.0, winners=winners)
        for t in range(1, horizon + 1)
    )
    ones = tuple(1.0 for _ in range(horizon))
    truth = GroundTruth(
        benchmarks=(BenchmarkSeries(delta=0, b_needed=ones, b_needed_hat=ones),),
        account_slopes=slopes,
    )
    return Scenario(
        name=f"churn-T{horizon}",
        rounds=rounds,
        ground_truth=truth,
        scores=tuple(score_row.copy() for _ in range(horizon)),
        params={"T": horizon, "alpha_min": alpha_min, "alpha_max": alpha_max},
        removal_rule=True,
    )


@dataclass(frozen=True)
class RandomEpisodeParams:
    """Knobs for gen_random_episode; ranges are inclusive uniform draws."""

    horizon: int = 16
    winner_count: tuple[int, int] = (2, 8)
    capacity_range: tuple[float, float] = (1e4, 1e6)
    deficit_range: tuple[float, float] = (1e5, 1e7)
    alpha_low: float = 0.1
    alpha_high: float = 1.0
    stay_probability: float = 0.9
    q_scale_range: tuple[float, float] = (50.0, 500.0)
    lot_size: float | None = None
    epsilon: float = DEFAULT_EPSILON

    def __post_init__(self) -> None:
        if self.horizon < 1:
            raise ValueError(f"horizon must be >= 1, got {self.horizon!r}")
        if not 1 <= self.winner_count[0] <= self.winner_count[1]:
            raise ValueError(f"bad winner_count range {self.winner_count!r}")
        if not 0.0 <= self.stay_probability <= 1.0:
            raise ValueError(f"stay_probability must lie in [0, 1], got {self.stay_probability!r}")
        if not 0 <= self.alpha_low < self.alpha_high:
            raise ValueError("need 0 <= alpha_low < alpha_high")


def gen_random_episode(seed: int, params: RandomEpisodeParams | None = None) -> Scenario:
    """Seeded synthetic episode with a two-state slope regime.

    Deficits, capacities, and execution scale are uniform draws; the true
    slope follows a two-state Markov chain between alpha_low and alpha_high
    with the given stay probability. Needed budget per round is the scalar
    benchmark alpha * Q^2. Scores equal capacities, so queues favor large
    accounts. All draws flow from one numpy Generator in fixed order.
    """
    p = params or RandomEpisodeParams()
    rng = np.random.default_rng(seed)
    width = len(str(p.winner_count[1]))
    rounds = []
    scores: list[dict[str, float]] = []
    b_needed: list[float] = []
    alpha_true: list[float] = []
    q_scale: list[float] = []
    high = bool(rng.random() < 0.5)
    for t in range(1, p.horizon + 1):
        n = int(rng.integers(p.winner_count[0], p.winner_count[1] + 1))
        caps = [quantize(float(v)) for v in rng.uniform(*p.capacity_range, size=n)]
        winners = tuple(
            WinnerAccount(
                id=f"w{i:0{width}d}",
                capacity=caps[i - 1],
                lot_size=p.lot_size,
            )
            for i in range(1, n + 1)
        )
        deficit = quantize(float(rng.uniform(*p.deficit_range)))
        rounds.append(
            RoundState(
                round_id=t, deficit=deficit, winners=winners, epsilon=p.epsilon
            )
        )
        scores.append({w.id: w.capacity for w in winners})
        alpha = p.alpha_high if high else p.alpha_low
        q = quantize(float(rng.uniform(*p.q_scale_range)))
        alpha_true.append(alpha)
        q_scale.append(q)
        b_needed.append(quantize(scalar_needed_budget(alpha, q)))
        if rng.random() > p.stay_probability:
            high = not high
    truth = GroundTruth(
        benchmarks=(
            BenchmarkSeries(
                delta=0,
                b_needed=tuple(b_needed),
                alpha_true=tuple(alpha_true),
                q_scale=tuple(q_scale),
            ),
        )
    )
    meta = {
        "horizon": p.horizon,
        "winner_count_min": p.winner_count[0],
        "winner_count_max": p.winner_count[1],
        "alpha_low": p.alpha_low,
        "alpha_high": p.alpha_high,
        "alpha_max": p.alpha_high,
        "stay_probability": p.stay_probability,
    }
    if p.lot_size is not None:
        meta["lot_size"] = p.lot_size
    return Scenario(
        name=f"random-seed{seed}",
        rounds=tuple(rounds),
        ground_truth=truth,
        scores=tuple(scores),
        seed=seed,
        params=meta,
    )


def _format_context(context: Mapping[str, float]) -> str:
    parts = []
    for key in sorted(context):
        if not key or any(c in key for c in "=;,\n"):
            raise ValueError(f"context key {key!r} not serializable")
        parts.append(f"{key}={format_number(float(context[key]))}")
    return ";".join(parts)


def _parse_context(text: str, *, path: str, row: int) -> dict[str, float]:
    context: dict[str, float] = {}
    if not text:
        return context
    for part in text.split(";"):
        if "=" not in part:
            raise ScenarioFormatError(
                f"context entry {part!r} is not key=value", path=path, row=row, column="context"
            )
        key, _, value = part.partition("=")
        try:
            context[key] = parse_number(value)
        except ValueError:
            raise ScenarioFormatError(
                f"bad context number {value!r}", path=path, row=row, column="context"
            ) from None
    return context


def _parse_float_cell(
    text: str, *, path: str, row: int, column: str
) -> float:
    try:
        return parse_number(text)
    except ValueError:
        raise ScenarioFormatError(
            f"expected a number, got {text!r}", path=path, row=row, column=column
        ) from None


def _parse_int_cell(text: str, *, path: str, row: int, column: str) -> int:
    try:
        return int(text)
    except ValueError:
        raise ScenarioFormatError(
            f"expected an integer, got {text!r}", path=path, row=row, column=column
        ) from None


def write_scenario_csv(scenario: Scenario, out_dir: str | Path) -> None:
    """Write the scenario directory; deterministic bytes for a given scenario."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    with open(out / ROUNDS_FILE, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(_ROUNDS_COLUMNS)
        for state in scenario.rounds:
            writer.writerow(
                [
                    state.round_id,
                    format_number(state.deficit),
                    format_number(state.epsilon),
                    _format_context(state.context),
                ]
            )

    truth = scenario.ground_truth
    optional: list[str] = []
    if truth.production is not None:
        optional.append("production_haircut")
    if scenario.scores is not None:
        optional.append("score")
    if truth.comparator is not None:
        optional.append("comparator_haircut")
    if truth.account_slopes is not None:
        optional.append("impact_slope")
    with open(out / WINNERS_FILE, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(list(_WINNERS_REQUIRED) + optional)
        for idx, state in enumerate(scenario.rounds):
            for w in state.winners:
                row: list[object] = [
                    state.round_id,
                    w.id,
                    format_number(w.capacity),
                    "" if w.lot_size is None else format_number(w.lot_size),
                ]
                if truth.production is not None:
                    row.append(format_number(truth.production[idx].get(w.id, 0.0)))
                if scenario.scores is not None:
                    row.append(format_number(scenario.scores[idx].get(w.id, 0.0)))
                if truth.comparator is not None:
                    row.append(format_number(truth.comparator[idx].get(w.id, 0.0)))
                if truth.account_slopes is not None:
                    slope = truth.account_slopes.get(w.id)
                    row.append("" if slope is None else format_number(slope))
                writer.writerow(row)

    if truth.benchmarks:
        presence = {
            name: getattr(truth.benchmarks[0], name) is not None
            for name in _BENCHMARKS_OPTIONAL
        }
        for series in truth.benchmarks[1:]:
            for name in _BENCHMARKS_OPTIONAL:
                if (getattr(series, name) is not None) != presence[name]:
                    raise ValueError(
                        f"benchmark column {name} present for some deltas only"
                    )
        optional_cols = [name for name in _BENCHMARKS_OPTIONAL if presence[name]]
        with open(out / BENCHMARKS_FILE, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(list(_BENCHMARKS_REQUIRED) + optional_cols)
            for series in sorted(truth.benchmarks, key=lambda s: s.delta):
                for idx, state in enumerate(scenario.rounds):
                    row = [
                        state.round_id,
                        series.delta,
                        format_number(series.b_needed[idx]),
                    ]
                    for name in optional_cols:
                        row.append(format_number(getattr(series, name)[idx]))
                    writer.writerow(row)

    meta = {
        "name": scenario.name,
        "seed": scenario.seed,
        "params": dict(scenario.params),
        "removal_rule": scenario.removal_rule,
    }
    with open(out / META_FILE, "w") as fh:
        json.dump(meta, fh, indent=2, sort_keys=True)
        fh.write("\n")


def _read_rows(path: Path, required: Sequence[str], optional: Sequence[str]):
    if not path.exists():
        raise ScenarioFormatError("file is missing", path=str(path))
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise ScenarioFormatError("file is empty", path=str(path)) from None
        known = set(required) | set(optional)
        for col in header:
            if col not in known:
                raise ScenarioFormatError(
                    f"unknown column {col!r}", path=str(path), row=1
                )
        for col in required:
            if col not in header:
                raise ScenarioFormatError(
                    f"missing required column {col!r}", path=str(path), row=1
                )
        if len(set(header)) != len(header):
            raise ScenarioFormatError("duplicate column names", path=str(path), row=1)
        rows = []
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != len(header):
                raise ScenarioFormatError(
                    f"expected {len(header)} cells, got {len(row)}",
                    path=str(path),
                    row=lineno,
                )
            rows.append((lineno, dict(zip(header, row))))
    return header, rows


def load_replay_csv(path: str | Path) -> Scenario:
    """Load a scenario directory, validating the schema cell by cell.

    The first violation is reported with file, row, and column context.
    """
    root = Path(path)
    if not root.is_dir():
        raise ScenarioFormatError("scenario directory does not exist", path=str(root))
    rounds_path = root / ROUNDS_FILE
    winners_path = root / WINNERS_FILE

    _, round_rows = _read_rows(rounds_path, _ROUNDS_COLUMNS, ())
    if not round_rows:
        raise ScenarioFormatError("no rounds", path=str(rounds_path))
    round_meta: dict[int, tuple[int, float, float, dict[str, float]]] = {}
    last_id: int | None = None
    for lineno, row in round_rows:
        rid = _parse_int_cell(row["round_id"], path=str(rounds_path), row=lineno, column="round_id")
        if last_id is not None and rid <= last_id:
            raise ScenarioFormatError(
                f"round ids must be strictly increasing, got {rid} after {last_id}",
                path=str(rounds_path),
                row=lineno,
                column="round_id",
            )
        last_id = rid
        deficit = _parse_float_cell(row["deficit"], path=str(rounds_path), row=lineno, column="deficit")
        if deficit < 0:
            raise ScenarioFormatError(
                f"deficit must be >= 0, got {deficit!r}",
                path=str(rounds_path),
                row=lineno,
                column="deficit",
            )
        epsilon = _parse_float_cell(row["epsilon"], path=str(rounds_path), row=lineno, column="epsilon")
        if epsilon <= 0:
            raise ScenarioFormatError(
                f"epsilon must be > 0, got {epsilon!r}",
                path=str(rounds_path),
                row=lineno,
                column="epsilon",
            )
        context = _parse_context(row["context"], path=str(rounds_path), row=lineno)
        round_meta[rid] = (lineno, deficit, epsilon, context)

    winners_header, winner_rows = _read_rows(winners_path, _WINNERS_REQUIRED, _WINNERS_OPTIONAL)
    has = {col: col in winners_header for col in _WINNERS_OPTIONAL}
    winners_by_round: dict[int, list[WinnerAccount]] = {rid: [] for rid in round_meta}
    production: dict[int, dict[str, float]] = {rid: {} for rid in round_meta}
    comparator: dict[int, dict[str, float]] = {rid: {} for rid in round_meta}
    scores: dict[int, dict[str, float]] = {rid: {} for rid in round_meta}
    account_slopes: dict[str, float] = {}
    for lineno, row in winner_rows:
        rid = _parse_int_cell(row["round_id"], path=str(winners_path), row=lineno, column="round_id")
        if rid not in round_meta:
            raise ScenarioFormatError(
                f"winner references unknown round {rid}",
                path=str(winners_path),
                row=lineno,
                column="round_id",
            )
        wid = row["winner_id"]
        if not wid:
            raise ScenarioFormatError(
                "winner_id must be non-empty", path=str(winners_path), row=lineno, column="winner_id"
            )
        if any(w.id == wid for w in winners_by_round[rid]):
            raise ScenarioFormatError(
                f"duplicate winner {wid!r} in round {rid}",
                path=str(winners_path),
                row=lineno,
                column="winner_id",
            )
        capacity = _parse_float_cell(row["capacity"], path=str(winners_path), row=lineno, column="capacity")
        lot_text = row["lot_size"]
        lot = None if lot_text == "" else _parse_float_cell(
            lot_text, path=str(winners_path), row=lineno, column="lot_size"
        )
        try:
            account = WinnerAccount(id=wid, capacity=capacity, lot_size=lot)
        except ValueError as exc:
            raise ScenarioFormatError(
                str(exc), path=str(winners_path), row=lineno, column="capacity"
            ) from None
        winners_by_round[rid].append(account)
        if has["production_haircut"]:
            text = row["production_haircut"]
            production[rid][wid] = 0.0 if text == "" else _parse_float_cell(
                text, path=str(winners_path), row=lineno, column="production_haircut"
            )
        if has["score"]:
            text = row["score"]
            scores[rid][wid] = 0.0 if text == "" else _parse_float_cell(
                text, path=str(winners_path), row=lineno, column="score"
            )
        if has["comparator_haircut"]:
            text = row["comparator_haircut"]
            comparator[rid][wid] = 0.0 if text == "" else _parse_float_cell(
                text, path=str(winners_path), row=lineno, column="comparator_haircut"
            )
        if has["impact_slope"]:
            text = row["impact_slope"]
            if text != "":
                slope = _parse_float_cell(
                    text, path=str(winners_path), row=lineno, column="impact_slope"
                )
                previous = account_slopes.get(wid)
                if previous is not None and previous != slope:
                    raise ScenarioFormatError(
                        f"conflicting impact_slope for {wid!r}: {previous!r} vs {slope!r}",
                        path=str(winners_path),
                        row=lineno,
                        column="impact_slope",
                    )
                account_slopes[wid] = slope

    ordered_ids = sorted(round_meta)
    rounds = []
    for rid in ordered_ids:
        lineno, deficit, epsilon, context = round_meta[rid]
        try:
            rounds.append(
                RoundState(
                    round_id=rid,
                    deficit=deficit,
                    winners=tuple(winners_by_round[rid]),
                    context=context,
                    epsilon=epsilon,
                )
            )
        except ValueError as exc:
            raise ScenarioFormatError(str(exc), path=str(rounds_path), row=lineno) from None

    benchmarks: tuple[BenchmarkSeries, ...] = ()
    bench_path = root / BENCHMARKS_FILE
    if bench_path.exists():
        bench_header, bench_rows = _read_rows(
            bench_path, _BENCHMARKS_REQUIRED, _BENCHMARKS_OPTIONAL
        )
        bench_has = {col: col in bench_header for col in _BENCHMARKS_OPTIONAL}
        per_delta: dict[int, dict[int, dict[str, float]]] = {}
        for lineno, row in bench_rows:
            rid = _parse_int_cell(row["round_id"], path=str(bench_path), row=lineno, column="round_id")
            if rid not in round_meta:
                raise ScenarioFormatError(
                    f"benchmark references unknown round {rid}",
                    path=str(bench_path),
                    row=lineno,
                    column="round_id",
                )
            delta = _parse_int_cell(
                row["delta_horizon"], path=str(bench_path), row=lineno, column="delta_horizon"
            )
            if delta < 0:
                raise ScenarioFormatError(
                    f"delta_horizon must be >= 0, got {delta}",
                    path=str(bench_path),
                    row=lineno,
                    column="delta_horizon",
                )
            bucket = per_delta.setdefault(delta, {})
            if rid in bucket:
                raise ScenarioFormatError(
                    f"duplicate benchmark row for round {rid}, delta {delta}",
                    path=str(bench_path),
                    row=lineno,
                    column="round_id",
                )
            values = {
                "b_needed": _parse_float_cell(
                    row["b_needed"], path=str(bench_path), row=lineno, column="b_needed"
                )
            }
            for name in _BENCHMARKS_OPTIONAL:
                if bench_has[name]:
                    text = row[name]
                    if text == "":
                        raise ScenarioFormatError(
                            f"column {name} present but empty",
                            path=str(bench_path),
                            row=lineno,
                            column=name,
                        )
                    values[name] = _parse_float_cell(
                        text, path=str(bench_path), row=lineno, column=name
                    )
            bucket[rid] = values
        series_list = []
        for delta in sorted(per_delta):
            bucket = per_delta[delta]
            missing = [rid for rid in ordered_ids if rid not in bucket]
            if missing:
                raise ScenarioFormatError(
                    f"delta {delta} missing rounds {missing!r}", path=str(bench_path)
                )
            series_list.append(
                BenchmarkSeries(
                    delta=delta,
                    b_needed=tuple(bucket[rid]["b_needed"] for rid in ordered_ids),
                    b_needed_hat=(
                        tuple(bucket[rid]["b_needed_hat"] for rid in ordered_ids)
                        if bench_has["b_needed_hat"]
                        else None
                    ),
                    alpha_true=(
                        tuple(bucket[rid]["alpha_true"] for rid in ordered_ids)
                        if bench_has["alpha_true"]
                        else None
                    ),
                    q_scale=(
                        tuple(bucket[rid]["q_scale"] for rid in ordered_ids)
                        if bench_has["q_scale"]
                        else None
                    ),
                )
            )
        benchmarks = tuple(series_list)

    name = root.name
    seed = None
    params: dict[str, object] = {}
    removal_rule = False
    meta_path = root / META_FILE
    if meta_path.exists():
        try:
            meta = json.loads(meta_path.read_text())
        except json.JSONDecodeError as exc:
            raise ScenarioFormatError(f"bad meta.json: {exc}", path=str(meta_path)) from None
        name = meta.get("name", name)
        seed = meta.get("seed")
        params = dict(meta.get("params", {}))
        removal_rule = bool(meta.get("removal_rule", False))

    truth = GroundTruth(
        benchmarks=benchmarks,
        production=(
            tuple(production[rid] for rid in ordered_ids)
            if has["production_haircut"]
            else None
        ),
        comparator=(
            tuple(comparator[rid] for rid in ordered_ids)
            if has["comparator_haircut"]
            else None
        ),
        account_slopes=account_slopes if has["impact_slope"] else None,
    )
    return Scenario(
        name=name,
        rounds=tuple(rounds),
        ground_truth=truth,
        scores=(
            tuple(scores[rid] for rid in ordered_ids) if has["score"] else None
        ),
        seed=seed,
        params=params,
        removal_rule=removal_rule,
    )


RESULT_COLUMNS = (
    "policy",
    "round_id",
    "delta",
    "h",
    "b_needed",
    "tracking",
    "overshoot",
    "undershoot",
    "fairness",
    "m",
    "m_ilp",
    "loss_total",
)


@dataclass(frozen=True)
class ResultRow:
    """One (policy, round, markout horizon) evaluation record."""

    policy: str
    round_id: int
    delta: int
    h: float
    b_needed: float
    tracking: float
    overshoot: float
    undershoot: float
    fairness: float
    m: float
    m_ilp: float
    loss_total: float


def write_results_csv(rows: Sequence[ResultRow], path: str | Path) -> None:
    p = Path(path)
    p.parent.mkdir(parents=True, exist_ok=True)
    with open(p, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(RESULT_COLUMNS)
        for r in rows:
            writer.writerow(
                [
                    r.policy,
                    r.round_id,
                    r.delta,
                    format_number(r.h),
                    format_number(r.b_needed),
                    format_number(r.tracking),
                    format_number(r.overshoot),
                    format_number(r.undershoot),
                    format_number(r.fairness),
                    format_number(r.m),
                    format_number(r.m_ilp),
                    format_number(r.loss_total),
                ]
            )


def read_results_csv(path: str | Path) -> list[ResultRow]:
    p = Path(path)
    _, rows = _read_rows(p, RESULT_COLUMNS, ())
    out = []
    for lineno, row in rows:
        out.append(
            ResultRow(
                policy=row["policy"],
                round_id=_parse_int_cell(row["round_id"], path=str(p), row=lineno, column="round_id"),
                delta=_parse_int_cell(row["delta"], path=str(p), row=lineno, column="delta"),
                **{
                    name: _parse_float_cell(row[name], path=str(p), row=lineno, column=name)
                    for name in RESULT_COLUMNS[3:]
                },
            )
        )
    return out


DIAGNOSTIC_COLUMNS = (
    "policy",
    "delta",
    "inversion_rate",
    "inversion_rate_pooled",
    "rank_stability",
    "perturbation_jump",
    "effective_slope_variation",
)


@dataclass(frozen=True)
class DiagnosticsRow:
    policy: str
    delta: int
    inversion_rate: float
    inversion_rate_pooled: float
    rank_stability: float | None
    perturbation_jump: float | None
    effective_slope_variation: float | None


def write_diagnostics_csv(rows: Sequence[DiagnosticsRow], path: str | Path) -> None:
    p = Path(path)
    p.parent.mkdir(parents=True, exist_ok=True)
    with open(p, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(DIAGNOSTIC_COLUMNS)
        for r in rows:
            writer.writerow(
                [
                    r.policy,
                    r.delta,
                    format_number(r.inversion_rate),
                    format_number(r.inversion_rate_pooled),
                    "" if r.rank_stability is None else format_number(r.rank_stability),
                    "" if r.perturbation_jump is None else format_number(r.perturbation_jump),
                    ""
                    if r.effective_slope_variation is None
                    else format_number(r.effective_slope_variation),
                ]
            )


def write_episode_json(payload: Mapping[str, object], path: str | Path) -> None:
    p = Path(path)
    p.parent.mkdir(parents=True, exist_ok=True)
    with open(p, "w") as fh:
        json.dump(payload, fh, indent=2, sort_keys=True)
        fh.write("\n")
