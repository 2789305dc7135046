"""Figure suite over adl-lab run directories.

Reads the documented results CSV, episode summary JSON, and diagnostics
CSV schemas and renders the standard chart set.  Nothing is recomputed
here: every plotted number comes straight out of the run's files, so the
plotting layer cannot disagree with the engine.  Output bytes are
deterministic; rerunning over the same inputs reproduces identical PNG
and SVG files.
"""

from __future__ import annotations

import csv
import json
import warnings
from dataclasses import dataclass
from pathlib import Path
from typing import Callable, Mapping, Sequence

import matplotlib

matplotlib.use("Agg")
# fixed hash salt keeps SVG element ids stable across processes
matplotlib.rcParams["svg.hashsalt"] = "adl-figures"

import matplotlib.pyplot as plt

RESULTS_COLUMNS = (
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

DIAGNOSTICS_COLUMNS = (
    "policy",
    "delta",
    "inversion_rate",
    "inversion_rate_pooled",
    "rank_stability",
    "perturbation_jump",
    "effective_slope_variation",
)

_PNG_METADATA = {"Software": "adl-figures"}
_SVG_METADATA = {"Date": None}


class FigureDataError(Exception):
    """The run directory is missing or does not parse under the results schema."""


class FigureSkip(Exception):
    """Raised by a builder when its inputs cannot support the figure."""


@dataclass(frozen=True)
class RunData:
    """One run directory, loaded at the smallest fairness weight present.

    Side files (episode summary, diagnostics) are optional; when one is
    absent or unreadable the note records why so the figures that need it
    can skip with a precise reason.
    """

    lam: str
    rows: tuple[dict[str, str], ...]
    summary: Mapping[str, object] | None
    diagnostics: tuple[dict[str, str], ...] | None
    summary_note: str = "episode summary JSON is missing"
    diagnostics_note: str = "diagnostics.csv is missing"

    def policies(self) -> tuple[str, ...]:
        return tuple(sorted({r["policy"] for r in self.rows}))

    def deltas(self) -> tuple[int, ...]:
        return tuple(sorted({int(r["delta"]) for r in self.rows}))


def _read_csv(path: Path, columns: Sequence[str]) -> tuple[dict[str, str], ...]:
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise FigureDataError(f"{path} is empty") from None
        if tuple(header) != tuple(columns):
            raise FigureDataError(
                f"{path} header {header!r} does not match the documented schema"
            )
        return tuple(dict(zip(header, row)) for row in reader)


def load_run(in_dir: str | Path) -> RunData:
    """Load the results file with the smallest lambda plus its side files."""
    root = Path(in_dir)
    if not root.is_dir():
        raise FigureDataError(f"run directory {root} does not exist")
    candidates = []
    for path in root.glob("results_lambda-*.csv"):
        token = path.name[len("results_lambda-") : -len(".csv")]
        try:
            candidates.append((float(token), token, path))
        except ValueError:
            continue
    if not candidates:
        raise FigureDataError(f"no results_lambda-*.csv files in {root}")
    _, token, results_path = min(candidates)
    rows = _read_csv(results_path, RESULTS_COLUMNS)

    summary = None
    summary_note = "episode summary JSON is missing"
    summary_path = root / f"episode_summary_lambda-{token}.json"
    if summary_path.is_file():
        try:
            summary = json.loads(summary_path.read_text())
        except json.JSONDecodeError as exc:
            summary_note = f"episode summary JSON is unreadable: {exc}"

    diagnostics = None
    diagnostics_note = "diagnostics.csv is missing"
    diag_path = root / "diagnostics.csv"
    if diag_path.is_file():
        try:
            diagnostics = _read_csv(diag_path, DIAGNOSTICS_COLUMNS)
        except FigureDataError as exc:
            diagnostics_note = str(exc)

    return RunData(
        lam=token,
        rows=rows,
        summary=summary,
        diagnostics=diagnostics,
        summary_note=summary_note,
        diagnostics_note=diagnostics_note,
    )


def cumulative_objective(
    rows: Sequence[Mapping[str, str]], policy: str, delta: int
) -> tuple[list[int], list[float]]:
    """Round ids and running loss_total for one policy at one markout horizon."""
    selected = sorted(
        (int(r["round_id"]), float(r["loss_total"]))
        for r in rows
        if r["policy"] == policy and int(r["delta"]) == delta
    )
    rounds, cumulative, running = [], [], 0.0
    for round_id, loss in selected:
        running += loss
        rounds.append(round_id)
        cumulative.append(running)
    return rounds, cumulative


def _save(fig, out_dir: Path, name: str) -> list[Path]:
    png = out_dir / f"{name}.png"
    svg = out_dir / f"{name}.svg"
    fig.savefig(png, dpi=150, metadata=_PNG_METADATA)
    fig.savefig(svg, metadata=_SVG_METADATA)
    plt.close(fig)
    return [png, svg]


def fig_objective_trajectories(data: RunData, out_dir: Path) -> list[Path]:
    """Cumulative objective per policy over the round sequence."""
    if not data.rows:
        raise FigureSkip("results file has no rows")
    delta = data.deltas()[0]
    fig, ax = plt.subplots(figsize=(7, 4.5))
    for policy in data.policies():
        rounds, cumulative = cumulative_objective(data.rows, policy, delta)
        ax.plot(rounds, cumulative, label=policy)
    ax.set_xlabel("round")
    ax.set_ylabel("cumulative objective (USD)")
    ax.set_title(f"Cumulative objective trajectories (lambda={data.lam}, delta={delta})")
    ax.legend()
    fig.tight_layout()
    return _save(fig, out_dir, "objective_trajectories")


def fig_overshoot_horizon(data: RunData, out_dir: Path) -> list[Path]:
    """Total overshoot per policy across markout horizons."""
    deltas = data.deltas()
    if len(deltas) < 2:
        raise FigureSkip(
            f"needs at least two markout horizons, results cover {list(deltas)}"
        )
    fig, ax = plt.subplots(figsize=(7, 4.5))
    for policy in data.policies():
        totals = []
        for delta in deltas:
            totals.append(
                sum(
                    float(r["overshoot"])
                    for r in data.rows
                    if r["policy"] == policy and int(r["delta"]) == delta
                )
            )
        ax.plot(deltas, totals, marker="o", label=policy)
    ax.set_xlabel("markout horizon (rounds)")
    ax.set_ylabel("total overshoot (USD)")
    ax.set_title(f"Overshoot vs markout horizon (lambda={data.lam})")
    ax.set_xticks(list(deltas))
    ax.legend()
    fig.tight_layout()
    return _save(fig, out_dir, "overshoot_horizon")


def fig_objective_split(data: RunData, out_dir: Path) -> list[Path]:
    """Tracking/fairness stacked bars per policy from the episode summary."""
    if data.summary is None:
        raise FigureSkip(data.summary_note)
    episodes = data.summary.get("episodes", [])
    delta = data.deltas()[0] if data.rows else None
    chosen = [e for e in episodes if delta is None or e["delta"] == delta]
    if not chosen:
        raise FigureSkip("episode summary has no entries for the plotted horizon")
    chosen.sort(key=lambda e: -float(e["objective_total"]))
    labels = [e["policy"] for e in chosen]
    tracking = [float(e["tracking_component"]) for e in chosen]
    fairness = [float(e["fairness_component"]) for e in chosen]
    fig, ax = plt.subplots(figsize=(7, 4.5))
    ax.bar(labels, tracking, label="tracking")
    ax.bar(labels, fairness, bottom=tracking, label="fairness")
    ax.set_ylabel("episode objective (USD)")
    ax.set_title(f"Objective split per policy (lambda={data.lam}, delta={delta})")
    ax.legend()
    fig.tight_layout()
    return _save(fig, out_dir, "objective_split")


def fig_bound_ratio(data: RunData, out_dir: Path) -> list[Path]:
    """Cumulative objective as a percentage of the instance envelope prefix."""
    if data.summary is None:
        raise FigureSkip(data.summary_note)
    if not data.rows:
        raise FigureSkip("results file has no rows")
    delta = data.deltas()[0]
    paths = data.summary.get("instance_bound_path", {})
    prefix = paths.get(str(delta))
    if not prefix:
        raise FigureSkip(f"no instance bound path for delta={delta}")
    envelope = [float(v) for v in prefix]
    if min(envelope) <= 0.0:
        raise FigureSkip("instance envelope touches zero, ratio undefined")
    fig, ax = plt.subplots(figsize=(7, 4.5))
    for policy in data.policies():
        rounds, cumulative = cumulative_objective(data.rows, policy, delta)
        if len(cumulative) != len(envelope):
            raise FigureSkip(
                f"round count mismatch for {policy}: "
                f"{len(cumulative)} rows vs {len(envelope)} envelope entries"
            )
        ratios = [100.0 * c / b for c, b in zip(cumulative, envelope)]
        ax.plot(rounds, ratios, label=policy)
    ax.set_xlabel("round")
    ax.set_ylabel("share of instance envelope (%)")
    ax.set_title(f"Objective vs calibrated envelope (lambda={data.lam}, delta={delta})")
    ax.legend()
    fig.tight_layout()
    return _save(fig, out_dir, "bound_ratio")


def fig_stability(data: RunData, out_dir: Path) -> list[Path]:
    """Inversion-rate and rank-stability bars from the diagnostics table."""
    if not data.diagnostics:
        raise FigureSkip(data.diagnostics_note if data.diagnostics is None else "diagnostics.csv has no rows")
    rows = sorted(data.diagnostics, key=lambda r: (r["policy"], int(r["delta"])))
    labels = [f"{r['policy']} (d={r['delta']})" for r in rows]
    inversions = [float(r["inversion_rate"]) for r in rows]
    fig, (top, bottom) = plt.subplots(2, 1, figsize=(7, 6), sharex=True)
    top.bar(labels, inversions)
    top.set_ylabel("inversion rate")
    top.set_title(f"Stability diagnostics (lambda={data.lam})")
    # rank stability is undefined for tiny or constant-score rounds;
    # empty cells simply leave no bar
    stab_labels = [l for l, r in zip(labels, rows) if r["rank_stability"] != ""]
    stab_values = [
        float(r["rank_stability"]) for r in rows if r["rank_stability"] != ""
    ]
    bottom.bar(stab_labels, stab_values)
    bottom.set_ylabel("rank stability")
    bottom.set_ylim(-1.05, 1.05)
    for ax in (top, bottom):
        ax.tick_params(axis="x", rotation=30)
    fig.tight_layout()
    return _save(fig, out_dir, "stability")


FIGURES: Mapping[str, Callable[[RunData, Path], list[Path]]] = {
    "objective_trajectories": fig_objective_trajectories,
    "overshoot_horizon": fig_overshoot_horizon,
    "objective_split": fig_objective_split,
    "bound_ratio": fig_bound_ratio,
    "stability": fig_stability,
}


@dataclass(frozen=True)
class FigureSpec:
    """What to read, where to write, and which figures to build.

    An empty selection means every known figure.
    """

    in_dir: str | Path
    out_dir: str | Path
    figures: tuple[str, ...] = ()

    def __post_init__(self) -> None:
        unknown = [name for name in self.figures if name not in FIGURES]
        if unknown:
            raise ValueError(
                f"unknown figures {unknown!r}; available: {sorted(FIGURES)}"
            )

    def selection(self) -> tuple[str, ...]:
        return self.figures or tuple(FIGURES)


@dataclass(frozen=True)
class RenderReport:
    written: tuple[Path, ...]
    skipped: Mapping[str, str]
    failed: Mapping[str, str]


def render(spec: FigureSpec) -> RenderReport:
    """Build the selected figures; per-figure problems never stop the batch.

    Figures whose inputs are insufficient are skipped with a warning;
    unexpected errors are collected per figure so one bad chart cannot
    block the rest.
    """
    data = load_run(spec.in_dir)
    out_dir = Path(spec.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    written: list[Path] = []
    skipped: dict[str, str] = {}
    failed: dict[str, str] = {}
    for name in spec.selection():
        try:
            written.extend(FIGURES[name](data, out_dir))
        except FigureSkip as exc:
            skipped[name] = str(exc)
            warnings.warn(f"{name} skipped: {exc}", RuntimeWarning, stacklevel=2)
        except Exception as exc:  # one figure must not sink the batch
            failed[name] = f"{type(exc).__name__}: {exc}"
    return RenderReport(written=tuple(written), skipped=skipped, failed=failed)
