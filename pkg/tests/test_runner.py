"""Run configuration, orchestration, output files, and the results audit."""

from __future__ import annotations

from pathlib import Path

import numpy as np
import pytest

from adl_lab.errors import ConfigError, InternalInvariantError
from adl_lab.metrics import LossWeights
from adl_lab.runner import (
    RunConfig,
    THREADS_ENV,
    audit_results,
    evaluate,
    load_config,
    parse_policy_line,
    resolve_scenario,
    results_filename,
    summary_filename,
    write_outputs,
)
from adl_lab.scenarios import gen_alternating_capacity, write_scenario_csv


def queue_policy():
    return parse_policy_line("queue score=score")


def make_config(**overrides):
    defaults = dict(
        scenario="generator:alternating",
        policies=(queue_policy(),),
        generator_params={"T": 4, "M": 2.0},
    )
    defaults.update(overrides)
    return RunConfig(**defaults)


class TestParsePolicyLine:
    def test_queue_with_score_source(self) -> None:
        spec = parse_policy_line("queue score=capacity")
        assert spec.kind == "queue"
        assert spec.score_source == "capacity"
        assert spec.label == "queue"

    def test_vector_md_with_eta_and_name(self) -> None:
        spec = parse_policy_line("vector_md eta=0.25 init=pro_rata name=md-fast")
        assert spec.eta == 0.25
        assert spec.init == "pro_rata"
        assert spec.label == "md-fast"

    def test_per_policy_severity_override(self) -> None:
        spec = parse_policy_line("pro_rata severity=fixed:0.5")
        assert spec.severity == "fixed:0.5"

    @pytest.mark.parametrize(
        "line",
        [
            "",
            "queue score",
            "queue color=red",
            "vector_md eta=abc",
            "teleport",
            "vector_md",
        ],
    )
    def test_rejects_malformed_lines(self, line: str) -> None:
        with pytest.raises(ConfigError):
            parse_policy_line(line)


class TestRunConfig:
    def test_empty_policy_library(self) -> None:
        with pytest.raises(ConfigError, match="empty"):
            make_config(policies=())

    def test_duplicate_policy_labels(self) -> None:
        with pytest.raises(ConfigError, match="duplicate"):
            make_config(policies=(queue_policy(), queue_policy()))

    @pytest.mark.parametrize("mode", ["needed", "track_hat", "ogd", "ogd:0.5", "fixed:0.3"])
    def test_severity_modes_accepted(self, mode: str) -> None:
        assert make_config(severity=mode).severity == mode

    @pytest.mark.parametrize("mode", ["fixed:1.5", "fixed:x", "ogd:0", "warp", "ogd:x"])
    def test_severity_modes_rejected(self, mode: str) -> None:
        with pytest.raises(ConfigError):
            make_config(severity=mode)

    def test_theta0_bounds(self) -> None:
        with pytest.raises(ConfigError):
            make_config(theta0=1.5)

    def test_sweep_defaults_to_empirical_weight(self) -> None:
        cfg = make_config(weights=LossWeights(lambda_empirical=0.75))
        assert cfg.sweep() == (0.75,)
        cfg = make_config(lambda_sweep=(0.5, 2.0))
        assert cfg.sweep() == (0.5, 2.0)


class TestLoadConfig:
    def test_full_file(self, tmp_path: Path) -> None:
        text = """
        # evaluation of the swap instance
        scenario = generator:alternating
        gen.T = 8          # horizon
        gen.M = 4.0
        policy = queue score=score
        policy = pro_rata name=socialized
        delta = 0
        lambda_fair = 0.5
        lambda_fair = 2
        lambda_track = 1.5
        severity = fixed:0.3
        theta0 = 0.1
        out = artifacts
        seed = 7
        """
        cfg_path = tmp_path / "run.cfg"
        cfg_path.write_text("\n".join(line.strip() for line in text.strip().splitlines()))
        cfg = load_config(cfg_path)
        assert cfg.scenario == "generator:alternating"
        assert cfg.generator_params == {"T": 8, "M": 4.0}
        assert [p.label for p in cfg.policies] == ["queue", "socialized"]
        assert cfg.deltas == (0,)
        assert cfg.lambda_sweep == (0.5, 2.0)
        assert cfg.weights.lambda_fair == 0.5
        assert cfg.weights.lambda_track == 1.5
        assert cfg.severity == "fixed:0.3"
        assert cfg.theta0 == 0.1
        assert cfg.out_dir == str(tmp_path / "artifacts")
        assert cfg.seed == 7

    def test_single_lambda_is_not_a_sweep(self, tmp_path: Path) -> None:
        cfg_path = tmp_path / "run.cfg"
        cfg_path.write_text(
            "scenario = generator:alternating\npolicy = queue\nlambda_fair = 2\n"
        )
        cfg = load_config(cfg_path)
        assert cfg.lambda_sweep == ()
        assert cfg.weights.lambda_fair == 2.0
        assert cfg.weights.lambda_empirical == 2.0

    def test_replay_path_resolves_against_config_dir(self, tmp_path: Path) -> None:
        (tmp_path / "data").mkdir()
        cfg_path = tmp_path / "run.cfg"
        cfg_path.write_text("scenario = replay:data\npolicy = queue\n")
        cfg = load_config(cfg_path)
        assert cfg.scenario == f"replay:{tmp_path / 'data'}"

    def test_missing_file(self, tmp_path: Path) -> None:
        with pytest.raises(ConfigError, match="does not exist"):
            load_config(tmp_path / "absent.cfg")

    @pytest.mark.parametrize(
        "body, fragment",
        [
            ("policy = queue\n", "missing required key"),
            ("scenario = generator:alternating\npolicy = queue\nwarp = 1\n", "unknown key"),
            (
                "scenario = generator:alternating\nscenario = generator:churn\npolicy = queue\n",
                "duplicate key",
            ),
            ("scenario = generator:alternating\npolicy = queue\ndelta = x\n", "bad delta"),
            ("scenario = generator:alternating\npolicy = queue\njust words\n", "expected key"),
            ("scenario = generator:alternating\npolicy = queue\nseed = pi\n", "bad seed"),
        ],
    )
    def test_malformed_configs(self, tmp_path: Path, body: str, fragment: str) -> None:
        cfg_path = tmp_path / "run.cfg"
        cfg_path.write_text(body)
        with pytest.raises(ConfigError, match=fragment):
            load_config(cfg_path)


class TestResolveScenario:
    def test_generators(self) -> None:
        alt = resolve_scenario(make_config())
        assert alt.horizon == 4 and alt.name.startswith("alternating")
        churn = resolve_scenario(
            make_config(scenario="generator:churn", generator_params={"T": 3})
        )
        assert churn.removal_rule is True
        rand = resolve_scenario(
            make_config(scenario="generator:random", generator_params={"T": 5}, seed=9)
        )
        assert rand.horizon == 5 and rand.seed == 9

    def test_replay_directory(self, tmp_path: Path) -> None:
        scenario = gen_alternating_capacity(4, 2.0)
        write_scenario_csv(scenario, tmp_path / "replay")
        cfg = make_config(scenario=f"replay:{tmp_path / 'replay'}")
        assert resolve_scenario(cfg) == scenario

    def test_unknown_generator(self) -> None:
        with pytest.raises(ConfigError, match="unknown generator"):
            resolve_scenario(make_config(scenario="generator:chaos"))

    def test_bare_name_rejected(self) -> None:
        with pytest.raises(ConfigError, match="replay:"):
            resolve_scenario(make_config(scenario="alternating"))


class TestEvaluate:
    def test_queue_dynamic_regret_matches_closed_form(self) -> None:
        cfg = make_config(generator_params={"T": 8, "M": 4.0})
        result = evaluate(cfg)
        episode = result.episodes[cfg.sweep()[0]][0]
        assert episode.dynamic_regret == pytest.approx(8 / 2 * (1 - 1 / 4.0), abs=1e-9)

    def test_deterministic_across_calls(self) -> None:
        cfg = make_config(
            scenario="generator:random",
            generator_params={"T": 6},
            policies=(queue_policy(), parse_policy_line("pro_rata")),
            seed=13,
        )
        first = evaluate(cfg)
        second = evaluate(cfg)
        assert first.results == second.results
        assert first.episodes == second.episodes
        assert first.diagnostics == second.diagnostics

    def test_thread_cap_does_not_change_results(self, monkeypatch) -> None:
        cfg = make_config(
            policies=(queue_policy(), parse_policy_line("pro_rata")),
            generator_params={"T": 4, "M": 2.0},
        )
        monkeypatch.setenv(THREADS_ENV, "1")
        serial = evaluate(cfg)
        monkeypatch.setenv(THREADS_ENV, "4")
        threaded = evaluate(cfg)
        assert serial.results == threaded.results

    def test_bad_thread_cap(self, monkeypatch) -> None:
        monkeypatch.setenv(THREADS_ENV, "zero")
        with pytest.raises(ConfigError, match=THREADS_ENV):
            evaluate(make_config())
        monkeypatch.setenv(THREADS_ENV, "0")
        with pytest.raises(ConfigError, match=THREADS_ENV):
            evaluate(make_config())

    def test_unknown_delta_rejected(self) -> None:
        with pytest.raises(ValueError, match="delta"):
            evaluate(make_config(deltas=(7,)))

    def test_scenario_without_benchmarks_rejected(self, tmp_path: Path) -> None:
        out = tmp_path / "bare"
        out.mkdir()
        (out / "rounds.csv").write_text("round_id,deficit,epsilon,context\n1,5,0.000001,\n")
        (out / "winners.csv").write_text("round_id,winner_id,capacity,lot_size\n1,w1,10,\n")
        with pytest.raises(ConfigError, match="benchmark"):
            evaluate(make_config(scenario=f"replay:{out}"))

    def test_production_policy_needs_recorded_haircuts(self) -> None:
        cfg = make_config(policies=(parse_policy_line("production"),))
        with pytest.raises(ConfigError, match="production"):
            evaluate(cfg)

    def test_fixed_severity_scales_the_deficit(self) -> None:
        cfg = make_config(severity="fixed:0.25")
        result = evaluate(cfg)
        rows = result.results[cfg.sweep()[0]]
        assert all(r.h == pytest.approx(0.25) for r in rows)
        assert all(r.undershoot == pytest.approx(0.75) for r in rows)

    def test_needed_severity_tracks_exactly(self) -> None:
        cfg = make_config(policies=(parse_policy_line("pro_rata"),), severity="needed")
        rows = evaluate(cfg).results[cfg.sweep()[0]]
        assert all(r.h == pytest.approx(1.0) and r.tracking == pytest.approx(0.0) for r in rows)

    def test_ogd_severity_starts_at_theta0(self) -> None:
        cfg = make_config(severity="ogd", generator_params={"T": 8, "M": 2.0})
        rows = evaluate(cfg).results[cfg.sweep()[0]]
        by_round = sorted(rows, key=lambda r: r.round_id)
        assert by_round[0].h == 0.0
        assert by_round[-1].h > 0.0

    def test_churn_diagnostics_capture_slope_variation(self) -> None:
        cfg = make_config(
            scenario="generator:churn",
            generator_params={"T": 4, "alpha_min": 0.0, "alpha_max": 1.0},
            policies=(queue_policy(), parse_policy_line("pro_rata")),
        )
        result = evaluate(cfg)
        by_policy = {d.policy: d for d in result.diagnostics}
        assert by_policy["queue"].effective_slope_variation == pytest.approx(3.0)
        assert by_policy["pro_rata"].effective_slope_variation == pytest.approx(0.0)

    def test_capacity_and_context_score_sources(self, tmp_path: Path) -> None:
        base = gen_alternating_capacity(2, 2.0)
        rounds = tuple(
            type(r)(
                round_id=r.round_id,
                deficit=r.deficit,
                winners=r.winners,
                context={"funding": 0.1 * r.round_id},
                epsilon=r.epsilon,
            )
            for r in base.rounds
        )
        scenario = type(base)(
            name=base.name,
            rounds=rounds,
            ground_truth=base.ground_truth,
            scores=base.scores,
            params=base.params,
        )
        write_scenario_csv(scenario, tmp_path / "ctx")
        cfg = make_config(
            scenario=f"replay:{tmp_path / 'ctx'}",
            policies=(
                parse_policy_line("queue score=capacity name=by-cap"),
                parse_policy_line("queue score=context:funding name=by-funding"),
            ),
        )
        rows = evaluate(cfg).results[cfg.sweep()[0]]
        assert {r.policy for r in rows} == {"by-cap", "by-funding"}
        assert all(r.h == pytest.approx(1.0) for r in rows)

    def test_missing_context_key_rejected(self) -> None:
        cfg = make_config(policies=(parse_policy_line("queue score=context:oi"),))
        with pytest.raises(ConfigError, match="oi"):
            evaluate(cfg)

    def test_policy_class_regret_is_zero_for_the_best(self) -> None:
        cfg = make_config(
            policies=(queue_policy(), parse_policy_line("pro_rata")),
            generator_params={"T": 4, "M": 2.0},
        )
        episodes = evaluate(cfg).episodes[cfg.sweep()[0]]
        best = min(e.objective_total for e in episodes)
        for e in episodes:
            assert e.policy_class_regret == pytest.approx(e.objective_total - best, abs=1e-12)
            assert e.policy_class_regret >= 0.0

    def test_bound_path_spans_the_horizon(self) -> None:
        cfg = make_config(generator_params={"T": 6, "M": 2.0})
        result = evaluate(cfg)
        assert set(result.bound_paths) == {0}
        path = result.bound_paths[0]
        assert len(path) == 6
        assert all(b2 >= b1 for b1, b2 in zip(path, path[1:]))


class TestWriteOutputs:
    def test_file_layout_per_lambda(self, tmp_path: Path) -> None:
        cfg = make_config(
            lambda_sweep=(0.5, 2.0),
            out_dir=str(tmp_path / "run"),
        )
        written = write_outputs(evaluate(cfg))
        names = sorted(p.name for p in written)
        assert names == [
            "diagnostics.csv",
            "episode_summary_lambda-0.5.json",
            "episode_summary_lambda-2.json",
            "results_lambda-0.5.csv",
            "results_lambda-2.csv",
        ]
        assert results_filename(0.5) == "results_lambda-0.5.csv"
        assert summary_filename(2.0) == "episode_summary_lambda-2.json"

    def test_rerun_is_byte_identical(self, tmp_path: Path) -> None:
        cfg = make_config(out_dir=str(tmp_path / "run"))
        first = {p.name: p.read_bytes() for p in write_outputs(evaluate(cfg))}
        second = {p.name: p.read_bytes() for p in write_outputs(evaluate(cfg))}
        assert first == second


class TestAuditResults:
    def _run_dir(self, tmp_path: Path) -> Path:
        out = tmp_path / "run"
        cfg = make_config(out_dir=str(out))
        write_outputs(evaluate(cfg))
        return out

    def test_consistent_run(self, tmp_path: Path) -> None:
        payload = audit_results(self._run_dir(tmp_path))
        assert payload["status"] == "consistent"
        assert payload["audited_files"] == ["results_lambda-1.csv"]
        key = "queue|delta=0|lambda=1"
        assert key in payload["policies"]
        assert payload["policies"][key]["rounds"] == 4.0

    def test_tampered_cell_detected(self, tmp_path: Path) -> None:
        out = self._run_dir(tmp_path)
        path = out / "results_lambda-1.csv"
        lines = path.read_text().splitlines()
        header = lines[0].split(",")
        row = lines[1].split(",")
        row[header.index("tracking")] = "123.456"
        lines[1] = ",".join(row)
        path.write_text("\n".join(lines) + "\n")
        with pytest.raises(InternalInvariantError, match="tracking"):
            audit_results(out)

    def test_empty_directory(self, tmp_path: Path) -> None:
        with pytest.raises(ConfigError, match="results_lambda"):
            audit_results(tmp_path)
