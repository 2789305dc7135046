"""Command line front end.

Subcommands: ``generate`` (write a scenario directory), ``evaluate`` (run a
config and write results), ``diagnose`` (stability diagnostics only),
``bound`` (print the instance-calibrated severity bound), ``report``
(audit a results directory and write an aggregate summary).

Exit codes: 0 on success, 1 for configuration or input validation
failures, 2 when an internal consistency check fails.
"""

from __future__ import annotations

import argparse
import sys
from collections.abc import Sequence
from dataclasses import replace
from pathlib import Path

from .errors import (
    AdlError,
    ConfigError,
    DecompositionViolatedError,
    InternalInvariantError,
)
from .metrics import instance_bound
from .runner import audit_results, evaluate, load_config, write_outputs
from .scenarios import (
    RandomEpisodeParams,
    gen_alternating_capacity,
    gen_churn_instance,
    gen_random_episode,
    write_episode_json,
    write_scenario_csv,
)


class _Parser(argparse.ArgumentParser):
    """argparse parser whose errors surface as ConfigError (exit code 1)."""

    def error(self, message: str) -> None:  # type: ignore[override]
        raise ConfigError(message)


def _parse_float_list(chunks: list[str]) -> list[float]:
    out: list[float] = []
    for chunk in chunks:
        for token in chunk.split(","):
            token = token.strip()
            if not token:
                continue
            try:
                out.append(float(token))
            except ValueError:
                raise ConfigError(f"bad number {token!r}") from None
    return out


def _parse_int_list(chunks: list[str]) -> list[int]:
    out: list[int] = []
    for chunk in chunks:
        for token in chunk.split(","):
            token = token.strip()
            if not token:
                continue
            try:
                out.append(int(token))
            except ValueError:
                raise ConfigError(f"bad integer {token!r}") from None
    return out


def _cmd_generate(args: argparse.Namespace) -> int:
    if args.kind == "alternating":
        scenario = gen_alternating_capacity(args.T, args.M)
    elif args.kind == "churn":
        scenario = gen_churn_instance(args.T, args.alpha_min, args.alpha_max)
    elif args.kind == "random":
        scenario = gen_random_episode(args.seed, RandomEpisodeParams(horizon=args.T))
    else:
        raise ConfigError(f"unknown generator kind {args.kind!r}")
    out = Path(args.out)
    write_scenario_csv(scenario, out)
    print(f"wrote scenario {scenario.name} ({scenario.horizon} rounds) to {out}")
    return 0


def _cmd_evaluate(args: argparse.Namespace) -> int:
    config = load_config(args.config)
    if args.out is not None:
        config = replace(config, out_dir=str(Path(args.out).resolve()))
    if args.seed is not None:
        config = replace(config, seed=args.seed)
    if args.lambda_fair:
        values = _parse_float_list(args.lambda_fair)
        if not values:
            raise ConfigError("--lambda-fair given but no values parsed")
        config = replace(
            config,
            lambda_sweep=tuple(values),
            weights=replace(
                config.weights,
                lambda_fair=values[0],
                lambda_empirical=values[0],
            ),
        )
    if args.delta:
        config = replace(config, deltas=tuple(_parse_int_list(args.delta)))
    result = evaluate(config)
    for path in write_outputs(result):
        print(f"wrote {path}")
    return 0


def _cmd_diagnose(args: argparse.Namespace) -> int:
    config = load_config(args.config)
    if args.out is not None:
        config = replace(config, out_dir=str(Path(args.out).resolve()))
    result = evaluate(config)
    out = Path(config.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    from .scenarios import write_diagnostics_csv

    path = out / "diagnostics.csv"
    write_diagnostics_csv(result.diagnostics, path)
    print(f"wrote {path}")
    for row in result.diagnostics:
        stability = "n/a" if row.rank_stability is None else f"{row.rank_stability:.4f}"
        jump = "n/a" if row.perturbation_jump is None else f"{row.perturbation_jump:.6g}"
        print(
            f"{row.policy} delta={row.delta}: inversions={row.inversion_rate:.4f} "
            f"(pooled {row.inversion_rate_pooled:.4f}) rank_stability={stability} "
            f"probe_jump={jump}"
        )
    return 0


def _cmd_bound(args: argparse.Namespace) -> int:
    deficits = _parse_float_list([args.deficits])
    if not deficits:
        raise ConfigError("--deficits must list at least one value")
    print(instance_bound(args.p, deficits))
    return 0


def _cmd_report(args: argparse.Namespace) -> int:
    payload = audit_results(args.in_dir)
    out = Path(args.in_dir) / "report_summary.json"
    write_episode_json(payload, out)
    files = payload["audited_files"]
    print(f"audited {len(files)} results file(s): consistent")  # type: ignore[arg-type]
    print(f"wrote {out}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="adl-lab", description=__doc__)
    sub = parser.add_subparsers(dest="command", metavar="command")

    gen = sub.add_parser("generate", help="write a scenario directory", add_help=True)
    gen.add_argument("--kind", default="alternating", choices=("alternating", "churn", "random"))
    gen.add_argument("--T", type=int, default=16, help="horizon (rounds)")
    gen.add_argument("--M", type=float, default=2.0, help="capacity ratio for the alternating instance")
    gen.add_argument("--alpha-min", type=float, default=0.0, dest="alpha_min")
    gen.add_argument("--alpha-max", type=float, default=1.0, dest="alpha_max")
    gen.add_argument("--seed", type=int, default=0)
    gen.add_argument("--out", required=True, help="output directory")
    gen.set_defaults(func=_cmd_generate)

    ev = sub.add_parser("evaluate", help="run a config and write result files")
    ev.add_argument("--config", required=True)
    ev.add_argument("--out", default=None, help="override the config's output directory")
    ev.add_argument("--seed", type=int, default=None)
    ev.add_argument(
        "--lambda-fair",
        action="append",
        default=[],
        dest="lambda_fair",
        help="fairness weight(s); repeat or comma-separate for a sweep",
    )
    ev.add_argument(
        "--delta",
        action="append",
        default=[],
        help="markout horizon(s); repeat or comma-separate",
    )
    ev.set_defaults(func=_cmd_evaluate)

    diag = sub.add_parser("diagnose", help="stability diagnostics only")
    diag.add_argument("--config", required=True)
    diag.add_argument("--out", default=None)
    diag.set_defaults(func=_cmd_diagnose)

    bound = sub.add_parser("bound", help="print the instance-calibrated bound")
    bound.add_argument("--p", type=float, required=True, help="severity path variation")
    bound.add_argument("--deficits", required=True, help="comma-separated deficits")
    bound.set_defaults(func=_cmd_bound)

    rep = sub.add_parser("report", help="audit a results directory")
    rep.add_argument("--in", dest="in_dir", required=True, help="results directory")
    rep.set_defaults(func=_cmd_report)

    return parser


def main(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        if getattr(args, "func", None) is None:
            raise ConfigError("missing command (try --help)")
        return args.func(args)
    except (InternalInvariantError, DecompositionViolatedError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except (AdlError, OSError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
