"""
Command line interface.

    glucose-mbrl run CONFIG [--episodes N] [--output DIR]
    glucose-mbrl sweep CONFIG --profiles adult#001 adult#002 --agents bb mbrl_with_uncertainty [--jobs N]
    glucose-mbrl report PATH [PATH ...] [--metric completion|tir]
    glucose-mbrl curves CONFIG --output curves.csv [--seeds 0 1 2 3 4]

Exit codes: 0 success, 1 configuration error, 2 any other error.
"""

import argparse
import json
import logging
import sys
from pathlib import Path
from typing import List, Optional, Sequence

from glucose_mbrl.config import AgentKind, ExperimentConfig, load_config
from glucose_mbrl.errors import ConfigError
from glucose_mbrl.field_ops import modify_config
from glucose_mbrl.harness import METRICS_FILE, compare_uncertainty_modes, sweep, train_and_evaluate
from glucose_mbrl.metrics import MetricsReport, comparison_table
from glucose_mbrl.planner import UncertaintyMode
from glucose_mbrl.simcore import all_profiles, parse_profile_id

logger = logging.getLogger(__name__)

METRICS = {"completion": "completion_rate_pct", "tir": "time_in_range_pct"}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="glucose-mbrl", description="Closed-loop glucose control experiments")
    verbosity = parser.add_mutually_exclusive_group()
    verbosity.add_argument("-v", "--verbose", action="store_true", help="Log per-step planning decisions")
    verbosity.add_argument("-q", "--quiet", action="store_true", help="Only log warnings and errors")
    commands = parser.add_subparsers(dest="command", required=True)

    run = commands.add_parser("run", help="Train and evaluate one config")
    run.add_argument("config", type=Path, help="YAML experiment config")
    run.add_argument("--episodes", type=int, help="Override the episode count")
    run.add_argument("--output", type=Path, help="Override the output directory")

    sweep_cmd = commands.add_parser("sweep", help="Run every profile x agent cell")
    sweep_cmd.add_argument("config", type=Path, help="YAML experiment config used as the template")
    sweep_cmd.add_argument("--profiles", nargs="+", default=None, help="Profile ids (default: all nine)")
    sweep_cmd.add_argument("--agents", nargs="+", default=[k.value for k in AgentKind], help=f"Any of {', '.join(AgentKind)}")
    sweep_cmd.add_argument("--jobs", type=int, default=1, help="Worker processes")
    sweep_cmd.add_argument("--output", type=Path, help="Override the output directory")

    report = commands.add_parser("report", help="Tabulate metrics.json files")
    report.add_argument("paths", nargs="+", type=Path, help="metrics.json files or directories searched recursively")
    report.add_argument("--metric", choices=sorted(METRICS), action="append", help="Table(s) to print (default: both)")

    curves = commands.add_parser("curves", help="Learning curves of both MBRL modes as CSV")
    curves.add_argument("config", type=Path, help="YAML experiment config")
    curves.add_argument("--seeds", nargs="+", type=int, default=[0, 1, 2, 3, 4])
    curves.add_argument("--output", type=Path, required=True, help="CSV file to write")
    return parser


def _with_overrides(config: ExperimentConfig, **overrides) -> ExperimentConfig:
    changes = {key: value for key, value in overrides.items() if value is not None}
    if not changes:
        return config
    try:
        return modify_config(config, **changes)
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc


def collect_reports(paths: Sequence[Path]) -> List[MetricsReport]:
    """Load every metrics.json under the given paths."""
    files: List[Path] = []
    for path in paths:
        files.extend(sorted(path.rglob(METRICS_FILE)) if path.is_dir() else [path])
    if not files:
        raise ConfigError(f"no {METRICS_FILE} found under {', '.join(map(str, paths))}")
    reports = []
    for file in files:
        try:
            reports.append(MetricsReport.model_validate(json.loads(file.read_text(encoding="utf-8"))))
        except (OSError, ValueError) as exc:
            raise ConfigError(f"{file}: not a metrics report: {exc}") from exc
    return reports


def _run(args: argparse.Namespace) -> None:
    config = _with_overrides(load_config(args.config), episodes=args.episodes, output_dir=args.output)
    report = train_and_evaluate(config)
    print(report.model_dump_json(indent=2))


def _sweep_cells(profiles: Sequence[str], agents: Sequence[str]) -> tuple[List[str], List[AgentKind]]:
    """Check both sweep axes before any cell runs.

    Raises:
        ConfigError: On an unknown agent kind or a malformed profile id.
    """
    try:
        kinds = [AgentKind(agent) for agent in agents]
    except ValueError as exc:
        raise ConfigError(f"--agents: {exc}; expected one of {', '.join(AgentKind)}") from exc
    for profile in profiles:
        try:
            parse_profile_id(profile)
        except ValueError as exc:
            raise ConfigError(f"--profiles: {exc}") from exc
    return list(profiles), kinds


def _sweep(args: argparse.Namespace) -> None:
    config = _with_overrides(load_config(args.config), output_dir=args.output)
    profiles, agents = _sweep_cells(args.profiles or all_profiles(), args.agents)
    reports = sweep(config, profiles, agents, jobs=args.jobs)
    for name, metric in METRICS.items():
        print(f"{name}:")
        print(comparison_table(reports, metric))


def _report(args: argparse.Namespace) -> None:
    reports = collect_reports(args.paths)
    for name in args.metric or sorted(METRICS):
        print(f"{name}:")
        print(comparison_table(reports, METRICS[name]))


def _curves(args: argparse.Namespace) -> None:
    curves = compare_uncertainty_modes(load_config(args.config), args.seeds)
    args.output.parent.mkdir(parents=True, exist_ok=True)
    curves.to_frame().to_csv(args.output, index=False)
    for mode in UncertaintyMode:
        print(f"{mode.value}: first full episode per seed {curves.first_full_episodes(mode)}, median {curves.median_first_full_episode(mode)}")


COMMANDS = {"run": _run, "sweep": _sweep, "report": _report, "curves": _curves}


def main(argv: Optional[Sequence[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    level = logging.DEBUG if args.verbose else logging.WARNING if args.quiet else logging.INFO
    logging.basicConfig(level=level, format="%(asctime)s %(levelname)s %(name)s: %(message)s")
    try:
        COMMANDS[args.command](args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 1
    except Exception as exc:
        logger.debug("command failed", exc_info=True)
        print(f"error: {exc}", file=sys.stderr)
        return 2
    return 0


if __name__ == "__main__":
    sys.exit(main())
