"""
Multi-hop QA Runner - CLI Entry Point

Verbs:
    run        execute one strategy over a sampled corpus
    resume     finish an interrupted run directory
    compare    side-by-side EM/F1 of two or more runs
    eval       score an external predictions file
    dump-tree  print the stored reasoning tree of one example

Exit codes: 0 success, 1 some examples failed, 2 configuration error.
"""

from __future__ import annotations

import argparse
import asyncio
import logging
import sys
from typing import Any, Optional, Sequence, get_args

from pydantic.fields import FieldInfo

from apps.runner.jobs.batch import compare, dump_tree, eval_predictions, resume, run_batch
from packages.core.analytics.report import render_comparison, render_report_table
from packages.core.errors import (
    ConfigError,
    CorpusParseError,
    CorpusSchemaError,
    PreconditionError,
    RunDigestMismatchError,
    RunMismatchError,
    SampleBoundsError,
    StocTotError,
)
from packages.core.models import Dataset, Strategy
from packages.core.run_config import BackendKind, RunConfig, load_config_file, merge_config
from packages.core.settings import settings

logger = logging.getLogger("runner")

EXIT_OK = 0
EXIT_PARTIAL = 1
EXIT_CONFIG = 2

# Bad input or invocation rather than a failed example.
USAGE_ERRORS = (
    ConfigError,
    SampleBoundsError,
    CorpusParseError,
    CorpusSchemaError,
    RunDigestMismatchError,
    RunMismatchError,
    PreconditionError,
)


def _configure_logging(level: Optional[str]) -> None:
    logging.basicConfig(
        level=getattr(logging, (level or settings.log_level).upper(), logging.INFO),
        format="%(asctime)s | %(levelname)-8s | %(name)s | %(message)s",
        datefmt="%Y-%m-%d %H:%M:%S",
    )


def _is_bool(info: FieldInfo) -> bool:
    return info.annotation is bool or bool in get_args(info.annotation)


def add_config_flags(parser: argparse.ArgumentParser) -> None:
    """One flag per ``RunConfig`` field; ``--sample-n`` and ``--sample_n`` both work."""
    group = parser.add_argument_group("run config (overrides --config)")
    for name, info in RunConfig.model_fields.items():
        flags = [f"--{name.replace('_', '-')}"]
        if "_" in name:
            flags.append(f"--{name}")
        help_text = f"default: {info.default}" if info.default is not None else None
        if _is_bool(info):
            group.add_argument(*flags, dest=name, action=argparse.BooleanOptionalAction, default=None, help=help_text)
        else:
            group.add_argument(*flags, dest=name, default=None, help=help_text)


def config_overrides(args: argparse.Namespace) -> dict[str, Any]:
    return {name: getattr(args, name, None) for name in RunConfig.model_fields}


def build_run_config(args: argparse.Namespace) -> RunConfig:
    file_values = load_config_file(args.config) if args.config else {}
    overrides = config_overrides(args)
    backend = overrides.get("backend") or file_values.get("backend") or BackendKind.HTTP.value
    if backend == BackendKind.HTTP.value and not (overrides.get("model") or file_values.get("model")):
        # Pin the model into the config so it is part of the run digest.
        overrides["model"] = settings.llm_model
    return merge_config(file_values, overrides)


def parse_args(argv: Optional[Sequence[str]] = None) -> argparse.Namespace:
    parser = argparse.ArgumentParser(prog="runner", description="Multi-hop QA experiment runner")
    parser.add_argument(
        "--log-level",
        default=None,
        choices=["DEBUG", "INFO", "WARNING", "ERROR", "CRITICAL"],
        help="Logging verbosity (default: LOG_LEVEL from the environment)",
    )
    sub = parser.add_subparsers(dest="verb", required=True)

    run = sub.add_parser("run", help="Run one strategy over a sampled corpus")
    run.add_argument("--config", help="Flat key-value config file (JSON object or KEY=value lines)")
    add_config_flags(run)

    res = sub.add_parser("resume", help="Finish an interrupted run")
    res.add_argument("run_dir")

    cmp_ = sub.add_parser("compare", help="Compare two or more completed runs")
    cmp_.add_argument("run_dirs", nargs="+")
    cmp_.add_argument("--csv", help="Also write the comparison table to this CSV file")

    ev = sub.add_parser("eval", help="Score an external predictions file")
    ev.add_argument("--dataset-path", required=True)
    ev.add_argument("--dataset", choices=[d.value for d in Dataset], default=Dataset.HOTPOTQA.value)
    ev.add_argument("--predictions", required=True, help='JSON object {"<id>": "<prediction>"}')
    ev.add_argument("--strategy", choices=[s.value for s in Strategy], default=Strategy.VANILLA.value,
                    help="Label stored on the scored records")
    ev.add_argument("--yes-no-special-case", action=argparse.BooleanOptionalAction, default=True)

    dump = sub.add_parser("dump-tree", help="Print the stored reasoning tree of one example")
    dump.add_argument("example_id")
    dump.add_argument("--run-dir", required=True)

    return parser.parse_args(argv)


def _print_report(report) -> None:
    sys.stdout.write(render_report_table(report))


def dispatch(args: argparse.Namespace) -> int:
    if args.verb == "run":
        config = build_run_config(args)
        result = asyncio.run(run_batch(config))
        _print_report(result.report)
        sys.stdout.write(f"run directory: {result.run_dir}\n")
        return result.exit_code

    if args.verb == "resume":
        result = asyncio.run(resume(args.run_dir))
        _print_report(result.report)
        return result.exit_code

    if args.verb == "compare":
        frame = compare(args.run_dirs)
        sys.stdout.write(render_comparison(frame))
        if args.csv:
            frame.to_csv(args.csv, index=False, lineterminator="\n")
        return EXIT_OK

    if args.verb == "eval":
        report, _ = eval_predictions(
            args.dataset_path,
            Dataset(args.dataset),
            args.predictions,
            strategy=Strategy(args.strategy),
            yes_no_special_case=args.yes_no_special_case,
        )
        sys.stdout.write(render_report_table(report))
        return EXIT_OK

    if args.verb == "dump-tree":
        sys.stdout.write(dump_tree(args.run_dir, args.example_id))
        return EXIT_OK

    raise ValueError(f"unknown verb {args.verb!r}")


def main(argv: Optional[Sequence[str]] = None) -> int:
    args = parse_args(argv)
    _configure_logging(args.log_level)
    try:
        return dispatch(args)
    except USAGE_ERRORS as e:
        logger.error(str(e))
        return EXIT_CONFIG
    except StocTotError as e:
        logger.error(f"Run failed: {e}")
        return EXIT_PARTIAL


if __name__ == "__main__":
    sys.exit(main())
