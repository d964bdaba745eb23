"""Command-line harness: bench run | trace | pne | summarize."""
import sys
import json
import logging
import argparse
from typing import List, Optional

from pydantic import ValidationError

from analysis.game_analysis import (
    GAME_FUNCTIONS, make_game_objective, trace_best_response_dynamics, verify_pne,
)
from dcc_framework.exceptions import OptimizationError, RejectedInputError
from dcc_framework.experiment import run_experiment
from dcc_framework.utils import load_config_file, load_settings, setup_logging
from problems.objective import make_objective
from problems.partitioning import parse_partition, singletons
from storage.models import ExperimentConfig
from storage.record_store import RecordStore, parse_csv, summarize, summary_frame, trace_frame

logger = logging.getLogger("bench")

EXIT_OK = 0
EXIT_FAILURE = 1
EXIT_USAGE = 2


def parse_vector(text: str) -> List[float]:
    """Parse ``"5,5"`` into floats."""
    try:
        return [float(v) for v in text.split(",")]
    except ValueError as e:
        raise RejectedInputError(f"malformed vector {text!r}") from e


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="bench",
        description="Cooperative-coevolution benchmark and game-analysis harness",
    )
    parser.add_argument("--env-file", default=None, help="dotenv file with BENCH_* settings")
    parser.add_argument("--log-level", default=None, help="overrides BENCH_LOG_LEVEL")
    commands = parser.add_subparsers(dest="command", required=True)

    run = commands.add_parser("run", help="run an experiment config (JSON or TOML)")
    run.add_argument("--config", required=True, help="experiment configuration file")
    run.add_argument("--output", default=None, help="directory for the record CSVs")

    trace = commands.add_parser("trace", help="alternating best-response dynamics of a 2-d game")
    trace.add_argument("--function", required=True, help=f"one of {', '.join(GAME_FUNCTIONS)}")
    trace.add_argument("--start", required=True, help="start point, e.g. 5,5")
    trace.add_argument("--max-cycles", type=int, default=10_000)
    trace.add_argument("--record-every", type=int, default=1)
    trace.add_argument("--output", default=None, help="CSV file (stdout when omitted)")

    pne = commands.add_parser("pne", help="verify a pure Nash equilibrium")
    pne.add_argument("--function", required=True, help="game or benchmark function id")
    pne.add_argument("--point", required=True, help="point, e.g. 1,1 (use --point=-1,2 for negatives)")
    pne.add_argument("--partition", default=None, help='partition literal, e.g. "[[1],[2]]"')
    pne.add_argument("--tolerance", type=float, default=1e-8)

    summary = commands.add_parser("summarize", help="summary table of record CSVs")
    summary.add_argument("csv", nargs="+", help="record files")
    summary.add_argument("--target", type=float, default=1e-10)
    summary.add_argument("--output", default=None, help="CSV file (stdout when omitted)")
    return parser


def _objective_for(function_id: str, dimension: int):
    if function_id in GAME_FUNCTIONS:
        return make_game_objective(function_id)
    return make_objective(function_id, dimension)


def cmd_run(args, settings) -> int:
    config = ExperimentConfig(**load_config_file(args.config))
    store = RecordStore(args.output or config.output_path or settings.output_dir)
    records = run_experiment(config, settings, store)
    print(summary_frame(summarize(records, config.fitness_target)).to_csv(index=False), end="")
    return EXIT_OK


def cmd_trace(args, settings) -> int:
    obj = _objective_for(args.function, 2)
    start = parse_vector(args.start)
    if len(start) != 2:
        raise RejectedInputError("--start needs two coordinates")
    trace = trace_best_response_dynamics(obj, singletons(2), start, args.max_cycles,
                                         record_every=args.record_every)
    frame = trace_frame(trace, obj)
    if args.output:
        frame.to_csv(args.output, index=False, float_format="%.17g")
        logger.info(f"wrote {len(frame)} rows to {args.output}")
    else:
        print(frame.to_csv(index=False, float_format="%.17g"), end="")
    return EXIT_OK


def cmd_pne(args, settings) -> int:
    point = parse_vector(args.point)
    obj = _objective_for(args.function, len(point))
    partition = (parse_partition(args.partition, obj.dimension) if args.partition
                 else singletons(obj.dimension))
    certificate = verify_pne(obj, partition, point, args.tolerance)
    print(json.dumps(certificate.model_dump(), indent=2))
    return EXIT_OK


def cmd_summarize(args, settings) -> int:
    records = [parse_csv(path) for path in args.csv]
    frame = summary_frame(summarize(records, args.target))
    if args.output:
        frame.to_csv(args.output, index=False)
    else:
        print(frame.to_csv(index=False), end="")
    return EXIT_OK


COMMANDS = {
    "run": cmd_run,
    "trace": cmd_trace,
    "pne": cmd_pne,
    "summarize": cmd_summarize,
}


def main(argv: Optional[List[str]] = None) -> int:
    """Entry point; returns the process exit code."""
    parser = build_parser()
    args = parser.parse_args(argv)
    settings = load_settings(args.env_file)
    setup_logging(args.log_level or settings.log_level, settings.log_file)

    try:
        return COMMANDS[args.command](args, settings)
    except (RejectedInputError, ValidationError) as e:
        print(f"bench {args.command}: error: {e}", file=sys.stderr)
        return EXIT_USAGE
    except OptimizationError as e:
        logger.error(f"{args.command} failed: {e}")
        print(f"bench {args.command}: failed: {e}", file=sys.stderr)
        return EXIT_FAILURE


if __name__ == "__main__":
    sys.exit(main())
