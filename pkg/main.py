"""
Main CLI Entry Point
Command-line interface for the Token Turing Machine library.
"""
import argparse
import logging
import os
import sys
from pathlib import Path

# Add project root to Python path
project_root = Path(__file__).parent
sys.path.insert(0, str(project_root))

from src import config  # noqa: E402

# Cap BLAS threads before numpy is imported
os.environ.setdefault("OMP_NUM_THREADS", str(config.TTM_THREADS))

import numpy as np  # noqa: E402

from src.errors import CheckpointError, ConfigError, TTMError  # noqa: E402
from src.experiment import ExperimentRunner  # noqa: E402
from src.run_config import load_run_config  # noqa: E402
from src.setup_logging import setup_logging  # noqa: E402
from src.tensor import set_default_dtype  # noqa: E402

EXIT_OK = 0
EXIT_FAILURE = 1
EXIT_BAD_INPUT = 2

COMMANDS = ["gen", "train", "eval", "gradcheck", "flops", "plot", "dump-memory"]


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(description="Token Turing Machine: training, evaluation and cost analysis")
    parser.add_argument(
        "command",
        choices=COMMANDS,
        help="Command to execute: gen (corpus), train, eval (checkpoint on corpus), gradcheck, "
             "flops (per-step cost report), plot (learning curve), dump-memory (state snapshot)"
    )
    parser.add_argument(
        "--config",
        type=str,
        action="append",
        default=None,
        help="Run config JSON (repeat for flops to compare several descriptors)"
    )
    parser.add_argument("--seed", type=int, default=None, help="Override train.seed")
    parser.add_argument("--out", type=str, default=None, help="Output directory (overrides io.output_dir)")
    parser.add_argument("--64bit", dest="use_64bit", action="store_true", help="Run in 64-bit precision")
    parser.add_argument("--checkpoint", type=str, help="Checkpoint directory (eval, dump-memory)")
    parser.add_argument("--corpus", type=str, help="Episode corpus .jsonl (eval, dump-memory)")
    parser.add_argument("--step", type=int, default=None, help="Steps consumed before the snapshot (dump-memory)")
    parser.add_argument("--episode", type=int, default=0, help="Corpus episode index (dump-memory)")
    parser.add_argument("--metrics", type=str, help="Metrics CSV (plot)")
    parser.add_argument("--all-variants", action="store_true",
                        help="gradcheck every summarizer x processor x write combination")
    parser.add_argument("--all-entries", action="store_true",
                        help="gradcheck every parameter entry instead of a per-tensor sample")
    parser.add_argument("--steps", type=str, default="1",
                        help="Comma-separated step indices for flops (default: 1)")
    parser.add_argument("--dump-weights", type=str, default=None,
                        help="Directory for read/write weight CSVs (eval)")
    parser.add_argument("--no-progress", action="store_true", help="Disable the training progress bar")
    parser.add_argument(
        "--log-level",
        type=str,
        choices=["DEBUG", "INFO", "WARNING", "ERROR"],
        default="INFO",
        help="Logging level (default: INFO)"
    )
    parser.add_argument(
        "--log-file",
        type=str,
        default=None,
        help="Log file path (default: logs/ttm_TIMESTAMP.log)"
    )
    return parser


def _require(value, flag: str, command: str):
    if value is None:
        raise ConfigError(f"{flag} is required for {command}")
    return value


def _existing(path: str, what: str) -> str:
    if not os.path.exists(path):
        raise FileNotFoundError(f"{what} not found: {path}")
    return path


def _parse_steps(text: str):
    try:
        steps = [int(part) for part in text.split(",") if part.strip()]
    except ValueError as e:
        raise ConfigError(f"--steps must be comma-separated integers, got {text!r}") from e
    if not steps:
        raise ConfigError("--steps is empty")
    return steps


def run(args, runner: ExperimentRunner) -> int:
    command = args.command

    if command in ("gen", "train", "gradcheck"):
        path = _require(args.config, "--config", command)[0]
        overrides = {"train.seed": args.seed} if args.seed is not None else None
        run_config = load_run_config(path, overrides)

        if command == "gen":
            corpus = runner.generate(run_config)
            print(f"Corpus written to {corpus}")
        elif command == "train":
            result = runner.train(run_config)
            print(f"Eval accuracy: {result.eval_accuracy:.4f}  (loss {result.eval_loss:.4f})")
            print(f"Checkpoint: {result.checkpoint}")
            print(f"Metrics: {result.metrics}")
        else:
            reports = runner.gradcheck(run_config, all_variants=args.all_variants, all_entries=args.all_entries)
            failed = [label for label, rep in reports.items() if not rep.passed]
            for label, rep in reports.items():
                status = "PASS" if rep.passed else "FAIL"
                print(f"{status}  {label:32s} max rel err {rep.max_rel_err:.3e}  ({rep.worst_param}) "
                      f"{rep.checked}/{rep.total} entries")
            if failed:
                print(f"Gradient check failed for {len(failed)} of {len(reports)} variants")
                return EXIT_FAILURE
            print(f"Gradient check passed for {len(reports)} variant(s)")

    elif command == "eval":
        checkpoint = _existing(_require(args.checkpoint, "--checkpoint", command), "Checkpoint")
        corpus = _existing(_require(args.corpus, "--corpus", command), "Corpus")
        metrics = runner.evaluate(checkpoint, corpus, dump_weights=args.dump_weights)
        print(f"Accuracy: {metrics['accuracy']:.4f}  Loss: {metrics['loss']:.4f}  ({metrics['count']} targets)")

    elif command == "flops":
        paths = _require(args.config, "--config", command)
        csv_path, _ = runner.flops(paths, _parse_steps(args.steps))
        print(Path(csv_path).read_text(encoding="utf-8"), end="")

    elif command == "plot":
        metrics = _existing(_require(args.metrics, "--metrics", command), "Metrics file")
        print(f"Plot written to {runner.plot(metrics)}")

    elif command == "dump-memory":
        checkpoint = _existing(_require(args.checkpoint, "--checkpoint", command), "Checkpoint")
        corpus = _existing(_require(args.corpus, "--corpus", command), "Corpus")
        step = _require(args.step, "--step", command)
        print(f"Snapshot written to {runner.dump_memory(checkpoint, corpus, step, args.episode)}")

    return EXIT_OK


def main(argv=None) -> int:
    """Main CLI entry point."""
    args = build_parser().parse_args(argv)

    # Set up logging
    log_level = getattr(logging, args.log_level)
    setup_logging(log_level=log_level, log_file=args.log_file)
    logger = logging.getLogger(__name__)
    logger.info(f"Starting TTM - Command: {args.command}")

    if args.use_64bit:
        set_default_dtype(np.float64)
    runner = ExperimentRunner(output_dir=args.out, show_progress=not args.no_progress)

    try:
        return run(args, runner)
    except (ConfigError, FileNotFoundError, CheckpointError) as e:
        logger.error(f"{args.command} failed: {e}", exc_info=True)
        print(f"Error: {e}")
        return EXIT_BAD_INPUT
    except (TTMError, ArithmeticError, ValueError, OSError) as e:
        logger.error(f"{args.command} failed: {e}", exc_info=True)
        print(f"Error: {e}")
        return EXIT_FAILURE
    finally:
        if args.use_64bit:
            set_default_dtype(np.float32)


if __name__ == "__main__":
    exit(main())
