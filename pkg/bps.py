"""
CLI for running Bouncy Particle Sampler experiments from JSON configurations.
"""
import argparse
import logging
import os
import sys
from typing import List, Optional

from pydantic import ValidationError

from src.core.config import app_config, app_settings
from src.core.exceptions import InvalidConfigError
from src.data.experiment_models import ExperimentConfig
from src.repositories.json_result_repository import JsonResultRepository
from src.services.experiment_runner import ExperimentRunner
from src.utils.logging_config import setup_logging


logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_FAILED = 1
EXIT_INVALID_CONFIG = 2


class ExperimentCLI:
    """CLI for validating and running experiment configurations."""

    def __init__(self):
        self.repository = JsonResultRepository()
        self.runner = ExperimentRunner(repository=self.repository)

    def validate(self, config_path: str) -> int:
        """Check a configuration and print one ``path:line: problem`` line per problem."""
        problems = self.repository.validate_config(config_path)
        for problem in problems:
            print(problem, file=sys.stderr)
        if problems:
            return EXIT_INVALID_CONFIG
        logger.info(f"{config_path} is valid")
        return EXIT_OK

    def run(self, config_path: str, overrides: dict) -> int:
        """Load, override, re-validate and run one configuration."""
        try:
            config = self.repository.load_config(config_path)
        except InvalidConfigError as e:
            for problem in e.problems:
                print(problem, file=sys.stderr)
            return EXIT_INVALID_CONFIG

        if overrides:
            logger.info(f"Command-line overrides: {overrides}")
            try:
                config = ExperimentConfig.model_validate({**config.model_dump(), **overrides})
            except ValidationError as e:
                for error in e.errors():
                    field = ".".join(str(part) for part in error["loc"]) or "overrides"
                    print(f"{config_path}:command line: {field}: {error['msg']}", file=sys.stderr)
                return EXIT_INVALID_CONFIG

        name = os.path.splitext(os.path.basename(config_path))[0]
        try:
            summary = self.runner.run(config, name)
        except Exception as e:
            logger.error(f"Experiment failed: {e}")
            return EXIT_FAILED
        logger.info(f"Metrics: {summary.metrics}")
        if summary.failed_replicates:
            logger.warning(f"{summary.failed_replicates} replicate run(s) recorded an error")
        return EXIT_OK


def _overrides(args: argparse.Namespace) -> dict:
    found = {}
    for flag, field in (("seed", "seed"), ("replicates", "replicates"), ("out_dir", "output_dir"), ("mesh", "mesh")):
        value = getattr(args, flag, None)
        if value is not None:
            found[field] = value
    return found


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        description="Run Bouncy Particle Sampler experiments."
    )
    parser.add_argument(
        "--log_level",
        type=str,
        default=app_config.LOG_LEVEL.upper(),
        choices=["DEBUG", "INFO", "WARNING", "ERROR", "CRITICAL"],
        help=f"Logging level (default: {app_config.LOG_LEVEL.upper()}, from BPS_LOG_LEVEL)"
    )
    parser.add_argument(
        "--log_file",
        type=str,
        default=app_settings.LOG_FILE,
        help="Also write the log to this file"
    )
    subparsers = parser.add_subparsers(dest="command")

    run_parser = subparsers.add_parser("run", help="Run an experiment configuration")
    run_parser.add_argument("config", type=str, help="Path to the JSON experiment configuration")
    run_parser.add_argument("--seed", type=int, help="Override the root seed")
    run_parser.add_argument("--replicates", type=int, help="Override the number of replicates")
    run_parser.add_argument(
        "--out-dir",
        dest="out_dir",
        type=str,
        help=f"Override the output directory (default from config, else {app_config.OUTPUT_DIR})"
    )
    run_parser.add_argument("--mesh", type=float, help="Write the path discretized with this step")

    validate_parser = subparsers.add_parser("validate", help="Check a configuration without running it")
    validate_parser.add_argument("config", type=str, help="Path to the JSON experiment configuration")
    return parser


def main(argv: Optional[List[str]] = None) -> int:
    """Main CLI entry point; returns the process exit status."""
    parser = build_parser()
    args = parser.parse_args(argv)

    # Setup logging
    setup_logging(level=args.log_level, log_file=args.log_file)

    cli = ExperimentCLI()

    try:
        if args.command == "run":
            return cli.run(args.config, _overrides(args))
        if args.command == "validate":
            return cli.validate(args.config)
        parser.print_help()
        logger.error("Please provide a command: run or validate")
        return EXIT_FAILED
    except Exception as e:
        logger.error(f"Operation failed: {e}")
        return EXIT_FAILED


if __name__ == "__main__":
    sys.exit(main())
