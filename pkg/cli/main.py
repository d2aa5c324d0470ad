from __future__ import annotations

import argparse
import logging
import sys
from typing import Any, Dict, List, Optional

import scipy.fft
import yaml

from cli.config import RuntimeConfig, get_runtime_config
from cli.handlers import handle_list, handle_run, handle_validate, output_directory
from cli.outputs import OutputWriter
from cli.schema import ScenarioConfig, load_config
from lattice.errors import ConfigurationError, GridError, PhysicsValidationError


logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_PHYSICS = 3
EXIT_RUNTIME = 4


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="bohm-density",
        description="Bohmian and W-Bohmian guidance with statistical, reduced, combined, conditional and fundamental density matrices",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="run a scenario config and write its outputs")
    run.add_argument("config", help="scenario YAML document")
    validate = sub.add_parser("validate", help="check a config and estimate its cost without running it")
    validate.add_argument("config", help="scenario YAML document")
    sub.add_parser("list-scenarios", help="list the registered scenario builders")

    for command in (run, validate):
        command.add_argument("--output-dir", help="directory for outputs (overrides config and BOHM_OUTPUT_DIR)")
        command.add_argument("--threads", type=int, help="worker threads for FFTs and ensembles")
        command.add_argument("--seed", type=int, help="override the config seed")
        command.add_argument("--quiet", action="store_true", help="warnings only, no progress bars")
    return parser


def _exit_code(exc: BaseException) -> int:
    if isinstance(exc, (ConfigurationError, GridError)):
        return EXIT_CONFIG
    if isinstance(exc, PhysicsValidationError):
        return EXIT_PHYSICS
    return EXIT_RUNTIME


def error_record(exc: BaseException) -> Dict[str, Any]:
    code = _exit_code(exc)
    record = {
        "status": "error",
        "exit_code": code,
        "error_type": type(exc).__name__,
        "message": str(exc),
        "field": getattr(exc, "field", None),
    }
    if isinstance(exc, PhysicsValidationError) and exc.time is not None:
        record["time"] = exc.time
    return record


def _load(args: argparse.Namespace) -> ScenarioConfig:
    config = load_config(args.config)
    if args.seed is not None:
        if args.seed < 0:
            raise ConfigurationError("seed must be non-negative", field="seed")
        config = config.model_copy(update={"seed": args.seed})
    return config


def _emit(document: Any) -> None:
    sys.stdout.write(yaml.safe_dump(document, sort_keys=False))


def _execute(args: argparse.Namespace, runtime: RuntimeConfig, threads: int) -> int:
    if args.command == "list-scenarios":
        for entry in handle_list():
            sys.stdout.write(f"{entry['name']:<22} {entry['description']}\n")
        return EXIT_OK

    config: Optional[ScenarioConfig] = None
    try:
        config = _load(args)
        with scipy.fft.set_workers(threads):
            if args.command == "validate":
                _emit(handle_validate(config, threads))
            else:
                directory = output_directory(config, args.output_dir, runtime.output_dir)
                _emit(handle_run(config, directory, threads, progress=not args.quiet))
        return EXIT_OK
    except Exception as exc:
        record = error_record(exc)
        if record["exit_code"] == EXIT_RUNTIME:
            logger.exception("Run failed")
        else:
            logger.error("%s: %s", record["error_type"], record["message"])
        if args.command == "run":
            directory = output_directory(config, args.output_dir, runtime.output_dir)
            try:
                OutputWriter(directory).error(record)
            except OSError as io_error:
                logger.error("Could not write error record to %s: %s", directory, io_error)
        _emit(record)
        return record["exit_code"]


def main(argv: Optional[List[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    runtime = get_runtime_config()
    quiet = getattr(args, "quiet", False)
    logging.basicConfig(
        level=logging.WARNING if quiet else getattr(logging, runtime.log_level, logging.INFO),
        format="%(asctime)s - %(name)s - %(levelname)s - %(message)s",
    )
    threads = getattr(args, "threads", None)
    threads = runtime.threads if threads is None else threads
    if threads < 1:
        logger.error("--threads must be positive")
        return EXIT_CONFIG
    return _execute(args, runtime, threads)


if __name__ == "__main__":
    sys.exit(main())
