"""Shared plumbing of the detection management commands"""

from __future__ import annotations

import datetime as dt
import sys
from enum import Enum, IntEnum
from functools import partial
from typing import Any, NoReturn

from django.core.management.base import BaseCommand, CommandError, CommandParser

from detection.run_config import RunConfig
from firstdetect import InvalidParameter, InversionUnstable, NumericalFailure


class LogCat(Enum):
    """Log categories for log message prefixes
    - `INFO`    general information
    - `WARN`    warnings for potential problems, e.g. censored trajectories
    - `ERROR`   an error occurred
    - `BEGIN`   start of a computation
    - `DONE`    a computation finished
    - `PASS`    an acceptance or consistency check succeeded
    - `FAIL`    an acceptance or consistency check failed
    - `WRITE`   output was written
    """

    INFO = "INFO"
    WARN = "WARN"
    ERROR = "ERROR"
    BEGIN = "BEGIN"
    DONE = "DONE"
    PASS = "PASS"
    FAIL = "FAIL"
    WRITE = "WRITE"


class ExitCode(IntEnum):
    OK = 0
    USAGE = 1
    NUMERICAL = 2
    ACCEPTANCE = 3


def _usage_error(parser: CommandParser, message: str) -> NoReturn:
    if parser.called_from_command_line:
        parser.print_usage(sys.stderr)
        parser.exit(ExitCode.USAGE, f"{parser.prog}: error: {message}\n")
    raise CommandError(f"Error: {message}", returncode=ExitCode.USAGE)


def add_run_arguments(parser: CommandParser) -> None:
    """Flags every command understands. Defaults live in RunConfig so that
    values from --config are only overridden by flags actually given."""
    parser.add_argument("--config", type=str, help="JSON file with default values for any flag")
    parser.add_argument(
        "--model",
        type=str,
        help="'jc' for a Jaynes-Cummings sector or a path to a custom Hamiltonian JSON file",
    )
    parser.add_argument("--scheme", type=int, choices=[1, 2], help="Detection scheme")
    parser.add_argument(
        "--protocol",
        type=str,
        help="Waiting times: 'exponential [r]', 'gamma K THETA' or 'lomax MU TAU0'",
    )
    parser.add_argument("--r", type=float, help="Poissonian measurement rate")
    parser.add_argument("--g", type=float, help="JC atom-cavity coupling")
    parser.add_argument("--n", type=int, help="JC excitation index")
    parser.add_argument("--omega-c", dest="omega_c", type=float, help="JC cavity frequency")
    parser.add_argument("--tmax", type=float, help="Largest time of the default time grid")
    parser.add_argument(
        "--grid", type=str, help="START:STOP:COUNT or log:START:STOP:COUNT"
    )
    parser.add_argument("--trajectories", type=int, help="Monte Carlo trajectory count")
    parser.add_argument("--seed", type=int, help="64-bit random seed")
    parser.add_argument("--workers", type=int, help="Monte Carlo worker processes")
    parser.add_argument("--bins", type=int, help="Histogram bins over [0, cutoff]")
    parser.add_argument("--cutoff", type=float, help="Monte Carlo censoring horizon")
    parser.add_argument("--out", type=str, help="Output file, stdout when omitted")
    parser.add_argument("--format", type=str, choices=["csv", "json"], help="Output format")


class DetectionCommand(BaseCommand):
    """Common flags, timestamped logging and the exit-code contract

    Exit codes: 0 success, 1 usage error, 2 numerical failure, 3 failed
    acceptance check. Subclasses implement `run`.
    """

    def create_parser(self, prog_name: str, subcommand: str, **kwargs: Any) -> CommandParser:
        parser = super().create_parser(prog_name, subcommand, **kwargs)
        parser.error = partial(_usage_error, parser)  # type: ignore[method-assign]
        return parser

    def add_arguments(self, parser: CommandParser) -> None:
        add_run_arguments(parser)
        self.add_command_arguments(parser)

    def add_command_arguments(self, parser: CommandParser) -> None:
        pass

    def log(self, msg: str, category: LogCat) -> None:
        if self.verbosity < 1:
            return
        t = dt.datetime.now().strftime("%Y-%m-%d %H:%M:%S.%f")[:-3]
        match category:
            case LogCat.WARN:
                style = self.style.WARNING
            case LogCat.DONE | LogCat.PASS | LogCat.WRITE:
                style = self.style.SUCCESS
            case LogCat.ERROR | LogCat.FAIL:
                style = self.style.ERROR
            case _:
                style = lambda x: x  # noqa: E731

        full_msg = f"{t} {category.value:<10} {style(msg)}"
        # progress must not mix with data written to stdout
        self.log_stream.write(full_msg, style_func=lambda x: x)

    def handle(self, *args: Any, **options: Any) -> None:
        self.verbosity = int(options.get("verbosity", 1))
        self.log_stream = self.stderr
        try:
            cfg = RunConfig.from_options(options)
            if cfg.out is not None:
                self.log_stream = self.stdout
            self.run(cfg, options)
        except InversionUnstable as exc:
            raise CommandError(
                f"InversionUnstable: {exc} (failing t: {exc.times})",
                returncode=ExitCode.NUMERICAL,
            ) from exc
        except NumericalFailure as exc:
            raise CommandError(
                f"{type(exc).__name__}: {exc}", returncode=ExitCode.NUMERICAL
            ) from exc
        except InvalidParameter as exc:
            raise CommandError(f"{type(exc).__name__}: {exc}", returncode=ExitCode.USAGE) from exc
        except KeyboardInterrupt as exc:
            raise CommandError("Keyboard interrupt...computation stopped") from exc

    def run(self, cfg: RunConfig, options: dict[str, Any]) -> None:
        raise NotImplementedError
