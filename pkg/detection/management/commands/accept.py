from typing import Any

import pandas as pd
from django.conf import settings
from django.core.management.base import CommandError, CommandParser

from detection import output
from detection.acceptance import CHECKS, AcceptanceContext, CheckResult
from detection.cli_utils import DetectionCommand, ExitCode, LogCat
from detection.run_config import RunConfig
from firstdetect import InvalidParameter


def parse_selection(text: str | None) -> list[int]:
    if not text:
        return sorted(CHECKS)
    try:
        chosen = sorted({int(v) for v in text.split(",") if v.strip()})
    except ValueError as exc:
        raise InvalidParameter(
            f"--only expects comma-separated criterion numbers, got {text!r}"
        ) from exc
    unknown = [c for c in chosen if c not in CHECKS]
    if unknown or not chosen:
        raise InvalidParameter(f"Unknown criteria {unknown}; choose from {sorted(CHECKS)}")
    return chosen


class Command(DetectionCommand):
    """Run the acceptance criteria and exit 3 when any of them fails"""

    help = "Check closed forms, optimizer, inversion and Monte Carlo against each other"

    def add_command_arguments(self, parser: CommandParser) -> None:
        parser.add_argument(
            "--mc-scale",
            type=float,
            default=1.0,
            help="Multiply every Monte Carlo trajectory count (floor 1000)",
        )
        parser.add_argument(
            "--only",
            type=str,
            default=None,
            help="Comma-separated criterion numbers to run, e.g. 1,2,5",
        )

    def run(self, cfg: RunConfig, options: dict[str, Any]) -> None:
        if not options["mc_scale"] > 0:
            raise InvalidParameter(f"--mc-scale must be positive, got {options['mc_scale']!r}")
        selection = parse_selection(options.get("only"))
        ctx = AcceptanceContext(
            seed=cfg.seed,
            workers=cfg.workers,
            scale=options["mc_scale"],
            block_size=settings.QRESET_BLOCK_SIZE,
        )

        results: list[CheckResult] = []
        for number in selection:
            self.log(f"Criterion {number}: {CHECKS[number].__name__}", LogCat.BEGIN)
            result = CHECKS[number](ctx)
            self.log(
                f"{result.number:>2} {result.title} {result.as_row()['details']}"
                if self.verbosity > 1
                else f"{result.number:>2} {result.title}",
                LogCat.PASS if result.passed else LogCat.FAIL,
            )
            results.append(result)

        frame = pd.DataFrame([r.as_row() for r in results])
        failed = [r.number for r in results if not r.passed]
        summary = {"passed": len(results) - len(failed), "failed": failed, "mc_scale": ctx.scale}
        path = output.emit(output.render(frame, summary, cfg.format), cfg.out, self.stdout)
        if path is not None:
            self.log(f"Results written to {path}", LogCat.WRITE)
        if failed:
            raise CommandError(f"Criteria {failed} failed", returncode=ExitCode.ACCEPTANCE)
        self.log(f"All {len(results)} criteria passed", LogCat.DONE)
