from typing import Any

from django.core.management.base import CommandParser

from detection import output, reports
from detection.cli_utils import DetectionCommand, LogCat
from detection.run_config import RunConfig


class Command(DetectionCommand):
    """First-detection time density on a time grid"""

    help = "Tabulate the first-detection PDF F(t) as CSV columns t,pdf with a trailing summary"

    def add_command_arguments(self, parser: CommandParser) -> None:
        parser.add_argument(
            "--route",
            type=str,
            choices=[route.value for route in reports.PdfRoute],
            default=None,
            help="Force an evaluation route instead of the most exact one available",
        )

    def run(self, cfg: RunConfig, options: dict[str, Any]) -> None:
        route = reports.pick_route(cfg, options.get("route"))
        self.log(f"Evaluating F(t) for {cfg!r} via the {route.value} route", LogCat.BEGIN)
        frame, summary = reports.pdf_table(cfg, route)
        if summary["normalization"] is not None:
            self.log(f"∫F dt = {summary['normalization']:.12f}", LogCat.INFO)
        path = output.emit(output.render(frame, summary, cfg.format), cfg.out, self.stdout)
        if path is not None:
            self.log(f"{len(frame)} rows written to {path}", LogCat.WRITE)
