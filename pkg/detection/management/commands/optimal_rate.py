from typing import Any

from django.core.management.base import CommandParser

from detection import output, reports
from detection.cli_utils import DetectionCommand, LogCat
from detection.run_config import RunConfig


class Command(DetectionCommand):
    """Rates minimizing the mean, the variance and t_m"""

    help = "Locate the optimal Poissonian measurement rate numerically and, for JC, in closed form"

    def add_command_arguments(self, parser: CommandParser) -> None:
        parser.add_argument(
            "--tol", type=float, default=1e-10, help="Relative width of the final bracket"
        )

    def run(self, cfg: RunConfig, options: dict[str, Any]) -> None:
        self.log(f"Minimizing over r for {cfg!r}", LogCat.BEGIN)
        report = reports.optimal_rate_report(cfg, tol=options["tol"])
        self.log(
            f"r* = {report['r_star_numeric']:.12g}, t̄(r*) = {report['mean_min_numeric']:.12g}",
            LogCat.DONE,
        )
        path = output.emit(output.dumps(report), cfg.out, self.stdout)
        if path is not None:
            self.log(f"Report written to {path}", LogCat.WRITE)
