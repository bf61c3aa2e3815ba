from typing import Any

from django.core.management.base import CommandError, CommandParser

from detection import output, reports
from detection.cli_utils import DetectionCommand, ExitCode, LogCat
from detection.run_config import RunConfig, parse_grid


class Command(DetectionCommand):
    """Monte Carlo ensemble of measurement trajectories"""

    help = (
        "Simulate first-detection trajectories, write the histogram and a summary JSON, "
        "and exit 3 when the mean is more than 4 standard errors off"
    )

    def add_command_arguments(self, parser: CommandParser) -> None:
        parser.add_argument(
            "--summary",
            type=str,
            default=None,
            help="Also write the summary as a JSON document to this path",
        )
        parser.add_argument(
            "--count-times",
            type=str,
            default=None,
            help="Comma-separated times at which measurement counts N(t) are sampled",
        )

    def run(self, cfg: RunConfig, options: dict[str, Any]) -> None:
        count_times: tuple[float, ...] = ()
        if options.get("count_times"):
            count_times = tuple(parse_grid([float(v) for v in options["count_times"].split(",")]))

        self.log(
            f"Simulating {cfg.trajectories} trajectories of {cfg!r} "
            f"(seed {cfg.seed}, {cfg.workers} workers)",
            LogCat.BEGIN,
        )
        frame, summary, failures = reports.simulation_report(cfg, count_times)
        for message in summary["warnings"]:
            self.log(message, LogCat.WARN)
        self.log(
            f"Mean {summary['mean']:.6g} ± {summary['mean_se']:.2g}, "
            f"censored fraction {summary['censored_fraction']:.3g}",
            LogCat.DONE,
        )

        path = output.emit(output.render(frame, summary, cfg.format), cfg.out, self.stdout)
        if path is not None:
            self.log(f"Histogram written to {path}", LogCat.WRITE)
        if options.get("summary"):
            summary_path = output.emit(output.dumps(summary), options["summary"], self.stdout)
            self.log(f"Summary written to {summary_path}", LogCat.WRITE)

        if failures:
            for failure in failures:
                self.log(failure, LogCat.FAIL)
            raise CommandError(
                f"{len(failures)} consistency check(s) failed", returncode=ExitCode.ACCEPTANCE
            )
