from typing import Any

from detection import output, reports
from detection.cli_utils import DetectionCommand, LogCat
from detection.run_config import RunConfig


class Command(DetectionCommand):
    """Mean, variance and maximal time scale against the measurement rate"""

    help = (
        "Sweep the Poissonian rate over --grid (default log:0.01:100:81) and tabulate "
        "r, mean, variance, t_m with the argmin rows marked"
    )

    def run(self, cfg: RunConfig, options: dict[str, Any]) -> None:
        self.log(f"Sweeping r for {cfg!r}", LogCat.BEGIN)
        frame, summary = reports.mean_sweep_table(cfg)
        if summary["mean_min_interior"]:
            self.log(
                f"Mean is minimal at r = {summary['r_mean_min']:.9g} "
                f"(t̄ = {summary['mean_min']:.9g})",
                LogCat.DONE,
            )
        else:
            self.log("Mean has no interior minimum on the grid", LogCat.WARN)
        path = output.emit(output.render(frame, summary, cfg.format), cfg.out, self.stdout)
        if path is not None:
            self.log(f"{len(frame)} rows written to {path}", LogCat.WRITE)
