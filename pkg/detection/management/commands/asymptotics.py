from typing import Any

import pandas as pd

from detection import output, reports
from detection.cli_utils import DetectionCommand, LogCat
from detection.run_config import RunConfig


class Command(DetectionCommand):
    """Small-t and large-t laws of the first-detection density"""

    help = (
        "Report the small-t coefficient and order, the power-law tail of heavy-tailed "
        "protocols and t_m for Poissonian ones"
    )

    def run(self, cfg: RunConfig, options: dict[str, Any]) -> None:
        self.log(f"Asymptotic laws for {cfg!r}", LogCat.BEGIN)
        report = reports.asymptotics_report(cfg)
        if "tail_error" in report:
            self.log(report["tail_error"], LogCat.INFO)
        match cfg.format:
            case "json":
                text = output.dumps(report)
            case _:
                rows = sorted(output.jsonable(report).items())
                frame = pd.DataFrame(
                    {"key": [k for k, _ in rows], "value": [str(v) for _, v in rows]}
                )
                text = output.table_csv(frame)
        path = output.emit(text, cfg.out, self.stdout)
        if path is not None:
            self.log(f"Report written to {path}", LogCat.WRITE)
