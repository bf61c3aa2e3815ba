"""Machine-readable writers.

CSV is comma separated with a header row, '.' decimals, '\\n' line endings
and round-trip float precision. JSON documents have sorted keys; non-finite
floats become null.
"""

from __future__ import annotations

import json
import math
from pathlib import Path
from typing import Any

import numpy as np
import pandas as pd
from django.core.management.base import OutputWrapper

FLOAT_FORMAT = "%.17g"
SUMMARY_PREFIX = "# "


def jsonable(value: Any) -> Any:
    match value:
        case dict():
            return {str(k): jsonable(v) for k, v in value.items()}
        case list() | tuple():
            return [jsonable(v) for v in value]
        case np.ndarray():
            return jsonable(value.tolist())
        case bool() | np.bool_():
            return bool(value)
        case int() | np.integer():
            return int(value)
        case float() | np.floating():
            number = float(value)
            return number if math.isfinite(number) else None
        case _:
            return value


def dumps(document: Any) -> str:
    return json.dumps(jsonable(document), sort_keys=True, indent=2) + "\n"


def table_csv(frame: pd.DataFrame) -> str:
    return frame.to_csv(index=False, lineterminator="\n", float_format=FLOAT_FORMAT)


def render(frame: pd.DataFrame, summary: dict[str, Any] | None, fmt: str) -> str:
    """Table plus summary as one document

    CSV carries the summary as a single trailing '# {json}' line.
    """
    match fmt:
        case "csv":
            text = table_csv(frame)
            if summary is not None:
                text += SUMMARY_PREFIX + json.dumps(jsonable(summary), sort_keys=True) + "\n"
            return text
        case "json":
            return dumps(
                {
                    "columns": list(frame.columns),
                    "rows": frame.to_dict(orient="records"),
                    "summary": summary,
                }
            )
        case _:
            raise ValueError(f"Unknown output format {fmt!r}")


def emit(text: str, out: str | None, stdout: OutputWrapper) -> Path | None:
    """Write to `out`, or to stdout when no path is given"""
    if out is None or out == "-":
        stdout.write(text, ending="")
        return None
    path = Path(out)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(text, encoding="utf-8", newline="\n")
    return path


def read_summary(text: str) -> dict[str, Any]:
    """Summary of a rendered CSV document"""
    last = text.rstrip("\n").rsplit("\n", 1)[-1]
    if not last.startswith(SUMMARY_PREFIX):
        raise ValueError("Document has no trailing summary line")
    return json.loads(last[len(SUMMARY_PREFIX) :])
