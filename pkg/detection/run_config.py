"""Run configuration shared by every detection command.

Values are resolved in three layers: a JSON file given with `--config`,
explicit command-line flags on top of it, and finally the QRESET_SEED and
QRESET_WORKERS settings on top of both.
"""

from __future__ import annotations

import json
from pathlib import Path
from typing import Any

import numpy as np
import regex
from django.conf import settings

from firstdetect import InvalidParameter
from firstdetect import jaynes_cummings as jc
from firstdetect.laplace import TalbotConfig
from firstdetect.qcore import (
    DetectionScheme,
    Exponential,
    Gamma,
    Lomax,
    TwoLevelHamiltonian,
    WaitingTimeDistribution,
    make_hamiltonian,
    swap_basis,
)

NUMBER = r"[-+]?(?:\d+\.?\d*|\.\d+)(?:[eE][-+]?\d+)?"
PROTOCOL_PATTERN = regex.compile(
    rf"^\s*(?P<name>exponential|gamma|lomax)(?:\s+(?P<args>{NUMBER}(?:\s+{NUMBER})*))?\s*$",
    regex.IGNORECASE,
)
GRID_PATTERN = regex.compile(
    rf"^\s*(?:(?P<log>log):)?(?P<start>{NUMBER}):(?P<stop>{NUMBER}):(?P<count>\d+)\s*$",
    regex.IGNORECASE,
)
# (min, max) number of arguments after the protocol name
PROTOCOL_ARITY = {"exponential": (0, 1), "gamma": (2, 2), "lomax": (2, 2)}
FORMATS = ("csv", "json")

DEFAULTS: dict[str, Any] = {
    "model": "jc",
    "scheme": 1,
    "protocol": None,
    "r": 1.0,
    "g": 0.1,
    "n": 37,
    "omega_c": 1.0,
    "tmax": None,
    "grid": None,
    "trajectories": 100_000,
    "seed": 0,
    "workers": 1,
    "out": None,
    "format": "csv",
    "bins": 400,
    "cutoff": None,
}


def parse_protocol(text: str, rate: float) -> WaitingTimeDistribution:
    """'exponential [r]', 'gamma K THETA' or 'lomax MU TAU0'

    A bare 'exponential' takes its rate from `rate`.
    """
    match = PROTOCOL_PATTERN.match(text)
    if match is None:
        raise InvalidParameter(
            f"Unrecognized protocol {text!r}; expected 'exponential [r]', "
            "'gamma K THETA' or 'lomax MU TAU0'"
        )
    name = match["name"].lower()
    args = [float(v) for v in (match["args"] or "").split()]
    lo, hi = PROTOCOL_ARITY[name]
    if not lo <= len(args) <= hi:
        raise InvalidParameter(f"Protocol {name!r} takes {lo}-{hi} numbers, got {len(args)}")
    match name:
        case "exponential":
            return Exponential(args[0] if args else rate)
        case "gamma":
            return Gamma(args[0], args[1])
        case _:
            return Lomax(args[0], args[1])


def parse_grid(spec: str | list[float]) -> np.ndarray:
    """'START:STOP:COUNT' (linear), 'log:START:STOP:COUNT' or an explicit list"""
    if isinstance(spec, (list, tuple)):
        grid = np.asarray(spec, dtype=np.float64)
    else:
        match = GRID_PATTERN.match(spec)
        if match is None:
            raise InvalidParameter(
                f"Unrecognized grid {spec!r}; expected START:STOP:COUNT or log:START:STOP:COUNT"
            )
        start, stop, count = float(match["start"]), float(match["stop"]), int(match["count"])
        if count < 1:
            raise InvalidParameter("Grid needs at least one point")
        if match["log"]:
            if start <= 0:
                raise InvalidParameter(f"Log grid must start above zero, got {start!r}")
            grid = np.geomspace(start, stop, count)
        else:
            grid = np.linspace(start, stop, count)
    if grid.ndim != 1 or grid.size == 0 or not np.all(np.isfinite(grid)):
        raise InvalidParameter(f"Grid must be a non-empty list of finite numbers: {spec!r}")
    if np.any(np.diff(grid) <= 0):
        raise InvalidParameter(f"Grid must be strictly increasing: {spec!r}")
    return grid


def load_hamiltonian(path: str | Path) -> TwoLevelHamiltonian:
    """Read a custom two-level Hamiltonian from JSON

    Format: {"entries": [[[re, im], [re, im]], [[re, im], [re, im]]],
    "initial": "plus" | "minus"}. The "initial" tag names the basis vector
    the system starts in; "minus" swaps the basis so it becomes index 0.
    """
    try:
        data = json.loads(Path(path).read_text(encoding="utf-8"))
    except FileNotFoundError as exc:
        raise InvalidParameter(f"Model {str(path)!r} is neither 'jc' nor an existing file") from exc
    except json.JSONDecodeError as exc:
        raise InvalidParameter(f"Hamiltonian file {str(path)!r} is not valid JSON: {exc}") from exc

    entries = data.get("entries") if isinstance(data, dict) else None
    try:
        matrix = [[complex(float(re), float(im)) for re, im in row] for row in entries]
    except (TypeError, ValueError) as exc:
        raise InvalidParameter(
            f"Hamiltonian file {str(path)!r} needs 'entries' as 2×2 [re, im] pairs"
        ) from exc
    if len(matrix) != 2 or any(len(row) != 2 for row in matrix):
        raise InvalidParameter(f"Hamiltonian in {str(path)!r} must be 2×2")
    h = make_hamiltonian(matrix)
    match data.get("initial", "plus"):
        case "plus":
            return h
        case "minus":
            return swap_basis(h)
        case other:
            raise InvalidParameter(f"Initial-state tag must be 'plus' or 'minus', got {other!r}")


def read_config_file(path: str | Path) -> dict[str, Any]:
    try:
        data = json.loads(Path(path).read_text(encoding="utf-8"))
    except FileNotFoundError as exc:
        raise InvalidParameter(f"Config file {str(path)!r} not found") from exc
    except json.JSONDecodeError as exc:
        raise InvalidParameter(f"Config file {str(path)!r} is not valid JSON: {exc}") from exc
    if not isinstance(data, dict):
        raise InvalidParameter(f"Config file {str(path)!r} must hold a JSON object")
    values = {key.replace("-", "_"): value for key, value in data.items()}
    unknown = sorted(set(values) - set(DEFAULTS))
    if unknown:
        raise InvalidParameter(f"Unknown config keys: {', '.join(unknown)}")
    return values


def _positive(name: str, value: Any) -> float:
    number = float(value)
    if not number > 0 or not np.isfinite(number):
        raise InvalidParameter(f"{name} must be positive, got {value!r}")
    return number


class RunConfig:
    """Resolved inputs of one command invocation

    Properties:
    - model (str): "jc" or a path to a custom Hamiltonian file
    - scheme (DetectionScheme)
    - protocol (WaitingTimeDistribution)
    - r (float): Poisson rate, taken from an exponential protocol when given
    - sector (JcSector | None): set for the JC model
    - hamiltonian (TwoLevelHamiltonian)
    - tmax (float | None), grid (ndarray | None)
    - trajectories, seed, workers, bins (int)
    - cutoff (float | None): Monte Carlo censoring horizon
    - out (str | None): output path, None for stdout
    - format (str): "csv" or "json"
    """

    def __init__(self, values: dict[str, Any]):
        self.values = dict(values)
        self.model = str(values["model"])
        self.scheme = DetectionScheme.parse(values["scheme"])
        self.r = _positive("r", values["r"])
        self.protocol = (
            parse_protocol(values["protocol"], self.r) if values["protocol"] else Exponential(self.r)
        )
        if isinstance(self.protocol, Exponential):
            self.r = self.protocol.rate

        if self.model.lower() == "jc":
            self.sector: jc.JcSector | None = jc.JcSector(
                float(values["g"]), int(values["n"]), float(values["omega_c"]), self.r
            )
            self.hamiltonian = self.sector.hamiltonian()
        else:
            self.sector = None
            self.hamiltonian = load_hamiltonian(self.model)

        self.tmax = _positive("tmax", values["tmax"]) if values["tmax"] is not None else None
        self.grid = parse_grid(values["grid"]) if values["grid"] is not None else None
        self.trajectories = int(values["trajectories"])
        if self.trajectories < 1:
            raise InvalidParameter(f"Need at least one trajectory, got {self.trajectories}")
        self.seed = int(values["seed"])
        self.workers = int(values["workers"])
        if self.workers < 1:
            raise InvalidParameter(f"Worker count must be positive, got {self.workers}")
        self.bins = int(values["bins"])
        self.cutoff = _positive("cutoff", values["cutoff"]) if values["cutoff"] is not None else None
        self.out = values["out"] or None
        self.format = str(values["format"]).lower()
        if self.format not in FORMATS:
            raise InvalidParameter(f"Output format must be one of {FORMATS}, got {self.format!r}")

    @classmethod
    def from_options(cls, options: dict[str, Any]) -> RunConfig:
        values = dict(DEFAULTS)
        if options.get("config"):
            values.update(read_config_file(options["config"]))
        for key in DEFAULTS:
            if options.get(key) is not None:
                values[key] = options[key]
        if settings.QRESET_SEED is not None:
            values["seed"] = settings.QRESET_SEED
        if settings.QRESET_WORKERS is not None:
            values["workers"] = settings.QRESET_WORKERS
        return cls(values)

    def replace(self, **changes: Any) -> RunConfig:
        return RunConfig({**self.values, **changes})

    @property
    def is_poisson(self) -> bool:
        return isinstance(self.protocol, Exponential)

    @property
    def closed_form(self) -> bool:
        """JC model with Poissonian measurements"""
        return self.sector is not None and self.is_poisson

    def talbot(self) -> TalbotConfig:
        return TalbotConfig(nodes=settings.QRESET_TALBOT_NODES)

    def describe(self) -> dict[str, Any]:
        out: dict[str, Any] = {
            "model": self.model,
            "scheme": self.scheme.value,
            "protocol": self.protocol.name,
            "protocol_params": self.protocol.params(),
        }
        if self.sector is not None:
            out.update(g=self.sector.g, n=self.sector.n, omega_c=self.sector.omega_c)
        if self.is_poisson:
            out["r"] = self.r
        return out

    def __repr__(self) -> str:
        return f"RunConfig(model={self.model!r}, scheme={self.scheme.value}, protocol={self.protocol!r})"
