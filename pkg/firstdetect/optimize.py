"""Derivative-free scalar minimization over the measurement rate."""

from __future__ import annotations

import logging
import math
from typing import Callable

import numpy as np

from firstdetect import BracketFailure, BracketInvalid, MonotoneFunction

logger = logging.getLogger(__name__)

PHI_RATIO = 2 / (1 + math.sqrt(5))
MAX_EVALUATIONS = 200
MAX_DOUBLINGS = 60


class Bracket:
    """Three rates a < b < c with f(b) < min(f(a), f(c))"""

    def __init__(self, a: float, b: float, c: float, fa: float, fb: float, fc: float):
        if not (a < b < c):
            raise BracketInvalid(f"Bracket points are not ordered: {a!r}, {b!r}, {c!r}")
        if not fb < min(fa, fc):
            raise BracketInvalid(
                f"Middle value {fb!r} is not below the end values {fa!r}, {fc!r}"
            )
        self.a, self.b, self.c = a, b, c
        self.fa, self.fb, self.fc = fa, fb, fc

    @classmethod
    def from_function(cls, f: Callable[[float], float], a: float, b: float, c: float) -> Bracket:
        return cls(a, b, c, f(a), f(b), f(c))

    def __repr__(self) -> str:
        return f"Bracket({self.a!r}, {self.b!r}, {self.c!r})"


def minimize_scalar(
    f: Callable[[float], float], bracket: Bracket, tol: float = 1e-10
) -> tuple[float, float]:
    """Golden-section search inside a bracket until its width is below tol·|x|"""
    if tol < 1e-12:
        raise BracketInvalid(f"Tolerance {tol!r} is below the supported 1e-12")
    lo, hi = bracket.a, bracket.c
    x1 = hi - PHI_RATIO * (hi - lo)
    x2 = lo + PHI_RATIO * (hi - lo)
    f1 = f(x1)
    f2 = f(x2)
    evaluations = 2
    while hi - lo > tol * abs(0.5 * (hi + lo)) and evaluations < MAX_EVALUATIONS - 1:
        if f2 > f1:
            hi = x2
            x2, f2 = x1, f1
            x1 = hi - PHI_RATIO * (hi - lo)
            f1 = f(x1)
        else:
            lo = x1
            x1, f1 = x2, f2
            x2 = lo + PHI_RATIO * (hi - lo)
            f2 = f(x2)
        evaluations += 1

    x_opt = 0.5 * (lo + hi)
    f_opt = f(x_opt)
    evaluations += 1
    # never report worse than the best interior point already seen
    if min(f1, f2) < f_opt:
        x_opt, f_opt = (x1, f1) if f1 <= f2 else (x2, f2)
    logger.debug("golden section: %d evaluations, argmin %.12g", evaluations, x_opt)
    return x_opt, f_opt


def find_bracket(
    f: Callable[[float], float],
    r_init: float,
    growth: float = 2.0,
    max_steps: int = MAX_DOUBLINGS,
) -> Bracket:
    """Expand geometrically from r_init in the downhill direction until f turns up"""
    if r_init <= 0 or growth <= 1:
        raise BracketInvalid(f"Need r_init > 0 and growth > 1, got {r_init!r}, {growth!r}")
    a, fa = r_init, f(r_init)
    b, fb = r_init * growth, f(r_init * growth)
    factor = growth
    if fb > fa:
        # walk toward smaller rates
        a, b, fa, fb = b, a, fb, fa
        factor = 1.0 / growth
    for step in range(max_steps):
        c = b * factor
        fc = f(c)
        if fc > fb:
            lo, hi = sorted([(a, fa), (c, fc)])
            logger.debug("bracket found after %d expansions", step + 1)
            return Bracket(lo[0], b, hi[0], lo[1], fb, hi[1])
        a, fa, b, fb = b, fb, c, fc
    raise MonotoneFunction(
        f"No bracket found after {max_steps} geometric steps from r = {r_init!r}; "
        f"the objective keeps decreasing toward r = {b!r}"
    )


def validate_unimodal(
    f: Callable[[float], float], lo: float, hi: float, points: int = 50
) -> Bracket:
    """Check a single interior minimum on a log grid and return the bracket around it"""
    grid = np.geomspace(lo, hi, points)
    values = np.array([f(float(r)) for r in grid])
    if not np.all(np.isfinite(values)):
        raise BracketFailure(f"Objective is not finite on [{lo!r}, {hi!r}]")
    steps = np.sign(np.diff(values))
    turns = np.count_nonzero(np.diff(steps[steps != 0]) != 0)
    k = int(np.argmin(values))
    if turns != 1 or k == 0 or k == points - 1:
        raise BracketFailure(
            f"Objective is not unimodal with an interior minimum on [{lo!r}, {hi!r}]"
        )
    return Bracket(
        float(grid[k - 1]),
        float(grid[k]),
        float(grid[k + 1]),
        float(values[k - 1]),
        float(values[k]),
        float(values[k + 1]),
    )
