"""Tables and summaries behind each command, kept apart from argument handling
so the acceptance suite can reuse them."""

from __future__ import annotations

import logging
import math
import warnings
from enum import Enum
from functools import partial
from typing import Any, Callable

import numpy as np
import pandas as pd
from django.conf import settings
from scipy.integrate import trapezoid

from detection.run_config import RunConfig
from firstdetect import (
    CutoffTooSmall,
    InfiniteMean,
    InvalidParameter,
    NoFiniteOptimum,
    NotHeavyTailed,
    NumericalFailure,
)
from firstdetect import jaynes_cummings as jc
from firstdetect import montecarlo as mc
from firstdetect import optimize, twolevel
from firstdetect.laplace import invert_rational, invert_talbot_grid, quad_checked
from firstdetect.qcore import DetectionScheme, Exponential

logger = logging.getLogger(__name__)

DEFAULT_POINTS = 601
HORIZON_MAXIMAL_TIMES = 20.0
NORMALIZATION_MAXIMAL_TIMES = 60.0
DEFAULT_RATE_GRID = np.geomspace(0.01, 100.0, 81)
Z_LIMIT = 4.0


class PdfRoute(Enum):
    """How F(t) is evaluated
    - `CLOSED`  JC residue formula in real arithmetic
    - `RESIDUE` residue sum of the rational Poissonian transform of any two-level system
    - `TALBOT`  numerical inversion of the transform, needed for renewal protocols
    """

    CLOSED = "closed"
    RESIDUE = "residue"
    TALBOT = "talbot"


# PDF


def pick_route(cfg: RunConfig, forced: str | None = None) -> PdfRoute:
    if forced is None:
        if cfg.closed_form:
            return PdfRoute.CLOSED
        return PdfRoute.RESIDUE if cfg.is_poisson else PdfRoute.TALBOT
    route = PdfRoute(forced)
    if route is PdfRoute.CLOSED and not cfg.closed_form:
        raise InvalidParameter("The closed-form route needs the JC model with an exponential protocol")
    if route is PdfRoute.RESIDUE and not cfg.is_poisson:
        raise InvalidParameter("The residue route needs an exponential protocol")
    return route


def maximal_time(cfg: RunConfig) -> float:
    if cfg.sector is not None:
        return jc.maximal_time(cfg.sector)
    return twolevel.maximal_time_poisson(cfg.hamiltonian, cfg.scheme, cfg.r)


def fdt_transform(cfg: RunConfig) -> Callable[[complex], complex]:
    if cfg.closed_form:
        return jc.fdt_transform(cfg.sector, cfg.scheme)
    if cfg.is_poisson:
        return twolevel.fdt_rational_poisson(cfg.hamiltonian, cfg.scheme, cfg.r)
    return twolevel.ProtocolTransforms(cfg.hamiltonian, cfg.scheme, cfg.protocol).fdt_renewal


def time_horizon(cfg: RunConfig) -> float:
    """Default end of the time grid"""
    if cfg.tmax is not None:
        return cfg.tmax
    if cfg.is_poisson:
        t_m = maximal_time(cfg)
        if math.isfinite(t_m):
            return HORIZON_MAXIMAL_TIMES * t_m
    dist = cfg.protocol
    if math.isfinite(dist.mean):
        return HORIZON_MAXIMAL_TIMES * dist.mean
    return 1e3 * dist.scale


def time_grid(cfg: RunConfig) -> np.ndarray:
    if cfg.grid is not None:
        return cfg.grid
    return np.linspace(0.0, time_horizon(cfg), DEFAULT_POINTS)


def _pdf_values(cfg: RunConfig, route: PdfRoute, t: np.ndarray) -> np.ndarray:
    match route:
        case PdfRoute.CLOSED:
            return np.asarray(jc.pdf(cfg.sector, cfg.scheme, t), dtype=np.float64)
        case PdfRoute.RESIDUE:
            rt = twolevel.fdt_rational_poisson(cfg.hamiltonian, cfg.scheme, cfg.r)
            return np.asarray(invert_rational(rt, t), dtype=np.float64)
        case PdfRoute.TALBOT:
            if np.any(t < 0):
                raise InvalidParameter("First-detection PDF is defined for t >= 0")
            values = np.empty(t.shape)
            positive = t > 0
            values[positive], _ = invert_talbot_grid(fdt_transform(cfg), t[positive], cfg.talbot())
            # F(0) is the small-t limit: p(0) for scheme 2, zero for scheme 1
            if twolevel.small_t_order(cfg.scheme) == 0:
                values[~positive] = twolevel.small_t_coefficient(
                    cfg.hamiltonian, cfg.scheme, cfg.protocol
                )
            else:
                values[~positive] = 0.0
            return values


def normalization(cfg: RunConfig, route: PdfRoute) -> tuple[float | None, float | None]:
    """∫F over [0, 60 t_m] for the residue routes, which holds all but e^{-60} of the mass"""
    if route is PdfRoute.TALBOT:
        return None, None
    t_m = maximal_time(cfg)
    if not math.isfinite(t_m):
        return None, None
    horizon = NORMALIZATION_MAXIMAL_TIMES * t_m
    panels = np.linspace(0.0, horizon, 61)[1:-1]
    mass, _ = quad_checked(
        lambda t: float(_pdf_values(cfg, route, np.array([t]))[0]), 0.0, horizon, points=panels
    )
    return mass, horizon


def pdf_table(cfg: RunConfig, route: PdfRoute) -> tuple[pd.DataFrame, dict[str, Any]]:
    t = time_grid(cfg)
    values = _pdf_values(cfg, route, t)
    mass, horizon = normalization(cfg, route)
    summary = {
        **cfg.describe(),
        "route": route.value,
        "points": int(t.size),
        "grid_mass": float(trapezoid(values, t)) if t.size > 1 else 0.0,
        "normalization": mass,
        "normalization_horizon": horizon,
    }
    return pd.DataFrame({"t": t, "pdf": values}), summary


# Mean sweep


def sweep_row(cfg: RunConfig, r: float) -> tuple[float, float, float]:
    """(t̄_r, σ²_fd, t_m) for Poissonian measurements at rate r"""
    if cfg.sector is not None:
        stats = jc.moments(cfg.sector.with_rate(r), cfg.scheme)
        return stats.mean, stats.variance, stats.t_m
    h, scheme = cfg.hamiltonian, cfg.scheme
    mean = twolevel.mean_fdt_poisson(h, scheme, r)
    second = twolevel.second_moment_poisson(h, scheme, r)
    return mean, max(second - mean * mean, 0.0), twolevel.maximal_time_poisson(h, scheme, r)


def _refine_minimum(
    f: Callable[[float], float], grid: np.ndarray, values: np.ndarray
) -> tuple[float, float, bool]:
    """Golden-section refinement around the grid argmin when it is interior"""
    k = int(np.nanargmin(values))
    if k == 0 or k == grid.size - 1:
        return float(grid[k]), float(values[k]), False
    bracket = optimize.Bracket(
        float(grid[k - 1]),
        float(grid[k]),
        float(grid[k + 1]),
        float(values[k - 1]),
        float(values[k]),
        float(values[k + 1]),
    )
    r_opt, f_opt = optimize.minimize_scalar(f, bracket)
    return r_opt, f_opt, True


def mean_sweep_table(cfg: RunConfig) -> tuple[pd.DataFrame, dict[str, Any]]:
    rates = cfg.grid if cfg.grid is not None else DEFAULT_RATE_GRID
    if np.any(rates <= 0):
        raise InvalidParameter("Rate grid must be strictly positive")
    rows = np.array([sweep_row(cfg, float(r)) for r in rates])
    mean, variance, t_m = rows[:, 0], rows[:, 1], rows[:, 2]
    frame = pd.DataFrame(
        {
            "r": rates,
            "mean": mean,
            "variance": variance,
            "t_m": t_m,
            "mean_min": (np.arange(rates.size) == np.nanargmin(mean)).astype(int),
            "t_m_min": (np.arange(rates.size) == np.nanargmin(t_m)).astype(int),
        }
    )
    r_mean, min_mean, mean_interior = _refine_minimum(
        lambda r: sweep_row(cfg, r)[0], rates, mean
    )
    r_tm, min_tm, tm_interior = _refine_minimum(lambda r: sweep_row(cfg, r)[2], rates, t_m)
    summary: dict[str, Any] = {
        **cfg.describe(),
        "r_mean_min": r_mean,
        "mean_min": min_mean,
        "mean_min_interior": mean_interior,
        "r_t_m_min": r_tm,
        "t_m_min": min_tm,
        "t_m_min_interior": tm_interior,
    }
    if cfg.sector is not None and cfg.scheme is DetectionScheme.SCHEME1 and cfg.sector.coupling > 0:
        summary["r_star"], summary["mean_at_r_star"] = jc.optimal_rate(cfg.sector)
    return frame, summary


# Simulate


def analytic_mean(cfg: RunConfig) -> float | None:
    try:
        if cfg.is_poisson:
            return twolevel.mean_fdt_poisson(cfg.hamiltonian, cfg.scheme, cfg.r)
        return twolevel.mean_fdt_renewal(cfg.hamiltonian, cfg.scheme, cfg.protocol)
    except InfiniteMean:
        return None


def trajectory_config(
    cfg: RunConfig, count_times: tuple[float, ...] = ()
) -> mc.TrajectoryConfig:
    return mc.TrajectoryConfig(
        cfg.hamiltonian,
        cfg.scheme,
        cfg.protocol,
        cfg.trajectories,
        t_cutoff=cfg.cutoff,
        seed=cfg.seed,
        workers=cfg.workers,
        bins=cfg.bins,
        count_times=count_times,
        block_size=settings.QRESET_BLOCK_SIZE,
    )


def run_with_warnings(tcfg: mc.TrajectoryConfig) -> tuple[mc.EmpiricalFirstDetection, list[str]]:
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always", CutoffTooSmall)
        ensemble = mc.run_ensemble(tcfg)
    messages = [
        f"CutoffTooSmall: {w.message}" for w in caught if issubclass(w.category, CutoffTooSmall)
    ]
    return ensemble, messages


def _small_t_section(cfg: RunConfig, ensemble: mc.EmpiricalFirstDetection) -> dict[str, Any]:
    expected = twolevel.small_t_coefficient(cfg.hamiltonian, cfg.scheme, cfg.protocol)
    if not math.isfinite(expected):
        return {"small_t_error": f"p(0) = {expected} has no finite small-t law"}
    try:
        fit = mc.small_t_fit(ensemble, order=twolevel.small_t_order(cfg.scheme))
    except NumericalFailure as exc:
        return {"small_t_error": f"{type(exc).__name__}: {exc}", "expected_small_t_coefficient": expected}
    return {**fit.as_dict(), "expected_small_t_coefficient": expected}


def _tail_section(cfg: RunConfig, ensemble: mc.EmpiricalFirstDetection) -> dict[str, Any]:
    amplitude, exponent = twolevel.tail_asymptote(cfg.hamiltonian, cfg.scheme, cfg.protocol)
    section: dict[str, Any] = {
        "expected_tail_amplitude": amplitude,
        "expected_tail_slope": -exponent,
    }
    try:
        section.update(mc.tail_fit(ensemble, exponent=exponent).as_dict())
    except NumericalFailure as exc:
        section["tail_error"] = f"{type(exc).__name__}: {exc}"
    return section


def _counts_section(cfg: RunConfig, ensemble: mc.EmpiricalFirstDetection) -> list[dict[str, Any]]:
    rows = []
    for t, counts in sorted(ensemble.measurement_counts.items()):
        row: dict[str, Any] = {
            "t": t,
            "mean_count": float(np.mean(counts)),
            "var_count": float(np.var(counts, ddof=1)) if counts.size > 1 else None,
        }
        if isinstance(cfg.protocol, Exponential):
            stat, pvalue = mc.poisson_chi_square(counts, cfg.protocol.rate * t)
            row.update(expected_mean=cfg.protocol.rate * t, chi_square=stat, p_value=pvalue)
        rows.append(row)
    return rows


def simulation_report(
    cfg: RunConfig, count_times: tuple[float, ...] = ()
) -> tuple[pd.DataFrame, dict[str, Any], list[str]]:
    """Histogram, summary and the list of failed z-score checks"""
    tcfg = trajectory_config(cfg, count_times)
    ensemble, messages = run_with_warnings(tcfg)
    summary: dict[str, Any] = {**cfg.describe(), "seed": cfg.seed, **ensemble.summary()}
    summary["warnings"] = messages
    failures: list[str] = []

    expected = analytic_mean(cfg)
    summary["expected_mean"] = expected
    if expected is not None and ensemble.times.size > 1:
        z = ensemble.z_score(expected)
        summary["z_score"] = z
        if not abs(z) <= Z_LIMIT:
            failures.append(f"mean {ensemble.mean:.6g} is {z:.2f} SE from {expected:.6g}")

    if cfg.closed_form and cfg.sector.coupling > 0 and ensemble.times.size > 0:
        survival = partial(jc.survival, cfg.sector, cfg.scheme)
        statistic, pvalue = ensemble.ks_test(lambda t: 1.0 - np.asarray(survival(t)))
        summary["ks_statistic"], summary["ks_p_value"] = statistic, pvalue

    summary.update(_small_t_section(cfg, ensemble))
    if cfg.protocol.heavy_tailed:
        summary.update(_tail_section(cfg, ensemble))
    if ensemble.measurement_counts:
        summary["measurement_counts"] = _counts_section(cfg, ensemble)
    return ensemble.histogram_frame(), summary, failures


# Asymptotics


def asymptotics_report(cfg: RunConfig) -> dict[str, Any]:
    h, scheme, dist = cfg.hamiltonian, cfg.scheme, cfg.protocol
    order = twolevel.small_t_order(scheme)
    coefficient = twolevel.small_t_coefficient(h, scheme, dist)
    report: dict[str, Any] = {
        **cfg.describe(),
        "small_t_order": order,
        "small_t_coefficient": coefficient,
    }
    if order == 0:
        report["small_t_limit"] = coefficient
    report["mean"] = analytic_mean(cfg)

    if cfg.is_poisson:
        report["t_m"] = maximal_time(cfg)
        if cfg.sector is not None and cfg.sector.coupling > 0:
            report["late_time_amplitude"] = jc.late_time_amplitude(cfg.sector, scheme)
            report["oscillation_period"] = jc.oscillation_period(cfg.sector)
    if scheme is DetectionScheme.SCHEME1 and not cfg.is_poisson:
        transforms = twolevel.ProtocolTransforms(h, scheme, dist)
        report["v0"] = transforms.V0
        report["v0_quadrature"] = transforms.v_tilde_quadrature(0.0).real

    try:
        amplitude, exponent = twolevel.tail_asymptote(h, scheme, dist)
        report["tail_amplitude"], report["tail_exponent"] = amplitude, exponent
    except NotHeavyTailed as exc:
        report["tail_amplitude"] = report["tail_exponent"] = None
        report["tail_error"] = f"NotHeavyTailed: {exc}"
    return report


# Optimal rate


def _objectives(cfg: RunConfig) -> tuple[Callable, Callable, Callable]:
    if cfg.sector is not None:
        sector = cfg.sector
        return (
            lambda r: jc.moments(sector.with_rate(r), cfg.scheme).mean,
            lambda r: jc.moments(sector.with_rate(r), cfg.scheme).variance,
            lambda r: jc.maximal_time(sector.with_rate(r)),
        )
    h, scheme = cfg.hamiltonian, cfg.scheme
    return (
        lambda r: twolevel.mean_fdt_poisson(h, scheme, r),
        lambda r: sweep_row(cfg, r)[1],
        lambda r: twolevel.maximal_time_poisson(h, scheme, r),
    )


def optimal_rate_report(cfg: RunConfig, tol: float = 1e-10) -> dict[str, Any]:
    if cfg.scheme is DetectionScheme.SCHEME2:
        raise NoFiniteOptimum("Scheme 2 mean 2/r decreases monotonically; r* is infinite")
    mean_of, variance_of, t_m_of = _objectives(cfg)
    report: dict[str, Any] = {**cfg.describe()}
    report.pop("r", None)

    r_opt, mean_min = optimize.minimize_scalar(mean_of, optimize.find_bracket(mean_of, cfg.r), tol)
    report.update(r_star_numeric=r_opt, mean_min_numeric=mean_min)
    r_var, var_min = optimize.minimize_scalar(
        variance_of, optimize.find_bracket(variance_of, cfg.r), tol
    )
    report.update(r_variance_min=r_var, variance_min=var_min)

    if cfg.sector is not None:
        r_star, mean_star = jc.optimal_rate(cfg.sector)
        r_m, t_m_min = jc.minimize_maximal_time(cfg.sector, tol)
        report.update(
            r_star=r_star,
            mean_at_r_star=mean_star,
            r_star_relative_error=abs(r_opt - r_star) / r_star,
            mean_min_error=abs(mean_min - mean_star),
        )
    else:
        bracket = optimize.validate_unimodal(t_m_of, 1e-3 * r_opt, 1e3 * r_opt)
        r_m, t_m_min = optimize.minimize_scalar(t_m_of, bracket, tol)
    report.update(r_t_m_min=r_m, t_m_min=t_m_min)
    logger.debug("optimal rate report: %s", report)
    return report
