"""Trajectory simulator for the random-measurement protocol.

Every trajectory starts in ψ₊, waits τ drawn from the protocol, evolves under
e^{-iHτ} and is measured. A successful measurement ends the trajectory; a
failed one leaves the state in ψ_c. Trajectories that are still running at
the cutoff are censored.

Random numbers come from Philox streams keyed by (seed, block, stream) over
fixed-size blocks of trajectories, so the output does not depend on how many
workers execute the blocks.
"""

from __future__ import annotations

import logging
import math
import warnings
from typing import Callable, Iterable

import numpy as np
import numpy.typing as npt
import pandas as pd
from joblib import Parallel, delayed
from scipy import stats

from firstdetect import (
    CutoffTooSmall,
    FirstDetectionError,
    InvalidParameter,
    NumericalFailure,
)
from firstdetect import twolevel
from firstdetect.qcore import (
    PSI_PLUS,
    DetectionScheme,
    Exponential,
    TwoLevelHamiltonian,
    WaitingTimeDistribution,
)

logger = logging.getLogger(__name__)

DEFAULT_BLOCK_SIZE = 65536
DEFAULT_BINS = 400
CENSOR_WARN_FRACTION = 1e-3
LIGHT_TAIL_CUTOFF = 50.0
HEAVY_TAIL_CUTOFF = 1e4
MAX_SEED = 2**64


class Stream:
    """Stream ids mixed into the Philox key"""

    DETECTION = 0
    WEIGHTED = 1
    COUNTS = 2


def block_generator(seed: int, block: int, stream: int = Stream.DETECTION) -> np.random.Generator:
    """Independent generator for one block of trajectories"""
    key = seed | (block << 64) | (stream << 96)
    return np.random.Generator(np.random.Philox(key=key))


def _check_seed(seed: int) -> int:
    seed = int(seed)
    if not 0 <= seed < MAX_SEED:
        raise InvalidParameter(f"Seed must be a 64-bit unsigned integer, got {seed!r}")
    return seed


def _block_sizes(n: int, block_size: int) -> list[int]:
    full, rest = divmod(n, block_size)
    return [block_size] * full + ([rest] if rest else [])


def default_cutoff(
    h: TwoLevelHamiltonian, scheme: DetectionScheme, dist: WaitingTimeDistribution
) -> float:
    """50 × analytic mean for light tails, 10⁴ waiting scales otherwise"""
    if dist.heavy_tailed:
        return HEAVY_TAIL_CUTOFF * dist.scale
    try:
        if isinstance(dist, Exponential):
            mean = twolevel.mean_fdt_poisson(h, scheme, dist.rate)
        else:
            mean = twolevel.mean_fdt_renewal(h, scheme, dist)
    except FirstDetectionError as exc:
        logger.warning("No analytic mean for the cutoff (%s); using %g waiting scales", exc, HEAVY_TAIL_CUTOFF)
        return HEAVY_TAIL_CUTOFF * dist.scale
    return LIGHT_TAIL_CUTOFF * mean


class TrajectoryConfig:
    """Everything that determines an ensemble of trajectories

    Properties:
    - hamiltonian (TwoLevelHamiltonian)
    - scheme (DetectionScheme)
    - dist (WaitingTimeDistribution): protocol waiting times
    - n_trajectories (int)
    - t_cutoff (float): abort horizon, defaults to `default_cutoff`
    - seed (int): 64-bit Philox key
    - workers (int): joblib worker count, never changes the output
    - bins (int): uniform histogram bins over [0, t_cutoff]
    - count_times (tuple): times at which measurement counts are sampled
    - block_size (int): trajectories per random stream
    """

    def __init__(
        self,
        hamiltonian: TwoLevelHamiltonian,
        scheme: DetectionScheme,
        dist: WaitingTimeDistribution,
        n_trajectories: int,
        t_cutoff: float | None = None,
        seed: int = 0,
        workers: int = 1,
        bins: int = DEFAULT_BINS,
        count_times: Iterable[float] = (),
        block_size: int = DEFAULT_BLOCK_SIZE,
    ):
        if n_trajectories < 1:
            raise InvalidParameter(f"Need at least one trajectory, got {n_trajectories!r}")
        if workers < 1:
            raise InvalidParameter(f"Worker count must be positive, got {workers!r}")
        if bins < 1 or block_size < 1:
            raise InvalidParameter("Bin count and block size must be positive")
        self.hamiltonian = hamiltonian
        self.scheme = scheme
        self.dist = dist
        self.n_trajectories = int(n_trajectories)
        if t_cutoff is None:
            t_cutoff = default_cutoff(hamiltonian, scheme, dist)
        if not (t_cutoff > 0 and math.isfinite(t_cutoff)):
            raise InvalidParameter(f"Cutoff must be positive and finite, got {t_cutoff!r}")
        self.t_cutoff = float(t_cutoff)
        self.seed = _check_seed(seed)
        self.workers = int(workers)
        self.bins = int(bins)
        self.count_times = tuple(sorted(float(t) for t in count_times))
        if any(t <= 0 for t in self.count_times):
            raise InvalidParameter("Count times must be positive")
        self.block_size = int(block_size)

    def blocks(self) -> list[int]:
        return _block_sizes(self.n_trajectories, self.block_size)

    def __repr__(self) -> str:
        return (
            f"TrajectoryConfig({self.scheme.name}, {self.dist.describe()}, "
            f"n={self.n_trajectories}, cutoff={self.t_cutoff:g}, seed={self.seed})"
        )


def _map_blocks(func: Callable, sizes: list[int], workers: int, *args) -> list:
    logger.debug("scheduling %d blocks on %d workers", len(sizes), workers)
    return Parallel(n_jobs=workers)(
        delayed(func)(block, size, *args) for block, size in enumerate(sizes)
    )


def _run_block(
    block: int,
    size: int,
    h: TwoLevelHamiltonian,
    scheme: DetectionScheme,
    dist: WaitingTimeDistribution,
    t_cutoff: float,
    seed: int,
) -> tuple[np.ndarray, np.ndarray]:
    """Detection times (inf when censored) and epoch counts for one block"""
    rng = block_generator(seed, block, Stream.DETECTION)
    times = np.full(size, np.inf)
    epochs = np.zeros(size, dtype=np.int64)
    elapsed = np.zeros(size)
    active = np.arange(size)
    target = scheme.interrogated.amplitudes.conj()
    state = PSI_PLUS.amplitudes
    while active.size:
        tau = dist.sample(rng, active.size)
        u = rng.random(active.size)
        now = elapsed[active] + tau
        evolved = h.propagate(state, tau)
        success = np.abs(evolved @ target) ** 2
        epochs[active] += 1
        hit = u < success
        over = now >= t_cutoff
        detected = hit & ~over
        times[active[detected]] = now[detected]
        elapsed[active] = now
        active = active[~(hit | over)]
        # every survivor sits in ψ_c from here on
        state = scheme.collapse.amplitudes
    return times, epochs


def sample_trajectory(cfg: TrajectoryConfig, rng: np.random.Generator) -> float | None:
    """One trajectory on the given stream; None when censored"""
    h = cfg.hamiltonian
    target = cfg.scheme.interrogated.amplitudes.conj()
    state = PSI_PLUS.amplitudes
    elapsed = 0.0
    while True:
        tau = float(cfg.dist.sample(rng, 1)[0])
        u = float(rng.random())
        elapsed += tau
        if elapsed >= cfg.t_cutoff:
            return None
        success = abs(complex(h.propagate(state, tau) @ target)) ** 2
        if u < success:
            return elapsed
        state = cfg.scheme.collapse.amplitudes


class EmpiricalFirstDetection:
    """Merged outcome of an ensemble run

    Properties:
    - detection_times (ndarray): per trajectory, np.inf when censored
    - epochs (ndarray): measurements performed per trajectory
    - t_cutoff (float)
    - counts, edges (ndarray): uniform histogram of the detected times
    - measurement_counts (dict): count time -> sampled protocol counts N(t)
    """

    def __init__(
        self,
        detection_times: np.ndarray,
        epochs: np.ndarray,
        t_cutoff: float,
        bins: int = DEFAULT_BINS,
        measurement_counts: dict[float, np.ndarray] | None = None,
    ):
        self.detection_times = detection_times
        self.epochs = epochs
        self.t_cutoff = t_cutoff
        self.measurement_counts = measurement_counts or {}
        self.counts, self.edges = np.histogram(self.times, bins=bins, range=(0.0, t_cutoff))

    @property
    def n_total(self) -> int:
        return int(self.detection_times.size)

    @property
    def times(self) -> np.ndarray:
        """Detected (uncensored) times in trajectory order"""
        return self.detection_times[np.isfinite(self.detection_times)]

    @property
    def n_censored(self) -> int:
        return self.n_total - int(self.times.size)

    @property
    def censored_fraction(self) -> float:
        return self.n_censored / self.n_total

    @property
    def density(self) -> np.ndarray:
        return self.counts / (self.n_total * np.diff(self.edges))

    @property
    def histogram_mass(self) -> float:
        return float(self.counts.sum()) / self.n_total

    @property
    def mean(self) -> float:
        return float(np.mean(self.times)) if self.times.size else math.nan

    @property
    def mean_se(self) -> float:
        t = self.times
        if t.size < 2:
            return math.nan
        return float(np.std(t, ddof=1) / math.sqrt(t.size))

    @property
    def variance(self) -> float:
        t = self.times
        return float(np.var(t, ddof=1)) if t.size > 1 else math.nan

    @property
    def variance_se(self) -> float:
        t = self.times
        if t.size < 4:
            return math.nan
        centered = t - t.mean()
        m4 = float(np.mean(centered**4))
        var = float(np.mean(centered**2))
        return math.sqrt(max(m4 - var * var, 0.0) / t.size)

    def z_score(self, expected_mean: float) -> float:
        return (self.mean - expected_mean) / self.mean_se

    def ks_test(self, cdf: Callable[[np.ndarray], np.ndarray]) -> tuple[float, float]:
        """Kolmogorov-Smirnov statistic and p-value of the detected times
        against `cdf`, conditioned on detection before the cutoff"""
        norm = float(cdf(np.array([self.t_cutoff]))[0])
        if norm <= 0:
            raise NumericalFailure("Reference CDF has no mass before the cutoff")
        result = stats.kstest(self.times, lambda t: np.asarray(cdf(np.asarray(t))) / norm)
        return float(result.statistic), float(result.pvalue)

    def histogram_frame(self) -> pd.DataFrame:
        return pd.DataFrame(
            {
                "t_left": self.edges[:-1],
                "t_right": self.edges[1:],
                "count": self.counts,
                "density": self.density,
            }
        )

    def summary(self) -> dict[str, float | int]:
        return {
            "n_trajectories": self.n_total,
            "n_censored": self.n_censored,
            "censored_fraction": self.censored_fraction,
            "t_cutoff": self.t_cutoff,
            "mean": self.mean,
            "mean_se": self.mean_se,
            "variance": self.variance,
            "variance_se": self.variance_se,
            "mean_epochs": float(np.mean(self.epochs)),
        }


def run_ensemble(cfg: TrajectoryConfig) -> EmpiricalFirstDetection:
    """Simulate all trajectories of `cfg` and merge the blocks in order"""
    results = _map_blocks(
        _run_block,
        cfg.blocks(),
        cfg.workers,
        cfg.hamiltonian,
        cfg.scheme,
        cfg.dist,
        cfg.t_cutoff,
        cfg.seed,
    )
    times = np.concatenate([r[0] for r in results])
    epochs = np.concatenate([r[1] for r in results])
    counts = None
    if cfg.count_times:
        counts = sample_measurement_counts(
            cfg.dist,
            cfg.count_times,
            cfg.n_trajectories,
            seed=cfg.seed,
            workers=cfg.workers,
            block_size=cfg.block_size,
        )
    ensemble = EmpiricalFirstDetection(times, epochs, cfg.t_cutoff, cfg.bins, counts)
    if ensemble.censored_fraction > CENSOR_WARN_FRACTION and math.isfinite(cfg.dist.mean):
        msg = (
            f"{ensemble.censored_fraction:.3g} of the trajectories ran past the cutoff "
            f"t = {cfg.t_cutoff:g}"
        )
        logger.warning(msg)
        warnings.warn(msg, CutoffTooSmall, stacklevel=2)
    logger.debug("ensemble done: %s", ensemble.summary())
    return ensemble


def survival_estimate(
    source: TrajectoryConfig | EmpiricalFirstDetection, grid: npt.ArrayLike
) -> tuple[np.ndarray, np.ndarray]:
    """Ŝ(t) = fraction of trajectories with detection time ≥ t, and its binomial error"""
    ensemble = run_ensemble(source) if isinstance(source, TrajectoryConfig) else source
    t = np.atleast_1d(np.asarray(grid, dtype=np.float64))
    if np.any(t < 0) or np.any(t > ensemble.t_cutoff):
        raise InvalidParameter(f"Survival grid must lie in [0, {ensemble.t_cutoff:g}]")
    ordered = np.sort(ensemble.detection_times)
    below = np.searchsorted(ordered, t, side="left")
    estimate = 1.0 - below / ensemble.n_total
    stderr = np.sqrt(estimate * (1.0 - estimate) / ensemble.n_total)
    return estimate, stderr


def _weighted_block(
    block: int,
    size: int,
    h: TwoLevelHamiltonian,
    scheme: DetectionScheme,
    dist: WaitingTimeDistribution,
    t: float,
    seed: int,
) -> np.ndarray:
    rng = block_generator(seed, block, Stream.WEIGHTED)
    weights = np.ones(size)
    elapsed = np.zeros(size)
    active = np.arange(size)
    first = True
    while active.size:
        tau = dist.sample(rng, active.size)
        now = elapsed[active] + tau
        inside = now < t
        active, tau = active[inside], tau[inside]
        failure = twolevel.f_of_tau(h, scheme, tau) if first else twolevel.g_of_tau(h, scheme, tau)
        weights[active] *= failure
        elapsed[active] = now[inside]
        first = False
    return weights


def weighted_survival_check(cfg: TrajectoryConfig, t: float) -> tuple[float, float]:
    """S(t) from sampled measurement epochs weighted by f(τ₁)·Π g(τ_k)

    Only the protocol is random; each configuration contributes its exact
    survival weight. Returns the estimate and its standard error.
    """
    if t < 0:
        raise InvalidParameter(f"Time must be non-negative, got {t!r}")
    parts = _map_blocks(
        _weighted_block,
        cfg.blocks(),
        cfg.workers,
        cfg.hamiltonian,
        cfg.scheme,
        cfg.dist,
        float(t),
        cfg.seed,
    )
    weights = np.concatenate(parts)
    se = float(np.std(weights, ddof=1) / math.sqrt(weights.size)) if weights.size > 1 else math.nan
    return float(np.mean(weights)), se


def _counts_block(
    block: int,
    size: int,
    dist: WaitingTimeDistribution,
    count_times: np.ndarray,
    seed: int,
) -> np.ndarray:
    rng = block_generator(seed, block, Stream.COUNTS)
    counts = np.zeros((size, count_times.size), dtype=np.int64)
    elapsed = np.zeros(size)
    active = np.arange(size)
    horizon = count_times[-1]
    while active.size:
        now = elapsed[active] + dist.sample(rng, active.size)
        counts[active] += now[:, None] <= count_times[None, :]
        elapsed[active] = now
        active = active[now <= horizon]
    return counts


def sample_measurement_counts(
    dist: WaitingTimeDistribution,
    count_times: Iterable[float],
    n_samples: int,
    seed: int = 0,
    workers: int = 1,
    block_size: int = DEFAULT_BLOCK_SIZE,
) -> dict[float, np.ndarray]:
    """Number of protocol measurements in [0, t] for each count time"""
    times = np.array(sorted(float(t) for t in count_times))
    if times.size == 0 or times[0] <= 0:
        raise InvalidParameter("Need at least one positive count time")
    if n_samples < 1:
        raise InvalidParameter(f"Need at least one sample, got {n_samples!r}")
    parts = _map_blocks(
        _counts_block,
        _block_sizes(n_samples, block_size),
        workers,
        dist,
        times,
        _check_seed(seed),
    )
    counts = np.concatenate(parts)
    return {float(t): counts[:, j] for j, t in enumerate(times)}


def poisson_chi_square(
    counts: np.ndarray, mean: float, min_expected: float = 5.0
) -> tuple[float, float]:
    """Chi-square statistic and p-value of sampled counts against Poisson(mean)

    Neighbouring count values are pooled until every cell expects at least
    `min_expected` samples; the last cell carries the upper tail.
    """
    n = counts.size
    top = int(counts.max())
    observed = np.bincount(counts, minlength=top + 1).astype(np.float64)
    expected = n * stats.poisson.pmf(np.arange(top + 1), mean)
    expected[-1] = n * stats.poisson.sf(top - 1, mean)

    obs_cells: list[float] = []
    exp_cells: list[float] = []
    acc_o = acc_e = 0.0
    for o, e in zip(observed, expected):
        acc_o += o
        acc_e += e
        if acc_e >= min_expected:
            obs_cells.append(acc_o)
            exp_cells.append(acc_e)
            acc_o = acc_e = 0.0
    if acc_e > 0 or acc_o > 0:
        if not exp_cells:
            raise NumericalFailure(f"Too few samples for a chi-square test ({n})")
        obs_cells[-1] += acc_o
        exp_cells[-1] += acc_e
    if len(exp_cells) < 2:
        raise NumericalFailure("Chi-square test needs at least two cells")
    result = stats.chisquare(obs_cells, exp_cells)
    return float(result.statistic), float(result.pvalue)


def laplace_estimate(ensemble: EmpiricalFirstDetection, s: float) -> tuple[float, float]:
    """E[e^{-s t}] over all trajectories (censored ones contribute 0) and its error"""
    if s < 0:
        raise InvalidParameter(f"s must be non-negative, got {s!r}")
    values = np.exp(-s * ensemble.detection_times)
    se = float(np.std(values, ddof=1) / math.sqrt(values.size)) if values.size > 1 else math.nan
    return float(np.mean(values)), se


class TailFit:
    """Power law F(t) ≈ amplitude·t^{-exponent} fitted on log bins

    Properties:
    - slope (float): fitted log-log slope, -exponent
    - slope_se (float)
    - amplitude (float): at the fixed exponent when one was given, else free fit
    - window (tuple): (t_lo, t_hi)
    """

    def __init__(self, slope: float, slope_se: float, amplitude: float, window: tuple[float, float]):
        self.slope = slope
        self.slope_se = slope_se
        self.amplitude = amplitude
        self.window = window

    @property
    def exponent(self) -> float:
        return -self.slope

    def as_dict(self) -> dict[str, float]:
        return {
            "tail_slope": self.slope,
            "tail_slope_se": self.slope_se,
            "tail_amplitude": self.amplitude,
            "tail_t_lo": self.window[0],
            "tail_t_hi": self.window[1],
        }


def tail_fit(
    ensemble: EmpiricalFirstDetection,
    decades: float = 1.0,
    min_tail_count: int = 50,
    bins: int = 20,
    exponent: float | None = None,
) -> TailFit:
    """Log-log regression of the detection density over the last `decades` of time
    before only `min_tail_count` detections remain"""
    times = np.sort(ensemble.times)
    if times.size < 10 * min_tail_count:
        raise NumericalFailure(f"Only {times.size} detections; too few for a tail fit")
    t_hi = float(times[-min_tail_count])
    t_lo = t_hi / 10.0**decades
    edges = np.geomspace(t_lo, t_hi, bins + 1)
    counts, _ = np.histogram(times, bins=edges)
    density = counts / (ensemble.n_total * np.diff(edges))
    centers = np.sqrt(edges[:-1] * edges[1:])
    keep = counts > 0
    if np.count_nonzero(keep) < 3:
        raise NumericalFailure("Tail window holds fewer than three populated bins")
    log_t = np.log(centers[keep])
    log_f = np.log(density[keep])
    fit = stats.linregress(log_t, log_f)
    if exponent is None:
        amplitude = math.exp(fit.intercept)
    else:
        amplitude = math.exp(float(np.mean(log_f + exponent * log_t)))
    logger.debug("tail fit on [%g, %g]: slope %.4f ± %.4f", t_lo, t_hi, fit.slope, fit.stderr)
    return TailFit(float(fit.slope), float(fit.stderr), amplitude, (t_lo, t_hi))


class SmallTimeFit:
    """F(t) ≈ coefficient·t^order near t = 0

    Properties:
    - coefficient (float), coefficient_se (float)
    - order (int)
    - window (float): fitted range [0, window]
    """

    def __init__(self, coefficient: float, coefficient_se: float, order: int, window: float):
        self.coefficient = coefficient
        self.coefficient_se = coefficient_se
        self.order = order
        self.window = window

    def as_dict(self) -> dict[str, float]:
        return {
            "small_t_coefficient": self.coefficient,
            "small_t_coefficient_se": self.coefficient_se,
            "small_t_order": self.order,
            "small_t_window": self.window,
        }


def small_t_fit(
    ensemble: EmpiricalFirstDetection,
    order: int,
    window: float | None = None,
    mass: float = 0.05,
) -> SmallTimeFit:
    """Fit c in F(t) ≈ c·t^order·(1 + b·t) on the earliest detections

    With u = t/w inside the window, the fractions E[1{u<1}] and E[u·1{u<1}]
    are linear in (c·w^p, c·b·w^{p+1}), p = order + 1. Solving that 2×2
    system per trajectory gives both the estimate and its standard error.
    The window defaults to the time by which a fraction `mass` of all
    trajectories has been detected.
    """
    times = np.sort(ensemble.times)
    if window is None:
        k = int(mass * ensemble.n_total)
        if k < 100 or k > times.size:
            raise NumericalFailure(f"Too few early detections for a small-t fit ({times.size})")
        window = float(times[k - 1])
    if window <= 0:
        raise InvalidParameter(f"Small-t window must be positive, got {window!r}")
    p = order + 1
    moments = np.array([[1.0 / p, 1.0 / (p + 1)], [1.0 / (p + 1), 1.0 / (p + 2)]])
    row = np.linalg.solve(moments, np.array([1.0, 0.0]))
    u = ensemble.detection_times / window
    inside = u < 1.0
    contrib = np.where(inside, row[0] + row[1] * np.where(inside, u, 0.0), 0.0)
    scale = window**p
    coefficient = float(np.mean(contrib)) / scale
    stderr = float(np.std(contrib, ddof=1) / math.sqrt(contrib.size)) / scale
    logger.debug("small-t fit of order %d on [0, %g]: %.6g ± %.2g", order, window, coefficient, stderr)
    return SmallTimeFit(coefficient, stderr, order, window)
