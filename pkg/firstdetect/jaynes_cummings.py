"""Closed-form first-detection statistics of the resonant Jaynes-Cummings model
restricted to one excitation sector {|↑,n-1⟩, |↓,n⟩} under Poissonian
measurements.

With a = g√n and μ = 2a²/r², every transform has the poles s = r·λ where λ
solves λ³ + 2λ² + (1+2μ)λ + μ = 0. The three roots are one real root λ₁ and
a conjugate pair λ_R ± iλ_I with λ_R < λ₁ < 0.
"""

from __future__ import annotations

import logging
import math
from functools import partial

import numpy as np
import numpy.typing as npt
from numpy.polynomial import Polynomial

from firstdetect import (
    InfiniteMean,
    InvalidMu,
    InvalidParameter,
    NegativeTime,
    NoFiniteOptimum,
    NumericalFailure,
)
from firstdetect import optimize
from firstdetect.laplace import RationalTransform
from firstdetect.qcore import (
    DetectionScheme,
    FirstDetectionStats,
    TwoLevelHamiltonian,
    make_hamiltonian,
)

logger = logging.getLogger(__name__)

ZETA = complex(-0.5, math.sqrt(3.0) / 2.0)
CONFLUENT_IMAG = 1e-8


class JcSector:
    """Resonant JC block for excitation number n

    Properties:
    - g (float): atom-cavity coupling
    - n (int): excitation index, n ≥ 1
    - omega_c (float): cavity (and qubit) frequency
    - r (float): Poissonian measurement rate
    """

    def __init__(self, g: float, n: int, omega_c: float = 1.0, r: float = 1.0):
        if not g >= 0 or not math.isfinite(g):
            raise InvalidParameter(f"Coupling must be non-negative, got {g!r}")
        if int(n) != n or n < 1:
            raise InvalidParameter(f"Excitation index must be an integer >= 1, got {n!r}")
        if not r > 0 or not math.isfinite(r):
            raise InvalidParameter(f"Rate must be positive, got {r!r}")
        self.g = float(g)
        self.n = int(n)
        self.omega_c = float(omega_c)
        self.r = float(r)

    @property
    def coupling(self) -> float:
        """a = g√n, half the Rabi frequency of the sector"""
        return self.g * math.sqrt(self.n)

    @property
    def mu_scale(self) -> float:
        return 2.0 * self.g**2 * self.n / self.r**2

    def with_rate(self, r: float) -> JcSector:
        return JcSector(self.g, self.n, self.omega_c, r)

    def hamiltonian(self) -> TwoLevelHamiltonian:
        """Block in the (|↑,n-1⟩, |↓,n⟩) basis"""
        half = 0.5 * self.omega_c
        entries = [
            [half + self.omega_c * (self.n - 1), self.coupling],
            [self.coupling, -half + self.omega_c * self.n],
        ]
        return make_hamiltonian(entries, sector=self)

    def __repr__(self) -> str:
        return f"JcSector(g={self.g!r}, n={self.n!r}, omega_c={self.omega_c!r}, r={self.r!r})"


def jc_evolve_populations(sector: JcSector, t: npt.ArrayLike) -> tuple[np.ndarray, np.ndarray]:
    """Populations of |↑,n-1⟩ and |↓,n⟩ when starting in |↑,n-1⟩"""
    phase = sector.coupling * np.asarray(t, dtype=np.float64)
    return np.cos(phase) ** 2, np.sin(phase) ** 2


class CubicRoots:
    """Roots of λ³ + 2λ² + (1+2μ)λ + μ

    Properties:
    - lam1 (float): real root
    - lam_r (float): real part of the complex pair
    - lam_i (float): positive imaginary part of the complex pair
    """

    def __init__(self, mu: float, lam1: float, lam_r: float, lam_i: float):
        self.mu = mu
        self.lam1 = lam1
        self.lam_r = lam_r
        self.lam_i = lam_i

    @property
    def pair(self) -> complex:
        return complex(self.lam_r, self.lam_i)

    def as_array(self) -> np.ndarray:
        return np.array([self.lam1, self.pair, self.pair.conjugate()], dtype=np.complex128)

    @property
    def confluent(self) -> bool:
        return self.lam_i < CONFLUENT_IMAG

    def __repr__(self) -> str:
        return f"CubicRoots(lam1={self.lam1!r}, lam_r={self.lam_r!r}, lam_i={self.lam_i!r})"


def cubic_polynomial(mu: float, lam: complex) -> complex:
    return ((lam + 2.0) * lam + (1.0 + 2.0 * mu)) * lam + mu


def discriminant(mu: float) -> float:
    return -4.0 * mu + 13.0 * mu**2 - 32.0 * mu**3


def cubic_roots(mu: float) -> CubicRoots:
    """Cardano solution with Newton polishing of each root"""
    if not mu > 0 or not math.isfinite(mu):
        raise InvalidMu(f"μ_scale must be positive and finite, got {mu!r}")
    b0 = 1.0 - 6.0 * mu
    b1 = -2.0 - 9.0 * mu
    root = math.sqrt(b1 * b1 - 4.0 * b0**3)
    c_arg = 0.5 * (b1 + root)
    if abs(c_arg) < 1e-300:
        c_arg = 0.5 * (b1 - root)
    c = complex(c_arg) ** (1.0 / 3.0)
    candidates = []
    for k in range(3):
        ck = ZETA**k * c
        candidates.append(-(2.0 + ck + b0 / ck) / 3.0)
    candidates.sort(key=lambda z: abs(z.imag))
    lam1 = _newton(mu, complex(candidates[0].real, 0.0)).real
    pair = _newton(mu, candidates[1] if candidates[1].imag > 0 else candidates[1].conjugate())
    lam_r = -0.5 * (2.0 + lam1)
    return CubicRoots(mu, lam1, lam_r, abs(pair.imag))


def _newton(mu: float, lam: complex) -> complex:
    deriv = (3.0 * lam + 4.0) * lam + (1.0 + 2.0 * mu)
    if deriv == 0:
        return lam
    return lam - cubic_polynomial(mu, lam) / deriv


def _numerator(scheme: DetectionScheme, mu: float) -> tuple[float, float, float]:
    """Coefficients (a0, a1, a2) of the residue numerator a0 + a1λ + a2λ²"""
    match scheme:
        case DetectionScheme.SCHEME1:
            return mu, 0.0, 0.0
        case DetectionScheme.SCHEME2:
            return mu, 1.0, 1.0


def _scaled_density(roots: CubicRoots, numer: tuple[float, float, float], z: np.ndarray) -> np.ndarray:
    """G(z) with F_r(t) = r·G(rt), in real arithmetic"""
    a0, a1, a2 = numer
    l1, lr, li = roots.lam1, roots.lam_r, roots.lam_i
    n1 = a0 + a1 * l1 + a2 * l1 * l1
    d_r = lr - l1
    if roots.confluent:
        nr = a0 + a1 * lr + a2 * lr * lr
        dn = a1 + 2.0 * a2 * lr
        first = n1 * np.exp(l1 * z) / d_r**2
        double = np.exp(lr * z) * ((dn + z * nr) / d_r - nr / d_r**2)
        return first + double
    d2 = d_r * d_r + li * li
    n_re = a0 + a1 * lr + a2 * (lr * lr - li * li)
    # imaginary part of N(λ_R + iλ_I) is λ_I·m_i
    m_i = a1 + 2.0 * a2 * lr
    q_re = (n_re * d_r + m_i * li * li) / d2
    q_im_over_li = (m_i * d_r - n_re) / d2
    sin_over_li = z * np.sinc(li * z / np.pi)
    first = n1 * np.exp(l1 * z) / d2
    osc = np.exp(lr * z) * (q_re * sin_over_li + q_im_over_li * np.cos(li * z))
    return first + osc


def _checked_times(t: npt.ArrayLike) -> np.ndarray:
    t_arr = np.asarray(t, dtype=np.float64)
    if np.any(t_arr < 0):
        raise NegativeTime("First-detection PDF is defined for t >= 0")
    return t_arr


def _as_output(values: np.ndarray) -> float | np.ndarray:
    return float(values) if values.ndim == 0 else values


def _require_coupling(sector: JcSector) -> None:
    if sector.coupling == 0:
        raise InvalidMu("Decoupled sector (g = 0) never reaches the interrogated state")


def pdf(sector: JcSector, scheme: DetectionScheme, t: npt.ArrayLike) -> float | np.ndarray:
    _require_coupling(sector)
    t_arr = _checked_times(t)
    roots = cubic_roots(sector.mu_scale)
    numer = _numerator(scheme, roots.mu)
    return _as_output(sector.r * _scaled_density(roots, numer, sector.r * t_arr))


def pdf_scheme1(sector: JcSector, t: npt.ArrayLike) -> float | np.ndarray:
    return pdf(sector, DetectionScheme.SCHEME1, t)


def pdf_scheme2(sector: JcSector, t: npt.ArrayLike) -> float | np.ndarray:
    return pdf(sector, DetectionScheme.SCHEME2, t)


def _residues(roots: CubicRoots, numer: tuple[float, float, float]) -> np.ndarray:
    lam = roots.as_array()
    a0, a1, a2 = numer
    out = np.empty(3, dtype=np.complex128)
    for k in range(3):
        others = [lam[j] for j in range(3) if j != k]
        out[k] = (a0 + a1 * lam[k] + a2 * lam[k] ** 2) / (
            (lam[k] - others[0]) * (lam[k] - others[1])
        )
    return out


def survival(sector: JcSector, scheme: DetectionScheme, t: npt.ArrayLike) -> float | np.ndarray:
    """S_r(t) = -Σ R_k e^{λ_k rt}/λ_k"""
    _require_coupling(sector)
    t_arr = _checked_times(t)
    roots = cubic_roots(sector.mu_scale)
    lam = roots.as_array()
    res = _residues(roots, _numerator(scheme, roots.mu))
    z = sector.r * t_arr
    total = np.zeros(z.shape, dtype=np.complex128)
    for k in range(3):
        total -= res[k] * np.exp(lam[k] * z) / lam[k]
    return _as_output(total.real)


def cdf_scheme1(sector: JcSector, t: npt.ArrayLike) -> float | np.ndarray:
    return _as_output(1.0 - np.asarray(survival(sector, DetectionScheme.SCHEME1, t)))


def cdf_scheme2(sector: JcSector, t: npt.ArrayLike) -> float | np.ndarray:
    return _as_output(1.0 - np.asarray(survival(sector, DetectionScheme.SCHEME2, t)))


def jc_g_laplace(sector: JcSector, s: complex) -> complex:
    """g̃(s) = (2a² + s²)/(s(4a² + s²)), the transform of cos²(aτ)"""
    if s == 0:
        raise InvalidParameter("g̃(s) diverges at s = 0")
    a2 = sector.coupling**2
    value = (2.0 * a2 + s * s) / (s * (4.0 * a2 + s * s))
    if isinstance(s, complex) and s.imag != 0:
        return value
    return float(complex(value).real)


def fdt_transform(sector: JcSector, scheme: DetectionScheme) -> RationalTransform:
    """F̃_r(s) as a rational function with the poles r·λ_k"""
    _require_coupling(sector)
    r = sector.r
    a2 = sector.coupling**2
    denominator = [2.0 * a2 * r, r * r + 4.0 * a2, 2.0 * r, 1.0]
    match scheme:
        case DetectionScheme.SCHEME1:
            numerator = [2.0 * a2 * r]
        case DetectionScheme.SCHEME2:
            numerator = [2.0 * a2 * r, r * r, r]
    roots = cubic_roots(sector.mu_scale)
    if roots.confluent:
        return RationalTransform(
            numerator, denominator, poles=[r * roots.lam1, r * roots.lam_r], multiplicities=[1, 2]
        )
    return RationalTransform(numerator, denominator, poles=r * roots.as_array())


def survival_transform_scheme2(sector: JcSector) -> tuple[Polynomial, Polynomial]:
    """Numerator and denominator of S̃_r(s) for scheme 2"""
    r = sector.r
    a2 = sector.coupling**2
    num = Polynomial([4.0 * a2, r, 1.0])
    den = Polynomial([2.0 * a2 * r, r * r + 4.0 * a2, 2.0 * r, 1.0])
    return num, den


def maximal_time(sector: JcSector) -> float:
    """t_m = -1/(r·λ₁), identical for both schemes"""
    if sector.coupling == 0:
        return math.inf
    return -1.0 / (sector.r * cubic_roots(sector.mu_scale).lam1)


def decay_rate(sector: JcSector) -> float:
    return 1.0 / maximal_time(sector)


def oscillation_period(sector: JcSector) -> float:
    """2π/(r·λ_I) of the damped oscillating part of the PDF"""
    _require_coupling(sector)
    return 2.0 * math.pi / (sector.r * cubic_roots(sector.mu_scale).lam_i)


def late_time_amplitude(sector: JcSector, scheme: DetectionScheme) -> float:
    """A in F_r(t) ≈ A·e^{-t/t_m}, from the λ₁ residue"""
    _require_coupling(sector)
    roots = cubic_roots(sector.mu_scale)
    return sector.r * _residues(roots, _numerator(scheme, roots.mu))[0].real


def tail_amplitude_scheme2(sector: JcSector) -> float:
    return late_time_amplitude(sector, DetectionScheme.SCHEME2)


def moments_scheme1(sector: JcSector) -> FirstDetectionStats:
    a2 = sector.coupling**2
    if a2 == 0:
        raise InfiniteMean("Decoupled sector: the interrogated state is never reached")
    r = sector.r
    mean = 2.0 / r + r / (2.0 * a2)
    variance = 4.0 / r**2 + r**2 / (4.0 * a2 * a2)
    return FirstDetectionStats(
        mean=mean,
        second_moment=variance + mean**2,
        t_m=maximal_time(sector),
        small_t_coefficient=r * a2,
        pdf=partial(pdf_scheme1, sector),
    )


def moments_scheme2(sector: JcSector) -> FirstDetectionStats:
    """Moments from the derivatives of the rational survival transform at 0"""
    _require_coupling(sector)
    num, den = survival_transform_scheme2(sector)
    n0, d0 = num(0.0), den(0.0)
    mean = n0 / d0
    slope = (num.deriv()(0.0) * d0 - n0 * den.deriv()(0.0)) / d0**2
    return FirstDetectionStats(
        mean=mean,
        second_moment=-2.0 * slope,
        t_m=maximal_time(sector),
        small_t_coefficient=sector.r,
        pdf=partial(pdf_scheme2, sector),
    )


def moments(sector: JcSector, scheme: DetectionScheme) -> FirstDetectionStats:
    match scheme:
        case DetectionScheme.SCHEME1:
            return moments_scheme1(sector)
        case DetectionScheme.SCHEME2:
            return moments_scheme2(sector)


def optimal_rate(
    sector: JcSector, scheme: DetectionScheme = DetectionScheme.SCHEME1
) -> tuple[float, float]:
    """(r*, t̄ at r*) minimizing the mean detection time"""
    if scheme is DetectionScheme.SCHEME2:
        raise NoFiniteOptimum("Scheme 2 mean 2/r decreases monotonically; r* is infinite")
    a = sector.coupling
    if a == 0:
        raise InfiniteMean("Decoupled sector has no optimal rate")
    return 2.0 * a, 2.0 / a


def minimize_maximal_time(sector: JcSector, tol: float = 1e-10) -> tuple[float, float]:
    """(r_m*, t_m at r_m*) for the sector's (g, n); the sector's own rate is ignored"""
    r_star, _ = optimal_rate(sector)

    def objective(r: float) -> float:
        return maximal_time(sector.with_rate(r))

    bracket = optimize.validate_unimodal(objective, 1e-3 * r_star, 1e3 * r_star)
    r_m, t_m = optimize.minimize_scalar(objective, bracket, tol=tol)
    if abs(r_m - r_star) <= 1e-6 * r_star:
        raise NumericalFailure(
            f"Maximal-time minimizer {r_m!r} coincides with the mean minimizer {r_star!r}"
        )
    logger.debug("r_m* = %.12g, r* = %.12g", r_m, r_star)
    return r_m, t_m
