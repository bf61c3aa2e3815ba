"""Exact first-detection analytics for a generic two-level Hamiltonian.

Two functions drive everything:
- f(τ) = |⟨ψ_c|e^{-iHτ}|ψ₊⟩|², the probability of failing the first
  measurement after a wait τ
- g(τ) = |⟨ψ_c|e^{-iHτ}|ψ_c⟩|², the same for every later measurement

For two levels both are c₀ + c₁·cos(ωτ) with ω = E₊ - E₋, which makes every
Poissonian transform rational and reduces renewal transforms to p̃ evaluated
at shifted complex arguments.
"""

from __future__ import annotations

import logging
import math
from typing import Callable

import numpy as np
import numpy.typing as npt
from numpy.polynomial import Polynomial

from firstdetect import (
    InfiniteMean,
    IntegerExponent,
    InvalidParameter,
    NegativeTime,
    NotHeavyTailed,
    PoleHit,
)
from firstdetect import jaynes_cummings
from firstdetect.laplace import AnalyticTail, RationalTransform, forward_transform
from firstdetect.qcore import (
    PSI_PLUS,
    DetectionScheme,
    PureState,
    TwoLevelHamiltonian,
    WaitingTimeDistribution,
)

logger = logging.getLogger(__name__)

POLE_TOL = 1e-14
COMPLEX_STEP = 1e-20


def evolve(h: TwoLevelHamiltonian, psi: PureState, tau: float) -> PureState:
    """e^{-iHτ}|ψ⟩ via eigenbasis phases; negative τ evolves backwards"""
    amps = h.propagate(psi.amplitudes, tau)
    return PureState(amps, normalize=True)


def _overlap_squared(h: TwoLevelHamiltonian, bra: PureState, ket: PureState, tau):
    tau_arr = np.asarray(tau, dtype=np.float64)
    evolved = h.propagate(ket.amplitudes, tau_arr)
    amp = evolved @ bra.amplitudes.conj()
    return np.clip(np.abs(amp) ** 2, 0.0, 1.0)


def f_of_tau(h: TwoLevelHamiltonian, scheme: DetectionScheme, tau: npt.ArrayLike):
    """Failure probability of the first measurement after a wait τ"""
    if np.any(np.asarray(tau) < 0):
        raise NegativeTime("f(τ) is defined for τ >= 0")
    out = _overlap_squared(h, scheme.collapse, PSI_PLUS, tau)
    return float(out) if np.ndim(out) == 0 else out


def g_of_tau(h: TwoLevelHamiltonian, scheme: DetectionScheme, tau: npt.ArrayLike):
    """Failure probability of a measurement that follows a failed one"""
    if np.any(np.asarray(tau) < 0):
        raise NegativeTime("g(τ) is defined for τ >= 0")
    out = _overlap_squared(h, scheme.collapse, scheme.collapse, tau)
    return float(out) if np.ndim(out) == 0 else out


class SpectralForm:
    """g(τ) = c0 + c1·cos(ω τ)"""

    def __init__(self, c0: float, c1: float, omega: float):
        self.c0 = c0
        self.c1 = c1
        self.omega = omega

    def __call__(self, tau):
        return self.c0 + self.c1 * np.cos(self.omega * np.asarray(tau, dtype=np.float64))

    def laplace(self, s: complex) -> complex:
        """∫ g(τ)e^{-sτ}dτ"""
        return self.c0 / s + self.c1 * s / (s * s + self.omega**2)


def spectral_coefficients(h: TwoLevelHamiltonian, scheme: DetectionScheme) -> SpectralForm:
    w_plus, w_minus = h.weights_of(scheme.collapse)
    return SpectralForm(w_plus**2 + w_minus**2, 2.0 * w_plus * w_minus, h.gap)


def sigma_squared(h: TwoLevelHamiltonian) -> float:
    """Energy variance |⟨ψ₊|H|ψ₋⟩|² of the initial state"""
    return abs(complex(h.entries[0, 1])) ** 2


def g_laplace_poisson(h: TwoLevelHamiltonian, scheme: DetectionScheme, s: float) -> float:
    """g̃(s) by adaptive quadrature, or in closed form for a JC block"""
    if h.sector is not None:
        return jaynes_cummings.jc_g_laplace(h.sector, s)
    if s <= 0:
        raise InvalidParameter(f"g̃(s) needs s > 0, got {s!r}")
    value = forward_transform(lambda tau: g_of_tau(h, scheme, tau), s, frequency=h.gap)
    return value.real


def f_laplace_poisson(h: TwoLevelHamiltonian, scheme: DetectionScheme, s: float) -> float:
    match scheme:
        case DetectionScheme.SCHEME1:
            return g_laplace_poisson(h, scheme, s)
        case DetectionScheme.SCHEME2:
            return 1.0 / s - g_laplace_poisson(h, scheme, s)


def g_laplace_spectral(h: TwoLevelHamiltonian, r: float) -> float:
    """Exact g̃(r) for scheme 1 from r·g̃(r) = Σ |a_E|²|a_E'|² r²/(r² + (E-E')²)"""
    if r <= 0:
        raise InvalidParameter(f"Rate must be positive, got {r!r}")
    w = h.overlap_weights
    energies = h.eigenvalues
    total = 0.0
    for wa, ea in zip(w, energies):
        for wb, eb in zip(w, energies):
            total += wa * wb * r * r / (r * r + (ea - eb) ** 2)
    return total / r


def small_r_limit(h: TwoLevelHamiltonian) -> float:
    """A₀ = lim r·t̄_r as r → 0 for scheme 1"""
    w_plus, w_minus = h.overlap_weights
    overlap = w_plus**2 + w_minus**2
    if overlap >= 1.0:
        return math.inf
    return 1.0 / (1.0 - overlap)


def large_r_slope(h: TwoLevelHamiltonian) -> float:
    """lim t̄_r / r as r → ∞ for scheme 1 (Zeno regime)"""
    sigma2 = sigma_squared(h)
    return math.inf if sigma2 == 0 else 1.0 / (2.0 * sigma2)


def survival_laplace_poisson(
    h: TwoLevelHamiltonian, scheme: DetectionScheme, r: float, s: float
) -> float:
    """S̃_r(s) = [1 + r f̃(r+s)/(1 - r g̃(r+s))]/(r+s)"""
    if r <= 0 or s < 0:
        raise InvalidParameter(f"Need r > 0 and s >= 0, got r={r!r}, s={s!r}")
    x = r + s
    denom = 1.0 - r * g_laplace_poisson(h, scheme, x)
    if abs(denom) < POLE_TOL:
        raise PoleHit(f"1 - r·g̃(r+s) vanishes at r={r!r}, s={s!r}")
    return (1.0 + r * f_laplace_poisson(h, scheme, x) / denom) / x


def fdt_laplace_poisson(
    h: TwoLevelHamiltonian, scheme: DetectionScheme, r: float, s: float
) -> float:
    """F̃_r(s) = 1 - s·S̃_r(s)"""
    if s == 0:
        return 1.0
    return 1.0 - s * survival_laplace_poisson(h, scheme, r, s)


def mean_fdt_poisson(h: TwoLevelHamiltonian, scheme: DetectionScheme, r: float) -> float:
    if r <= 0:
        raise InvalidParameter(f"Rate must be positive, got {r!r}")
    match scheme:
        case DetectionScheme.SCHEME2:
            return 2.0 / r
        case DetectionScheme.SCHEME1:
            denom = 1.0 - r * g_laplace_poisson(h, scheme, r)
            if denom <= POLE_TOL:
                raise InfiniteMean(
                    "The interrogated state is never reached: 1 - r·g̃(r) = 0"
                )
            return 1.0 / (r * denom)


def _x_polynomials(form: SpectralForm) -> tuple[Polynomial, Polynomial]:
    """P(x) = x(x²+ω²) and Q(x) = x² + c0ω², so that g̃(x) = Q/P"""
    w2 = form.omega**2
    return Polynomial([0.0, w2, 0.0, 1.0]), Polynomial([form.c0 * w2, 0.0, 1.0])


def fdt_rational_poisson(
    h: TwoLevelHamiltonian, scheme: DetectionScheme, r: float
) -> RationalTransform:
    """Poissonian F̃_r(s) as an exact rational function of s"""
    if r <= 0:
        raise InvalidParameter(f"Rate must be positive, got {r!r}")
    form = spectral_coefficients(h, scheme)
    w2 = form.omega**2
    p, q = _x_polynomials(form)
    x = Polynomial([0.0, 1.0])
    denom = p - r * q
    match scheme:
        case DetectionScheme.SCHEME1:
            num = Polynomial([r * form.c1 * w2])
        case DetectionScheme.SCHEME2:
            num = r * (x * q + r * (w2 * (1.0 - 2.0 * form.c0) - x * x))
            denom = x * denom
    shift = Polynomial([r, 1.0])
    return RationalTransform(num(shift), denom(shift))


def transform_poles(h: TwoLevelHamiltonian, scheme: DetectionScheme, r: float) -> np.ndarray:
    """Zeros of 1 - r·g̃(r+s) in the s plane"""
    form = spectral_coefficients(h, scheme)
    p, q = _x_polynomials(form)
    return (p - r * q).roots().astype(np.complex128) - r


def maximal_time_poisson(h: TwoLevelHamiltonian, scheme: DetectionScheme, r: float) -> float:
    """t_m = -1/(slowest pole of the detection transform)"""
    if h.sector is not None:
        return jaynes_cummings.maximal_time(h.sector.with_rate(r))
    slowest = float(np.max(transform_poles(h, scheme, r).real))
    if slowest >= -POLE_TOL:
        return math.inf
    return -1.0 / slowest


def _complex_step(func: Callable[[complex], complex], x0: float) -> float:
    return complex(func(complex(x0, COMPLEX_STEP))).imag / COMPLEX_STEP


def second_moment_poisson(h: TwoLevelHamiltonian, scheme: DetectionScheme, r: float) -> float:
    """μ₂ = -2·dS̃_r/ds at s = 0, differentiated by complex step"""
    transforms = ProtocolTransforms(h, scheme)
    mean = mean_fdt_poisson(h, scheme, r)
    if not math.isfinite(mean):
        raise InfiniteMean("Second moment requires a finite mean")
    return -2.0 * _complex_step(lambda s: transforms.survival_poisson(r, s), 0.0)


def small_t_coefficient(
    h: TwoLevelHamiltonian, scheme: DetectionScheme, dist: WaitingTimeDistribution
) -> float:
    """c in F(t) ≈ c·t² (scheme 1) or the limit F(0⁺) (scheme 2)"""
    match scheme:
        case DetectionScheme.SCHEME1:
            return dist.p0 * sigma_squared(h)
        case DetectionScheme.SCHEME2:
            return dist.p0


def small_t_order(scheme: DetectionScheme) -> int:
    return 2 if scheme is DetectionScheme.SCHEME1 else 0


class ProtocolTransforms:
    """Transform evaluators of the two failure functions

    Properties:
    - form (SpectralForm): g(τ) = c0 + c1·cos(ωτ)
    - dist: waiting-time distribution for the renewal branch, if any
    - V0 (float): Ṽ(0), computed on first access

    All evaluators accept complex s.
    """

    def __init__(
        self,
        h: TwoLevelHamiltonian,
        scheme: DetectionScheme,
        dist: WaitingTimeDistribution | None = None,
    ):
        self.hamiltonian = h
        self.scheme = scheme
        self.form = spectral_coefficients(h, scheme)
        self.dist = dist
        self._v0: float | None = None

    def g_tilde(self, s: complex) -> complex:
        return self.form.laplace(s)

    def f_tilde(self, s: complex) -> complex:
        if self.scheme is DetectionScheme.SCHEME1:
            return self.g_tilde(s)
        return 1.0 / s - self.g_tilde(s)

    def _p(self, s: complex) -> complex:
        if self.dist is None:
            raise InvalidParameter("Renewal transforms need a waiting-time distribution")
        return complex(self.dist.laplace(s))

    def v_tilde(self, s: complex) -> complex:
        """∫ p(τ)g(τ)e^{-sτ}dτ"""
        form = self.form
        value = form.c0 * self._p(s)
        if form.c1 != 0.0:
            if form.omega == 0.0:
                value += form.c1 * self._p(s)
            else:
                shifted = self._p(s + 1j * form.omega) + self._p(s - 1j * form.omega)
                value += 0.5 * form.c1 * shifted
        return value

    def v_tilde_quadrature(self, s: complex = 0.0) -> complex:
        """Ṽ(s) by direct quadrature of p(τ)g(τ)e^{-sτ}.

        Runs to the protocol's transform horizon; the remainder comes from
        its density tail descriptor evaluated at s and s ± iω.
        """
        if self.dist is None:
            raise InvalidParameter("Renewal transforms need a waiting-time distribution")
        dist, form = self.dist, self.form
        horizon = dist.transform_horizon
        density_tail = dist.tail_descriptor(horizon)

        def remainder(x: complex) -> complex:
            value = form.c0 * complex(density_tail.remainder(x))
            if form.c1 != 0.0:
                up = density_tail.remainder(x + 1j * form.omega)
                down = density_tail.remainder(x - 1j * form.omega)
                value += 0.5 * form.c1 * complex(up + down)
            return value

        return forward_transform(
            lambda tau: dist.density(tau) * form(tau),
            s,
            tail=AnalyticTail(horizon, remainder),
            frequency=form.omega,
        )

    def u_tilde(self, s: complex) -> complex:
        """∫ p(τ)f(τ)e^{-sτ}dτ"""
        if self.scheme is DetectionScheme.SCHEME1:
            return self.v_tilde(s)
        return self._p(s) - self.v_tilde(s)

    @property
    def V0(self) -> float:
        if self._v0 is None:
            self._v0 = self.v_tilde(0.0).real
        return self._v0

    def survival_poisson(self, r: float, s: complex) -> complex:
        x = r + s
        denom = 1.0 - r * self.g_tilde(x)
        if abs(denom) < POLE_TOL:
            raise PoleHit(f"1 - r·g̃(r+s) vanishes at r={r!r}, s={s!r}")
        return (1.0 + r * self.f_tilde(x) / denom) / x

    def fdt_poisson(self, r: float, s: complex) -> complex:
        return 1.0 - s * self.survival_poisson(r, s)

    def fdt_renewal(self, s: complex) -> complex:
        p = self._p(s)
        v = self.v_tilde(s)
        denom = 1.0 - v
        if abs(denom) < POLE_TOL:
            raise PoleHit(f"1 - Ṽ(s) vanishes at s={s!r}")
        match self.scheme:
            case DetectionScheme.SCHEME1:
                return (p - v) / denom
            case DetectionScheme.SCHEME2:
                return 1.0 - (1.0 - p) * (1.0 + p - 2.0 * v) / denom

    def survival_renewal(self, s: complex) -> complex:
        """S̃(s) = (1 - F̃(s))/s"""
        return (1.0 - self.fdt_renewal(s)) / s


def fdt_laplace_renewal(
    h: TwoLevelHamiltonian,
    scheme: DetectionScheme,
    dist: WaitingTimeDistribution,
    s: float,
) -> float:
    """F̃(s) for renewal measurements with waiting-time density p(τ)"""
    if s < 0:
        raise InvalidParameter(f"s must be non-negative, got {s!r}")
    if s == 0:
        return 1.0
    return ProtocolTransforms(h, scheme, dist).fdt_renewal(s).real


def mean_fdt_renewal(
    h: TwoLevelHamiltonian, scheme: DetectionScheme, dist: WaitingTimeDistribution
) -> float:
    if not math.isfinite(dist.mean):
        raise InfiniteMean(f"{dist!r} has no finite mean waiting time")
    match scheme:
        case DetectionScheme.SCHEME2:
            return 2.0 * dist.mean
        case DetectionScheme.SCHEME1:
            v0 = ProtocolTransforms(h, scheme, dist).V0
            if 1.0 - v0 <= POLE_TOL:
                raise InfiniteMean("Ṽ(0) = 1: the interrogated state is never reached")
            return dist.mean / (1.0 - v0)


def tail_asymptote(
    h: TwoLevelHamiltonian, scheme: DetectionScheme, dist: WaitingTimeDistribution
) -> tuple[float, float]:
    """(amplitude, exponent) of F(t) ~ amplitude·t^{-exponent} at large t"""
    tail = dist.tail
    if tail is None:
        raise NotHeavyTailed(f"{dist!r} has no power-law tail")
    amplitude, mu = tail
    if abs(mu - round(mu)) < 1e-12:
        raise IntegerExponent(
            f"Tail exponent μ = {mu:g} is an integer; logarithmic corrections are not modelled"
        )
    exponent = mu + 1.0
    if amplitude == 0.0:
        return 0.0, exponent
    match scheme:
        case DetectionScheme.SCHEME1:
            v0 = ProtocolTransforms(h, scheme, dist).V0
            return amplitude / (1.0 - v0), exponent
        case DetectionScheme.SCHEME2:
            return 2.0 * amplitude, exponent
