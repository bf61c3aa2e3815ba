"""Core domain types: states, Hamiltonians, detection schemes and waiting-time
distributions for the measurement protocol.

Conventions:
- hbar = 1, so Hamiltonian entries carry units of angular frequency.
- Basis index 0 is the initial state ψ₊, basis index 1 is ψ₋.
- All values are immutable after construction; arrays are flagged read-only.
"""

from __future__ import annotations

import abc
import logging
import math
from enum import Enum
from typing import Any, Callable

import numpy as np
import numpy.typing as npt
from scipy import special

from firstdetect import (
    DivergentTransform,
    InvalidParameter,
    NegativeTime,
    NonHermitian,
    NonNormalized,
)
from firstdetect.laplace import (
    TRUNCATION_DECADES,
    AnalyticTail,
    forward_transform,
    quad_checked,
)

logger = logging.getLogger(__name__)

ComplexScalar = complex
FloatArray = npt.NDArray[np.float64]
ComplexArray = npt.NDArray[np.complex128]

HERMITIAN_TOL = 1e-9
NORM_TOL = 1e-12
# q(τ) below this is dropped from transforms of light-tailed protocols
SURVIVAL_FLOOR = 1e-17
# Lomax transforms switch to the closed-form remainder this many scales out
LOMAX_HORIZON = 50.0


def _frozen(values: npt.ArrayLike, dtype: Any = np.complex128) -> np.ndarray:
    arr = np.array(values, dtype=dtype)
    if not np.all(np.isfinite(arr)):
        raise InvalidParameter(f"Non-finite value in {arr!r}")
    arr.setflags(write=False)
    return arr


class PureState:
    """Normalized two-component state vector

    Properties:
    - amplitudes (ndarray): complex amplitudes in the (ψ₊, ψ₋) basis
    """

    def __init__(self, amplitudes: npt.ArrayLike, normalize: bool = False):
        amps = np.array(amplitudes, dtype=np.complex128).reshape(2)
        norm = float(np.linalg.norm(amps))
        if normalize:
            if norm == 0.0:
                raise NonNormalized("Cannot normalize the zero vector")
            amps = amps / norm
        elif abs(norm * norm - 1.0) > NORM_TOL:
            raise NonNormalized(f"State norm² = {norm * norm!r}, expected 1")
        self.amplitudes = _frozen(amps)

    @classmethod
    def basis(cls, index: int) -> PureState:
        amps = np.zeros(2, dtype=np.complex128)
        amps[index] = 1.0
        return cls(amps)

    def overlap(self, other: PureState) -> complex:
        """⟨self|other⟩"""
        return complex(np.vdot(self.amplitudes, other.amplitudes))

    def probability(self, other: PureState) -> float:
        return abs(self.overlap(other)) ** 2

    def norm(self) -> float:
        return float(np.linalg.norm(self.amplitudes))

    def __repr__(self) -> str:
        a, b = self.amplitudes
        return f"PureState({a:.6g}, {b:.6g})"


PSI_PLUS = PureState.basis(0)
PSI_MINUS = PureState.basis(1)


class DetectionScheme(Enum):
    """Which basis state is interrogated by the detector

    - `SCHEME1` detect ψ₋ after starting in ψ₊; failures collapse onto ψ₊
    - `SCHEME2` detect the initial state ψ₊ (return problem); failures collapse onto ψ₋
    """

    SCHEME1 = 1
    SCHEME2 = 2

    @property
    def interrogated(self) -> PureState:
        match self:
            case DetectionScheme.SCHEME1:
                return PSI_MINUS
            case DetectionScheme.SCHEME2:
                return PSI_PLUS

    @property
    def collapse(self) -> PureState:
        match self:
            case DetectionScheme.SCHEME1:
                return PSI_PLUS
            case DetectionScheme.SCHEME2:
                return PSI_MINUS

    @classmethod
    def parse(cls, value: str | int) -> DetectionScheme:
        try:
            return cls(int(value))
        except (TypeError, ValueError) as exc:
            raise InvalidParameter(f"Unknown detection scheme: {value!r}") from exc


class TwoLevelHamiltonian:
    """2×2 Hermitian Hamiltonian with a cached closed-form eigen-decomposition

    Properties:
    - entries (ndarray): the 2×2 complex matrix
    - eigenvalues (tuple): (E₊, E₋) with E₊ ≥ E₋
    - eigenvectors (ndarray): columns are |E₊⟩, |E₋⟩
    - overlap_weights (tuple): |⟨E|ψ₊⟩|² for E₊, E₋
    - sector: the Jaynes-Cummings sector this block was built from, if any
    """

    def __init__(self, entries: npt.ArrayLike, sector: Any = None):
        h = np.array(entries, dtype=np.complex128).reshape(2, 2)
        if not np.all(np.isfinite(h)):
            raise InvalidParameter("Hamiltonian entries must be finite")
        asym = float(np.max(np.abs(h - h.conj().T)))
        if asym > HERMITIAN_TOL:
            raise NonHermitian(
                f"Hamiltonian is not Hermitian: max |H - H†| = {asym:.3e}"
            )
        # Symmetrize away sub-tolerance noise
        h = 0.5 * (h + h.conj().T)
        self.entries = _frozen(h)
        self.sector = sector

        a = float(h[0, 0].real)
        d = float(h[1, 1].real)
        b = complex(h[0, 1])
        mean = 0.5 * (a + d)
        half_gap = math.hypot(0.5 * (a - d), abs(b))
        e_plus = mean + half_gap
        e_minus = mean - half_gap

        if half_gap == 0.0:
            vecs = np.eye(2, dtype=np.complex128)
        else:
            if a >= d:
                v = np.array([e_plus - d, b.conjugate()], dtype=np.complex128)
            else:
                v = np.array([b, e_plus - a], dtype=np.complex128)
            v /= np.linalg.norm(v)
            w = np.array([-v[1].conjugate(), v[0].conjugate()], dtype=np.complex128)
            vecs = np.column_stack([v, w])

        self.eigenvalues: tuple[float, float] = (e_plus, e_minus)
        self.eigenvectors = _frozen(vecs)
        weights = np.abs(vecs[0, :]) ** 2
        self.overlap_weights: tuple[float, float] = (float(weights[0]), float(weights[1]))

    @property
    def gap(self) -> float:
        """E₊ - E₋"""
        return self.eigenvalues[0] - self.eigenvalues[1]

    def weights_of(self, state: PureState) -> tuple[float, float]:
        """|⟨E|state⟩|² for E₊, E₋"""
        c = self.eigenvectors.conj().T @ state.amplitudes
        w = np.abs(c) ** 2
        return float(w[0]), float(w[1])

    def reconstruct(self) -> ComplexArray:
        """V·diag(E)·V†"""
        v = self.eigenvectors
        return v @ np.diag(np.array(self.eigenvalues, dtype=np.complex128)) @ v.conj().T

    def propagate(self, amplitudes: ComplexArray, tau: npt.ArrayLike) -> ComplexArray:
        """Apply e^{-iHτ} to one or many amplitude rows.

        `amplitudes` has shape (2,) or (m, 2); `tau` is a scalar or shape (m,).
        """
        v = self.eigenvectors
        energies = np.asarray(self.eigenvalues, dtype=np.float64)
        tau_arr = np.asarray(tau, dtype=np.float64)
        coeffs = amplitudes @ v.conj()
        phases = np.exp(-1j * np.multiply.outer(tau_arr, energies))
        return (coeffs * phases) @ v.T

    def __repr__(self) -> str:
        return f"TwoLevelHamiltonian({self.entries.tolist()!r})"


def make_hamiltonian(entries: npt.ArrayLike, sector: Any = None) -> TwoLevelHamiltonian:
    """Validate and decompose a 2×2 Hermitian matrix"""
    return TwoLevelHamiltonian(entries, sector=sector)


def swap_basis(h: TwoLevelHamiltonian) -> TwoLevelHamiltonian:
    """Relabel the basis so that index 1 becomes the initial state"""
    perm = np.array([[0, 1], [1, 0]], dtype=np.complex128)
    return TwoLevelHamiltonian(perm @ h.entries @ perm)


class WaitingTimeDistribution(abc.ABC):
    """Density p(τ) of the time between two consecutive measurements"""

    name: str = ""

    @abc.abstractmethod
    def density(self, tau: npt.ArrayLike) -> FloatArray | float:
        """p(τ) for τ ≥ 0"""

    @abc.abstractmethod
    def survival(self, tau: npt.ArrayLike) -> FloatArray | float:
        """q(τ) = ∫_τ^∞ p"""

    @abc.abstractmethod
    def laplace(self, s: complex) -> complex:
        """p̃(s), analytically continued to complex s where possible"""

    @abc.abstractmethod
    def sample(self, rng: np.random.Generator, size: int) -> FloatArray:
        """Draw i.i.d. waiting times"""

    @property
    @abc.abstractmethod
    def mean(self) -> float:
        """⟨τ⟩, infinite when it diverges"""

    @property
    @abc.abstractmethod
    def p0(self) -> float:
        """p(0⁺)"""

    @property
    @abc.abstractmethod
    def scale(self) -> float:
        """Characteristic time of the distribution"""

    @property
    def tail(self) -> tuple[float, float] | None:
        """(A, μ_tail) when p(τ) ~ A·τ^{-(μ_tail+1)}, otherwise None"""
        return None

    @property
    def heavy_tailed(self) -> bool:
        return self.tail is not None

    @property
    def transform_horizon(self) -> float:
        """Time past which forward transforms use the tail descriptors"""
        return TRUNCATION_DECADES * self.scale

    def tail_descriptor(self, horizon: float) -> AnalyticTail:
        """Remainder of ∫p(τ)e^{-sτ}dτ beyond `horizon`, negligible for light tails"""
        return AnalyticTail(horizon, lambda s: 0.0j)

    def survival_tail(self, horizon: float) -> AnalyticTail:
        """Remainder of ∫q(τ)e^{-sτ}dτ beyond `horizon`, negligible for light tails"""
        return AnalyticTail(horizon, lambda s: 0.0j)

    def survival_laplace(self, s: complex) -> complex:
        """q̃(s) = ∫q(τ)e^{-sτ}dτ by quadrature, with q̃(0) = ⟨τ⟩.

        Computed independently of p̃, so p̃(s) + s·q̃(s) = 1 is a real check.
        """
        s = complex(s)
        if s == 0:
            return complex(self.mean)
        tail = self.survival_tail(self.transform_horizon)
        return forward_transform(self.survival, s, tail=tail)

    @abc.abstractmethod
    def params(self) -> dict[str, float]:
        """Parameters as a plain dict for reports"""

    def describe(self) -> str:
        args = " ".join(f"{v:g}" for v in self.params().values())
        return f"{self.name} {args}"

    def __repr__(self) -> str:
        args = ", ".join(f"{k}={v!r}" for k, v in self.params().items())
        return f"{type(self).__name__}({args})"


def _positive(name: str, value: float) -> float:
    value = float(value)
    if not math.isfinite(value) or value <= 0.0:
        raise InvalidParameter(f"{name} must be a positive finite number, got {value!r}")
    return value


def _real_below(s: complex, bound: float) -> bool:
    return complex(s).imag == 0.0 and complex(s).real <= bound


class Exponential(WaitingTimeDistribution):
    """Poissonian protocol, p(τ) = r·e^{-rτ}"""

    name = "exponential"

    def __init__(self, rate: float):
        self.rate = _positive("rate", rate)

    def density(self, tau):
        t = np.asarray(tau, dtype=np.float64)
        return self.rate * np.exp(-self.rate * t)

    def survival(self, tau):
        t = np.asarray(tau, dtype=np.float64)
        return np.exp(-self.rate * t)

    def laplace(self, s: complex) -> complex:
        if _real_below(s, -self.rate):
            raise DivergentTransform(
                f"Exponential transform diverges at s = {s!r} (rate {self.rate})"
            )
        return self.rate / (self.rate + s)

    def sample(self, rng, size):
        return rng.exponential(1.0 / self.rate, size)

    @property
    def mean(self) -> float:
        return 1.0 / self.rate

    @property
    def p0(self) -> float:
        return self.rate

    @property
    def scale(self) -> float:
        return 1.0 / self.rate

    def params(self):
        return {"rate": self.rate}


class Gamma(WaitingTimeDistribution):
    """Light-tailed non-exponential waiting times with shape k and scale θ"""

    name = "gamma"

    def __init__(self, shape: float, scale: float):
        self.shape = _positive("shape", shape)
        self.theta = _positive("scale", scale)

    def density(self, tau):
        t = np.asarray(tau, dtype=np.float64)
        k, theta = self.shape, self.theta
        with np.errstate(divide="ignore"):
            log_p = (
                (k - 1.0) * np.log(t / theta) - t / theta - special.gammaln(k) - np.log(theta)
            )
        out = np.exp(log_p)
        if k == 1.0:
            out = np.where(t == 0.0, 1.0 / theta, out)
        return out

    def survival(self, tau):
        t = np.asarray(tau, dtype=np.float64)
        return special.gammaincc(self.shape, t / self.theta)

    def laplace(self, s: complex) -> complex:
        if _real_below(s, -1.0 / self.theta):
            raise DivergentTransform(
                f"Gamma transform diverges at s = {s!r} (scale {self.theta})"
            )
        return complex(np.power(1.0 + self.theta * complex(s), -self.shape))

    @property
    def transform_horizon(self) -> float:
        return self.theta * float(special.gammainccinv(self.shape, SURVIVAL_FLOOR))

    def sample(self, rng, size):
        return rng.gamma(self.shape, self.theta, size)

    @property
    def mean(self) -> float:
        return self.shape * self.theta

    @property
    def p0(self) -> float:
        if self.shape < 1.0:
            return math.inf
        if self.shape == 1.0:
            return 1.0 / self.theta
        return 0.0

    @property
    def scale(self) -> float:
        return self.theta

    def params(self):
        return {"shape": self.shape, "scale": self.theta}


class Lomax(WaitingTimeDistribution):
    """Heavy-tailed waiting times, p(τ) = (μ/τ₀)(1+τ/τ₀)^{-(μ+1)}

    p(0) = μ/τ₀ is finite and the tail amplitude is A = μ·τ₀^μ.
    """

    name = "lomax"

    def __init__(self, tail_exponent: float, scale: float):
        self.tail_exponent = _positive("tail exponent", tail_exponent)
        self.tau0 = _positive("scale", scale)

    def density(self, tau):
        t = np.asarray(tau, dtype=np.float64)
        mu = self.tail_exponent
        return (mu / self.tau0) * np.power(1.0 + t / self.tau0, -(mu + 1.0))

    def survival(self, tau):
        t = np.asarray(tau, dtype=np.float64)
        return np.power(1.0 + t / self.tau0, -self.tail_exponent)

    def _complex_density(self, z: complex) -> complex:
        mu = self.tail_exponent
        return (mu / self.tau0) * (1.0 + z / self.tau0) ** (-(mu + 1.0))

    def _complex_survival(self, z: complex) -> complex:
        return (1.0 + z / self.tau0) ** (-self.tail_exponent)

    def _ray_transform(self, func: Callable[[complex], complex], s: complex) -> complex:
        """∫₀^∞ func(τ)e^{-sτ}dτ for s off the negative real axis"""
        if s.imag == 0.0 and s.real < 0.0:
            raise DivergentTransform(
                f"Lomax transform has a branch cut on the negative real axis, s = {s!r}"
            )
        # Integrate along the ray on which s·τ is real and positive
        modulus = abs(s)
        phase = complex(np.exp(-1j * np.angle(s)))

        def integrand(v: float) -> complex:
            return func(v * phase / modulus) * math.exp(-v)

        re, _ = quad_checked(lambda v: integrand(v).real, 0.0, np.inf, epsrel=1e-12)
        im, _ = quad_checked(lambda v: integrand(v).imag, 0.0, np.inf, epsrel=1e-12)
        return phase / modulus * complex(re, im)

    def laplace(self, s: complex) -> complex:
        s = complex(s)
        if s == 0:
            return 1.0 + 0.0j
        return self._ray_transform(self._complex_density, s)

    @property
    def transform_horizon(self) -> float:
        return LOMAX_HORIZON * self.tau0

    def tail_descriptor(self, horizon: float) -> AnalyticTail:
        """Remainder of ∫p(τ)e^{-sτ} beyond `horizon`.

        p(T+u) = q(T)·p'(u) where p' is a Lomax density with scale τ₀+T.
        """
        shifted = Lomax(self.tail_exponent, self.tau0 + horizon)
        q_horizon = float(self.survival(horizon))

        def remainder(s: complex) -> complex:
            return complex(np.exp(-s * horizon)) * q_horizon * shifted.laplace(s)

        return AnalyticTail(horizon, remainder)

    def survival_tail(self, horizon: float) -> AnalyticTail:
        """Remainder of ∫q(τ)e^{-sτ} beyond `horizon`, from q(T+u) = q(T)·q'(u)"""
        shifted = Lomax(self.tail_exponent, self.tau0 + horizon)
        q_horizon = float(self.survival(horizon))

        def remainder(s: complex) -> complex:
            s = complex(s)
            if s == 0:
                return complex(q_horizon * shifted.mean)
            transform = shifted._ray_transform(shifted._complex_survival, s)
            return complex(np.exp(-s * horizon)) * q_horizon * transform

        return AnalyticTail(horizon, remainder)

    def sample(self, rng, size):
        u = 1.0 - rng.random(size)
        return self.tau0 * (np.power(u, -1.0 / self.tail_exponent) - 1.0)

    @property
    def mean(self) -> float:
        if self.tail_exponent <= 1.0:
            return math.inf
        return self.tau0 / (self.tail_exponent - 1.0)

    @property
    def p0(self) -> float:
        return self.tail_exponent / self.tau0

    @property
    def scale(self) -> float:
        return self.tau0

    @property
    def tail(self) -> tuple[float, float]:
        mu = self.tail_exponent
        return mu * self.tau0**mu, mu

    def params(self):
        return {"tail_exponent": self.tail_exponent, "scale": self.tau0}


def waiting_time_density(dist: WaitingTimeDistribution, tau: float) -> float:
    if tau < 0:
        raise NegativeTime(f"Waiting time density is undefined at τ = {tau!r}")
    return float(dist.density(tau))


def waiting_time_laplace(dist: WaitingTimeDistribution, s: float) -> float:
    if s == 0:
        return 1.0
    return complex(dist.laplace(s)).real


class FirstDetectionStats:
    """Summary statistics of the first-detection time

    Properties:
    - mean (float): t̄_r
    - second_moment (float): μ₂
    - variance (float): σ²_fd = μ₂ - t̄_r²
    - t_m (float): maximal waiting scale, reciprocal of the slowest decay rate
    - small_t_coefficient (float): c in F ≈ c·t² (scheme 1) or F(0⁺) (scheme 2)
    - pdf: optional callable t -> F_r(t)
    """

    def __init__(
        self,
        mean: float,
        second_moment: float,
        t_m: float,
        small_t_coefficient: float,
        pdf: Any = None,
    ):
        self.mean = float(mean)
        self.second_moment = float(second_moment)
        self.t_m = float(t_m)
        self.small_t_coefficient = float(small_t_coefficient)
        self.pdf = pdf
        variance = self.second_moment - self.mean**2
        if variance < -1e-9 * max(self.second_moment, 1.0):
            raise InvalidParameter(
                f"Second moment {self.second_moment!r} smaller than mean² {self.mean**2!r}"
            )
        self.variance = max(variance, 0.0)

    def as_dict(self) -> dict[str, float]:
        return {
            "mean": self.mean,
            "second_moment": self.second_moment,
            "variance": self.variance,
            "t_m": self.t_m,
            "small_t_coefficient": self.small_t_coefficient,
        }
