import math

import numpy as np
import pytest

from firstdetect import InvalidMu, InvalidParameter, NegativeTime, NoFiniteOptimum
from firstdetect import jaynes_cummings as jc
from firstdetect import optimize
from firstdetect.laplace import invert_talbot, invert_talbot_grid, quad_checked
from firstdetect.qcore import DetectionScheme

S1 = DetectionScheme.SCHEME1
S2 = DetectionScheme.SCHEME2

RATE_MATRIX = [(0.1, 0.1, 37), (0.8, 0.1, 37), (3.0, 0.1, 37), (1.0, 0.5, 1), (0.2, 0.05, 10)]


@pytest.fixture()
def sector() -> jc.JcSector:
    """JC sector g = 0.1, n = 37 at r = 0.8"""
    return jc.JcSector(g=0.1, n=37, r=0.8)


@pytest.fixture()
def reachable_sector() -> jc.JcSector:
    """Sector whose oscillating poles sit well inside the Talbot contour up to t = 10"""
    return jc.JcSector(g=0.5, n=1, r=1.0)


"""
Sector
"""


def test_sector_validation():
    """Negative couplings, n < 1 and non-positive rates are rejected"""
    with pytest.raises(InvalidParameter):
        jc.JcSector(g=-0.1, n=1)
    with pytest.raises(InvalidParameter):
        jc.JcSector(g=0.1, n=0)
    with pytest.raises(InvalidParameter):
        jc.JcSector(g=0.1, n=2, r=0.0)


def test_sector_scales(sector):
    """a = g√n and μ = 2g²n/r²"""
    assert sector.coupling == pytest.approx(0.1 * math.sqrt(37))
    assert sector.mu_scale == pytest.approx(2 * 0.37 / 0.64)
    assert sector.with_rate(2.0).r == 2.0


def test_sector_hamiltonian_resonant(sector):
    """The block has equal diagonal entries and coupling g√n"""
    h = sector.hamiltonian()
    assert h.entries[0, 0] == pytest.approx(h.entries[1, 1])
    assert h.entries[0, 1] == pytest.approx(sector.coupling)
    assert h.sector is sector


def test_populations_sum_to_one(sector):
    """cos² + sin² = 1"""
    up, down = jc.jc_evolve_populations(sector, np.linspace(0, 10, 5))
    assert np.allclose(up + down, 1.0)


"""
Cubic roots
"""


@pytest.mark.parametrize("mu", np.logspace(-4, 4, 17))
def test_cubic_root_integrity(mu):
    """Vieta and polynomial residuals hold to 1e-12 relative to the size of their terms

    Absolute residuals cannot reach 1e-12: at μ = 1e4 the cubic itself evaluates to
    about 2.2e-10 at its double-precision roots.
    """
    roots = jc.cubic_roots(mu)
    lam = roots.as_array()
    scale = 1.0 + abs(lam[1])
    assert abs(lam.sum() + 2.0) < 1e-12 * scale
    assert abs(np.prod(lam) + mu) < 1e-12 * max(mu, 1.0) * scale
    pair_sum = lam[0] * lam[1] + lam[0] * lam[2] + lam[1] * lam[2]
    assert abs(pair_sum - (1.0 + 2.0 * mu)) < 1e-12 * (1.0 + 2.0 * mu) * scale
    for root in lam:
        size = abs(root) ** 3 + 2 * abs(root) ** 2 + (1 + 2 * mu) * abs(root) + mu
        assert abs(jc.cubic_polynomial(mu, root)) < 1e-12 * size


@pytest.mark.parametrize("mu", np.logspace(-4, 4, 9))
def test_discriminant_negative(mu):
    """One real root and a complex pair for every μ > 0"""
    assert jc.discriminant(mu) < 0
    roots = jc.cubic_roots(mu)
    assert roots.lam_i > 0
    assert roots.lam_r < roots.lam1 < 0


def test_cubic_matches_numpy():
    """Roots agree with numpy's companion-matrix solver"""
    mu = 1.15625
    ref = np.sort_complex(np.roots([1.0, 2.0, 1.0 + 2.0 * mu, mu]))
    assert np.allclose(np.sort_complex(jc.cubic_roots(mu).as_array()), ref, atol=1e-12)


def test_cubic_invalid_mu():
    """Raises InvalidMu for μ ≤ 0"""
    with pytest.raises(InvalidMu):
        jc.cubic_roots(0.0)
    with pytest.raises(InvalidMu):
        jc.cubic_roots(-1.0)


"""
Densities
"""


@pytest.mark.parametrize("r,g,n", RATE_MATRIX)
@pytest.mark.parametrize("scheme", [S1, S2])
def test_pdf_normalized(r, g, n, scheme):
    """∫F_r = 1 within 1e-8 and S_r(0) = 1"""
    sector = jc.JcSector(g=g, n=n, r=r)
    horizon = 60.0 * jc.maximal_time(sector)
    panels = np.linspace(0.0, horizon, 61)[1:-1]
    head, _ = quad_checked(lambda t: float(jc.pdf(sector, scheme, t)), 0.0, horizon, points=panels)
    tail = float(jc.survival(sector, scheme, horizon))
    assert head + tail == pytest.approx(1.0, abs=1e-8)
    assert jc.survival(sector, scheme, 0.0) == pytest.approx(1.0, abs=1e-12)


def test_pdf_small_t_scheme1(sector):
    """F(t)/(r g²n t²) ∈ [0.995, 1.005] at t = 1e-3/(g√n)"""
    t = 1e-3 / sector.coupling
    ratio = jc.pdf_scheme1(sector, t) / (sector.r * sector.coupling**2 * t * t)
    assert 0.995 <= ratio <= 1.005


def test_pdf_scheme2_at_zero(sector):
    """F(0⁺) = r for scheme 2"""
    assert jc.pdf_scheme2(sector, 0.0) == pytest.approx(sector.r, rel=1e-12)
    assert jc.pdf_scheme1(sector, 0.0) == pytest.approx(0.0, abs=1e-14)


def test_pdf_negative_time(sector):
    """Raises NegativeTime for t < 0"""
    with pytest.raises(NegativeTime):
        jc.pdf_scheme1(sector, -1.0)


def test_pdf_decoupled():
    """g = 0 has no density"""
    with pytest.raises(InvalidMu):
        jc.pdf_scheme1(jc.JcSector(g=0.0, n=4), 1.0)


def test_cdf_derivative_is_pdf(sector):
    """d(1 - S)/dt matches the PDF"""
    t = np.array([0.5, 2.0, 7.0, 15.0])
    h = 1e-5
    slope = (jc.cdf_scheme1(sector, t + h) - jc.cdf_scheme1(sector, t - h)) / (2 * h)
    assert np.allclose(slope, jc.pdf_scheme1(sector, t), atol=1e-8)
    slope2 = (jc.cdf_scheme2(sector, t + h) - jc.cdf_scheme2(sector, t - h)) / (2 * h)
    assert np.allclose(slope2, jc.pdf_scheme2(sector, t), atol=1e-8)


def test_pdf_non_negative(sector):
    """Both densities are non-negative on a fine grid"""
    t = np.linspace(0.0, 40.0, 2001)
    assert np.all(jc.pdf_scheme1(sector, t) >= -1e-15)
    assert np.all(jc.pdf_scheme2(sector, t) >= -1e-15)


def test_confluent_branch_continuity():
    """The density is continuous across the confluent threshold of λ_I"""
    sector = jc.JcSector(g=0.1, n=37, r=0.8)
    roots = jc.cubic_roots(sector.mu_scale)
    t = np.array([0.3, 1.0, 4.0])
    z = sector.r * t
    numer = (roots.mu, 0.0, 0.0)
    regular = jc._scaled_density(roots, numer, z)
    nudged = jc.CubicRoots(roots.mu, roots.lam1, roots.lam_r, 0.0)
    near = jc.CubicRoots(roots.mu, roots.lam1, roots.lam_r, 2e-8)
    assert np.allclose(jc._scaled_density(nudged, numer, z), jc._scaled_density(near, numer, z), rtol=1e-6)
    assert np.all(np.isfinite(regular))


@pytest.mark.parametrize("scheme", [S1, S2])
def test_talbot_matches_residues(reachable_sector, scheme):
    """Talbot inversion of F̃_r(s) agrees with the residue PDF within 1e-7"""
    t = np.linspace(0.1, 10.0, 25)
    values, failed = invert_talbot_grid(jc.fdt_transform(reachable_sector, scheme), t)
    assert failed == []
    assert np.max(np.abs(values - jc.pdf(reachable_sector, scheme, t))) < 1e-7


@pytest.mark.parametrize(
    "scheme,r,t,expected",
    [(S1, 0.8, 2.0, 0.27206673404669), (S2, 0.5, 1.0, 0.204933945186)],
)
def test_talbot_reference_values(scheme, r, t, expected):
    """Residue PDF and Talbot inversion of F̃_r agree on g = 0.1, n = 37 reference points"""
    sector = jc.JcSector(g=0.1, n=37, r=r)
    closed = float(jc.pdf(sector, scheme, t))
    assert closed == pytest.approx(expected, abs=1e-11)
    assert invert_talbot(jc.fdt_transform(sector, scheme), t) == pytest.approx(closed, abs=1e-8)


"""
Moments and time scales
"""


def test_moments_scheme1(sector):
    """t̄ = 2/r + r/(2g²n) and σ² = 4/r² + r²/(4g⁴n²)"""
    stats = jc.moments_scheme1(sector)
    a2 = sector.coupling**2
    assert stats.mean == pytest.approx(3.581081, abs=1e-6)
    assert stats.variance == pytest.approx(4 / 0.64 + 0.64 / (4 * a2 * a2), rel=1e-12)
    assert stats.small_t_coefficient == pytest.approx(0.8 * a2)


def test_moments_scheme2(sector):
    """t̄ = 2/r and σ² = 1/(g²n) + 4/r²"""
    stats = jc.moments(sector, S2)
    assert stats.mean == pytest.approx(2.5)
    assert stats.variance == pytest.approx(1 / sector.coupling**2 + 4 / 0.64, rel=1e-12)


@pytest.mark.parametrize("scheme", [S1, S2])
def test_moments_match_quadrature(sector, scheme):
    """Closed-form mean equals ∫t·F(t)dt"""
    horizon = 80.0 * jc.maximal_time(sector)
    panels = np.linspace(0.0, horizon, 81)[1:-1]
    mean, _ = quad_checked(
        lambda t: t * float(jc.pdf(sector, scheme, t)), 0.0, horizon, points=panels
    )
    assert mean == pytest.approx(jc.moments(sector, scheme).mean, rel=1e-8)


def test_optimal_rate(sector):
    """r* = 2g√n with t̄(r*) = 2/(g√n)"""
    r_star, t_star = jc.optimal_rate(sector)
    assert r_star == pytest.approx(1.216553, abs=1e-6)
    assert t_star == pytest.approx(2 / sector.coupling)


def test_optimal_rate_scheme2(sector):
    """Scheme 2 has no finite optimum"""
    with pytest.raises(NoFiniteOptimum):
        jc.optimal_rate(sector, S2)


def test_variance_co_minimum(sector):
    """The scheme 1 variance has its minimum at r* = 2g√n"""
    r_star = 2 * sector.coupling
    # d/dr (4/r² + r²/(4a⁴)) vanishes at r⁴ = 16a⁴
    assert (16 * sector.coupling**4) ** 0.25 == pytest.approx(r_star, abs=1e-9)

    def variance(r):
        return jc.moments_scheme1(sector.with_rate(r)).variance

    bracket = optimize.find_bracket(variance, 0.01)
    r_opt, _ = optimize.minimize_scalar(variance, bracket)
    assert r_opt == pytest.approx(r_star, rel=1e-6)


def test_maximal_time_asymptotes(sector):
    """r·t_m/2 → 1 for r → 0 and 2g²n·t_m/r → 1 for r → ∞"""
    r_star = 2 * sector.coupling
    low = sector.with_rate(1e-3 * r_star)
    high = sector.with_rate(1e3 * r_star)
    assert low.r * jc.maximal_time(low) / 2 == pytest.approx(1.0, rel=0.02)
    assert 2 * sector.coupling**2 * jc.maximal_time(high) / high.r == pytest.approx(1.0, rel=0.02)


@pytest.mark.parametrize("scheme", [S1, S2])
def test_maximal_time_from_log_linear_fit(sector, scheme):
    """The late-time slope of log F equals -1/t_m within 0.5%"""
    t_m = jc.maximal_time(sector)
    t = np.linspace(15 * t_m, 25 * t_m, 50)
    slope, _ = np.polyfit(t, np.log(jc.pdf(sector, scheme, t)), 1)
    assert -1.0 / slope == pytest.approx(t_m, rel=0.005)


def test_late_time_amplitude(sector):
    """F(t)·e^{t/t_m} approaches the λ₁ residue amplitude"""
    t_m = jc.maximal_time(sector)
    t = 30 * t_m
    amp = jc.tail_amplitude_scheme2(sector)
    assert jc.pdf_scheme2(sector, t) * math.exp(t / t_m) == pytest.approx(amp, rel=1e-4)
    assert jc.decay_rate(sector) == pytest.approx(1 / t_m)
    assert jc.oscillation_period(sector) > 0


def test_minimize_maximal_time(sector):
    """r_m* differs from r* by more than 1e-3 relative and minimizes t_m"""
    r_m, t_m = jc.minimize_maximal_time(sector)
    r_star = 2 * sector.coupling
    assert abs(r_m - r_star) / r_star > 1e-3
    for factor in (0.9, 1.1):
        assert jc.maximal_time(sector.with_rate(factor * r_m)) > t_m


def test_decoupled_maximal_time():
    """t_m is infinite without coupling"""
    assert math.isinf(jc.maximal_time(jc.JcSector(g=0.0, n=1)))


@pytest.mark.parametrize("g,n", [(0.1, 37), (0.75, 8)])
def test_maximal_time_minimizer_scaling(g, n):
    """r_m*(g, n) = g√n·r_m*(1, 1) and t_m·g√n is invariant"""
    unit_rate, unit_time = jc.minimize_maximal_time(jc.JcSector(g=1.0, n=1))
    sector = jc.JcSector(g=g, n=n)
    r_m, t_m = jc.minimize_maximal_time(sector)
    assert r_m == pytest.approx(sector.coupling * unit_rate, rel=1e-6)
    assert t_m * sector.coupling == pytest.approx(unit_time, rel=1e-9)


def test_maximal_time_minimum_over_random_rates(sector):
    """t_m(r_m*) ≤ t_m(r) for 100 random rates inside the search range"""
    r_m, t_m = jc.minimize_maximal_time(sector)
    r_star = 2 * sector.coupling
    rng = np.random.default_rng(31)
    for r in r_star * 10.0 ** rng.uniform(-2.5, 2.5, 100):
        assert t_m <= jc.maximal_time(sector.with_rate(float(r))) * (1.0 + 1e-12)


def test_oscillation_period_from_residual(sector):
    """Zero crossings of F - A·e^{-t/t_m} are spaced by half of 2π/(r·λ_I) within 1%"""
    t_m = jc.maximal_time(sector)
    amp = jc.late_time_amplitude(sector, S1)
    t = np.linspace(0.5, 16.0, 20001)
    residual = jc.pdf_scheme1(sector, t) - amp * np.exp(-t / t_m)
    idx = np.nonzero(np.diff(np.sign(residual)) != 0)[0]
    # linear interpolation between the grid points around each sign change
    crossings = t[idx] - residual[idx] * (t[idx + 1] - t[idx]) / (residual[idx + 1] - residual[idx])
    assert len(crossings) >= 3
    period = 2.0 * float(np.mean(np.diff(crossings)))
    assert period == pytest.approx(jc.oscillation_period(sector), rel=0.01)
