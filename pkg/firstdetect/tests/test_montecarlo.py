import math

import numpy as np
import pytest

from firstdetect import CutoffTooSmall, InvalidParameter, NumericalFailure
from firstdetect import jaynes_cummings as jc
from firstdetect import montecarlo as mc
from firstdetect import twolevel
from firstdetect.qcore import DetectionScheme, Exponential, Lomax

S1 = DetectionScheme.SCHEME1
S2 = DetectionScheme.SCHEME2


@pytest.fixture()
def sector() -> jc.JcSector:
    """JC sector g = 0.1, n = 37 at r = 0.8"""
    return jc.JcSector(g=0.1, n=37, r=0.8)


@pytest.fixture()
def scheme1_config(sector) -> mc.TrajectoryConfig:
    """2·10⁵ scheme 1 trajectories with Poissonian measurements at r = 0.8"""
    return mc.TrajectoryConfig(
        sector.hamiltonian(), S1, Exponential(sector.r), 200_000, seed=11, block_size=50_000
    )


@pytest.fixture()
def scheme1_ensemble(scheme1_config) -> mc.EmpiricalFirstDetection:
    """Ensemble of the scheme 1 configuration"""
    return mc.run_ensemble(scheme1_config)


"""
Configuration and streams
"""


def test_config_validation(sector):
    """Rejects empty ensembles, bad cutoffs and bad seeds"""
    h = sector.hamiltonian()
    with pytest.raises(InvalidParameter):
        mc.TrajectoryConfig(h, S1, Exponential(1.0), 0)
    with pytest.raises(InvalidParameter):
        mc.TrajectoryConfig(h, S1, Exponential(1.0), 10, t_cutoff=-1.0)
    with pytest.raises(InvalidParameter):
        mc.TrajectoryConfig(h, S1, Exponential(1.0), 10, seed=-3)
    with pytest.raises(InvalidParameter):
        mc.TrajectoryConfig(h, S1, Exponential(1.0), 10, seed=2**64)


def test_default_cutoff(sector):
    """50 × analytic mean for light tails and 10⁴τ₀ for heavy tails"""
    h = sector.hamiltonian()
    assert mc.default_cutoff(h, S1, Exponential(0.8)) == pytest.approx(50 * 3.581081, rel=1e-6)
    assert mc.default_cutoff(h, S2, Lomax(2.5, 1.0)) == pytest.approx(1e4)


def test_blocks_split(sector):
    """Trajectories are cut into fixed-size blocks"""
    cfg = mc.TrajectoryConfig(sector.hamiltonian(), S1, Exponential(1.0), 25, block_size=10)
    assert cfg.blocks() == [10, 10, 5]


def test_block_generator_streams():
    """Same key gives the same numbers, a different block or stream does not"""
    a = mc.block_generator(42, 3).random(4)
    assert np.array_equal(a, mc.block_generator(42, 3).random(4))
    assert not np.array_equal(a, mc.block_generator(42, 4).random(4))
    assert not np.array_equal(a, mc.block_generator(42, 3, mc.Stream.WEIGHTED).random(4))


"""
Single trajectories
"""


def test_single_trajectory_decoupled_scheme2():
    """g = 0, scheme 2: detection happens at the first measurement"""
    h = jc.JcSector(g=0.0, n=5).hamiltonian()
    cfg = mc.TrajectoryConfig(h, S2, Exponential(1.0), 1, t_cutoff=1e3)
    rng = mc.block_generator(5, 0)
    first_wait = float(mc.block_generator(5, 0).exponential(1.0))
    assert mc.sample_trajectory(cfg, rng) == pytest.approx(first_wait)


def test_single_trajectory_censored():
    """g = 0, scheme 1: the trajectory runs into the cutoff"""
    h = jc.JcSector(g=0.0, n=5).hamiltonian()
    cfg = mc.TrajectoryConfig(h, S1, Exponential(1.0), 1, t_cutoff=20.0)
    assert mc.sample_trajectory(cfg, mc.block_generator(1, 0)) is None


"""
Ensembles
"""


def test_decoupled_scheme1_all_censored():
    """No detection ever occurs and the cutoff warning fires"""
    h = jc.JcSector(g=0.0, n=5).hamiltonian()
    cfg = mc.TrajectoryConfig(h, S1, Exponential(1.0), 2000, t_cutoff=30.0)
    with pytest.warns(CutoffTooSmall):
        ensemble = mc.run_ensemble(cfg)
    assert ensemble.n_censored == 2000
    assert ensemble.censored_fraction == 1.0
    assert ensemble.histogram_mass == 0.0


def test_decoupled_scheme2_is_exponential():
    """g = 0, scheme 2: detection times follow the waiting-time law"""
    r = 1.5
    h = jc.JcSector(g=0.0, n=5).hamiltonian()
    cfg = mc.TrajectoryConfig(h, S2, Exponential(r), 50_000, t_cutoff=40.0, seed=3)
    ensemble = mc.run_ensemble(cfg)
    assert np.all(ensemble.epochs == 1)
    assert abs(ensemble.z_score(1.0 / r)) < 4
    _, pvalue = ensemble.ks_test(lambda t: 1.0 - np.exp(-r * t))
    assert pvalue > 0.01


def test_scheme1_mean(scheme1_ensemble):
    """Empirical mean within 4 SE of 2/r + r/(2g²n) = 3.581081"""
    assert scheme1_ensemble.n_censored == 0
    assert abs(scheme1_ensemble.z_score(3.581081)) < 4


def test_scheme1_variance(scheme1_ensemble, sector):
    """Empirical variance within 4 SE of the closed form"""
    expected = jc.moments_scheme1(sector).variance
    z = (scheme1_ensemble.variance - expected) / scheme1_ensemble.variance_se
    assert abs(z) < 4


def test_scheme2_mean():
    """JC scheme 2, r = 1: mean within 4 SE of 2"""
    h = jc.JcSector(g=0.1, n=37, r=1.0).hamiltonian()
    ensemble = mc.run_ensemble(mc.TrajectoryConfig(h, S2, Exponential(1.0), 200_000, seed=42))
    assert abs(ensemble.z_score(2.0)) < 4


def test_ks_against_closed_form(scheme1_ensemble, sector):
    """Kolmogorov-Smirnov p-value against the closed-form CDF exceeds 1%"""
    statistic, pvalue = scheme1_ensemble.ks_test(lambda t: jc.cdf_scheme1(sector, t))
    assert pvalue > 0.01
    assert statistic < 1.63 / math.sqrt(scheme1_ensemble.times.size)


def test_histogram_mass_with_censoring(sector):
    """Histogram mass plus censored fraction is one"""
    cfg = mc.TrajectoryConfig(
        sector.hamiltonian(), S1, Exponential(0.8), 20_000, t_cutoff=3.0, bins=50
    )
    with pytest.warns(CutoffTooSmall):
        ensemble = mc.run_ensemble(cfg)
    assert ensemble.histogram_mass + ensemble.censored_fraction == pytest.approx(1.0, abs=1e-12)
    assert ensemble.counts.size == 50
    assert ensemble.edges[-1] == 3.0
    frame = ensemble.histogram_frame()
    assert list(frame.columns) == ["t_left", "t_right", "count", "density"]


def test_deterministic_across_workers(sector):
    """Same seed gives identical results for 1 and 2 workers"""
    h = sector.hamiltonian()
    one = mc.run_ensemble(
        mc.TrajectoryConfig(h, S1, Exponential(0.8), 5000, seed=99, workers=1, block_size=1000)
    )
    two = mc.run_ensemble(
        mc.TrajectoryConfig(h, S1, Exponential(0.8), 5000, seed=99, workers=2, block_size=1000)
    )
    assert np.array_equal(one.detection_times, two.detection_times)
    assert np.array_equal(one.counts, two.counts)
    assert one.summary() == two.summary()


def test_different_seeds_differ(sector):
    """Different seeds give different samples"""
    h = sector.hamiltonian()
    a = mc.run_ensemble(mc.TrajectoryConfig(h, S1, Exponential(0.8), 500, seed=1))
    b = mc.run_ensemble(mc.TrajectoryConfig(h, S1, Exponential(0.8), 500, seed=2))
    assert not np.array_equal(a.detection_times, b.detection_times)


def test_renewal_lomax_scheme2_mean(sector):
    """Lomax(2.5, 1), scheme 2: mean within 4 SE of 2⟨τ⟩ = 4/3"""
    cfg = mc.TrajectoryConfig(sector.hamiltonian(), S2, Lomax(2.5, 1.0), 200_000, seed=8)
    ensemble = mc.run_ensemble(cfg)
    assert abs(ensemble.z_score(4.0 / 3.0)) < 4


"""
Survival estimators
"""


def test_survival_estimate_shape(scheme1_ensemble):
    """Ŝ(0) = 1 and Ŝ is non-increasing"""
    grid = np.linspace(0.0, 30.0, 61)
    estimate, stderr = mc.survival_estimate(scheme1_ensemble, grid)
    assert estimate[0] == 1.0
    assert np.all(np.diff(estimate) <= 0)
    assert np.all(stderr >= 0)


def test_survival_estimate_matches_closed_form(scheme1_ensemble, sector):
    """Ŝ(t) lies within 4 binomial errors of the closed form"""
    grid = np.array([0.5, 1.0, 2.0, 4.0, 8.0, 16.0])
    estimate, stderr = mc.survival_estimate(scheme1_ensemble, grid)
    exact = jc.survival(sector, S1, grid)
    assert np.all(np.abs(estimate - exact) < 4 * stderr + 1e-12)


def test_survival_grid_outside_cutoff(scheme1_ensemble):
    """Raises InvalidParameter beyond the cutoff"""
    with pytest.raises(InvalidParameter):
        mc.survival_estimate(scheme1_ensemble, [scheme1_ensemble.t_cutoff * 2])


def test_weighted_estimator_agrees(sector):
    """Weighted and Bernoulli estimators agree within 3 combined SE at r = 1, t = 3"""
    at_one = sector.with_rate(1.0)
    h = at_one.hamiltonian()
    cfg = mc.TrajectoryConfig(h, S1, Exponential(1.0), 100_000, seed=17)
    weighted, w_se = mc.weighted_survival_check(cfg, 3.0)
    (bernoulli,), (b_se,) = mc.survival_estimate(cfg, [3.0])
    assert abs(weighted - bernoulli) < 3 * math.hypot(w_se, b_se)
    assert abs(weighted - jc.survival(at_one, S1, 3.0)) < 4 * w_se


def test_weighted_no_measurement():
    """With no measurement before t the weight is one"""
    h = jc.JcSector(g=0.1, n=37).hamiltonian()
    cfg = mc.TrajectoryConfig(h, S1, Exponential(1e-6), 1000, t_cutoff=1.0)
    weighted, se = mc.weighted_survival_check(cfg, 1.0)
    assert weighted == pytest.approx(1.0, abs=1e-6)


def test_weighted_single_measurement():
    """A single measurement at τ₁ carries weight f(τ₁) = g(τ₁) for scheme 1"""
    h = jc.JcSector(g=0.3, n=2).hamiltonian()
    dist = Exponential(0.5)
    cfg = mc.TrajectoryConfig(h, S1, dist, 1, t_cutoff=100.0, seed=4)
    waits = mc.block_generator(4, 0, mc.Stream.WEIGHTED).exponential(2.0, 2)
    t = float(waits[0] + 0.5 * waits[1])
    weighted, _ = mc.weighted_survival_check(cfg, t)
    assert weighted == pytest.approx(twolevel.f_of_tau(h, S1, waits[0]))


"""
Protocol statistics
"""


def test_measurement_counts_poisson():
    """Counts at t ∈ {1, 5, 20} pass a chi-square test against Poisson(rt)"""
    r = 0.7
    counts = mc.sample_measurement_counts(Exponential(r), [1.0, 5.0, 20.0], 20_000, seed=5)
    for t, n in counts.items():
        _, pvalue = mc.poisson_chi_square(n, r * t)
        assert pvalue > 0.01
        assert np.bincount(n).sum() == n.size


def test_measurement_counts_monotone():
    """N(t) never decreases in t"""
    counts = mc.sample_measurement_counts(Lomax(1.5, 1.0), [0.5, 2.0, 8.0], 1000, seed=6)
    assert np.all(counts[2.0] >= counts[0.5])
    assert np.all(counts[8.0] >= counts[2.0])


def test_chi_square_detects_wrong_rate():
    """Counts drawn at one rate fail the test against another"""
    counts = mc.sample_measurement_counts(Exponential(1.0), [10.0], 20_000, seed=7)[10.0]
    _, pvalue = mc.poisson_chi_square(counts, 12.0)
    assert pvalue < 1e-6


def test_count_times_in_ensemble(sector):
    """Count times attach measurement counts to the ensemble"""
    cfg = mc.TrajectoryConfig(
        sector.hamiltonian(), S1, Exponential(0.8), 300, count_times=[2.0, 1.0]
    )
    ensemble = mc.run_ensemble(cfg)
    assert sorted(ensemble.measurement_counts) == [1.0, 2.0]
    assert ensemble.measurement_counts[1.0].size == 300


def test_laplace_estimate(scheme1_ensemble, sector):
    """E[e^{-st}] within 4 SE of F̃_r(s)"""
    transform = jc.fdt_transform(sector, S1)
    for s in (0.1, 0.5, 2.0):
        value, se = mc.laplace_estimate(scheme1_ensemble, s)
        assert abs(value - transform(s).real) < 4 * se


def test_laplace_estimate_lomax_scheme2(sector):
    """Lomax(2.5, 1), scheme 2: E[e^{-t/2}] within 4 SE of the renewal F̃(1/2)"""
    h = sector.hamiltonian()
    dist = Lomax(2.5, 1.0)
    cfg = mc.TrajectoryConfig(h, S2, dist, 200_000, seed=21, block_size=50_000)
    value, se = mc.laplace_estimate(mc.run_ensemble(cfg), 0.5)
    expected = twolevel.fdt_laplace_renewal(h, S2, dist, 0.5)
    assert 0.0 < expected < 1.0
    assert abs(value - expected) < 4 * se


"""
Asymptotic fits
"""


def test_small_t_fit_scheme1(sector):
    """First detections follow c·t² with c = p(0)σ² within 5%"""
    cfg = mc.TrajectoryConfig(sector.hamiltonian(), S1, Exponential(0.8), 2_000_000, seed=21)
    fit = mc.small_t_fit(mc.run_ensemble(cfg), order=2)
    expected = twolevel.small_t_coefficient(cfg.hamiltonian, S1, cfg.dist)
    assert fit.coefficient == pytest.approx(expected, rel=0.05)
    assert fit.coefficient_se < 0.03 * expected


def test_small_t_fit_scheme2(sector):
    """Scheme 2 density starts at F(0⁺) = r"""
    cfg = mc.TrajectoryConfig(sector.hamiltonian(), S2, Exponential(0.8), 500_000, seed=22)
    fit = mc.small_t_fit(mc.run_ensemble(cfg), order=0)
    assert fit.coefficient == pytest.approx(0.8, rel=0.05)


def test_small_t_fit_too_few():
    """Raises NumericalFailure when the window holds too few detections"""
    h = jc.JcSector(g=0.1, n=37).hamiltonian()
    ensemble = mc.run_ensemble(mc.TrajectoryConfig(h, S1, Exponential(0.8), 500))
    with pytest.raises(NumericalFailure):
        mc.small_t_fit(ensemble, order=2)


def test_tail_fit_lomax_scheme2(sector):
    """Lomax(2.5, 1) tail: log-log slope near -3.5"""
    cfg = mc.TrajectoryConfig(sector.hamiltonian(), S2, Lomax(2.5, 1.0), 1_000_000, seed=23)
    fit = mc.tail_fit(mc.run_ensemble(cfg), decades=0.7)
    assert fit.slope == pytest.approx(-3.5, abs=0.4)
    assert fit.window[0] < fit.window[1]


def test_tail_fit_too_few(scheme1_ensemble):
    """Raises NumericalFailure with too few detections"""
    small = mc.EmpiricalFirstDetection(
        scheme1_ensemble.detection_times[:100], scheme1_ensemble.epochs[:100], 50.0
    )
    with pytest.raises(NumericalFailure):
        mc.tail_fit(small)
