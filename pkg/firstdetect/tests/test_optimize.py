import math

import pytest

from firstdetect import BracketFailure, BracketInvalid, MonotoneFunction
from firstdetect import jaynes_cummings as jc
from firstdetect.optimize import Bracket, find_bracket, minimize_scalar, validate_unimodal
from firstdetect.qcore import DetectionScheme

COUPLING_GRID = [(g, n) for g in (0.05, 0.1, 0.5) for n in (1, 10, 37)]


def scheme1_mean(g: float, n: int):
    """Closed-form scheme 1 mean as a function of r"""

    def f(r: float) -> float:
        return jc.moments_scheme1(jc.JcSector(g=g, n=n, r=r)).mean

    return f


def test_quadratic_minimum():
    """(r - 2)² has its minimum at 2"""
    f = lambda r: (r - 2.0) ** 2  # noqa: E731
    r_opt, f_opt = minimize_scalar(f, Bracket.from_function(f, 0.0, 1.0, 5.0), tol=1e-10)
    assert r_opt == pytest.approx(2.0, abs=1e-8)
    assert f_opt < 1e-15


def test_bracket_must_be_ordered():
    """Raises BracketInvalid for unordered points"""
    with pytest.raises(BracketInvalid):
        Bracket(1.0, 0.5, 2.0, 1.0, 0.0, 1.0)


def test_bracket_inequality():
    """Raises BracketInvalid when the middle value is not lowest"""
    with pytest.raises(BracketInvalid):
        Bracket.from_function(lambda r: r, 1.0, 2.0, 3.0)


def test_tolerance_floor():
    """Raises BracketInvalid for tol below 1e-12"""
    f = lambda r: (r - 2.0) ** 2  # noqa: E731
    with pytest.raises(BracketInvalid):
        minimize_scalar(f, Bracket.from_function(f, 0.0, 1.0, 5.0), tol=1e-13)


def test_evaluation_budget():
    """At most 200 evaluations of the objective"""
    calls = []

    def f(r):
        calls.append(r)
        return (r - 2.0) ** 2

    minimize_scalar(f, Bracket(0.0, 1.0, 5.0, 4.0, 1.0, 9.0), tol=1e-12)
    assert len(calls) <= 200


def test_bracket_for_scheme1_mean():
    """Expansion from r = 0.01 brackets 2g√n"""
    bracket = find_bracket(scheme1_mean(0.1, 37), 0.01)
    assert bracket.a < 2 * 0.1 * math.sqrt(37) < bracket.c


def test_bracket_from_the_right():
    """Expansion also works when starting past the minimum"""
    bracket = find_bracket(scheme1_mean(0.1, 37), 50.0)
    assert bracket.a < 2 * 0.1 * math.sqrt(37) < bracket.c


def test_scheme2_mean_is_monotone():
    """Scheme 2 mean 2/r has no bracket"""
    f = lambda r: jc.moments(jc.JcSector(g=0.1, n=37, r=r), DetectionScheme.SCHEME2).mean  # noqa: E731
    with pytest.raises(MonotoneFunction):
        find_bracket(f, 0.01)


def test_increasing_function_is_monotone():
    """f(r) = r has no bracket"""
    with pytest.raises(MonotoneFunction):
        find_bracket(lambda r: r, 1.0)


def test_bracket_arguments():
    """Raises BracketInvalid for a non-positive start or growth ≤ 1"""
    with pytest.raises(BracketInvalid):
        find_bracket(lambda r: r, 0.0)
    with pytest.raises(BracketInvalid):
        find_bracket(lambda r: r, 1.0, growth=1.0)


@pytest.mark.parametrize("g,n", COUPLING_GRID)
def test_optimizer_recovers_r_star(g, n):
    """r_opt within 1e-6 of 2g√n and t̄(r_opt) within 1e-8 of 2/(g√n)"""
    f = scheme1_mean(g, n)
    a = g * math.sqrt(n)
    r_opt, f_opt = minimize_scalar(f, find_bracket(f, 0.01))
    assert abs(r_opt - 2 * a) / (2 * a) < 1e-6
    assert f_opt == pytest.approx(2 / a, abs=1e-8)


def test_unimodal_maximal_time():
    """t_m(r) has a single interior minimum on [1e-3 r*, 1e3 r*]"""
    sector = jc.JcSector(g=0.1, n=37)
    r_star = 2 * sector.coupling
    bracket = validate_unimodal(
        lambda r: jc.maximal_time(sector.with_rate(r)), 1e-3 * r_star, 1e3 * r_star
    )
    assert bracket.fb < min(bracket.fa, bracket.fc)


def test_unimodal_rejects_oscillation():
    """Raises BracketFailure for an objective with several minima"""
    with pytest.raises(BracketFailure):
        validate_unimodal(lambda r: math.sin(5 * math.log(r)), 1e-2, 1e2)


def test_unimodal_rejects_boundary_minimum():
    """Raises BracketFailure when the minimum sits on the interval edge"""
    with pytest.raises(BracketFailure):
        validate_unimodal(lambda r: r, 1.0, 10.0)
