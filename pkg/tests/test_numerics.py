import math

import numpy as np
import pytest
from scipy import integrate

from hetcache.numerics import (BracketError, ConvergenceError, DomainError, QuadratureConfig,
                               beta, bisect_monotone, comp_inc_beta, integrate_gaussian_weighted,
                               integrate_semi_infinite)


def _tail_oracle(x, y, z):
    # algebraic weight handles the (1-u)^(y-1) endpoint analytically
    return integrate.quad(lambda u: u ** (x - 1), z, 1, weight="alg", wvar=(0, y - 1),
                          epsabs=1e-15, epsrel=1e-13)[0]


def test_beta_matches_gamma_identity():
    for x, y in [(0.5, 0.5), (1.5, 2.0), (3.0, 0.25)]:
        expected = math.gamma(x) * math.gamma(y) / math.gamma(x + y)
        assert beta(x, y) == pytest.approx(expected, rel=1e-13)


def test_beta_half_half_is_pi():
    assert beta(0.5, 0.5) == pytest.approx(math.pi, rel=1e-14)


@pytest.mark.parametrize("x,y,z", [(0.5, 0.5, 0.3), (1.5, 0.5, 0.9), (2.0, 1.0, 0.25),
                                   (3.0, 0.25, 0.999), (0.5, 0.5, 1 - 1e-9), (2.5, 0.5, 1e-6)])
def test_comp_inc_beta_against_weighted_quadrature(x, y, z):
    assert comp_inc_beta(x, y, z) == pytest.approx(_tail_oracle(x, y, z), rel=1e-8)


def test_comp_inc_beta_endpoints():
    assert comp_inc_beta(0.5, 0.5, 0.0) == pytest.approx(math.pi, rel=1e-14)
    assert comp_inc_beta(0.5, 0.5, 1.0) == 0.0
    assert comp_inc_beta(2.0, 1.0, 0.25) == pytest.approx(0.46875, rel=1e-14)


def test_comp_inc_beta_decreasing_in_z():
    zs = np.linspace(0, 1, 41)
    vals = [comp_inc_beta(0.5, 0.5, z) for z in zs]
    assert np.all(np.diff(vals) < 0)


@pytest.mark.parametrize("args", [(0.0, 0.5, 0.2), (1.0, -1.0, 0.2), (1.0, 0.5, 1.5), (1.0, 0.5, -0.1)])
def test_comp_inc_beta_domain(args):
    with pytest.raises(DomainError):
        comp_inc_beta(*args)


def test_beta_domain():
    with pytest.raises(DomainError):
        beta(0.0, 1.0)


def test_gaussian_weighted_constant():
    # int_0^inf d exp(-c d^2) dd = 1 / (2c)
    assert integrate_gaussian_weighted(lambda d: 1.0, 3.0) == pytest.approx(1 / 6, rel=1e-12)


def test_gaussian_weighted_against_direct_quad():
    g = lambda d: 1.0 / (1.0 + d * d)
    direct = integrate.quad(lambda d: d * math.exp(-2.0 * d * d) * g(d), 0, np.inf, epsabs=1e-14)[0]
    assert integrate_gaussian_weighted(g, 2.0) == pytest.approx(direct, rel=1e-9)
    assert integrate_gaussian_weighted(g, 2.0) == pytest.approx(0.1806643084444143, rel=1e-12)


def test_semi_infinite_gaussian_moments():
    # int_0^inf d^3 exp(-d^2) dd = 1/2
    assert integrate_semi_infinite(lambda d: d ** 3 * math.exp(-d * d)) == pytest.approx(0.5, rel=1e-10)
    # int_0^inf exp(-4 d^2) dd = sqrt(pi) / 4
    val = integrate_semi_infinite(lambda d: math.exp(-4 * d * d), rate=4.0)
    assert val == pytest.approx(math.sqrt(math.pi) / 4, rel=1e-8)


def test_quadrature_non_finite_raises():
    with pytest.raises(ConvergenceError):
        integrate_gaussian_weighted(lambda d: math.inf, 1.0)


def test_quadrature_budget_exhaustion_raises():
    tight = QuadratureConfig(abs_tol=1e-300, rel_tol=1e-15, max_subdivisions=1)
    with pytest.raises(ConvergenceError):
        integrate_gaussian_weighted(lambda d: math.sin(50 * d) ** 2, 1.0, tight)


def test_quadrature_config_validation():
    with pytest.raises(ValueError):
        QuadratureConfig(abs_tol=0.0)
    with pytest.raises(ValueError):
        QuadratureConfig(max_subdivisions=0)


def test_rate_must_be_positive():
    with pytest.raises(DomainError):
        integrate_gaussian_weighted(lambda d: 1.0, 0.0)


def test_bisect_monotone_solves_cubic():
    root = bisect_monotone(lambda v: v ** 3, 2.0, 0.0, 2.0, tol=1e-14)
    assert root == pytest.approx(2 ** (1 / 3), abs=1e-12)


def test_bisect_monotone_endpoints():
    assert bisect_monotone(lambda v: v, 0.0, 0.0, 1.0) == 0.0
    assert bisect_monotone(lambda v: v, 1.0, 0.0, 1.0) == 1.0


def test_bisect_monotone_not_bracketed():
    with pytest.raises(BracketError):
        bisect_monotone(lambda v: v, 5.0, 0.0, 1.0)
