"""
Tests for the Gaussian special functions and orthant probabilities
"""

import math

import numpy as np
import pytest
from scipy import integrate

from src.core.exceptions import DomainError
from src.services.special_functions import (
    bivariate_cdf,
    bivariate_orthant_cdf,
    normal_cdf,
    normal_pdf,
    owens_t,
    trivariate_orthant,
)

RHO_GRID = [0.0, 0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9, 0.99, 0.9999]


def owens_t_oracle(h: float, a: float) -> float:
    """Adaptive quadrature of Owen's integrand"""
    value, _ = integrate.quad(
        lambda x: math.exp(-0.5 * h * h * (1 + x * x)) / (1 + x * x),
        0.0,
        a,
        epsabs=1e-14,
        epsrel=1e-13,
    )
    return value / (2 * math.pi)


def bivariate_oracle(h: float, k: float, rho: float) -> float:
    """Direct 2-D quadrature of the bivariate normal density"""
    norm = 1.0 / (2 * math.pi * math.sqrt(1 - rho * rho))

    def density(y, x):
        return norm * math.exp(-(x * x - 2 * rho * x * y + y * y) / (2 * (1 - rho * rho)))

    value, _ = integrate.dblquad(density, -12.0, h, -12.0, k, epsabs=1e-13, epsrel=1e-12)
    return value


def zero_threshold_trivariate(rho1: float, rho2: float) -> float:
    """Closed-form orthant probability at zero thresholds"""
    return 0.125 + (2 * math.asin(rho1) + math.asin(rho2)) / (4 * math.pi)


# Normal density and CDF
@pytest.mark.unit
def test_normal_pdf_values():
    """Test normal density at reference points"""
    assert normal_pdf(0.0) == pytest.approx(0.3989422804014327, rel=1e-15)
    assert normal_pdf(1.0) == pytest.approx(0.24197072451914337, rel=1e-15)
    for x in (0.3, 1.7, 4.2):
        assert normal_pdf(x) == normal_pdf(-x)
        assert normal_pdf(x) > 0


@pytest.mark.unit
def test_normal_cdf_values():
    """Test normal CDF at reference points and its symmetry"""
    assert normal_cdf(0.0) == 0.5
    assert normal_cdf(8.0) >= 1 - 1e-14
    assert normal_cdf(1.0) == pytest.approx(0.8413447460685429, rel=1e-15)
    for x in np.linspace(-8, 8, 33):
        assert abs(normal_cdf(x) + normal_cdf(-x) - 1.0) <= 1e-15


@pytest.mark.unit
@pytest.mark.parametrize("bad", [math.nan, math.inf, -math.inf])
def test_non_finite_inputs_rejected(bad):
    """Test that non-finite arguments raise DomainError"""
    with pytest.raises(DomainError):
        normal_pdf(bad)
    with pytest.raises(DomainError):
        normal_cdf(bad)
    with pytest.raises(DomainError):
        owens_t(bad, 1.0)
    with pytest.raises(DomainError):
        owens_t(0.5, bad)


# Owen's T
@pytest.mark.unit
def test_owens_t_reference_values():
    """Test Owen's T at closed-form points and against quadrature"""
    assert owens_t(0.0, 1.0) == pytest.approx(0.125, abs=1e-15)
    assert owens_t(1.3, 0.0) == 0.0
    assert owens_t(1.0, 0.5) == pytest.approx(owens_t_oracle(1.0, 0.5), abs=1e-12)


@pytest.mark.unit
def test_owens_t_arctan_identity():
    """Test T(0, a) = arctan(a) / (2 pi) on a in [0, 10]"""
    for a in np.linspace(0.0, 10.0, 41):
        assert abs(owens_t(0.0, a) - math.atan(a) / (2 * math.pi)) <= 1e-13


@pytest.mark.unit
def test_owens_t_bounds_and_parity():
    """Test 0 <= T <= 1/4 and evenness in h"""
    for h in (-2.0, -0.4, 0.0, 0.9, 3.0):
        for a in (0.0, 0.2, 1.0, 7.5):
            value = owens_t(h, a)
            assert 0.0 <= value <= 0.25
            assert value == pytest.approx(owens_t(-h, a), abs=1e-16)
    assert owens_t(0.7, -0.3) == pytest.approx(-owens_t(0.7, 0.3), abs=1e-16)


# Bivariate orthant
@pytest.mark.unit
def test_bivariate_orthant_examples():
    """Test equal-threshold bivariate CDF examples"""
    assert bivariate_orthant_cdf(0.0, 0.5) == pytest.approx(1 / 3, abs=1e-12)
    for s in (-1.5, 0.0, 0.4, 2.0):
        assert bivariate_orthant_cdf(s, 0.0) == pytest.approx(normal_cdf(s) ** 2, abs=1e-14)
    assert bivariate_orthant_cdf(0.7, 0.3) == pytest.approx(
        bivariate_oracle(0.7, 0.7, 0.3), abs=1e-9
    )


@pytest.mark.unit
def test_sheppard_identity():
    """Test Phi2(0, 0; rho) = 1/4 + arcsin(rho) / (2 pi)"""
    for rho in RHO_GRID:
        expected = 0.25 + math.asin(rho) / (2 * math.pi)
        assert abs(bivariate_orthant_cdf(0.0, rho) - expected) <= 1e-12


@pytest.mark.unit
def test_bivariate_orthant_monotone_in_rho():
    """Test that Phi2(s, s; rho) does not decrease with rho"""
    for s in (-1.0, 0.0, 0.8):
        values = [bivariate_orthant_cdf(s, rho) for rho in np.linspace(0, 0.999, 50)]
        assert np.all(np.diff(values) >= 0)


@pytest.mark.unit
@pytest.mark.parametrize("rho", [-0.1, 1.0, 1.2, 1 - 1e-13, math.nan])
def test_bivariate_orthant_rejects_rho(rho):
    """Test that rho outside [0, 1 - 1e-12) is rejected"""
    with pytest.raises(DomainError):
        bivariate_orthant_cdf(0.3, rho)


@pytest.mark.unit
@pytest.mark.parametrize(
    "h, k, rho",
    [(0.3, -0.8, -0.4), (-1.2, 0.5, 0.6), (0.0, 1.1, 0.3), (0.9, 0.0, -0.5), (-0.6, -0.6, -0.7)],
)
def test_bivariate_cdf_general(h, k, rho):
    """Test the general bivariate CDF against direct quadrature"""
    assert bivariate_cdf(h, k, rho) == pytest.approx(bivariate_oracle(h, k, rho), abs=1e-9)


# Trivariate orthant
@pytest.mark.unit
def test_trivariate_independent():
    """Test three independent signs"""
    assert trivariate_orthant((0.0, 0.0, 0.0), 0.0, 0.0) == pytest.approx(0.125, abs=1e-10)


@pytest.mark.unit
@pytest.mark.parametrize("rho1, rho2", [(0.6, 0.2), (0.5, 0.25), (0.9, 0.81), (0.95, 0.8145)])
def test_trivariate_zero_thresholds(rho1, rho2):
    """Test zero-threshold trivariate orthants against the arcsine closed form"""
    assert trivariate_orthant((0.0, 0.0, 0.0), rho1, rho2) == pytest.approx(
        zero_threshold_trivariate(rho1, rho2), abs=1e-9
    )


@pytest.mark.unit
def test_trivariate_monte_carlo():
    """Test an off-zero trivariate orthant against Monte Carlo"""
    rho1, rho2 = 0.6, 0.2
    thresholds = (0.5, -0.3, 1.0)
    cov = np.array([[1, rho1, rho2], [rho1, 1, rho1], [rho2, rho1, 1]])
    rng = np.random.default_rng(7)
    samples = rng.multivariate_normal(np.zeros(3), cov, size=2_000_000)
    hits = np.all(samples < np.array(thresholds), axis=1)
    estimate = hits.mean()
    se = math.sqrt(estimate * (1 - estimate) / hits.size)
    assert abs(trivariate_orthant(thresholds, rho1, rho2) - estimate) <= 4 * se


@pytest.mark.unit
@pytest.mark.parametrize("s", [-1.0, 0.0, 0.5, 1.0])
@pytest.mark.parametrize("rho1, rho2", [(0.3, 0.09), (0.8, 0.41), (0.96, 0.85)])
def test_trivariate_reduces_to_bivariate(s, rho1, rho2):
    """Test that a large third threshold leaves the bivariate orthant"""
    value = trivariate_orthant((s, s, 12.0), rho1, rho2)
    assert abs(value - bivariate_orthant_cdf(s, rho1)) <= 1e-9


@pytest.mark.unit
def test_trivariate_rejects_non_positive_definite():
    """Test that an indefinite correlation matrix is rejected"""
    with pytest.raises(DomainError):
        trivariate_orthant((0.0, 0.0, 0.0), 0.9, -0.9)
    with pytest.raises(DomainError):
        trivariate_orthant((0.0, 0.0, 0.0), 1.0, 1.0)


@pytest.mark.unit
def test_functions_are_pure():
    """Test that repeated calls return bit-identical values"""
    args = ((0.3, 0.3, 0.3), 0.7, 0.3)
    assert trivariate_orthant(*args) == trivariate_orthant(*args)
    assert bivariate_orthant_cdf(0.4, 0.6) == bivariate_orthant_cdf(0.4, 0.6)
