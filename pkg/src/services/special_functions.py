"""
Scalar Gaussian special functions and low-dimensional orthant probabilities

Everything here is a pure function of its arguments. Owen's T and the normal
CDF come from scipy.special (Patefield-Tandy and Cephes ndtr); bivariate
probabilities are reduced to Owen's T, and the stationary three-sample
orthant is a one-dimensional adaptive Gauss-Kronrod integral over the
middle sample.
"""

import math
from typing import Sequence

from scipy import integrate, special

from src.core.config import settings
from src.core.exceptions import DomainError

# Correlations at or above this are treated as a frozen channel
RHO_CEILING = 1.0 - 1e-12

_INV_SQRT_2PI = 1.0 / math.sqrt(2.0 * math.pi)
_ZERO_THRESHOLD = 1e-14


def _require_finite(operation: str, **values: float) -> None:
    for name, value in values.items():
        if not math.isfinite(value):
            raise DomainError(f"{operation}: {name}={value!r} is not finite")


def check_correlation(rho: float, lower: float = 0.0) -> float:
    """
    Validate a correlation coefficient for the orthant operations

    Args:
        rho: Correlation coefficient
        lower: Smallest admissible value (inclusive)

    Returns:
        float: rho as a float
    """
    _require_finite("correlation", rho=rho)
    if rho < lower or rho >= RHO_CEILING:
        raise DomainError(
            f"correlation rho={rho!r} outside [{lower}, 1); "
            f"values >= 1 - 1e-12 are rejected"
        )
    return float(rho)


def normal_pdf(x: float) -> float:
    """Standard normal density"""
    _require_finite("normal_pdf", x=x)
    return _INV_SQRT_2PI * math.exp(-0.5 * x * x)


def normal_cdf(x: float) -> float:
    """Standard normal CDF"""
    _require_finite("normal_cdf", x=x)
    return float(special.ndtr(x))


def owens_t(h: float, a: float) -> float:
    """Owen's T(h, a); odd in a, even in h"""
    _require_finite("owens_t", h=h, a=a)
    return float(special.owens_t(h, a))


def bivariate_orthant_cdf(s: float, rho: float) -> float:
    """
    P(Z0 < s, Z1 < s) for a standard bivariate normal with correlation rho

    Uses Phi2(s, s; rho) = Phi(s) - 2 T(s, a) with a = sqrt((1 - rho) / (1 + rho)).

    Args:
        s: Common threshold
        rho: Correlation in [0, 1)

    Returns:
        float: Orthant probability in (0, 1)
    """
    _require_finite("bivariate_orthant_cdf", s=s)
    rho = check_correlation(rho)
    a = math.sqrt((1.0 - rho) / (1.0 + rho))
    value = normal_cdf(s) - 2.0 * owens_t(s, a)
    return min(max(value, 0.0), 1.0)


def bivariate_cdf(h: float, k: float, rho: float) -> float:
    """
    General standard bivariate normal CDF P(Z0 < h, Z1 < k) for -1 < rho < 1

    Owen's reduction:
        Phi2 = Phi(h)/2 + Phi(k)/2 - T(h, a_h) - T(k, a_k) - beta
    with a_h = (k - rho h) / (h sqrt(1 - rho^2)), a_k symmetric, and
    beta = 1/2 when h and k straddle zero.
    """
    _require_finite("bivariate_cdf", h=h, k=k, rho=rho)
    if not -1.0 < rho < 1.0:
        raise DomainError(f"bivariate_cdf: rho={rho!r} outside (-1, 1)")
    root = math.sqrt((1.0 - rho) * (1.0 + rho))

    h_zero = abs(h) < _ZERO_THRESHOLD
    k_zero = abs(k) < _ZERO_THRESHOLD
    if h_zero and k_zero:
        value = 0.25 + math.asin(rho) / (2.0 * math.pi)
    elif h_zero:
        value = 0.5 * normal_cdf(k) + owens_t(k, rho / root)
    elif k_zero:
        value = 0.5 * normal_cdf(h) + owens_t(h, rho / root)
    elif h == k:
        value = normal_cdf(h) - 2.0 * owens_t(h, math.sqrt((1.0 - rho) / (1.0 + rho)))
    else:
        a_h = (k - rho * h) / (h * root)
        a_k = (h - rho * k) / (k * root)
        beta = 0.0 if h * k > 0 else 0.5
        value = (
            0.5 * normal_cdf(h)
            + 0.5 * normal_cdf(k)
            - owens_t(h, a_h)
            - owens_t(k, a_k)
            - beta
        )
    return min(max(value, 0.0), 1.0)


def trivariate_orthant(
    thresholds: Sequence[float],
    rho1: float,
    rho2: float,
    abs_tol: float = None,
) -> float:
    """
    P(Z0 < t0, Z1 < t1, Z2 < t2) for three consecutive stationary samples

    The correlation matrix is [[1, rho1, rho2], [rho1, 1, rho1], [rho2, rho1, 1]].
    Conditional on Z1 = z the outer pair is bivariate normal with means rho1 z,
    variances 1 - rho1^2 and partial correlation (rho2 - rho1^2) / (1 - rho1^2),
    so the probability is a 1-D integral of phi(z) Phi2(.) over z < t1.

    Args:
        thresholds: (t0, t1, t2)
        rho1: Lag-1 correlation
        rho2: Lag-2 correlation
        abs_tol: Absolute quadrature tolerance (settings.QUAD_ABS_TOL by default)

    Returns:
        float: Orthant probability
    """
    t0, t1, t2 = (float(t) for t in thresholds)
    _require_finite("trivariate_orthant", t0=t0, t1=t1, t2=t2, rho1=rho1, rho2=rho2)
    if abs(rho1) >= 1.0:
        raise DomainError(f"trivariate_orthant: rho1={rho1!r} outside (-1, 1)")
    variance = 1.0 - rho1 * rho1
    partial = (rho2 - rho1 * rho1) / variance
    if abs(partial) >= 1.0:
        raise DomainError(
            f"trivariate_orthant: correlation matrix with rho1={rho1!r}, "
            f"rho2={rho2!r} is not positive definite"
        )
    sd = math.sqrt(variance)

    lower = -settings.QUAD_BOUND
    upper = min(t1, settings.QUAD_BOUND)
    if upper <= lower:
        return 0.0

    def integrand(z: float) -> float:
        h = (t0 - rho1 * z) / sd
        k = (t2 - rho1 * z) / sd
        return normal_pdf(z) * bivariate_cdf(h, k, partial)

    # Kinks of the integrand sit where a conditional threshold crosses zero
    breaks = []
    if rho1 != 0.0:
        breaks = sorted({t / rho1 for t in (t0, t2) if lower < t / rho1 < upper})

    value, _ = integrate.quad(
        integrand,
        lower,
        upper,
        epsabs=abs_tol or settings.QUAD_ABS_TOL,
        epsrel=0.0,
        limit=settings.QUAD_LIMIT,
        points=breaks or None,
    )
    return min(max(value, 0.0), 1.0)
