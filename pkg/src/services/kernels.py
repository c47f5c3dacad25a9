import math

import numpy as np

from src.core.exceptions import DomainError
from src.schemas.channel import KernelFamily, KernelSpec


def _shape(kernel: KernelSpec, x: np.ndarray) -> np.ndarray:
    """Normalized kernel K(tau)/K(0) at x = |tau| / t_c"""
    if kernel.family is KernelFamily.SQEXP:
        return np.exp(-(x**2))
    return np.exp(-x)


def evaluate(kernel: KernelSpec, tau: float) -> float:
    """Covariance K(tau)"""
    if not math.isfinite(tau):
        raise DomainError(f"kernel lag tau={tau!r} is not finite")
    return kernel.sigma2 * float(_shape(kernel, abs(tau) / kernel.t_c))


def autocovariance(kernel: KernelSpec, d: float, n: int) -> np.ndarray:
    """K(m d) for m = 0..n-1, the first row of the slot covariance matrix"""
    if d <= 0:
        raise DomainError(f"slot duration d={d!r} must be positive")
    lags = np.arange(n, dtype=float) * d
    return kernel.sigma2 * _shape(kernel, lags / kernel.t_c)


def one_step_correlation(kernel: KernelSpec, d: float) -> float:
    """
    Correlation between samples one slot apart, rho = K(d) / K(0)

    Args:
        kernel: Covariance kernel
        d: Slot duration

    Returns:
        float: rho in (0, 1); not clipped, callers reject rho too close to 1
    """
    if not math.isfinite(d) or d <= 0:
        raise DomainError(f"slot duration d={d!r} must be positive")
    return float(_shape(kernel, d / kernel.t_c))


def lag_k_correlation(kernel: KernelSpec, d: float, lag: int) -> float:
    """Correlation at `lag` slots; exactly rho**lag for the exponential kernel"""
    if isinstance(lag, bool) or int(lag) != lag or lag < 1:
        raise DomainError(f"lag={lag!r} must be an integer >= 1")
    rho = one_step_correlation(kernel, d)
    if kernel.family is KernelFamily.EXP:
        return rho ** int(lag)
    return float(_shape(kernel, lag * d / kernel.t_c))


def markov_deviation(kernel: KernelSpec, d: float) -> float:
    """rho_2 - rho_1^2; zero iff the sampled Gaussian sequence is first-order Markov"""
    rho1 = one_step_correlation(kernel, d)
    return lag_k_correlation(kernel, d, 2) - rho1 * rho1


def rice_upcrossing_rate(kernel: KernelSpec, s: float) -> float:
    """
    Expected up-crossings of level s (in units of sigma) per unit time

    Only defined for mean-square differentiable paths, i.e. the
    squared-exponential kernel, where -K''(0)/K(0) = 2 / t_c^2.
    """
    if kernel.family is not KernelFamily.SQEXP:
        raise DomainError(
            f"{kernel.family.label} paths are not differentiable; "
            "the level-crossing rate is infinite"
        )
    if not math.isfinite(s):
        raise DomainError(f"threshold s={s!r} is not finite")
    return math.sqrt(2.0) / (2.0 * math.pi * kernel.t_c) * math.exp(-0.5 * s * s)
