"""
Closed-form bridge from a stationary Gaussian kernel to a Gilbert-Elliott chain

The crossing probability N = P(B_n = 0, B_{n+1} = 1) = 2 T(s, a) with
a = sqrt((1 - rho) / (1 + rho)) carries all of the kernel dependence:
p01 = N / Phi(s), p10 = N / Phi(-s), and the persistence time is
d (q^2 + (1 - q)^2) / N. Evaluating N through Owen's T avoids the
cancellation in Phi(s) - Phi2(s, s; rho) as rho approaches 1.
"""

import math

from src.core.exceptions import DomainError
from src.schemas.channel import GeParams, KernelFamily, KernelSpec, LinkConfig
from src.services.kernels import one_step_correlation
from src.services.special_functions import (
    RHO_CEILING,
    normal_cdf,
    normal_pdf,
    owens_t,
)


FROZEN_CHANNEL = "frozen channel; use asymptotics"
MAX_ABS_THRESHOLD = 8.0


def validate_rho(rho: float) -> float:
    """Shared guard: 0 <= rho < 1 - 1e-12"""
    if not math.isfinite(rho):
        raise DomainError(f"correlation rho={rho!r} is not finite")
    if rho >= RHO_CEILING:
        raise DomainError(FROZEN_CHANNEL)
    if rho < 0.0:
        raise DomainError(f"correlation rho={rho!r} outside [0, 1)")
    return float(rho)


def _validate_threshold(s: float) -> float:
    if not math.isfinite(s) or abs(s) > MAX_ABS_THRESHOLD:
        raise DomainError(
            f"normalized threshold s={s!r} outside [-{MAX_ABS_THRESHOLD}, {MAX_ABS_THRESHOLD}]"
        )
    return float(s)


def crossing_probability(rho: float, s: float) -> float:
    """N = P(B_n = 0, B_{n+1} = 1) = 2 T(s, sqrt((1 - rho) / (1 + rho)))"""
    rho = validate_rho(rho)
    s = _validate_threshold(s)
    return 2.0 * owens_t(s, math.sqrt((1.0 - rho) / (1.0 + rho)))


def arcsine_transition(rho: float) -> float:
    """Symmetric-threshold transition probability 1/2 - arcsin(rho) / pi"""
    rho = validate_rho(rho)
    return 0.5 - math.asin(rho) / math.pi


def ge_params_from_rho(rho: float, cfg: LinkConfig) -> GeParams:
    """
    Matched Gilbert-Elliott parameters for a raw one-step correlation

    Args:
        rho: One-step correlation K(d)/K(0) in [0, 1)
        cfg: Slot duration and normalized threshold

    Returns:
        GeParams: Transition probabilities, stationary law, dwell and persistence times
    """
    rho = validate_rho(rho)
    s = _validate_threshold(cfg.s_norm)
    n_cross = crossing_probability(rho, s)
    if n_cross <= 0.0:
        raise DomainError(FROZEN_CHANNEL)

    q = normal_cdf(s)
    q_bar = normal_cdf(-s)
    # N <= min(q, q_bar); round-off in the far tail is clamped
    p01 = min(n_cross / q, 1.0)
    p10 = min(n_cross / q_bar, 1.0)

    return GeParams(
        rho=rho,
        d=cfg.d,
        s_norm=s,
        p01=p01,
        p10=p10,
        pi0=q,
        pi1=q_bar,
        dwell0=cfg.d / p01,
        dwell1=cfg.d / p10,
        persistence=cfg.d * (q * q + q_bar * q_bar) / n_cross,
        q=q,
        n_cross=n_cross,
    )


def ge_params(kernel: KernelSpec, cfg: LinkConfig) -> GeParams:
    """Matched GE parameters for a kernel, via rho = K(d)/K(0)"""
    return ge_params_from_rho(one_step_correlation(kernel, cfg.d), cfg)


def persistence_symmetric(rho: float, d: float) -> float:
    """E[T_GE] = 2d / (1 - (2/pi) arcsin(rho)) at s = 0"""
    rho = validate_rho(rho)
    if not math.isfinite(d) or d <= 0:
        raise DomainError(f"slot duration d={d!r} must be positive")
    return 2.0 * d / (1.0 - 2.0 * math.asin(rho) / math.pi)


def asymptotic_crossing(s: float, rho: float) -> float:
    """Leading-order N = phi(s) sqrt((1 - rho) / pi) as rho -> 1"""
    rho = validate_rho(rho)
    return normal_pdf(s) * math.sqrt((1.0 - rho) / math.pi)


def asymptotic_coefficient(s: float) -> float:
    """sqrt(pi) (Phi(s)^2 + (1 - Phi(s))^2) / phi(s); pi / sqrt(2) at s = 0"""
    q = normal_cdf(s)
    return math.sqrt(math.pi) * (q * q + normal_cdf(-s) ** 2) / normal_pdf(s)


def asymptotic_persistence(kernel: KernelSpec, cfg: LinkConfig) -> float:
    """
    Long-correlation persistence: linear in t_c for the squared-exponential
    kernel, sqrt(d t_c) for the exponential kernel
    """
    coefficient = asymptotic_coefficient(cfg.s_norm)
    if kernel.family is KernelFamily.SQEXP:
        return coefficient * kernel.t_c
    return coefficient * math.sqrt(cfg.d * kernel.t_c)
