"""
Slot-boundary sampling of stationary Gaussian paths, thresholding, and
Monte Carlo estimation of transition statistics
"""

import math
from functools import lru_cache
from typing import Dict, List, Sequence, Tuple

import numpy as np
from scipy import linalg, signal, special

from src.core.config import settings
from src.core.exceptions import DomainError, FactorizationError, InsufficientDataError
from src.core.logger import get_logger
from src.schemas.channel import KernelFamily, KernelSpec, LinkConfig, SimPlan
from src.schemas.reports import BinaryTrace, PersistenceEstimate, TransitionEstimate
from src.services.kernels import autocovariance, one_step_correlation

logger = get_logger(__name__)

SAMPLING_METHODS = ("auto", "ar1", "factor")
Z_95 = 1.96

# Half a step of the 53-bit uniform grid keeps inverse-CDF inputs inside (0, 1)
_UNIFORM_SHIFT = 2.0**-54


def standard_normals(seed: int, rep: int, size: int, stream: int = 0) -> np.ndarray:
    """
    Standard normals for replication `rep` of grid point `stream`

    Each (stream, rep) pair gets its own Philox counter stream spawned from
    the seed, so draws do not depend on the order replications are generated
    in and distinct grid points are independent.
    """
    sequence = np.random.SeedSequence(seed, spawn_key=(stream, rep))
    generator = np.random.Generator(np.random.Philox(sequence))
    uniforms = generator.random(size) + _UNIFORM_SHIFT
    return special.ndtri(uniforms)


@lru_cache(maxsize=32)
def covariance_factor(kernel: KernelSpec, d: float, n_slots: int) -> np.ndarray:
    """
    Lower-triangular square root of the slot covariance matrix K(|i - j| d)

    Cholesky is retried with diagonal jitter growing x10 from
    settings.CHOLESKY_JITTER to settings.CHOLESKY_MAX_JITTER (relative to
    sigma2); after that the eigendecomposition with clipped eigenvalues is
    used. The returned array is cached and read-only.
    """
    logger.debug(f"Factoring {n_slots}x{n_slots} covariance for {kernel!r}, d={d}")
    covariance = linalg.toeplitz(autocovariance(kernel, d, n_slots))

    tried = []
    jitter = 0.0
    while jitter <= settings.CHOLESKY_MAX_JITTER * kernel.sigma2 * (1.0 + 1e-9):
        try:
            factor = linalg.cholesky(
                covariance + jitter * np.eye(n_slots), lower=True, check_finite=False
            )
            if np.all(np.isfinite(factor)):
                if jitter > 0:
                    logger.warning(
                        f"Cholesky succeeded after diagonal jitter {jitter:.1e} "
                        f"({kernel.family.label}, t_c={kernel.t_c})"
                    )
                factor.setflags(write=False)
                return factor
        except linalg.LinAlgError:
            pass
        tried.append(jitter)
        jitter = settings.CHOLESKY_JITTER * kernel.sigma2 if jitter == 0 else jitter * 10

    logger.warning(
        f"Cholesky failed with jitters {tried}; falling back to eigendecomposition "
        f"({kernel.family.label}, t_c={kernel.t_c})"
    )
    try:
        eigenvalues, eigenvectors = linalg.eigh(covariance, check_finite=False)
    except linalg.LinAlgError as e:
        raise FactorizationError(
            f"covariance factorization failed; jitters tried {tried}, "
            f"eigendecomposition: {e}"
        ) from e
    if eigenvalues.max() <= 0:
        raise FactorizationError(
            f"covariance is not positive semidefinite; jitters tried {tried}"
        )
    factor = eigenvectors * np.sqrt(np.clip(eigenvalues, 0.0, None))
    factor.setflags(write=False)
    return factor


def _resolve_method(kernel: KernelSpec, method: str) -> str:
    if method not in SAMPLING_METHODS:
        raise DomainError(f"unknown sampling method {method!r}; use one of {SAMPLING_METHODS}")
    if method == "auto":
        return "ar1" if kernel.family is KernelFamily.EXP else "factor"
    if method == "ar1" and kernel.family is not KernelFamily.EXP:
        raise DomainError("ar1 sampling is exact only for the exponential kernel")
    return method


def sample_gaussian_path(plan: SimPlan, rep: int, method: str = "auto") -> np.ndarray:
    """
    Draw X(0), X(d), ..., X((n_slots - 1) d) for one replication

    Args:
        plan: Monte Carlo plan
        rep: Replication index in [0, n_reps)
        method: "ar1" (exponential kernel only), "factor", or "auto"

    Returns:
        np.ndarray: Path of length n_slots, deterministic given the plan and rep
    """
    if not 0 <= rep < plan.n_reps:
        raise DomainError(f"replication {rep} outside [0, {plan.n_reps})")
    method = _resolve_method(plan.kernel, method)
    z = standard_normals(plan.seed, rep, plan.n_slots, plan.stream_key)
    sigma = math.sqrt(plan.kernel.sigma2)

    if method == "ar1":
        rho = one_step_correlation(plan.kernel, plan.cfg.d)
        innovations = np.empty_like(z)
        innovations[0] = sigma * z[0]
        innovations[1:] = sigma * math.sqrt(1.0 - rho * rho) * z[1:]
        return signal.lfilter([1.0], [1.0, -rho], innovations)

    factor = covariance_factor(plan.kernel, plan.cfg.d, plan.n_slots)
    return factor @ z


def threshold(
    path: Sequence[float],
    s_abs: float,
    plan_id: str = None,
    rep: int = None,
    meta: Dict[str, str] = None,
) -> BinaryTrace:
    """Bit n is 1 iff path[n] >= s_abs"""
    bits = (np.asarray(path, dtype=float) >= s_abs).astype(np.uint8)
    return BinaryTrace(bits=bits, plan_id=plan_id, rep=rep, meta=meta or {})


def simulate_traces(plan: SimPlan, method: str = "auto") -> List[BinaryTrace]:
    """Sample and threshold every replication of the plan"""
    plan_id = plan.plan_id
    meta = {
        "seed": str(plan.seed),
        "kernel": plan.kernel.family.value,
        "t_c": repr(plan.kernel.t_c),
        "d": repr(plan.cfg.d),
        "s_norm": repr(plan.cfg.s_norm),
    }
    return [
        threshold(sample_gaussian_path(plan, rep, method), plan.s_abs, plan_id, rep, meta)
        for rep in range(plan.n_reps)
    ]


def lag_autocorrelation(paths: Sequence[Sequence[float]], lag: int = 1) -> float:
    """Pooled zero-mean sample autocorrelation of one or more paths"""
    data = np.atleast_2d(np.asarray(paths, dtype=float))
    if lag < 0 or lag >= data.shape[1]:
        raise DomainError(f"lag={lag} outside [0, {data.shape[1]})")
    products = data[:, : data.shape[1] - lag] * data[:, lag:]
    return float(products.mean() / np.mean(data**2))


def transition_counts(bits: np.ndarray) -> np.ndarray:
    """2x2 counts n[i, j] of (B_n, B_{n+1}) = (i, j)"""
    bits = np.asarray(bits, dtype=np.intp)
    if bits.size < 2:
        return np.zeros((2, 2), dtype=np.int64)
    return np.bincount(2 * bits[:-1] + bits[1:], minlength=4).reshape(2, 2).astype(np.int64)


def _jackknife_ci(
    estimate: float, leave_one_out: np.ndarray
) -> Tuple[float, float]:
    """estimate +/- 1.96 jackknife standard errors over replications"""
    n = leave_one_out.size
    if n < 2:
        return estimate, estimate
    spread = float(np.sum((leave_one_out - leave_one_out.mean()) ** 2))
    half = Z_95 * math.sqrt((n - 1) / n * spread)
    return estimate - half, estimate + half


def _rep_label(trace: BinaryTrace, index: int) -> int:
    return trace.rep if trace.rep is not None else index


def _jeffreys(successes, trials):
    return (successes + 0.5) / (trials + 1.0)


def _replication_counts(traces: Sequence[BinaryTrace]) -> Tuple[np.ndarray, List[int]]:
    if not traces:
        raise InsufficientDataError("no traces to estimate from")
    counts = np.stack([transition_counts(trace.bits) for trace in traces])
    occupancy = counts.sum(axis=2)
    degenerate = [
        _rep_label(trace, i)
        for i, trace in enumerate(traces)
        if occupancy[i, 0] == 0 or occupancy[i, 1] == 0
    ]
    if degenerate:
        logger.warning(
            f"{len(degenerate)} replication(s) never leave one state; "
            f"they add no transitions out of the state they miss"
        )
    return counts, degenerate


def _pooled_transitions(counts: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    """
    Pooled Jeffreys estimates and their leave-one-replication-out versions

    Returns:
        Tuple: ([p01, p10], [[p01, p10] without replication r for each r])
    """
    total = counts.sum(axis=0)
    dropped = total[np.newaxis] - counts
    pooled = _jeffreys(np.array([total[0, 1], total[1, 0]]), total.sum(axis=1))
    leave_one_out = _jeffreys(
        np.stack([dropped[:, 0, 1], dropped[:, 1, 0]], axis=1), dropped.sum(axis=2)
    )
    return pooled, leave_one_out


def estimate_transitions(traces: Sequence[BinaryTrace]) -> TransitionEstimate:
    """
    Jeffreys-smoothed transition probabilities with across-replication CIs

    The point estimates pool the counts of all replications:
    (n01 + 1/2) / (n0. + 1) and (n10 + 1/2) / (n1. + 1). The CI is
    estimate +/- 1.96 jackknife standard errors, leaving out one replication
    at a time.
    """
    counts, degenerate = _replication_counts(traces)
    pooled, leave_one_out = _pooled_transitions(counts)
    p01_hat, p10_hat = (float(p) for p in pooled)
    return TransitionEstimate(
        p01_hat=p01_hat,
        p10_hat=p10_hat,
        ci95_p01=_jackknife_ci(p01_hat, leave_one_out[:, 0]),
        ci95_p10=_jackknife_ci(p10_hat, leave_one_out[:, 1]),
        counts=counts.sum(axis=0).tolist(),
        n_reps=len(traces),
        degenerate_reps=degenerate,
    )


def empirical_persistence(
    traces: Sequence[BinaryTrace], cfg: LinkConfig
) -> PersistenceEstimate:
    """
    d (pi0 / p01 + pi1 / p10) from pooled occupancies and transitions

    pi0 is the pooled fraction of zeros and p01, p10 the pooled Jeffreys
    estimates; the CI is the jackknife over replications.
    """
    counts, degenerate = _replication_counts(traces)
    zeros = np.array([trace.bits.size - int(trace.bits.sum()) for trace in traces])
    slots = np.array([trace.bits.size for trace in traces])

    pooled, leave_one_out = _pooled_transitions(counts)
    pi0 = zeros.sum() / slots.sum()
    mean = cfg.d * (pi0 / pooled[0] + (1.0 - pi0) / pooled[1])

    remaining = slots.sum() - slots
    with np.errstate(divide="ignore", invalid="ignore"):
        pi0_loo = np.where(remaining > 0, (zeros.sum() - zeros) / remaining, pi0)
    persistence_loo = cfg.d * (
        pi0_loo / leave_one_out[:, 0] + (1.0 - pi0_loo) / leave_one_out[:, 1]
    )
    return PersistenceEstimate(
        mean=float(mean),
        ci95=_jackknife_ci(float(mean), persistence_loo),
        n_reps=len(traces),
        degenerate_reps=degenerate,
    )
