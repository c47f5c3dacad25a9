"""
Fidelity diagnostics of the first-order Gilbert-Elliott abstraction

Markov gaps compare P(B_{n+1} = 1 | B_{n-1} = i, B_n = j) with
P(B_{n+1} = 1 | B_n = j). The exact version assembles the order-2
conditionals from bivariate and trivariate orthant probabilities; the
empirical version uses pooled triple counts. Run-length diagnostics compare
the censored empirical run-length PMF with the geometric law of the matched
chain and with a second-order model fitted to the same traces.
"""

import math
from dataclasses import dataclass
from typing import List, Optional, Sequence, Tuple, Union

import numpy as np

from src.core.config import settings
from src.core.exceptions import DomainError, InsufficientDataError
from src.core.logger import get_logger
from src.schemas.channel import KernelSpec, LinkConfig, SimPlan
from src.schemas.reports import BinaryTrace, FidelityReport, MarkovGaps, RunLengthDist
from src.services.executor import grid_executor
from src.services.ge_bridge import ge_params, validate_rho
from src.services.kernels import lag_k_correlation, one_step_correlation
from src.services.special_functions import (
    bivariate_cdf,
    normal_cdf,
    owens_t,
    trivariate_orthant,
)
from src.services.trace_sim import empirical_persistence, simulate_traces

logger = get_logger(__name__)

TraceLike = Union[BinaryTrace, Sequence[int], np.ndarray]


def _bits(trace: TraceLike) -> np.ndarray:
    if isinstance(trace, BinaryTrace):
        return trace.bits
    return np.asarray(trace, dtype=np.uint8)


def _gaps_from_conditionals(
    order2: np.ndarray,
    order1: np.ndarray,
    context_counts: Optional[np.ndarray] = None,
    insufficient: Sequence[str] = (),
) -> MarkovGaps:
    gaps = np.abs(order2 - order1[np.newaxis, :])
    return MarkovGaps(
        gaps=gaps.tolist(),
        order2=order2.tolist(),
        order1=order1.tolist(),
        context_counts=None if context_counts is None else context_counts.tolist(),
        insufficient_contexts=list(insufficient),
    )


def markov_gap_from_rhos(rho1: float, rho2: float, s: float) -> MarkovGaps:
    """
    Exact Markov gaps for lag-1/lag-2 correlations of the latent Gaussian

    With q = Phi(s), P2(rho) = Phi2(s, s; rho) and P3 the trivariate orthant,
    inclusion-exclusion over the three sign constraints gives
        c00 = (P2(rho1) - P3) / P2(rho1)
        c01 = (q - P2(rho1) - P2(rho2) + P3) / N1
        c10 = (q - 2 P2(rho1) + P3) / N1
        c11 = P(111) / P(11)
    where N1 = q - P2(rho1) is the crossing probability.

    Args:
        rho1: Lag-1 correlation in [0, 1)
        rho2: Lag-2 correlation
        s: Normalized threshold

    Returns:
        MarkovGaps: gaps, order-2 and order-1 conditionals of B_{n+1} = 1
    """
    rho1 = validate_rho(rho1)
    if not math.isfinite(rho2) or not -1.0 < rho2 < 1.0:
        raise DomainError(f"lag-2 correlation rho2={rho2!r} outside (-1, 1)")

    q = normal_cdf(s)
    q_bar = normal_cdf(-s)
    n1 = 2.0 * owens_t(s, math.sqrt((1.0 - rho1) / (1.0 + rho1)))
    if n1 <= 0.0:
        raise DomainError(f"no threshold crossings at rho1={rho1!r}, s={s!r}")
    p2_1 = q - n1
    p2_2 = bivariate_cdf(s, s, rho2)
    p3 = trivariate_orthant((s, s, s), rho1, rho2)

    p11 = q_bar - n1
    p110 = n1 - (p2_2 - p3)
    order2 = np.array(
        [
            [(p2_1 - p3) / p2_1, (q - p2_1 - p2_2 + p3) / n1],
            [(q - 2.0 * p2_1 + p3) / n1, (p11 - p110) / p11],
        ]
    )
    order1 = np.array([n1 / q, 1.0 - n1 / q_bar])
    return _gaps_from_conditionals(np.clip(order2, 0.0, 1.0), order1)


def markov_gap_exact(kernel: KernelSpec, cfg: LinkConfig) -> MarkovGaps:
    """Exact Markov gaps for a kernel at slot duration cfg.d and threshold cfg.s_norm"""
    rho1 = one_step_correlation(kernel, cfg.d)
    rho2 = lag_k_correlation(kernel, cfg.d, 2)
    return markov_gap_from_rhos(rho1, rho2, cfg.s_norm)


def triple_counts(traces: Sequence[TraceLike]) -> np.ndarray:
    """Pooled counts n[i, j, k] of (B_{n-1}, B_n, B_{n+1}) = (i, j, k)"""
    counts = np.zeros(8, dtype=np.int64)
    for trace in traces:
        bits = _bits(trace).astype(np.intp)
        if bits.size >= 3:
            counts += np.bincount(4 * bits[:-2] + 2 * bits[1:-1] + bits[2:], minlength=8)
    return counts.reshape(2, 2, 2)


def _sparse_contexts(context_totals: np.ndarray, min_count: int) -> List[str]:
    sparse = [
        f"{i}{j}"
        for i in range(2)
        for j in range(2)
        if context_totals[i, j] < min_count
    ]
    if sparse:
        logger.warning(
            f"Order-2 contexts {sparse} observed fewer than {min_count} times"
        )
    return sparse


def markov_gap_empirical(
    traces: Sequence[TraceLike], min_count: int = None
) -> MarkovGaps:
    """
    Markov gaps from pooled, Jeffreys-smoothed conditional frequencies

    Contexts (i, j) seen fewer than min_count times are listed in
    insufficient_contexts.
    """
    counts = triple_counts(traces)
    if counts.sum() == 0:
        raise InsufficientDataError("traces hold no (B_{n-1}, B_n, B_{n+1}) triples")
    min_count = settings.MIN_CONTEXT_COUNT if min_count is None else min_count

    context_totals = counts.sum(axis=2)
    order2 = (counts[:, :, 1] + 0.5) / (context_totals + 1.0)
    pair_counts = counts.sum(axis=0)
    order1 = (pair_counts[:, 1] + 0.5) / (pair_counts.sum(axis=1) + 1.0)
    sparse = _sparse_contexts(context_totals, min_count)
    return _gaps_from_conditionals(order2, order1, context_totals, sparse)


def extract_runs(trace: TraceLike, state: int) -> np.ndarray:
    """Lengths of maximal runs of `state`; runs touching either end are censored"""
    bits = _bits(trace)
    n = bits.size
    mask = (bits == state).astype(np.int8)
    edges = np.diff(np.concatenate(([0], mask, [0])))
    starts = np.flatnonzero(edges == 1)
    ends = np.flatnonzero(edges == -1)
    keep = (starts > 0) & (ends < n)
    return (ends - starts)[keep]


def _from_survival(survival: np.ndarray, state: int) -> RunLengthDist:
    """PMF from S(0..k_max) with S(k) = P(L > k); the tail is S(k_max)"""
    pmf = -np.diff(survival)
    return RunLengthDist(
        state=state, pmf=np.clip(pmf, 0.0, None).tolist(), tail_mass=float(survival[-1])
    )


def _check_k_max(k_max: int) -> int:
    if isinstance(k_max, bool) or int(k_max) != k_max or k_max < 1:
        raise DomainError(f"k_max={k_max!r} must be an integer >= 1")
    return int(k_max)


def ge_runlength_pmf(p_exit: float, k_max: int, state: int = 1) -> RunLengthDist:
    """Geometric run lengths P(L = k) = p (1 - p)^(k - 1) of a first-order chain"""
    if not math.isfinite(p_exit) or not 0.0 < p_exit <= 1.0:
        raise DomainError(f"exit probability {p_exit!r} outside (0, 1]")
    k_max = _check_k_max(k_max)
    survival = (1.0 - p_exit) ** np.arange(k_max + 1, dtype=float)
    return _from_survival(survival, state)


def bernoulli_runlength_pmf(s: float, k_max: int, state: int = 1) -> RunLengthDist:
    """
    Run lengths of memoryless bits with the same marginal law

    Each slot is 1 with probability 1 - Phi(s) independently, so a run of
    state 1 ends with probability Phi(s) per slot (1 - Phi(s) for state 0).
    """
    if not math.isfinite(s):
        raise DomainError(f"normalized threshold s={s!r} is not finite")
    p_exit = normal_cdf(s) if state == 1 else normal_cdf(-s)
    return ge_runlength_pmf(p_exit, k_max, state)


def second_order_runlength_pmf(
    a: float, b: float, k_max: int, state: int = 1
) -> RunLengthDist:
    """
    Run lengths under a second-order chain

    Args:
        a: P(next = x | prev != x, cur = x), continuation after the first slot
        b: P(next = x | prev = x, cur = x), continuation inside a run
        k_max: Largest tabulated run length
        state: The run state x

    Returns:
        RunLengthDist: P(L = 1) = 1 - a, P(L = k) = a b^(k-2) (1 - b)
    """
    for name, value in (("a", a), ("b", b)):
        if not math.isfinite(value) or not 0.0 <= value <= 1.0:
            raise DomainError(f"continuation probability {name}={value!r} outside [0, 1]")
    k_max = _check_k_max(k_max)
    survival = np.empty(k_max + 1)
    survival[0] = 1.0
    survival[1:] = a * b ** np.arange(k_max, dtype=float)
    return _from_survival(survival, state)


def fit_second_order(
    traces: Sequence[TraceLike], state: int = 1, min_count: int = None
) -> Tuple[float, float, List[str]]:
    """Jeffreys-smoothed within-run continuation probabilities (a, b) and sparse-context flags"""
    min_count = settings.MIN_CONTEXT_COUNT if min_count is None else min_count
    counts = triple_counts(traces)
    other = 1 - state
    entry = counts[other, state]
    inside = counts[state, state]
    a = (entry[state] + 0.5) / (entry.sum() + 1.0)
    b = (inside[state] + 0.5) / (inside.sum() + 1.0)
    flags = [
        f"{i}{state}"
        for i, total in ((other, entry.sum()), (state, inside.sum()))
        if total < min_count
    ]
    if flags:
        logger.warning(f"Second-order contexts {flags} observed fewer than {min_count} times")
    return float(a), float(b), flags


def collect_runs(traces: Sequence[TraceLike], state: int) -> np.ndarray:
    """Uncensored run lengths of `state` pooled over traces"""
    runs = [extract_runs(trace, state) for trace in traces]
    return np.concatenate(runs) if runs else np.array([], dtype=np.intp)


def empirical_runlength_pmf(
    traces: Sequence[TraceLike], state: int, k_max: int
) -> RunLengthDist:
    """Censored empirical run-length PMF, runs longer than k_max lumped in the tail"""
    k_max = _check_k_max(k_max)
    lengths = collect_runs(traces, state)
    if lengths.size == 0:
        raise InsufficientDataError(f"no uncensored runs of state {state}")
    histogram = np.bincount(np.minimum(lengths, k_max + 1), minlength=k_max + 2)
    total = lengths.size
    return RunLengthDist(
        state=state,
        pmf=(histogram[1 : k_max + 1] / total).tolist(),
        tail_mass=float(histogram[k_max + 1] / total),
    )


def tv_distance(p: RunLengthDist, q: RunLengthDist) -> float:
    """Total variation over k = 1..k_max plus the lumped tail bucket"""
    if p.k_max != q.k_max:
        raise DomainError(f"k_max mismatch: {p.k_max} vs {q.k_max}")
    diff = np.abs(np.asarray(p.pmf) - np.asarray(q.pmf)).sum()
    value = 0.5 * (float(diff) + abs(p.tail_mass - q.tail_mass))
    return min(max(value, 0.0), 1.0)


def default_k_max(p_exit: float, n_slots: int) -> int:
    """ceil(factor / p_exit) slots, capped at n_slots"""
    if not 0.0 < p_exit <= 1.0:
        raise DomainError(f"exit probability {p_exit!r} outside (0, 1]")
    return max(1, min(int(math.ceil(settings.K_MAX_DWELL_FACTOR / p_exit)), n_slots))


@dataclass
class FidelityPoint:
    """One grid point: kernel, link configuration and optional plan override"""

    kernel: KernelSpec
    cfg: LinkConfig
    plan: Optional[SimPlan] = None


class FidelityAnalyzer:
    """Service building fidelity reports for single configurations and grids"""

    def __init__(self, max_workers: int = None, state: int = 1):
        """
        Initialize the analyzer

        Args:
            max_workers: Maximum number of grid points processed concurrently
            state: Binary state whose runs are diagnosed
        """
        self.max_workers = max_workers or settings.MAX_WORKERS
        self.state = state

    def build_report(
        self,
        kernel: KernelSpec,
        cfg: LinkConfig,
        plan: SimPlan = None,
        include_pmfs: bool = False,
    ) -> FidelityReport:
        """
        Simulate one configuration and compare it with the matched GE chain

        Args:
            kernel: Covariance kernel
            cfg: Slot duration and threshold
            plan: Monte Carlo plan (protocol defaults when omitted)
            include_pmfs: Attach empirical, GE, second-order and Bernoulli run-length PMFs

        Returns:
            FidelityReport: One fidelity-table row with provenance
        """
        plan = plan or SimPlan(kernel=kernel, cfg=cfg)
        if plan.kernel != kernel or plan.cfg != cfg:
            plan = plan.model_copy(update={"kernel": kernel, "cfg": cfg})
        params = ge_params(kernel, cfg)
        exact = markov_gap_exact(kernel, cfg)
        persistence_plan = plan.model_copy(
            update={"n_reps": plan.n_reps * max(1, settings.PERSISTENCE_REP_FACTOR)}
        )
        # replications are keyed by index, so the first n_reps are the plan's own
        persistence_traces = simulate_traces(persistence_plan)
        traces = persistence_traces[: plan.n_reps]

        empirical = markov_gap_empirical(traces)
        p_exit = params.p10 if self.state == 1 else params.p01
        k_max = default_k_max(p_exit, plan.n_slots)
        observed = empirical_runlength_pmf(traces, self.state, k_max)
        geometric = ge_runlength_pmf(p_exit, k_max, self.state)
        a, b, fit_flags = fit_second_order(traces, self.state)
        second = second_order_runlength_pmf(a, b, k_max, self.state)
        bernoulli = bernoulli_runlength_pmf(cfg.s_norm, k_max, self.state)
        persistence = empirical_persistence(persistence_traces, cfg)

        flags = [f"insufficient_context:{c}" for c in empirical.insufficient_contexts]
        flags += [f"second_order_context:{c}" for c in fit_flags]
        flags += [f"degenerate_rep:{r}" for r in persistence.degenerate_reps]

        report = FidelityReport(
            kernel=kernel.family,
            tc_over_d=kernel.t_c / cfg.d,
            s_norm=cfg.s_norm,
            max_markov_gap=empirical.max_gap,
            gaps=empirical.gaps,
            max_markov_gap_exact=exact.max_gap,
            gaps_exact=exact.gaps,
            dtv_ge=tv_distance(observed, geometric),
            dtv_second=tv_distance(observed, second),
            dtv_bernoulli=tv_distance(observed, bernoulli),
            persistence_rel_err_pct=abs(persistence.mean - params.persistence)
            / params.persistence
            * 100.0,
            persistence_exact=params.persistence,
            persistence_mc=persistence.mean,
            persistence_ci95=persistence.ci95,
            k_max=k_max,
            n_runs=int(collect_runs(traces, self.state).size),
            flags=flags,
            metadata={
                "plan_id": plan.plan_id,
                "seed": str(plan.seed),
                "n_slots": str(plan.n_slots),
                "n_reps": str(plan.n_reps),
                "run_state": str(self.state),
                "runs": "boundary runs censored",
                "gap_estimator": "pooled triple counts, Jeffreys 1/2",
                "second_order_fit": f"a={a!r}, b={b!r}",
                "persistence_estimator": "pooled Jeffreys, jackknife 95% CI",
                "persistence_reps": str(persistence_plan.n_reps),
            },
            pmfs={
                "empirical": observed,
                "ge": geometric,
                "second": second,
                "bernoulli": bernoulli,
            }
            if include_pmfs
            else None,
        )
        logger.info(
            f"{kernel.family.label} t_c/d={report.tc_over_d:g} s={cfg.s_norm:g}: "
            f"gap={report.max_markov_gap:.4f} dtv_ge={report.dtv_ge:.4f} "
            f"dtv_2nd={report.dtv_second:.4f} err={report.persistence_rel_err_pct:.2f}%"
        )
        return report

    def build_reports(
        self,
        points: Sequence[FidelityPoint],
        include_pmfs: bool = False,
        max_workers: int = None,
    ) -> List[Union[FidelityReport, BaseException]]:
        """Build reports for a grid in parallel; order follows `points`"""

        def run_point(point: FidelityPoint) -> FidelityReport:
            return self.build_report(point.kernel, point.cfg, point.plan, include_pmfs)

        return grid_executor.run_sync(
            run_point, list(points), max_workers or self.max_workers
        )


# Singleton instance
fidelity_analyzer = FidelityAnalyzer()
