import math
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Tuple

import numpy as np
from pydantic import BaseModel, Field, computed_field, model_validator

from src.schemas.channel import KernelFamily


@dataclass(frozen=True)
class BinaryTrace:
    """Thresholded slot sequence; bit n is 1 iff X(nD) >= S"""

    bits: np.ndarray
    plan_id: Optional[str] = None
    rep: Optional[int] = None
    meta: Dict[str, str] = field(default_factory=dict)

    def __post_init__(self):
        bits = np.asarray(self.bits, dtype=np.uint8)
        if bits.ndim != 1:
            raise ValueError("bits must be one-dimensional")
        if bits.size and bits.max() > 1:
            raise ValueError("bits must be 0/1")
        bits.setflags(write=False)
        object.__setattr__(self, "bits", bits)

    def __len__(self) -> int:
        return int(self.bits.size)


class TransitionEstimate(BaseModel):
    """Jeffreys-smoothed transition estimates with 95% CIs across replications"""

    p01_hat: float
    p10_hat: float
    ci95_p01: Tuple[float, float]
    ci95_p10: Tuple[float, float]
    counts: List[List[int]]
    n_reps: int
    degenerate_reps: List[int] = []


class PersistenceEstimate(BaseModel):
    """Steady-state persistence time from empirical occupancies and transitions"""

    mean: float
    ci95: Tuple[float, float]
    n_reps: int
    degenerate_reps: List[int] = []


class MarkovGaps(BaseModel):
    """Order-2 vs order-1 conditional gaps, gaps[i][j] for (B_{n-1}, B_n) = (i, j)"""

    gaps: List[List[float]]
    order2: List[List[float]]
    order1: List[float]
    context_counts: Optional[List[List[int]]] = None
    insufficient_contexts: List[str] = []

    @model_validator(mode="after")
    def _check_nonnegative(self) -> "MarkovGaps":
        if any(g < 0 for row in self.gaps for g in row):
            raise ValueError("Markov gaps must be nonnegative")
        return self

    @computed_field
    @property
    def max_gap(self) -> float:
        return max(max(row) for row in self.gaps)


class RunLengthDist(BaseModel):
    """Run-length PMF over k = 1..k_max with the mass beyond k_max lumped in tail_mass"""

    state: int = Field(..., ge=0, le=1)
    pmf: List[float]
    tail_mass: float = Field(..., ge=0)

    @model_validator(mode="after")
    def _check_total(self) -> "RunLengthDist":
        if not self.pmf:
            raise ValueError("pmf must cover at least k = 1")
        total = math.fsum(self.pmf) + self.tail_mass
        if abs(total - 1.0) > 1e-12:
            raise ValueError(f"pmf and tail mass sum to {total!r}, not 1")
        return self

    @property
    def k_max(self) -> int:
        return len(self.pmf)

    def probability(self, k: int) -> float:
        """P(L = k) for 1 <= k <= k_max"""
        if not 1 <= k <= self.k_max:
            raise KeyError(k)
        return self.pmf[k - 1]

    def mean(self) -> float:
        """Mean of the truncated part, renormalized"""
        body = math.fsum(self.pmf)
        return math.fsum(k * p for k, p in enumerate(self.pmf, start=1)) / body


class FidelityReport(BaseModel):
    """One fidelity-table row plus the exact-quadrature gaps and provenance"""

    kernel: KernelFamily
    tc_over_d: float
    s_norm: float
    max_markov_gap: float = Field(..., ge=0)
    gaps: List[List[float]]
    max_markov_gap_exact: float = Field(..., ge=0)
    gaps_exact: List[List[float]]
    dtv_ge: float = Field(..., ge=0, le=1)
    dtv_second: float = Field(..., ge=0, le=1)
    dtv_bernoulli: float = Field(..., ge=0, le=1)
    persistence_rel_err_pct: float = Field(..., ge=0)
    persistence_exact: float
    persistence_mc: float
    persistence_ci95: Tuple[float, float]
    k_max: int
    n_runs: int
    flags: List[str] = []
    metadata: Dict[str, str] = {}
    pmfs: Optional[Dict[str, RunLengthDist]] = None
