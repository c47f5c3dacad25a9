from typing import Dict, Generic, List, Optional, TypeVar

from pydantic import BaseModel

RowT = TypeVar("RowT", bound=BaseModel)


class ParamsRow(BaseModel):
    """Schema for one `params` output row"""

    kernel: Optional[str] = None
    t_c: Optional[float] = None
    rho: float
    d: float
    s: float
    p01: float
    p10: float
    pi0: float
    pi1: float
    dwell0: float
    dwell1: float
    persistence: float
    n_cross: float
    p01_arcsine: Optional[float] = None


class SimulateRow(BaseModel):
    """Schema for one `simulate` output row"""

    kernel: str
    t_c: float
    s: float
    rho: float
    n_slots: int
    n_reps: int
    zero_fraction: float
    q: float
    p01_exact: float
    p01_hat: float
    p01_lo: float
    p01_hi: float
    p10_exact: float
    p10_hat: float
    p10_lo: float
    p10_hi: float
    persistence_exact: float
    persistence_mc: float
    persistence_lo: float
    persistence_hi: float
    degenerate_reps: int
    plan_id: str


class PathRow(BaseModel):
    """Schema for one sample of an exported Gaussian path"""

    rep: int
    slot: int
    time: float
    x: float


class TableRow(BaseModel):
    """Schema for one `validate-table` row, reference-table columns first"""

    tc_over_d: float
    s_norm: float
    kernel: str
    max_gap: Optional[float] = None
    dtv_ge: Optional[float] = None
    dtv_second: Optional[float] = None
    err_pct: Optional[float] = None
    max_gap_exact: Optional[float] = None
    persistence_exact: Optional[float] = None
    persistence_mc: Optional[float] = None
    k_max: Optional[int] = None
    n_runs: Optional[int] = None
    flags: str = ""
    status: str = "ok"
    error: Optional[str] = None
    acceptance: Optional[str] = None


class ScalingRow(BaseModel):
    """Schema for one `scaling` row: exact, asymptote and Monte Carlo persistence"""

    kernel: str
    t_c: float
    s: float
    rho: float
    p01: Optional[float] = None
    p10: Optional[float] = None
    dwell0: Optional[float] = None
    dwell1: Optional[float] = None
    persistence_exact: Optional[float] = None
    persistence_asymptote: float
    asymptote_ratio: Optional[float] = None
    persistence_mc: Optional[float] = None
    persistence_lo: Optional[float] = None
    persistence_hi: Optional[float] = None
    p01_mc: Optional[float] = None
    p01_lo: Optional[float] = None
    p01_hi: Optional[float] = None
    flag: Optional[str] = None


class DiagnoseRow(BaseModel):
    """Schema for one `diagnose` row: exact and empirical gaps, run-length TV"""

    kernel: str
    tc_over_d: float
    s_norm: float
    rho1: float
    rho2: float
    markov_deviation: float
    max_gap_exact: float
    gap_exact_00: float
    gap_exact_01: float
    gap_exact_10: float
    gap_exact_11: float
    max_gap: float
    gap_00: float
    gap_01: float
    gap_10: float
    gap_11: float
    dtv_ge: float
    dtv_second: float
    dtv_bernoulli: float
    dtv_ratio: Optional[float] = None
    err_pct: float
    k_max: int
    n_runs: int
    flags: str = ""


class PmfRow(BaseModel):
    """Schema for one run-length PMF entry; k is "tail" for the lumped bucket"""

    kernel: str
    tc_over_d: float
    s_norm: float
    model: str
    k: str
    probability: float


class ResultDocument(BaseModel, Generic[RowT]):
    """Schema for JSON command output"""

    meta: Dict[str, str]
    rows: List[RowT]
    summary: Dict[str, Optional[float]] = {}
