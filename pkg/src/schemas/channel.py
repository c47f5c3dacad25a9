import hashlib
from enum import Enum

from pydantic import BaseModel, ConfigDict, Field

from src.core.config import settings


class KernelFamily(str, Enum):
    """Stationary covariance kernel families"""

    SQEXP = "sqexp"
    EXP = "exp"

    @property
    def label(self) -> str:
        return "SqExp" if self is KernelFamily.SQEXP else "Exp"


class KernelSpec(BaseModel):
    """Covariance kernel with marginal variance sigma2 and correlation length t_c"""

    model_config = ConfigDict(frozen=True, allow_inf_nan=False)

    family: KernelFamily
    sigma2: float = Field(1.0, gt=0)
    t_c: float = Field(..., gt=0)


class LinkConfig(BaseModel):
    """Slot duration d and normalized threshold s_norm = S / sigma"""

    model_config = ConfigDict(frozen=True, allow_inf_nan=False)

    d: float = Field(1.0, gt=0)
    s_norm: float = 0.0


class GeParams(BaseModel):
    """Matched Gilbert-Elliott chain"""

    model_config = ConfigDict(frozen=True)

    rho: float
    d: float
    s_norm: float
    p01: float
    p10: float
    pi0: float
    pi1: float
    dwell0: float
    dwell1: float
    persistence: float
    q: float
    n_cross: float


class SimPlan(BaseModel):
    """Monte Carlo plan: n_reps independent sequences of n_slots samples"""

    model_config = ConfigDict(frozen=True)

    kernel: KernelSpec
    cfg: LinkConfig = LinkConfig()
    n_slots: int = Field(default_factory=lambda: settings.N_SLOTS, ge=2)
    n_reps: int = Field(default_factory=lambda: settings.N_REPS, ge=1)
    seed: int = Field(default_factory=lambda: settings.DEFAULT_SEED, ge=0, lt=2**64)

    @property
    def plan_id(self) -> str:
        """Short content hash identifying the plan"""
        return hashlib.sha256(self.model_dump_json().encode("utf-8")).hexdigest()[:16]

    @property
    def stream_key(self) -> int:
        """
        64-bit key of the grid point (kernel, cfg) within the seed

        Plans that differ only in sample sizes or seed share the key, so a
        grid point draws the same random stream whichever grid it belongs to,
        while distinct grid points draw independent streams.
        """
        point = self.kernel.model_dump_json() + self.cfg.model_dump_json()
        return int.from_bytes(hashlib.sha256(point.encode("utf-8")).digest()[:8], "little")

    @property
    def s_abs(self) -> float:
        """Absolute threshold S = s_norm * sigma"""
        return self.cfg.s_norm * self.kernel.sigma2**0.5
