from enum import Enum
from pathlib import Path
from typing import List, Optional

from pydantic import BaseModel, ConfigDict, Field, field_validator

from src.core.config import settings
from src.schemas.channel import KernelFamily


class OutputFormat(str, Enum):
    """Output encodings for command results"""

    CSV = "csv"
    JSON = "json"


class TraceFormat(str, Enum):
    """Trace export encodings"""

    TXT = "txt"
    GEB = "geb"


class RunConfig(BaseModel):
    """Validated parameters of one CLI invocation; defaults sigma=1, S=0, D=1"""

    model_config = ConfigDict(extra="ignore", allow_inf_nan=False)

    command: str
    kernel: KernelFamily = KernelFamily.SQEXP
    kernels: List[KernelFamily] = []
    sigma: float = Field(1.0, gt=0)
    d: float = Field(1.0, gt=0)
    s: List[float] = [0.0]
    tc: Optional[float] = Field(None, gt=0)
    tc_grid: List[float] = []
    rho: Optional[float] = None
    n_slots: int = Field(default_factory=lambda: settings.N_SLOTS, ge=2)
    n_reps: int = Field(default_factory=lambda: settings.N_REPS, ge=1)
    seed: int = Field(default_factory=lambda: settings.DEFAULT_SEED, ge=0, lt=2**64)
    jobs: int = Field(default_factory=lambda: settings.MAX_WORKERS, ge=1)
    output_format: OutputFormat = OutputFormat.CSV
    output: Optional[Path] = None
    grid: List[str] = []
    strict: bool = False
    mc: bool = True
    trace_dir: Optional[Path] = None
    trace_format: TraceFormat = TraceFormat.TXT
    paths_output: Optional[Path] = None
    n_paths: int = Field(3, ge=0)
    pmf_output: Optional[Path] = None
    model: str = "report"

    @field_validator("tc_grid")
    @classmethod
    def _positive_grid(cls, value: List[float]) -> List[float]:
        if any(tc <= 0 for tc in value):
            raise ValueError("every T_c in the grid must be positive")
        return value

    @property
    def sigma2(self) -> float:
        return self.sigma**2
