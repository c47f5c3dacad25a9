from typing import Callable, List

import numpy as np
import pytest

from src.schemas.channel import KernelFamily, KernelSpec, LinkConfig, SimPlan
from src.schemas.reports import BinaryTrace
from src.services.trace_sim import covariance_factor


@pytest.fixture(autouse=True)
def clear_factor_cache():
    """
    Start every test with an empty covariance-factor cache.
    """
    covariance_factor.cache_clear()
    yield
    covariance_factor.cache_clear()


@pytest.fixture
def make_trace() -> Callable[[str], BinaryTrace]:
    """
    Build a trace from a string such as "0110".
    """

    def _make(text: str, rep: int = None) -> BinaryTrace:
        return BinaryTrace(bits=np.array([int(c) for c in text], dtype=np.uint8), rep=rep)

    return _make


@pytest.fixture
def make_plan() -> Callable[..., SimPlan]:
    """
    Build a Monte Carlo plan for a kernel family and T_c with D = 1.
    """

    def _make(
        family: KernelFamily,
        t_c: float,
        s_norm: float = 0.0,
        n_slots: int = 1200,
        n_reps: int = 250,
        seed: int = 12345,
        sigma2: float = 1.0,
    ) -> SimPlan:
        return SimPlan(
            kernel=KernelSpec(family=family, sigma2=sigma2, t_c=t_c),
            cfg=LinkConfig(d=1.0, s_norm=s_norm),
            n_slots=n_slots,
            n_reps=n_reps,
            seed=seed,
        )

    return _make


@pytest.fixture
def iid_traces() -> List[BinaryTrace]:
    """
    Independent fair bits, 200 traces of 1500 slots.
    """
    rng = np.random.default_rng(2024)
    return [
        BinaryTrace(bits=rng.integers(0, 2, size=1500, dtype=np.uint8), rep=rep)
        for rep in range(200)
    ]
