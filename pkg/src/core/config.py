import os

from pydantic_settings import BaseSettings, SettingsConfigDict


class Settings(BaseSettings):
    """Application settings"""

    model_config = SettingsConfigDict(
        env_file=os.environ.get("ENV_FILE", ".env.example"),
        env_file_encoding="utf-8",
        case_sensitive=True,
        extra="ignore",
    )

    # Logging settings
    LOG_LEVEL: str = "INFO"

    # Monte Carlo protocol
    DEFAULT_SEED: int = 20240611
    N_SLOTS: int = 1200
    N_REPS: int = 250

    # Grid execution
    MAX_WORKERS: int = 4

    # Trivariate orthant quadrature
    QUAD_ABS_TOL: float = 1e-10
    QUAD_LIMIT: int = 200
    QUAD_BOUND: float = 8.0

    # Covariance factorization
    CHOLESKY_JITTER: float = 1e-10
    CHOLESKY_MAX_JITTER: float = 1e-6

    # Diagnostics
    MIN_CONTEXT_COUNT: int = 100
    K_MAX_DWELL_FACTOR: float = 10.0
    PERSISTENCE_REP_FACTOR: int = 4


settings = Settings()
