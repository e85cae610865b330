import os

from pydantic import Field
from pydantic_settings import BaseSettings


class Settings(BaseSettings):
    # Application
    log_level: str = "INFO"
    workers: int = Field(
        default_factory=lambda: os.cpu_count() or 1,
        description="Threads used for population-wide chi-squared evaluation",
    )
    progress_every: int = 100

    # Forward model
    quadrature_points: int = Field(default=4, description="Gauss-Legendre points per axis for pixelation")
    support_radius_factor: float | None = Field(
        default=None,
        description="Truncate IRF evaluation at this many d0; None evaluates exactly",
    )
    source_chunk: int = 256

    # Evaluation
    assignment_exact_limit: int = 2000
    assignment_excess_limit: float = 0.05

    model_config = {
        "env_file": ".env",
        "env_file_encoding": "utf-8",
        "env_prefix": "SUPERPOSE_",
    }


settings = Settings()
