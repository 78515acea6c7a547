"""Configuration management for score recalibration."""

from __future__ import annotations

import os

from pydantic import Field
from pydantic_settings import BaseSettings


class Settings(BaseSettings):
    """Application settings, configurable via environment variables."""

    # Stop the swing solver once |h(alpha) - D| falls below this
    tolerance: float = Field(default=1e-10, gt=0.0, lt=1.0)

    # Largest number of trials an exact PMF is computed for
    max_pmf_size: int = Field(default=100_000, ge=1)

    # Largest N the 2^N enumeration oracle accepts
    enumeration_cap: int = Field(default=20, ge=1, le=25)

    # Clamp scores into [eps, 1 - eps] on ingestion (off when None)
    clamp_epsilon: float | None = Field(default=None, gt=0.0, lt=0.5)

    # Relative slack allowed in the bound chain
    bound_slack: float = Field(default=1e-9, ge=0.0)

    # Worker threads for leave-one-out batches and simulation rows
    threads: int | None = Field(default=None, ge=1, le=512)

    # Simulation defaults
    sim_n: int = Field(default=1000, ge=2)
    seed: int = Field(default=20211103, ge=0)

    # Significant digits written to output files
    significant_digits: int = Field(default=10, ge=6, le=17)

    model_config = {"env_prefix": "LOGIT_SHIFT_"}

    def resolved_threads(self) -> int:
        """Return the worker count, defaulting to every available core."""
        if self.threads is not None:
            return self.threads
        return os.cpu_count() or 1

    def float_format(self) -> str:
        return f"%.{self.significant_digits}g"
