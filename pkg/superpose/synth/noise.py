"""Instrument noise models."""

from __future__ import annotations

from typing import Literal

import numpy as np
from pydantic import BaseModel, Field


class NoiseModel(BaseModel):
    """Zero-mean Gaussian noise with std = floor + shot * sqrt(S), or a constant std."""

    kind: Literal["shot_floor", "gaussian", "none"] = "shot_floor"
    floor: float = Field(default=23.0, ge=0.0)
    shot: float = Field(default=1.0, ge=0.0)

    def std(self, values: np.ndarray) -> np.ndarray:
        values = np.asarray(values, dtype=np.float64)
        if self.kind == "none":
            return np.zeros_like(values)
        if self.kind == "gaussian":
            return np.full_like(values, self.floor)
        return self.floor + self.shot * np.sqrt(np.clip(values, 0.0, None))

    def sample(self, values: np.ndarray, rng: np.random.Generator) -> np.ndarray:
        """One noise realization eta for the noiseless counts ``values``."""
        values = np.asarray(values, dtype=np.float64)
        if self.kind == "none":
            return np.zeros_like(values)
        return rng.normal(0.0, 1.0, size=values.shape) * self.std(values)

    def expected_power(self, values: np.ndarray) -> float:
        """<||eta||^2> = sum_i std_i^2."""
        return float(np.sum(self.std(values) ** 2))
