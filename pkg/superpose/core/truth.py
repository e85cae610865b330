"""Discrete ground-truth distributions and their truncation to integer multiples of alpha."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from superpose.core.signal import PixelGrid, SourceSet
from superpose.errors import InputError, TruncationError


@dataclass(frozen=True, eq=False)
class GroundTruth:
    """R(x) = sum_p R_p delta(x - y_p)."""

    support: np.ndarray
    intensities: np.ndarray

    def __post_init__(self):
        support = np.asarray(self.support, dtype=np.float64)
        if support.ndim == 1:
            support = support[:, None]
        intensities = np.asarray(self.intensities, dtype=np.float64).ravel()
        if support.shape[0] < 1:
            raise InputError("ground truth needs at least one support point")
        if support.shape[0] != intensities.size:
            raise InputError(
                f"{support.shape[0]} support points but {intensities.size} intensities"
            )
        if np.any(~np.isfinite(intensities)) or np.any(intensities <= 0):
            raise InputError("ground-truth intensities must be positive")
        support.flags.writeable = False
        intensities.flags.writeable = False
        object.__setattr__(self, "support", support)
        object.__setattr__(self, "intensities", intensities)

    @property
    def m(self) -> int:
        return int(self.intensities.size)

    @property
    def dimension(self) -> int:
        return int(self.support.shape[1])

    @property
    def total(self) -> float:
        return float(self.intensities.sum())


@dataclass(frozen=True, eq=False)
class TruncatedTruth:
    """Integer allocation N_p of N sources of intensity alpha over the support."""

    truth: GroundTruth
    alpha: float
    counts: np.ndarray

    @property
    def n_sources(self) -> int:
        return int(self.counts.sum())

    @property
    def truncated(self) -> np.ndarray:
        """R-bar_p = N_p * alpha."""
        return self.counts * self.alpha

    @property
    def residuals(self) -> np.ndarray:
        """X_p = R-bar_p - R_p."""
        return self.truncated - self.truth.intensities

    def expand_positions(self) -> np.ndarray:
        """a_k list: y_p repeated N_p times, in support order."""
        return np.repeat(self.truth.support, self.counts, axis=0)

    def to_source_set(self, grid: PixelGrid) -> SourceSet:
        return SourceSet(positions=self.expand_positions(), alpha=self.alpha, grid=grid)


def truncate_ground_truth(gt: GroundTruth, alpha: float, n_sources: int) -> TruncatedTruth:
    """Allocate N sources of intensity alpha to the support points.

    N_p starts at the nearest integer of R_p / alpha (halves rounded away from
    zero). While sum N_p < N, the points with the largest R_p / alpha - N_p
    receive one more source each, so points already rounded up come last and
    every residual stays within alpha; ties go to the lower index.
    """
    if not np.isfinite(alpha) or alpha <= 0:
        raise InputError(f"alpha must be positive, got {alpha}")
    ratio = gt.intensities / alpha
    counts = np.floor(ratio + 0.5).astype(np.int64)

    excess = int(counts.sum()) - int(n_sources)
    if excess > 0:
        raise TruncationError(
            f"rounding already places {counts.sum()} sources, more than N={n_sources}",
            deficit=-excess,
        )
    deficit = -excess
    if deficit > gt.m:
        raise TruncationError(
            f"N={n_sources} leaves a deficit of {deficit} sources but only {gt.m} "
            "support points can take one more",
            deficit=deficit,
        )
    if deficit:
        shortfall = ratio - counts
        order = np.argsort(-shortfall, kind="stable")
        counts[order[:deficit]] += 1

    counts.flags.writeable = False
    return TruncatedTruth(truth=gt, alpha=float(alpha), counts=counts)
