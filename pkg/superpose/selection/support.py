"""Ground-truth estimate (m, y_p, R_p) from a preliminary fit."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from superpose.config.logging import get_logger
from superpose.core.signal import SourceSet
from superpose.core.truth import GroundTruth
from superpose.evaluation.histogram import histogram_stack

logger = get_logger(__name__)


@dataclass(frozen=True)
class SupportEstimate:
    truth: GroundTruth
    d_bin: float
    level: int
    occupied_per_level: tuple[int, ...]
    stabilized: bool


def estimate_support(sources: SourceSet, levels: int = 3, tolerance: float = 0.05) -> SupportEstimate:
    """Histogram the solution at d_p / 2^k, k = 0..levels, and keep the first stable level.

    A level is stable when halving the bin changes the occupied-bin count by
    less than ``tolerance``; without one the finest level is used. Each
    occupied bin becomes a support point at the centroid of its sources with
    R_p = alpha * count.
    """
    stack = histogram_stack(sources, levels)
    occupied = tuple(h.m_bin for h in stack)
    chosen = len(stack) - 1
    stabilized = False
    for k in range(len(stack) - 1):
        if abs(occupied[k + 1] - occupied[k]) < tolerance * occupied[k]:
            chosen, stabilized = k, True
            break
    hist = stack[chosen]

    edges = hist.edges
    index = np.stack(
        [np.clip(np.searchsorted(edges[a], sources.positions[:, a], side="right") - 1, 0, len(edges[a]) - 2)
         for a in range(len(edges))],
        axis=-1,
    )
    keys, inverse, counts = np.unique(index, axis=0, return_inverse=True, return_counts=True)
    inverse = inverse.ravel()
    centroids = np.zeros((keys.shape[0], sources.positions.shape[1]))
    np.add.at(centroids, inverse, sources.positions)
    centroids /= counts[:, None]

    truth = GroundTruth(support=centroids, intensities=sources.alpha * counts)
    logger.info(
        "support_estimated",
        m=truth.m,
        d_bin=hist.d_bin,
        level=chosen,
        occupied=list(occupied),
        stabilized=stabilized,
    )
    return SupportEstimate(
        truth=truth,
        d_bin=hist.d_bin,
        level=chosen,
        occupied_per_level=occupied,
        stabilized=stabilized,
    )
