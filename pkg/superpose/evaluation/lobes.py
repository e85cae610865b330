"""Perpendicular spread of a reconstruction around two parallel lines."""

from __future__ import annotations

import numpy as np
from pydantic import BaseModel

from superpose.core.signal import SourceSet
from superpose.errors import EvaluationError


class LineSpec(BaseModel):
    point: tuple[float, float]
    direction: tuple[float, float]


class LobeStats(BaseModel):
    line: int
    count: int
    mean_offset: float
    std: float
    mean_offset_px: float
    std_px: float


def _normal(direction) -> np.ndarray:
    d = np.asarray(direction, dtype=np.float64)
    norm = np.linalg.norm(d)
    if norm == 0:
        raise EvaluationError("line direction must be nonzero")
    d /= norm
    return np.array([-d[1], d[0]])


def perpendicular_coordinates(sources: SourceSet, lines: list[LineSpec]) -> tuple[np.ndarray, np.ndarray]:
    """Coordinate of every source, and of every line, along the first line's normal."""
    if sources.grid.dimension != 2:
        raise EvaluationError("lobe statistics need a 2-D reconstruction")
    normal = _normal(lines[0].direction)
    origin = np.asarray(lines[0].point)
    coords = (sources.positions - origin) @ normal
    offsets = np.array([(np.asarray(line.point) - origin) @ normal for line in lines])
    return coords, offsets


def perpendicular_histogram(sources: SourceSet, lines: list[LineSpec], d_bin: float) -> tuple[np.ndarray, np.ndarray]:
    coords, _ = perpendicular_coordinates(sources, lines)
    lo = np.floor(coords.min() / d_bin) * d_bin
    hi = np.ceil(coords.max() / d_bin) * d_bin + d_bin
    return np.histogram(coords, bins=np.arange(lo, hi + d_bin / 2, d_bin))


def line_lobe_stats(sources: SourceSet, lines: list[LineSpec], pixel_size: float | None = None) -> list[LobeStats]:
    """Split the perpendicular coordinate at the midpoint between the lines.

    Each lobe reports the mean offset from its own line and the standard
    deviation, in physical units and in pixels.
    """
    if len(lines) != 2:
        raise EvaluationError(f"expected two lines, got {len(lines)}")
    pixel_size = pixel_size or sources.grid.pixel_size
    coords, offsets = perpendicular_coordinates(sources, lines)
    midpoint = offsets.mean()
    lower = int(np.argmin(offsets))
    stats = []
    for index, offset in enumerate(offsets):
        members = coords[coords < midpoint] if index == lower else coords[coords >= midpoint]
        if members.size == 0:
            stats.append(LobeStats(line=index, count=0, mean_offset=float("nan"), std=float("nan"),
                                   mean_offset_px=float("nan"), std_px=float("nan")))
            continue
        mean = float(members.mean() - offset)
        std = float(members.std())
        stats.append(
            LobeStats(
                line=index,
                count=int(members.size),
                mean_offset=mean,
                std=std,
                mean_offset_px=mean / pixel_size,
                std_px=std / pixel_size,
            )
        )
    return stats
