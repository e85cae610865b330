"""Superpixel histograms of fitted source clouds."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import pandas as pd

from superpose.core.signal import PixelGrid, SourceSet
from superpose.errors import InputError


@dataclass(frozen=True, eq=False)
class SourceHistogram:
    """Counts per bin of side ``d_bin``; arrays use the row-major (y, x) layout."""

    d_bin: float
    edges: tuple[np.ndarray, ...]
    counts: np.ndarray
    alpha: float

    @property
    def m_bin(self) -> int:
        """Number of occupied bins."""
        return int(np.count_nonzero(self.counts))

    @property
    def intensities(self) -> np.ndarray:
        """R_p = alpha * count per bin."""
        return self.alpha * self.counts

    @property
    def total(self) -> int:
        return int(self.counts.sum())

    def bin_centers(self) -> tuple[np.ndarray, ...]:
        return tuple((e[:-1] + e[1:]) / 2.0 for e in self.edges)

    def occupied(self) -> tuple[np.ndarray, np.ndarray]:
        """(centers (m, D), counts (m,)) of the occupied bins, in row-major order."""
        index = np.nonzero(self.counts)
        axes = self.bin_centers()
        # array axes run (y, x); coordinates run (x, y)
        coords = [axes[a][index[len(axes) - 1 - a]] for a in range(len(axes))]
        return np.column_stack(coords), self.counts[index]

    def to_frame(self) -> pd.DataFrame:
        centers, counts = self.occupied()
        columns = ["x", "y"][: centers.shape[1]]
        frame = pd.DataFrame(centers, columns=columns)
        frame["count"] = counts
        frame["intensity"] = counts * self.alpha
        return frame


def _aligned_edges(anchor: float, d_bin: float, lo: float, hi: float) -> np.ndarray:
    start = anchor - np.ceil((anchor - lo) / d_bin) * d_bin if lo < anchor else anchor
    n_bins = max(1, int(np.ceil((hi - start) / d_bin)))
    if start + n_bins * d_bin <= hi:
        n_bins += 1
    return start + d_bin * np.arange(n_bins + 1)


def histogram_sources(sources: SourceSet, d_bin: float, grid: PixelGrid | None = None) -> SourceHistogram:
    """Histogram at bin size ``d_bin`` aligned to the pixel grid's lower edge.

    The bins extend beyond the grid when sources do, so counts always sum to N.
    """
    if not d_bin > 0:
        raise InputError(f"bin size must be positive, got {d_bin}")
    grid = grid or sources.grid
    positions = sources.positions
    edges = []
    for a in range(grid.dimension):
        lower = grid.origin[a] - grid.pitch[a] / 2.0
        upper = grid.origin[a] + grid.pitch[a] * (grid.extents[a] - 0.5)
        lo = min(lower, float(positions[:, a].min()))
        hi = max(upper, float(positions[:, a].max()))
        edges.append(_aligned_edges(lower, d_bin, lo, hi))
    counts, _ = np.histogramdd(positions, bins=edges)
    counts = counts.astype(np.int64)
    if grid.dimension == 2:
        counts = counts.T
    return SourceHistogram(d_bin=float(d_bin), edges=tuple(edges), counts=counts, alpha=sources.alpha)


def histogram_stack(sources: SourceSet, levels: int, grid: PixelGrid | None = None) -> list[SourceHistogram]:
    """Histograms at d_p, d_p/2, ..., d_p/2^levels."""
    grid = grid or sources.grid
    return [histogram_sources(sources, grid.pixel_size / 2**k, grid) for k in range(levels + 1)]
