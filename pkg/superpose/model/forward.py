"""Forward model: S~(x_i) = alpha * sum_k I~_*(x_i - a_k)."""

from __future__ import annotations

from enum import Enum

import numpy as np

from superpose.config.settings import settings
from superpose.core.signal import PixelGrid, SampledSignal, SourceSet
from superpose.model.irf import IrfModel


class BackgroundMode(str, Enum):
    NONE = "none"
    SUBTRACTED_KNOWN = "subtracted"
    UNKNOWN_CONSTANT = "constant-bg"

    @property
    def uses_deviation(self) -> bool:
        return self is BackgroundMode.UNKNOWN_CONSTANT


def working_target(signal: SampledSignal, mode: BackgroundMode) -> SampledSignal:
    """S_*: the signal itself, or S_dev under an unknown constant background."""
    return signal.deviation() if BackgroundMode(mode).uses_deviation else signal


def _dense_sum(positions: np.ndarray, irf: IrfModel, centers: np.ndarray, chunk: int) -> np.ndarray:
    total = np.zeros(centers.shape[0])
    for start in range(0, positions.shape[0], chunk):
        block = positions[start : start + chunk]
        total += irf(centers[:, None, :] - block[None, :, :]).sum(axis=1)
    return total


def _windowed_sum(positions: np.ndarray, irf: IrfModel, grid: PixelGrid, radius: float) -> np.ndarray:
    total = np.zeros(grid.shape)
    pitch = np.asarray(grid.pitch)
    origin = np.asarray(grid.origin)
    extents = np.asarray(grid.extents)
    for position in positions:
        lo = np.clip(np.ceil((position - radius - origin) / pitch), 0, extents).astype(int)
        hi = np.clip(np.floor((position + radius - origin) / pitch) + 1, 0, extents).astype(int)
        if np.any(hi <= lo):
            continue
        axes = [origin[a] + pitch[a] * np.arange(lo[a], hi[a]) for a in range(grid.dimension)]
        if grid.dimension == 1:
            total[lo[0] : hi[0]] += irf((axes[0] - position[0])[:, None])
        else:
            xx, yy = np.meshgrid(axes[0], axes[1])
            offsets = np.stack([xx - position[0], yy - position[1]], axis=-1)
            total[lo[1] : hi[1], lo[0] : hi[0]] += irf(offsets)
    return total.ravel()


def basis(
    positions: np.ndarray,
    irf: IrfModel,
    grid: PixelGrid,
    mode: BackgroundMode = BackgroundMode.NONE,
    centers: np.ndarray | None = None,
) -> np.ndarray:
    """u_i = sum_k I~_*(x_i - a_k), flattened in grid order.

    I~_dev subtracts each source's mean over the grid, which is the same as
    subtracting the grid mean of the summed field.
    """
    positions = np.asarray(positions, dtype=np.float64).reshape(-1, grid.dimension)
    factor = settings.support_radius_factor
    if factor:
        u = _windowed_sum(positions, irf, grid, factor * irf.width)
    else:
        centers = grid.centers() if centers is None else centers
        u = _dense_sum(positions, irf, centers, max(1, settings.source_chunk))
    if BackgroundMode(mode).uses_deviation:
        u = u - u.mean()
    return u


def evaluate_model(
    sources: SourceSet,
    irf: IrfModel,
    grid: PixelGrid | None = None,
    mode: BackgroundMode = BackgroundMode.NONE,
) -> SampledSignal:
    grid = grid or sources.grid
    values = sources.alpha * basis(sources.positions, irf, grid, mode)
    return SampledSignal(grid=grid, values=values, label=f"model N={sources.n_sources}")


def source_field(
    position,
    irf: IrfModel,
    grid: PixelGrid,
    mode: BackgroundMode = BackgroundMode.NONE,
    centers: np.ndarray | None = None,
) -> np.ndarray:
    """I~_*(x_i - b) for a single position b, flattened in grid order."""
    return basis(np.asarray(position)[None, :], irf, grid, mode, centers=centers)
