"""Smoothed renders of a source cloud on an output grid."""

from __future__ import annotations

import numpy as np
from scipy.signal import fftconvolve

from superpose.config.logging import get_logger
from superpose.core.signal import PixelGrid, SampledSignal, SourceSet
from superpose.errors import InputError

logger = get_logger(__name__)

_SPHERE_OVERSAMPLING = 8


def superpixel_grid(grid: PixelGrid, d_s: float) -> PixelGrid:
    """Grid of pitch ``d_s`` covering the same field as ``grid``."""
    lower = [o - p / 2.0 for o, p in zip(grid.origin, grid.pitch)]
    extents = tuple(max(1, int(round(p * e / d_s))) for p, e in zip(grid.pitch, grid.extents))
    origin = tuple(lo + d_s / 2.0 for lo in lower)
    return PixelGrid(extents=extents, pitch=d_s, origin=origin)


def binned_counts(sources: SourceSet, grid: PixelGrid) -> np.ndarray:
    """alpha * source count per output pixel; sources off the grid are dropped."""
    edges = [grid.edges(a) for a in range(grid.dimension)]
    counts, _ = np.histogramdd(sources.positions, bins=edges)
    counts = counts.T if grid.dimension == 2 else counts
    return sources.alpha * counts


def sphere_profile(diameter: float, grid: PixelGrid) -> SampledSignal:
    """Unit-sum projection of a uniform sphere on a centered kernel grid.

    In 2-D the column thickness is sqrt(r^2 - rho^2); in 1-D the slab area is
    r^2 - x^2. Each pixel is averaged over an oversampled sub-lattice.
    """
    if diameter <= 0:
        raise InputError("sphere diameter must be positive")
    radius = diameter / 2.0
    extents = tuple(2 * int(np.ceil(radius / p)) + 1 for p in grid.pitch)
    kernel_grid = PixelGrid(extents=extents, pitch=grid.pitch).centered_like()
    steps = (np.arange(_SPHERE_OVERSAMPLING) + 0.5) / _SPHERE_OVERSAMPLING - 0.5
    centers = kernel_grid.centers()
    values = np.zeros(centers.shape[0])
    for shift in np.stack(np.meshgrid(*([steps] * grid.dimension), indexing="ij"), axis=-1).reshape(-1, grid.dimension):
        rho2 = np.sum((centers + shift * np.asarray(grid.pitch)) ** 2, axis=1)
        inside = np.clip(radius**2 - rho2, 0.0, None)
        values += np.sqrt(inside) if grid.dimension == 2 else inside
    if values.sum() <= 0:
        raise InputError("sphere is smaller than the sub-pixel sampling")
    return SampledSignal(grid=kernel_grid, values=values / values.sum(), label=f"sphere {diameter:g}")


def delta_kernel(grid: PixelGrid) -> SampledSignal:
    kernel_grid = PixelGrid(extents=(1,) * grid.dimension, pitch=grid.pitch).centered_like()
    return SampledSignal(grid=kernel_grid, values=np.ones(1), label="delta")


def padded_grid(grid: PixelGrid, margin) -> PixelGrid:
    """``grid`` grown by ``margin`` pixels on both sides of each axis."""
    margin = tuple(int(m) for m in np.broadcast_to(margin, (grid.dimension,)))
    return PixelGrid(
        extents=tuple(e + 2 * m for e, m in zip(grid.extents, margin)),
        pitch=grid.pitch,
        origin=tuple(o - m * p for o, m, p in zip(grid.origin, margin, grid.pitch)),
    )


def render_smoothed(sources: SourceSet, kernel: SampledSignal, grid: PixelGrid, pad: bool = True) -> SampledSignal:
    """Bin the sources on ``grid`` and convolve with the centered ``kernel``.

    The kernel must share the output pitch and have odd extents. With ``pad``
    the output grid grows by the kernel half-width so every binned source keeps
    alpha * sum(kernel); without it the render is cropped to ``grid`` and the
    mass spread past its edges is lost.
    """
    if not kernel.grid.compatible_with(grid):
        raise InputError("kernel pitch must match the output grid")
    if any(e % 2 == 0 for e in kernel.grid.extents):
        raise InputError("kernel extents must be odd so it has a center pixel")
    binned = binned_counts(sources, grid)
    label = f"render N={sources.n_sources}"
    if pad:
        values = fftconvolve(binned, kernel.values, mode="full")
        out_grid = padded_grid(grid, [(e - 1) // 2 for e in kernel.grid.extents])
        return SampledSignal(grid=out_grid, values=values, label=label)

    values = fftconvolve(binned, kernel.values, mode="same")
    lost = float(binned.sum() * kernel.values.sum() - values.sum())
    if lost > 1e-9 * max(float(binned.sum()), 1.0):
        logger.warning("render_edge_mass_lost", lost=lost, fraction=lost / float(binned.sum()))
    return SampledSignal(grid=grid, values=values, label=label)
