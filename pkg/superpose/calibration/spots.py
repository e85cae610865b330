"""Bright-spot detection in calibration images."""

from __future__ import annotations

import numpy as np
from scipy.ndimage import maximum_filter
from scipy.stats import median_abs_deviation

from superpose.config.logging import get_logger
from superpose.core.signal import PixelGrid, SampledSignal
from superpose.errors import InputError

logger = get_logger(__name__)


def detect_spots(
    image: SampledSignal,
    expected_width: float,
    threshold_mads: float = 5.0,
    radius_factor: float = 3.0,
) -> list[SampledSignal]:
    """Cut one patch per isolated bright spot.

    A spot is a local maximum above median + ``threshold_mads`` * MAD. Each
    patch spans ``radius_factor`` * ``expected_width`` around the maximum;
    maxima whose patch would leave the image are skipped.
    """
    if expected_width <= 0:
        raise InputError("expected spot width must be positive")
    grid = image.grid
    values = image.values
    radius_px = [max(1, int(np.ceil(radius_factor * expected_width / p))) for p in grid.pitch]
    # filter sizes follow the (y, x) array layout
    size = tuple(2 * r + 1 for r in reversed(radius_px))
    level = np.median(values) + threshold_mads * median_abs_deviation(values, axis=None)
    peaks = (values == maximum_filter(values, size=size, mode="nearest")) & (values > level)

    patches = []
    skipped = 0
    for index in zip(*np.nonzero(peaks)):
        xy = tuple(reversed(index))
        lo = [c - r for c, r in zip(xy, radius_px)]
        hi = [c + r + 1 for c, r in zip(xy, radius_px)]
        if any(l < 0 for l in lo) or any(h > e for h, e in zip(hi, grid.extents)):
            skipped += 1
            continue
        window = tuple(slice(l, h) for l, h in zip(reversed(lo), reversed(hi)))
        origin = tuple(o + p * l for o, p, l in zip(grid.origin, grid.pitch, lo))
        patch_grid = PixelGrid(extents=tuple(h - l for l, h in zip(lo, hi)), pitch=grid.pitch, origin=origin)
        label = f"{image.label or 'spot'}@{','.join(str(c) for c in xy)}"
        patches.append(SampledSignal(grid=patch_grid, values=values[window], label=label))

    logger.info("spots_detected", spots=len(patches), skipped_at_border=skipped, threshold=float(level))
    return patches
