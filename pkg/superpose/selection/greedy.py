"""Greedy peel-off estimate of the invariant Z = alpha * N."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from superpose.config.logging import get_logger
from superpose.core.signal import SampledSignal
from superpose.errors import InputError
from superpose.model.forward import BackgroundMode, source_field
from superpose.model.irf import IrfModel

logger = get_logger(__name__)


@dataclass(frozen=True, eq=False)
class GreedyResult:
    n_sources: int
    alpha0: float
    peaks: np.ndarray
    t_curve: np.ndarray
    diagnostic: str | None = None

    @property
    def total_intensity(self) -> float:
        """Z = alpha0 * N."""
        return self.alpha0 * self.n_sources


def default_max_steps(target: SampledSignal, irf: IrfModel, alpha0: float, mode: BackgroundMode) -> int:
    grid = target.grid
    unit = np.clip(source_field(grid.nearest_center(grid.center), irf, grid, mode), 0.0, None).sum()
    mass = np.clip(target.flat, 0.0, None).sum()
    return int(np.ceil(4.0 * mass / (alpha0 * unit))) + 10 if unit > 0 else 10


def greedy_find_alphaN(
    target: SampledSignal,
    irf: IrfModel,
    alpha0: float,
    mode: BackgroundMode = BackgroundMode.UNKNOWN_CONSTANT,
    max_steps: int | None = None,
    scan_global: bool = False,
) -> GreedyResult:
    """Peel alpha0-sized sources off the residual at its maximum.

    ``target`` is the working signal (S_dev under an unknown background).
    t(k) is the residual norm after k sources. N is the first local minimum
    of t, or the global minimum over ``max_steps`` when ``scan_global`` is set.
    """
    if not np.isfinite(alpha0) or alpha0 <= 0:
        raise InputError(f"alpha0 must be positive, got {alpha0}")
    mode = BackgroundMode(mode)
    grid = target.grid
    centers = grid.centers()
    max_steps = max_steps or default_max_steps(target, irf, alpha0, mode)

    residual = target.flat.copy()
    t_curve = [float(np.linalg.norm(residual))]
    peaks = []
    for _ in range(max_steps):
        peak = centers[int(np.argmax(residual))]
        residual -= alpha0 * source_field(peak, irf, grid, mode, centers=centers)
        t_curve.append(float(np.linalg.norm(residual)))
        peaks.append(peak)
        if not scan_global and t_curve[-1] > t_curve[-2]:
            break

    t = np.asarray(t_curve)
    if t[1] > t[0]:
        message = "alpha0 removes more than the signal holds at its peak; use a smaller alpha0"
        logger.warning("greedy_alpha_too_large", alpha0=alpha0, t0=t[0], t1=t[1])
        return GreedyResult(0, alpha0, np.empty((0, grid.dimension)), t, diagnostic=message)

    if scan_global:
        n = int(np.argmin(t))
    else:
        rises = np.nonzero(np.diff(t) > 0)[0]
        n = int(rises[0]) if rises.size else len(t) - 1
        if not rises.size:
            logger.warning("greedy_no_minimum", alpha0=alpha0, steps=max_steps)

    result = GreedyResult(n, alpha0, np.asarray(peaks[:n]).reshape(n, grid.dimension), t)
    logger.info("greedy_finished", n_sources=n, alpha0=alpha0, total_intensity=result.total_intensity)
    return result
