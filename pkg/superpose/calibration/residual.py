"""Residual g between the fitted IRF and the calibration data, and its autocorrelation G."""

from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property

import numpy as np
import pandas as pd
from scipy.interpolate import RegularGridInterpolator
from scipy.signal import correlate

from superpose.calibration.records import CenteredRecord
from superpose.core.signal import PixelGrid
from superpose.errors import CalibrationError
from superpose.model.irf import IrfModel


def _frame(grid: PixelGrid, values: np.ndarray, name: str) -> pd.DataFrame:
    centers = grid.centers()
    frame = pd.DataFrame(centers, columns=["x", "y"][: grid.dimension])
    frame[name] = values.ravel()
    return frame


@dataclass(frozen=True, eq=False)
class ResidualMap:
    """g on a lattice centered at the common origin of the records."""

    grid: PixelGrid
    values: np.ndarray

    def norm2(self) -> float:
        return float(np.sum(self.values**2))

    def to_frame(self) -> pd.DataFrame:
        return _frame(self.grid, self.values, "g")


@dataclass(frozen=True, eq=False)
class Autocorrelation:
    """G(z) = sum_i g(x_i) g(x_i - z) on a symmetric lag grid, zero outside it."""

    lags: PixelGrid
    values: np.ndarray

    @classmethod
    def zero(cls, pitch, dimension: int) -> Autocorrelation:
        """G for a perfect IRF fit (g = 0)."""
        lags = PixelGrid(extents=(3,) * dimension, pitch=pitch).centered_like()
        return cls(lags=lags, values=np.zeros(lags.shape))

    @property
    def at_zero(self) -> float:
        """G(0) = ||g||^2."""
        return float(self(np.zeros(self.lags.dimension)))

    @cached_property
    def _interpolator(self) -> RegularGridInterpolator:
        axes = tuple(self.lags.axis(a) for a in range(self.lags.dimension))
        return RegularGridInterpolator(axes, self.values.T, method="linear", bounds_error=False, fill_value=0.0)

    def __call__(self, lags) -> np.ndarray | float:
        lags = np.asarray(lags, dtype=np.float64)
        scalar = lags.ndim <= 1 and lags.size == self.lags.dimension
        lags = lags.reshape(-1, self.lags.dimension)
        out = self._interpolator(lags)
        return float(out[0]) if scalar else out

    def to_frame(self) -> pd.DataFrame:
        return _frame(self.lags, self.values, "G")


def autocorrelate(residual: ResidualMap) -> Autocorrelation:
    """Full discrete autocorrelation; index j maps to lag j - n on each padded axis."""
    # one ring of zero lags keeps every axis interpolable
    values = np.pad(correlate(residual.values, residual.values, mode="full", method="direct"), 1)
    extents = tuple(2 * e + 1 for e in residual.grid.extents)
    lags = PixelGrid(extents=extents, pitch=residual.grid.pitch).centered_like()
    return Autocorrelation(lags=lags, values=values)


def pooled_residual(records: list[CenteredRecord], irf: IrfModel, radius: float | None = None) -> ResidualMap:
    """g(x) = (1/s) sum_r (S'_r - I~)(x), every sample snapped to the nearest lattice node."""
    accepted = [r for r in records if r.accepted]
    if not accepted:
        raise CalibrationError("no accepted calibration records to build the residual from")
    if radius is None:
        radius = max(float(np.abs(r.offsets).max()) for r in accepted)
    grid = irf.reference_grid(radius)
    pitch = np.asarray(grid.pitch)
    origin = np.asarray(grid.origin)
    extents = np.asarray(grid.extents)
    total = np.zeros(grid.shape)
    for record in accepted:
        residual = record.values - irf(record.offsets)
        nodes = np.rint((record.offsets - origin) / pitch).astype(int)
        inside = np.all((nodes >= 0) & (nodes < extents), axis=1)
        # np.add.at takes array axes in (y, x) order
        index = tuple(nodes[inside, a] for a in reversed(range(grid.dimension)))
        np.add.at(total, index, residual[inside])
    return ResidualMap(grid=grid, values=total / len(accepted))


def compute_residual_and_autocorr(
    records: list[CenteredRecord], irf: IrfModel, radius: float | None = None
) -> tuple[ResidualMap, Autocorrelation]:
    residual = pooled_residual(records, irf, radius)
    return residual, autocorrelate(residual)
