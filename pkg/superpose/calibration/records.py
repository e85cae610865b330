"""Calibration records: spectrum normalization, co-centering and dispersion."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.optimize import least_squares

from superpose.config.logging import get_logger
from superpose.core.signal import SampledSignal
from superpose.errors import CalibrationError, InputError

logger = get_logger(__name__)


@dataclass(frozen=True, eq=False)
class CenteredRecord:
    """One point-source record shifted to the common origin and scaled to unit sum."""

    label: str
    offsets: np.ndarray
    values: np.ndarray
    center: np.ndarray
    background: float
    scale: float
    width: float
    accepted: bool = True
    reason: str | None = None

    def diagnostics(self) -> dict:
        return {
            "label": self.label,
            "center": self.center.tolist(),
            "background": self.background,
            "sum": self.scale,
            "width": self.width,
            "accepted": self.accepted,
            "reason": self.reason,
        }


def normalize_spectrum(
    signal: SampledSignal,
    lamp: SampledSignal,
    dark: SampledSignal,
    zone: slice | None = None,
) -> SampledSignal:
    """S_norm = (S - B) / (S_lamp - B), pixel by pixel over ``zone``."""
    if signal.values.shape != lamp.values.shape or signal.values.shape != dark.values.shape:
        raise InputError("signal, lamp reference and dark background must share one grid")
    zone = zone or slice(None)
    numerator = (signal.flat - dark.flat)[zone]
    denominator = (lamp.flat - dark.flat)[zone]
    bad = np.nonzero(denominator <= 0)[0]
    if bad.size:
        offset = zone.start or 0
        raise CalibrationError(
            f"lamp reference does not exceed the dark level at pixels {(bad + offset).tolist()}"
        )
    values = signal.flat.astype(np.float64).copy()
    values[zone] = numerator / denominator
    return signal.with_values(values, label=f"{signal.label} (norm)" if signal.label else "norm")


def _moment_center(offsets: np.ndarray, weights: np.ndarray) -> tuple[np.ndarray, float]:
    total = weights.sum()
    center = weights @ offsets / total
    spread = np.sqrt(np.clip(weights @ (offsets - center) ** 2 / total, 0.0, None))
    return center, float(2.0 * spread.max())


def _gaussian_peak(params: np.ndarray, points: np.ndarray) -> np.ndarray:
    dimension = points.shape[1]
    amplitude, background, log_sigma = params[0], params[1], params[2]
    center = params[3 : 3 + dimension]
    rho2 = np.sum((points - center) ** 2, axis=1)
    return amplitude * np.exp(-rho2 / (2.0 * np.exp(2.0 * log_sigma))) + background


def fit_record_peak(record: SampledSignal) -> tuple[np.ndarray, float, float]:
    """Per-record J_r = peak + a_r fit; returns (center, background a_r, width 2 sigma)."""
    points = record.grid.centers()
    values = record.flat
    background0 = float(np.percentile(values, 10))
    weights = np.clip(values - background0, 0.0, None)
    if weights.sum() <= 0:
        raise CalibrationError(f"record {record.label!r} has no signal above its background")
    center0, width0 = _moment_center(points, weights)
    sigma0 = max(width0 / 2.0, record.grid.pixel_size / 2.0)
    start = np.concatenate([[values.max() - background0, background0, np.log(sigma0)], center0])
    fit = least_squares(lambda p: _gaussian_peak(p, points) - values, start, method="lm")
    if not fit.success:
        raise CalibrationError(f"peak fit failed for record {record.label!r}: {fit.message}")
    center = fit.x[3:]
    return center, float(fit.x[1]), float(2.0 * np.exp(fit.x[2]))


def cocenter_normalize(
    records: list[SampledSignal],
    width_range: tuple[float | None, float | None] = (None, None),
) -> list[CenteredRecord]:
    """Shift every record to a common origin and scale it to unit sum.

    One-dimensional records are centered on their centroid. Two-dimensional
    records are centered on an individual peak fit with a constant background,
    which is removed before scaling. Records whose width falls outside
    ``width_range`` are kept but marked as rejected.
    """
    if not records:
        raise CalibrationError("no calibration records given")
    pitches = {r.grid.pitch for r in records}
    if len(pitches) > 1:
        raise InputError(f"calibration records use different pixel pitches: {sorted(pitches)}")

    low, high = width_range
    centered = []
    for i, record in enumerate(records):
        label = record.label or f"record-{i}"
        points = record.grid.centers()
        if record.grid.dimension == 1:
            background = 0.0
            values = record.flat
            total = values.sum()
            if total == 0:
                raise CalibrationError(f"record {label!r} sums to zero")
            normalized = values / total
            # x_bar = x - sum(S_bar x)
            center = normalized @ points
            _, width = _moment_center(points, np.clip(normalized, 0.0, None))
        else:
            center, background, width = fit_record_peak(record)
            values = record.flat - background
            total = values.sum()
            if total == 0:
                raise CalibrationError(f"record {label!r} sums to zero after background removal")
            normalized = values / total

        reason = None
        if low is not None and width < low:
            reason = f"width {width:.4g} below {low:.4g}"
        elif high is not None and width > high:
            reason = f"width {width:.4g} above {high:.4g}"
        if reason:
            logger.warning("calibration_record_rejected", label=label, reason=reason)

        centered.append(
            CenteredRecord(
                label=label,
                offsets=points - center,
                values=normalized,
                center=np.atleast_1d(center),
                background=float(background),
                scale=float(total),
                width=float(width),
                accepted=reason is None,
                reason=reason,
            )
        )
    return centered


@dataclass(frozen=True)
class DispersionMap:
    """Linear pixel-coordinate to wavelength map."""

    slope: float
    intercept: float
    rms: float

    def __call__(self, coordinate):
        return self.slope * np.asarray(coordinate, dtype=np.float64) + self.intercept


def fit_dispersion(pixel_centers, wavelengths) -> DispersionMap:
    """Least-squares line through (line centroid, known wavelength) pairs."""
    x = np.asarray(pixel_centers, dtype=np.float64).ravel()
    y = np.asarray(wavelengths, dtype=np.float64).ravel()
    if x.size != y.size or x.size < 2:
        raise InputError("dispersion needs at least two (centroid, wavelength) pairs")
    slope, intercept = np.polyfit(x, y, 1)
    rms = float(np.sqrt(np.mean((slope * x + intercept - y) ** 2)))
    return DispersionMap(slope=float(slope), intercept=float(intercept), rms=rms)
