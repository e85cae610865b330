"""Pooled least-squares fit of an IRF family to co-centered calibration records."""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field, replace

import numpy as np
from scipy.optimize import least_squares

from superpose.calibration.records import CenteredRecord
from superpose.config.logging import get_logger
from superpose.errors import CalibrationError, InputError
from superpose.model.irf import IrfFamily, IrfModel, asymmetric_profile, halo_profile
from superpose.solver import metrics

logger = get_logger(__name__)


@dataclass
class IrfFit:
    irf: IrfModel
    cost: float
    starts: int
    converged: int
    record_costs: list[float] = field(default_factory=list)
    shift: np.ndarray | None = None
    records: list[CenteredRecord] = field(default_factory=list)


def _pool(records: list[CenteredRecord]) -> tuple[np.ndarray, np.ndarray]:
    offsets = np.concatenate([r.offsets for r in records])
    values = np.concatenate([r.values for r in records])
    return offsets, values


def _asymmetric_starts(offsets: np.ndarray, values: np.ndarray) -> list[np.ndarray]:
    """Moment-matched b1 = b2 (std of 1/cosh(bx) is pi / 2b), then skewed variants."""
    weights = np.clip(values, 0.0, None)
    x = offsets[:, 0]
    mean = weights @ x / weights.sum()
    std = np.sqrt(weights @ (x - mean) ** 2 / weights.sum())
    b = np.pi / (2.0 * max(std, 1e-12))
    a1 = 2.0 * values.max()
    return [np.array([a1, b * r1, b * r2]) for r1, r2 in itertools.product((1.0, 0.7, 1.4), repeat=2)]


def _fit_asymmetric(offsets, values):
    """Fit (a1, b1, b2) plus the offset x0 of the model origin from the record centroid."""
    x = offsets[:, 0]

    def residual(p):
        return asymmetric_profile(x - p[3], p[0], abs(p[1]), abs(p[2])) - values

    starts = [np.append(start, 0.0) for start in _asymmetric_starts(offsets, values)]
    return residual, starts, lambda p: (p[0], abs(p[1]), abs(p[2])), lambda p: np.array([p[3]])


def _fit_halo(offsets, values):
    rho2 = np.sum(offsets**2, axis=1)

    def gaussian_residual(p):
        return halo_profile(rho2, p[0], p[1] ** 2, 0.0, 1.0, 0.0) - values

    weights = np.clip(values, 0.0, None)
    sigma0 = np.sqrt(max(weights @ rho2 / weights.sum() / offsets.shape[1], 1e-12))
    gaussian = least_squares(
        gaussian_residual, np.array([values.max(), 1.0 / (np.sqrt(2.0) * sigma0)]), method="lm"
    )
    b1, root_d1 = gaussian.x
    sigma = 1.0 / (np.sqrt(2.0) * abs(root_d1))

    def residual(p):
        return halo_profile(rho2, p[0], p[1] ** 2, p[2], p[3] ** 2, p[4]) - values

    starts = [
        np.array([b1, root_d1, fraction * b1 / (rho0 * sigma) ** 2 if fraction else 0.0, root_d1, rho0 * sigma])
        for fraction, rho0 in itertools.product((0.0, 0.02, 0.1), (1.0, 2.0, 3.0))
    ]
    return residual, starts, lambda p: (p[0], p[1] ** 2, p[2], p[3] ** 2, p[4]), lambda p: np.zeros(offsets.shape[1])


def fit_irf_family(
    records: list[CenteredRecord],
    family: IrfFamily | str,
    pitch,
    normalize: bool = True,
) -> IrfFit:
    """Fit the pooled (offset, value) points of the accepted records.

    Every start in a small deterministic grid is refined with
    Levenberg-Marquardt; the lowest cost wins. Asymmetric fits start from
    moment-matched equal decay rates, halo fits from a pure Gaussian fit with
    the halo switched off.
    """
    family = IrfFamily(family)
    accepted = [r for r in records if r.accepted]
    rejected = len(records) - len(accepted)
    metrics.calibration_records.labels(status="accepted").inc(len(accepted))
    metrics.calibration_records.labels(status="rejected").inc(rejected)
    if not accepted:
        raise CalibrationError("every calibration record was rejected")
    offsets, values = _pool(accepted)
    pitch = tuple(float(p) for p in np.atleast_1d(pitch))

    if family is IrfFamily.ASYMMETRIC_1D:
        if offsets.shape[1] != 1:
            raise InputError("asymmetric_1d needs one-dimensional records")
        residual, starts, to_params, to_shift = _fit_asymmetric(offsets, values)
    elif family is IrfFamily.GAUSSIAN_HALO:
        residual, starts, to_params, to_shift = _fit_halo(offsets, values)
    else:
        raise InputError("tabulated IRFs are built by pixelation, not fitted")

    best = None
    converged = 0
    for start in starts:
        try:
            fit = least_squares(residual, start, method="lm", xtol=1e-12, ftol=1e-12)
        except ValueError as e:
            logger.debug("irf_start_failed", start=start.tolist(), error=str(e))
            continue
        if not fit.success or not np.all(np.isfinite(fit.x)):
            continue
        converged += 1
        if best is None or fit.cost < best.cost:
            best = fit
    if best is None:
        raise CalibrationError(f"{family.value} fit did not converge from any of {len(starts)} starts")

    try:
        irf = IrfModel(family=family, parameters=to_params(best.x), pitch=pitch)
        if normalize:
            irf = irf.normalized()
    except InputError as e:
        raise CalibrationError(f"fitted {family.value} parameters are not a usable IRF: {e}") from e

    extent = float(np.abs(offsets).max())
    if not pitch[0] / 10.0 < irf.width < 2.0 * extent:
        raise CalibrationError(f"fitted width d0={irf.width:.4g} is implausible for records of extent {extent:.4g}")

    # offsets are re-measured from the model origin so that irf(offsets) reproduces each record
    shift = to_shift(best.x)
    recentered = [replace(r, offsets=r.offsets - shift, center=r.center + shift) for r in records]
    record_costs = [float(np.sum((r.values - irf(r.offsets)) ** 2)) for r in recentered if r.accepted]
    logger.info(
        "irf_fitted",
        family=family.value,
        parameters=irf.parameter_dict,
        d0=irf.width,
        shift=shift.tolist(),
        cost=float(best.cost),
        records=len(accepted),
        rejected=rejected,
    )
    return IrfFit(
        irf=irf,
        cost=float(2.0 * best.cost),
        starts=len(starts),
        converged=converged,
        record_costs=record_costs,
        shift=shift,
        records=recentered,
    )
