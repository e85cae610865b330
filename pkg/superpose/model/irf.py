"""Instrument response function families, pixelation and derived widths.

Analytic families are evaluated directly at arbitrary real offsets; their
fitted parameters already describe the pixelated response because they are
fitted to pixelated calibration data. Tabulated responses are interpolated
linearly and vanish outside their table.
"""

from __future__ import annotations

from dataclasses import dataclass
from enum import Enum
from functools import cached_property
from typing import Callable

import numpy as np
from scipy.interpolate import RegularGridInterpolator
from scipy.special import expit

from superpose.config.settings import settings
from superpose.core.signal import PixelGrid
from superpose.errors import InputError

# exp(-40) is far below double-precision relevance next to a unit peak
_TAIL_EXPONENT = 40.0
_TABLE_EDGE_TOLERANCE = 1e-3
_WIDTH_OVERSAMPLING = 8


class IrfFamily(str, Enum):
    ASYMMETRIC_1D = "asymmetric_1d"
    GAUSSIAN_HALO = "gaussian_halo"
    TABULATED = "tabulated"


PARAMETER_NAMES: dict[IrfFamily, tuple[str, ...]] = {
    IrfFamily.ASYMMETRIC_1D: ("a1", "b1", "b2"),
    IrfFamily.GAUSSIAN_HALO: ("b1", "d1", "b2", "d2", "rho0"),
    IrfFamily.TABULATED: (),
}


def asymmetric_profile(x: np.ndarray, a1: float, b1: float, b2: float) -> np.ndarray:
    """a1 / (exp(b1 x) + exp(-b2 x)), overflow-safe."""
    return a1 * np.exp(-np.logaddexp(b1 * x, -b2 * x))


def asymmetric_derivative(x: np.ndarray, a1: float, b1: float, b2: float) -> np.ndarray:
    w1 = expit((b1 + b2) * x)
    return -asymmetric_profile(x, a1, b1, b2) * (b1 * w1 - b2 * (1.0 - w1))


def halo_profile(rho2: np.ndarray, b1: float, d1: float, b2: float, d2: float, rho0: float) -> np.ndarray:
    """b1 exp(-rho^2 d1) + b2 rho^2 exp(-(rho - rho0)^2 d2) as a function of rho^2."""
    rho = np.sqrt(rho2)
    return b1 * np.exp(-rho2 * d1) + b2 * rho2 * np.exp(-((rho - rho0) ** 2) * d2)


def _halo_radial_over_rho(rho2: np.ndarray, b1, d1, b2, d2, rho0) -> np.ndarray:
    """(df/drho) / rho, finite at rho = 0."""
    rho = np.sqrt(rho2)
    core = -2.0 * d1 * b1 * np.exp(-rho2 * d1)
    halo = b2 * np.exp(-((rho - rho0) ** 2) * d2) * (2.0 - 2.0 * (rho - rho0) * d2 * rho)
    return core + halo


def _as_offsets(offsets, dimension: int) -> np.ndarray:
    offsets = np.asarray(offsets, dtype=np.float64)
    if dimension == 1 and (offsets.ndim == 0 or offsets.shape[-1] != 1):
        offsets = offsets[..., None]
    if offsets.shape[-1] != dimension:
        raise InputError(f"offsets must end in an axis of length {dimension}, got {offsets.shape}")
    return offsets


def _centered_lattice(pitch: tuple[float, ...], radius: float) -> PixelGrid:
    extents = tuple(2 * int(np.ceil(radius / p)) + 1 for p in pitch)
    return PixelGrid(extents=extents, pitch=pitch).centered_like()


@dataclass(frozen=True, eq=False)
class IrfModel:
    """Fitted IRF I~ with its pixel pitch d_p.

    ``table`` and ``table_grid`` are only used by the tabulated family; the
    table is stored with the grid's row-major shape.
    """

    family: IrfFamily
    parameters: tuple[float, ...]
    pitch: tuple[float, ...]
    table: np.ndarray | None = None
    table_grid: PixelGrid | None = None
    is_normalized: bool = False

    def __post_init__(self):
        family = IrfFamily(self.family)
        object.__setattr__(self, "family", family)
        object.__setattr__(self, "parameters", tuple(float(p) for p in self.parameters))
        object.__setattr__(self, "pitch", tuple(float(p) for p in np.atleast_1d(self.pitch)))

        expected = PARAMETER_NAMES[family]
        if len(self.parameters) != len(expected):
            raise InputError(f"{family.value} takes parameters {expected}, got {self.parameters}")
        if not all(np.isfinite(self.parameters)):
            raise InputError(f"non-finite IRF parameters {self.parameters}")

        if family is IrfFamily.ASYMMETRIC_1D:
            if len(self.pitch) != 1:
                raise InputError("asymmetric_1d is one-dimensional")
            _, b1, b2 = self.parameters
            if b1 <= 0 or b2 <= 0:
                raise InputError("asymmetric_1d decay rates b1, b2 must be positive")
        elif family is IrfFamily.GAUSSIAN_HALO:
            _, d1, _, d2, _ = self.parameters
            if d1 <= 0 or d2 <= 0:
                raise InputError("gaussian_halo exponents d1, d2 must be positive")
        else:
            if self.table is None or self.table_grid is None:
                raise InputError("a tabulated IRF needs a table and its grid")
            table = np.array(self.table, dtype=np.float64).reshape(self.table_grid.shape)
            table.flags.writeable = False
            object.__setattr__(self, "table", table)
            peak = np.abs(table).max()
            if peak == 0:
                raise InputError("tabulated IRF is identically zero")
            if _border_max(table) > _TABLE_EDGE_TOLERANCE * peak:
                raise InputError("tabulated IRF support reaches the edge of its table")
            if not self.table_grid.compatible_with(PixelGrid(self.table_grid.extents, self.pitch)):
                raise InputError("table grid pitch differs from the IRF pitch")

        if self.dimension not in (1, 2) or len(self.pitch) != self.dimension:
            raise InputError("IRF pitch must have one entry per axis")
        if not self.width > 0:
            raise InputError(f"IRF width d0 must be positive, got {self.width}")

    @property
    def dimension(self) -> int:
        if self.family is IrfFamily.TABULATED:
            return self.table_grid.dimension
        return len(self.pitch)

    @property
    def parameter_dict(self) -> dict[str, float]:
        return dict(zip(PARAMETER_NAMES[self.family], self.parameters))

    @property
    def has_parity(self) -> bool:
        """Even about the center: the radial halo, or the asymmetric shape with b1 == b2."""
        if self.family is IrfFamily.ASYMMETRIC_1D:
            return self.parameters[1] == self.parameters[2]
        return self.family is IrfFamily.GAUSSIAN_HALO

    # -- evaluation -------------------------------------------------------

    def __call__(self, offsets) -> np.ndarray:
        offsets = _as_offsets(offsets, self.dimension)
        if self.family is IrfFamily.ASYMMETRIC_1D:
            return asymmetric_profile(offsets[..., 0], *self.parameters)
        if self.family is IrfFamily.GAUSSIAN_HALO:
            return halo_profile(np.sum(offsets**2, axis=-1), *self.parameters)
        return self._interpolator(offsets)

    def gradient(self, offsets) -> np.ndarray:
        offsets = _as_offsets(offsets, self.dimension)
        if self.family is IrfFamily.ASYMMETRIC_1D:
            return asymmetric_derivative(offsets[..., 0], *self.parameters)[..., None]
        if self.family is IrfFamily.GAUSSIAN_HALO:
            radial = _halo_radial_over_rho(np.sum(offsets**2, axis=-1), *self.parameters)
            return radial[..., None] * offsets
        return np.stack([interp(offsets) for interp in self._gradient_interpolators], axis=-1)

    @cached_property
    def _interpolator(self) -> RegularGridInterpolator:
        return _table_interpolator(self.table_grid, self.table)

    @cached_property
    def _gradient_interpolators(self) -> list[RegularGridInterpolator]:
        spacing = [self.table_grid.pitch[a] for a in range(self.dimension)]
        # np.gradient works on array axes, which run (y, x) for 2-D tables
        derivatives = np.gradient(self.table, *reversed(spacing))
        if self.dimension == 1:
            derivatives = [derivatives]
        return [_table_interpolator(self.table_grid, d) for d in reversed(derivatives)]

    # -- lattice quantities ------------------------------------------------

    @cached_property
    def support_radius(self) -> float:
        """Radius beyond which the response is negligible next to its peak."""
        if self.family is IrfFamily.ASYMMETRIC_1D:
            _, b1, b2 = self.parameters
            return _TAIL_EXPONENT / min(b1, b2)
        if self.family is IrfFamily.GAUSSIAN_HALO:
            b1, d1, b2, d2, rho0 = self.parameters
            radius = np.sqrt(_TAIL_EXPONENT / d1)
            if b2 != 0:
                radius = max(radius, abs(rho0) + np.sqrt((_TAIL_EXPONENT + 5.0) / d2))
            return float(radius)
        half = [p * (e - 1) / 2.0 for p, e in zip(self.table_grid.pitch, self.table_grid.extents)]
        return float(np.hypot.reduce(half)) if self.dimension > 1 else float(half[0])

    def reference_grid(self, radius: float | None = None) -> PixelGrid:
        """Centered lattice at pitch d_p covering the IRF support."""
        return _centered_lattice(self.pitch, radius or self.support_radius)

    def sample(self, grid: PixelGrid | None = None, position=None) -> np.ndarray:
        """I~(x_i - position) over ``grid`` (default: reference grid, source at 0)."""
        grid = grid or self.reference_grid()
        position = np.zeros(self.dimension) if position is None else np.asarray(position, dtype=np.float64)
        return self(grid.centers() - position)

    def lattice_sum(self) -> float:
        return float(self.sample().sum())

    @cached_property
    def width(self) -> float:
        """d0 = 2 x the per-axis standard deviation of I~ (largest axis)."""
        fine = tuple(p / _WIDTH_OVERSAMPLING for p in self.pitch)
        grid = _centered_lattice(fine, self.support_radius)
        points = grid.centers()
        weights = np.clip(self(points), 0.0, None)
        total = weights.sum()
        if total <= 0:
            return 0.0
        mean = weights @ points / total
        variance = weights @ (points - mean) ** 2 / total
        return float(2.0 * np.sqrt(variance.max()))

    @cached_property
    def derivative_norms(self) -> np.ndarray:
        """||dI~/dx_s|| over the reference lattice, one entry per axis."""
        grads = self.gradient(self.reference_grid().centers())
        return np.sqrt(np.sum(grads**2, axis=0))

    @property
    def derivative_floor(self) -> float:
        """I~_der = min_s ||dI~/dx_s||."""
        return float(self.derivative_norms.min())

    # -- transforms --------------------------------------------------------

    def normalized(self) -> IrfModel:
        """Copy rescaled so the lattice sum at pitch d_p is 1."""
        total = self.lattice_sum()
        if not np.isfinite(total) or total <= 0:
            raise InputError(f"cannot normalize an IRF whose lattice sum is {total}")
        params = list(self.parameters)
        table = self.table
        if self.family is IrfFamily.ASYMMETRIC_1D:
            params[0] /= total
        elif self.family is IrfFamily.GAUSSIAN_HALO:
            params[0] /= total
            params[2] /= total
        else:
            table = self.table / total
        return IrfModel(
            family=self.family,
            parameters=tuple(params),
            pitch=self.pitch,
            table=table,
            table_grid=self.table_grid,
            is_normalized=True,
        )

    def to_dict(self) -> dict:
        data = {
            "family": self.family.value,
            "parameters": self.parameter_dict,
            "pitch": list(self.pitch),
            "normalized": self.is_normalized,
            "d0": self.width,
        }
        if self.family is IrfFamily.TABULATED:
            data["table"] = self.table.tolist()
            data["table_grid"] = self.table_grid.to_dict()
        return data

    @classmethod
    def from_dict(cls, data: dict) -> IrfModel:
        family = IrfFamily(data["family"])
        params = data.get("parameters") or {}
        if isinstance(params, dict):
            params = [params[name] for name in PARAMETER_NAMES[family]]
        table_grid = PixelGrid.from_dict(data["table_grid"]) if data.get("table_grid") else None
        return cls(
            family=family,
            parameters=tuple(params),
            pitch=tuple(data["pitch"]),
            table=np.asarray(data["table"]) if data.get("table") is not None else None,
            table_grid=table_grid,
            is_normalized=bool(data.get("normalized", False)),
        )


def _border_max(table: np.ndarray) -> float:
    if table.ndim == 1:
        return float(max(abs(table[0]), abs(table[-1])))
    return float(
        max(np.abs(table[0]).max(), np.abs(table[-1]).max(), np.abs(table[:, 0]).max(), np.abs(table[:, -1]).max())
    )


def _table_interpolator(grid: PixelGrid, values: np.ndarray) -> RegularGridInterpolator:
    axes = tuple(grid.axis(a) for a in range(grid.dimension))
    # interpolator axes run (x, y); stored tables run (y, x)
    return RegularGridInterpolator(
        axes, np.asarray(values).T, method="linear", bounds_error=False, fill_value=0.0
    )


def asymmetric_irf(a1: float, b1: float, b2: float, pitch: float) -> IrfModel:
    return IrfModel(family=IrfFamily.ASYMMETRIC_1D, parameters=(a1, b1, b2), pitch=(pitch,))


def gaussian_irf(sigma: float, pitch, dimension: int = 2) -> IrfModel:
    """Unit-sum Gaussian, the halo family with zero halo amplitude."""
    if sigma <= 0:
        raise InputError(f"sigma must be positive, got {sigma}")
    pitch = tuple(float(p) for p in np.broadcast_to(np.atleast_1d(pitch), (dimension,)))
    d1 = 1.0 / (2.0 * sigma**2)
    model = IrfModel(
        family=IrfFamily.GAUSSIAN_HALO,
        parameters=(1.0, d1, 0.0, d1, 0.0),
        pitch=pitch,
    )
    return model.normalized()


class PixelatedIrf:
    """I = J * K_p: the mean of a continuous response J over the pixel cell.

    The cell average is computed with a tensor-product Gauss-Legendre rule.
    """

    def __init__(
        self,
        continuous: Callable[[np.ndarray], np.ndarray],
        pitch,
        dimension: int = 1,
        points: int | None = None,
    ):
        self.continuous = continuous
        self.dimension = dimension
        self.pitch = np.broadcast_to(np.atleast_1d(np.asarray(pitch, dtype=np.float64)), (dimension,)).copy()
        nodes, weights = np.polynomial.legendre.leggauss(points or settings.quadrature_points)
        grids = np.meshgrid(*([nodes] * dimension), indexing="ij")
        wgrids = np.meshgrid(*([weights] * dimension), indexing="ij")
        # nodes on [-1, 1] scaled to the half-pitch, weights to unit mass
        self._shifts = np.stack([g.ravel() for g in grids], axis=-1) * (self.pitch / 2.0)
        self._weights = np.prod(np.stack([w.ravel() for w in wgrids], axis=-1), axis=-1) / 2.0**dimension

    def __call__(self, offsets) -> np.ndarray:
        offsets = _as_offsets(offsets, self.dimension)
        samples = self.continuous(offsets[..., None, :] + self._shifts)
        values = np.asarray(samples, dtype=np.float64) @ self._weights
        if not np.all(np.isfinite(values)):
            raise InputError("pixelation quadrature produced non-finite values")
        return values

    def tabulate(self, radius: float) -> IrfModel:
        """Sample the pixelated response on a centered lattice as a tabulated IRF."""
        grid = _centered_lattice(tuple(self.pitch), radius)
        values = self(grid.centers()).reshape(grid.shape)
        return IrfModel(
            family=IrfFamily.TABULATED,
            parameters=(),
            pitch=tuple(self.pitch),
            table=values,
            table_grid=grid,
        )


def pixelate_irf(continuous, pitch, dimension: int = 1, points: int | None = None) -> PixelatedIrf:
    return PixelatedIrf(continuous, pitch, dimension=dimension, points=points)
