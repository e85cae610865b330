"""Pixel grids, sampled signals and virtual source sets.

Positions are always physical coordinates. Pixel indices only show up when a
signal is read from or written to disk. Two-dimensional values are stored
row-major with shape (ny, nx) while coordinates are ordered (x, y).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from superpose.errors import InputError


def _frozen(array: np.ndarray) -> np.ndarray:
    array = np.array(array, dtype=np.float64, copy=True)
    array.flags.writeable = False
    return array


@dataclass(frozen=True)
class PixelGrid:
    """Uniform D-dimensional pixel lattice, D in {1, 2}."""

    extents: tuple[int, ...]
    pitch: tuple[float, ...]
    origin: tuple[float, ...] | None = None

    def __post_init__(self):
        extents = tuple(int(e) for e in np.atleast_1d(self.extents))
        pitch = tuple(float(p) for p in np.atleast_1d(self.pitch))
        if len(pitch) == 1 and len(extents) > 1:
            pitch = pitch * len(extents)
        origin = (
            (0.0,) * len(extents)
            if self.origin is None
            else tuple(float(o) for o in np.atleast_1d(self.origin))
        )
        if len(extents) not in (1, 2):
            raise InputError(f"grid dimension must be 1 or 2, got {len(extents)}")
        if len(pitch) != len(extents) or len(origin) != len(extents):
            raise InputError("extents, pitch and origin must have one entry per axis")
        if any(e < 1 for e in extents):
            raise InputError(f"every axis needs at least one pixel, got {extents}")
        if any(not np.isfinite(p) or p <= 0 for p in pitch):
            raise InputError(f"pixel pitch must be positive, got {pitch}")
        object.__setattr__(self, "extents", extents)
        object.__setattr__(self, "pitch", pitch)
        object.__setattr__(self, "origin", origin)

    @property
    def dimension(self) -> int:
        return len(self.extents)

    @property
    def shape(self) -> tuple[int, ...]:
        """Array shape of the values: (nx,) or (ny, nx)."""
        return tuple(reversed(self.extents))

    @property
    def n_pixels(self) -> int:
        return int(np.prod(self.extents))

    @property
    def pixel_size(self) -> float:
        """Scalar d_p used by the bound formulas (largest pitch)."""
        return max(self.pitch)

    @property
    def center(self) -> np.ndarray:
        return np.array(
            [o + p * (e - 1) / 2.0 for o, p, e in zip(self.origin, self.pitch, self.extents)]
        )

    def axis(self, index: int) -> np.ndarray:
        return self.origin[index] + self.pitch[index] * np.arange(self.extents[index])

    def centers(self) -> np.ndarray:
        """Pixel centers as an (n, D) array in row-major order."""
        if self.dimension == 1:
            return self.axis(0)[:, None]
        xx, yy = np.meshgrid(self.axis(0), self.axis(1))
        return np.column_stack([xx.ravel(), yy.ravel()])

    def nearest_center(self, point: np.ndarray) -> np.ndarray:
        """P(a): the lattice point closest to ``point`` (unbounded lattice)."""
        pitch = np.asarray(self.pitch)
        origin = np.asarray(self.origin)
        return origin + pitch * np.floor((np.asarray(point) - origin) / pitch + 0.5)

    def edges(self, axis: int) -> np.ndarray:
        half = self.pitch[axis] / 2.0
        return np.append(self.axis(axis) - half, self.axis(axis)[-1] + half)

    def centered_like(self, extents: tuple[int, ...] | None = None) -> PixelGrid:
        """Grid with the same pitch whose center sits at the origin."""
        extents = tuple(extents or self.extents)
        origin = tuple(-p * (e - 1) / 2.0 for p, e in zip(self.pitch, extents))
        return PixelGrid(extents=extents, pitch=self.pitch, origin=origin)

    def compatible_with(self, other: PixelGrid, rtol: float = 1e-9) -> bool:
        return self.dimension == other.dimension and np.allclose(
            self.pitch, other.pitch, rtol=rtol, atol=0.0
        )

    def to_dict(self) -> dict:
        return {
            "extents": list(self.extents),
            "pitch": list(self.pitch),
            "origin": list(self.origin),
        }

    @classmethod
    def from_dict(cls, data: dict) -> PixelGrid:
        return cls(
            extents=tuple(data["extents"]),
            pitch=tuple(data["pitch"]),
            origin=tuple(data.get("origin") or [0.0] * len(data["extents"])),
        )


@dataclass(frozen=True, eq=False)
class SampledSignal:
    """Counts per pixel on a PixelGrid."""

    grid: PixelGrid
    values: np.ndarray
    label: str = ""

    def __post_init__(self):
        values = np.asarray(self.values, dtype=np.float64)
        if values.size != self.grid.n_pixels:
            raise InputError(
                f"signal has {values.size} values but the grid has {self.grid.n_pixels} pixels"
            )
        object.__setattr__(self, "values", _frozen(values.reshape(self.grid.shape)))

    @property
    def flat(self) -> np.ndarray:
        return self.values.ravel()

    def total(self) -> float:
        return float(self.values.sum())

    def deviation(self) -> SampledSignal:
        """S_dev: the signal minus its grid mean."""
        return SampledSignal(
            grid=self.grid,
            values=self.values - self.values.mean(),
            label=f"{self.label} (dev)" if self.label else "dev",
        )

    def with_values(self, values: np.ndarray, label: str | None = None) -> SampledSignal:
        return SampledSignal(grid=self.grid, values=values, label=self.label if label is None else label)


@dataclass(frozen=True, eq=False)
class SourceSet:
    """N virtual point sources of common intensity alpha."""

    positions: np.ndarray
    alpha: float
    grid: PixelGrid

    def __post_init__(self):
        positions = np.asarray(self.positions, dtype=np.float64)
        if positions.ndim == 1:
            positions = positions.reshape(-1, self.grid.dimension)
        if positions.ndim != 2 or positions.shape[1] != self.grid.dimension:
            raise InputError(
                f"positions must have shape (N, {self.grid.dimension}), got {positions.shape}"
            )
        if positions.shape[0] < 1:
            raise InputError("a source set needs at least one source")
        if not np.isfinite(self.alpha) or self.alpha <= 0:
            raise InputError(f"alpha must be positive, got {self.alpha}")
        object.__setattr__(self, "positions", _frozen(positions))
        object.__setattr__(self, "alpha", float(self.alpha))

    @property
    def n_sources(self) -> int:
        return int(self.positions.shape[0])

    @property
    def total_intensity(self) -> float:
        """Z = alpha * N."""
        return self.alpha * self.n_sources

    def with_alpha(self, alpha: float) -> SourceSet:
        return SourceSet(positions=self.positions, alpha=alpha, grid=self.grid)

    def with_positions(self, positions: np.ndarray) -> SourceSet:
        return SourceSet(positions=positions, alpha=self.alpha, grid=self.grid)

    def shifted(self, delta) -> SourceSet:
        return self.with_positions(self.positions + np.asarray(delta, dtype=np.float64))

    def union(self, other: SourceSet) -> SourceSet:
        if not np.isclose(self.alpha, other.alpha, rtol=1e-12, atol=0.0):
            raise InputError("only source sets with equal alpha can be merged")
        return self.with_positions(np.vstack([self.positions, other.positions]))


def signal_sum(sig: SampledSignal) -> float:
    """Sum of all pixel values; with a unit-sum IRF this is alpha * N."""
    return sig.total()
