"""Least-squares objective, GA fitness transform and the closed-form alpha refit."""

from __future__ import annotations

from concurrent.futures import Executor
from dataclasses import dataclass
from functools import cached_property

import numpy as np

from superpose.core.signal import SampledSignal, SourceSet
from superpose.errors import DegenerateBasisError, InputError
from superpose.model.forward import BackgroundMode, basis, working_target
from superpose.model.irf import IrfModel

_DEGENERATE_BASIS = 1e-30


@dataclass(frozen=True, eq=False)
class ObjectiveContext:
    """Target S_* with the IRF and background regime it is fitted under.

    ``fitness_offset`` fixes c0; when None it is derived from each
    generation's median chi-squared.
    """

    target: SampledSignal
    irf: IrfModel
    mode: BackgroundMode
    fitness_offset: float | None = None

    @classmethod
    def build(
        cls,
        signal: SampledSignal,
        irf: IrfModel,
        mode: BackgroundMode = BackgroundMode.NONE,
        fitness_offset: float | None = None,
    ) -> ObjectiveContext:
        mode = BackgroundMode(mode)
        grid = signal.grid
        if grid.dimension != irf.dimension:
            raise InputError(f"{grid.dimension}-D signal cannot be fitted with a {irf.dimension}-D IRF")
        if not np.allclose(grid.pitch, irf.pitch, rtol=1e-6, atol=0.0):
            raise InputError(f"signal pitch {grid.pitch} does not match calibration pitch {irf.pitch}")
        if fitness_offset is not None and fitness_offset < 0:
            raise InputError("fitness offset must be non-negative")
        return cls(target=working_target(signal, mode), irf=irf, mode=mode, fitness_offset=fitness_offset)

    @property
    def grid(self):
        return self.target.grid

    @property
    def target_norm2(self) -> float:
        return float(np.sum(self.target.flat**2))

    @cached_property
    def centers(self) -> np.ndarray:
        return self.grid.centers()

    def basis(self, positions: np.ndarray) -> np.ndarray:
        return basis(positions, self.irf, self.grid, self.mode, centers=self.centers)

    def chi_squared_at(self, positions: np.ndarray, alpha: float) -> float:
        residual = self.target.flat - alpha * self.basis(positions)
        return float(residual @ residual)


def chi_squared(sources: SourceSet, ctx: ObjectiveContext) -> float:
    """sum_i (S_*(x_i) - S~(x_i))^2."""
    return ctx.chi_squared_at(sources.positions, sources.alpha)


def population_chi_squared(
    positions: np.ndarray,
    alpha: float,
    ctx: ObjectiveContext,
    executor: Executor | None = None,
) -> np.ndarray:
    """chi^2 of every individual of an (M, N, D) population, in population order."""
    if executor is None:
        return np.array([ctx.chi_squared_at(p, alpha) for p in positions])
    return np.fromiter(
        executor.map(lambda p: ctx.chi_squared_at(p, alpha), positions),
        dtype=np.float64,
        count=len(positions),
    )


def fitness_offset(chi2: np.ndarray, factor: float) -> float:
    """c0 = factor * median chi^2 of the current generation."""
    return float(factor * np.median(chi2))


def fitness(chi2, ctx: ObjectiveContext | None = None, offset: float | None = None):
    """1 / (chi2 + c0); strictly decreasing in chi2."""
    if offset is None:
        offset = ctx.fitness_offset if ctx is not None and ctx.fitness_offset is not None else 0.0
    chi2 = np.asarray(chi2, dtype=np.float64)
    if np.any(chi2 < 0):
        raise InputError("chi-squared must be non-negative")
    with np.errstate(divide="ignore"):
        value = 1.0 / (chi2 + offset)
    return float(value) if value.ndim == 0 else value


def refit_alpha(sources: SourceSet, ctx: ObjectiveContext) -> float:
    """alpha* = <u, S_*> / <u, u>, the one-parameter least-squares minimizer.

    Used under an unknown constant background, where u is built from I~_dev.
    """
    u = ctx.basis(sources.positions)
    norm2 = float(u @ u)
    if norm2 < _DEGENERATE_BASIS * u.size:
        raise DegenerateBasisError(
            f"basis norm {norm2:.3e} vanishes on the grid; all sources lie outside the field"
        )
    return float(u @ ctx.target.flat) / norm2
