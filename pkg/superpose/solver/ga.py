"""Genetic algorithm over the N source positions of a common-alpha model.

A population is an (M, N, D) array of candidate positions sharing one alpha.
Each generation keeps the ne best individuals untouched, fills the rest by
fitness-proportional duplication, then applies whole-source crossover and
per-axis mutation. Randomness is drawn sequentially from a generator seeded
by (seed, generation), so results do not depend on the thread count.
"""

from __future__ import annotations

import time
from contextlib import nullcontext
from concurrent.futures import Executor, ThreadPoolExecutor
from dataclasses import dataclass, field
from enum import Enum
from typing import Callable, Literal

import numpy as np
from pydantic import BaseModel, Field, model_validator

from superpose.config.logging import get_logger
from superpose.config.settings import settings
from superpose.core.signal import SampledSignal, SourceSet
from superpose.errors import DegenerateBasisError, InputError
from superpose.model.forward import BackgroundMode, source_field
from superpose.model.irf import IrfModel
from superpose.model.objective import (
    ObjectiveContext,
    fitness,
    fitness_offset,
    population_chi_squared,
    refit_alpha,
)
from superpose.solver import metrics

logger = get_logger(__name__)

_INITIAL_STREAM = 0


class StopReason(str, Enum):
    NOISE_FLOOR = "noise_floor"
    STALLED = "stalled"
    MAX_GENERATIONS = "max_generations"


class GaConfig(BaseModel):
    population: int = Field(default=100, ge=1, description="M")
    elite: int = Field(default=2, ge=1, description="ne, copied unmodified")
    crossover: int = Field(default=60, ge=0, description="individuals paired for crossover")
    mutation: int = Field(default=60, ge=0, description="individuals mutated")
    pormut: float = Field(default=0.2, gt=0.0, le=1.0, description="fraction of sources mutated")
    parmut: float = Field(default=0.5, gt=0.0, description="rho_mut = (d0 / 2) * parmut")
    mutation_kernel: Literal["uniform", "gaussian"] = "uniform"
    max_generations: int = Field(default=10_000, ge=1)
    noise_floor: float | None = Field(default=None, ge=0.0, description="<||eta||^2>")
    stop_epsilon: float = Field(default=0.02, ge=0.0)
    zero_tolerance: float = Field(default=1e-9, ge=0.0, description="relative to ||S_*||^2")
    stall_window: int = Field(default=500, ge=1)
    stall_threshold: float = Field(default=1e-6, ge=0.0)
    initial_spread: float = Field(default=0.5, ge=0.0, description="c in the initial family")
    alpha_refit: Literal["elite", "end", "off"] = "elite"
    fitness_offset_factor: float = Field(default=1e-3, ge=0.0)
    seed: int = Field(default=0, ge=0)

    @model_validator(mode="after")
    def _check_counts(self):
        if self.elite > self.population:
            raise ValueError(f"elite ({self.elite}) cannot exceed population ({self.population})")
        if self.crossover > self.population or self.mutation > self.population:
            raise ValueError("crossover and mutation counts cannot exceed the population")
        return self


@dataclass
class Population:
    positions: np.ndarray
    alpha: float
    chi2: np.ndarray

    @property
    def size(self) -> int:
        return int(self.positions.shape[0])

    @property
    def best_index(self) -> int:
        return int(np.argmin(self.chi2))

    @property
    def best_chi2(self) -> float:
        return float(self.chi2.min())

    def ranking(self) -> np.ndarray:
        return np.argsort(self.chi2, kind="stable")


@dataclass
class GaRunRecord:
    sources: SourceSet
    best_chi2: list[float]
    stop_reason: StopReason
    generations: int
    noise_floor: float | None = None
    alpha_history: list[float] = field(default_factory=list)

    @property
    def final_chi2(self) -> float:
        return self.best_chi2[-1]

    @property
    def noise_floor_met(self) -> bool:
        return self.stop_reason is StopReason.NOISE_FLOOR

    def summary(self) -> dict:
        return {
            "n_sources": self.sources.n_sources,
            "alpha": self.sources.alpha,
            "total_intensity": self.sources.total_intensity,
            "final_chi2": self.final_chi2,
            "initial_chi2": self.best_chi2[0],
            "generations": self.generations,
            "stop_reason": self.stop_reason.value,
            "noise_floor": self.noise_floor,
        }


def _rng(seed: int, *stream: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence([seed, *stream]))


def initial_alpha(target: SampledSignal, irf: IrfModel, n_sources: int, mode=BackgroundMode.NONE) -> float:
    """alpha = sum S_*^+ / (N sum I~_*^+), the alpha = sum S / N rule for any IRF scale."""
    if n_sources < 1:
        raise InputError("N must be at least 1")
    grid = target.grid
    signal = np.clip(target.flat, 0.0, None).sum()
    response_field = source_field(grid.nearest_center(grid.center), irf, grid, mode)
    response = np.clip(response_field, 0.0, None).sum()
    if signal <= 0 or response <= 0:
        raise InputError("cannot derive alpha from a signal without positive counts")
    return float(signal / (n_sources * response))


def build_initial_family(
    target: SampledSignal,
    irf: IrfModel,
    n_sources: int,
    alpha0: float,
    population: int,
    mode: BackgroundMode = BackgroundMode.NONE,
    seed: int = 0,
    spread: float = 0.5,
) -> np.ndarray:
    """Greedy peel-off seeding: each source lands near the running residual's maximum.

    ``target`` is the working signal S_*. Returns positions of shape (M, N, D).
    """
    if n_sources < 1 or population < 1:
        raise InputError("N and M must be at least 1")
    grid = target.grid
    centers = grid.centers()
    scale = spread * irf.width / 2.0
    positions = np.empty((population, n_sources, grid.dimension))
    for l in range(population):
        rng = _rng(seed, _INITIAL_STREAM, l)
        residual = target.flat.copy()
        for k in range(n_sources):
            peak = centers[int(np.argmax(residual))]
            position = peak + rng.normal(0.0, scale, size=grid.dimension) if scale > 0 else peak
            positions[l, k] = position
            residual -= alpha0 * source_field(position, irf, grid, mode, centers=centers)
    return positions


def crossover_pair(first: np.ndarray, second: np.ndarray, rng: np.random.Generator) -> tuple[np.ndarray, np.ndarray]:
    """Swap whole source vectors between two individuals with probability 1/2 each."""
    swap = rng.random(first.shape[0]) < 0.5
    a, b = first.copy(), second.copy()
    a[swap], b[swap] = second[swap], first[swap]
    return a, b


def _duplicate(ranked_fitness: np.ndarray, slots: int) -> np.ndarray:
    """Ranks filling ``slots`` places: floor(f / mean f) copies each, then next-best."""
    if not np.all(np.isfinite(ranked_fitness)):
        # zero chi-squared with no offset: only the exact fits reproduce
        ranked_fitness = np.isinf(ranked_fitness).astype(np.float64)
    copies = np.floor(ranked_fitness / ranked_fitness.mean()).astype(int)
    chosen = np.repeat(np.arange(ranked_fitness.size), copies)[:slots]
    if chosen.size < slots:
        start = int(np.nonzero(copies)[0].max()) + 1 if copies.any() else 0
        fill = (start + np.arange(slots - chosen.size)) % ranked_fitness.size
        chosen = np.concatenate([chosen, fill])
    return chosen


def _mutate(individual: np.ndarray, cfg: GaConfig, radius: float, rng: np.random.Generator) -> None:
    n_sources, dimension = individual.shape
    count = max(1, int(round(cfg.pormut * n_sources)))
    picked = rng.choice(n_sources, size=count, replace=False)
    if cfg.mutation_kernel == "gaussian":
        shift = rng.normal(0.0, radius, size=(count, dimension))
    else:
        shift = rng.uniform(-radius, radius, size=(count, dimension))
    individual[picked] += shift


def step_generation(
    pop: Population,
    ctx: ObjectiveContext,
    cfg: GaConfig,
    rng: np.random.Generator,
    executor: Executor | None = None,
) -> Population:
    """One generation: elitism, duplication, crossover, mutation, elite alpha refit."""
    size = pop.size
    ranking = pop.ranking()
    elite = ranking[: cfg.elite]
    slots = size - cfg.elite
    if slots == 0:
        return Population(pop.positions.copy(), pop.alpha, pop.chi2.copy())

    ranked_chi2 = pop.chi2[ranking]
    offset = ctx.fitness_offset
    if offset is None:
        offset = fitness_offset(ranked_chi2, cfg.fitness_offset_factor)
    chosen = ranking[_duplicate(fitness(ranked_chi2, offset=offset), slots)]
    offspring = pop.positions[chosen].copy()

    n_cross = min(cfg.crossover, slots) // 2 * 2
    if n_cross:
        picks = rng.choice(slots, size=n_cross, replace=False)
        for i, j in zip(picks[0::2], picks[1::2]):
            offspring[i], offspring[j] = crossover_pair(offspring[i], offspring[j], rng)

    n_mut = min(cfg.mutation, slots)
    if n_mut:
        radius = ctx.irf.width / 2.0 * cfg.parmut
        for i in rng.choice(slots, size=n_mut, replace=False):
            _mutate(offspring[i], cfg, radius, rng)

    positions = np.concatenate([pop.positions[elite], offspring])
    alpha = pop.alpha
    if cfg.alpha_refit == "elite" and ctx.mode.uses_deviation:
        alpha = _refit(positions[0], pop.alpha, ctx)

    if alpha == pop.alpha:
        chi2 = np.concatenate([pop.chi2[elite], population_chi_squared(offspring, alpha, ctx, executor)])
    else:
        chi2 = population_chi_squared(positions, alpha, ctx, executor)
    return Population(positions, alpha, chi2)


def _refit(positions: np.ndarray, alpha: float, ctx: ObjectiveContext) -> float:
    try:
        refit = refit_alpha(SourceSet(positions, alpha, ctx.grid), ctx)
    except DegenerateBasisError as e:
        logger.warning("alpha_refit_skipped", error=str(e))
        return alpha
    if not np.isfinite(refit) or refit <= 0:
        logger.warning("alpha_refit_nonpositive", alpha=refit)
        return alpha
    return refit


def _noise_floor_reached(best: float, cfg: GaConfig, ctx: ObjectiveContext) -> bool:
    if cfg.noise_floor is None:
        return False
    ceiling = max((1.0 + cfg.stop_epsilon) * cfg.noise_floor, cfg.zero_tolerance * ctx.target_norm2)
    return best <= ceiling


def _stalled(history: list[float], cfg: GaConfig) -> bool:
    if len(history) <= cfg.stall_window:
        return False
    before = history[-1 - cfg.stall_window]
    return before - history[-1] <= cfg.stall_threshold * before


def run(
    target: SampledSignal,
    irf: IrfModel,
    n_sources: int,
    cfg: GaConfig | None = None,
    mode: BackgroundMode = BackgroundMode.NONE,
    alpha: float | None = None,
    progress: Callable[[int, float], None] | None = None,
    workers: int | None = None,
) -> GaRunRecord:
    """Run the GA on the raw signal ``target`` until a stop rule fires."""
    cfg = cfg or GaConfig()
    ctx = ObjectiveContext.build(target, irf, mode)
    alpha = alpha if alpha is not None else initial_alpha(ctx.target, irf, n_sources, ctx.mode)
    if not np.isfinite(alpha) or alpha <= 0:
        raise InputError(f"alpha must be positive, got {alpha}")

    logger.info(
        "ga_started",
        n_sources=n_sources,
        alpha=alpha,
        population=cfg.population,
        mode=ctx.mode.value,
        d0=irf.width,
        seed=cfg.seed,
    )
    workers = workers or settings.workers
    with ThreadPoolExecutor(max_workers=workers) if workers > 1 else nullcontext() as executor:
        positions = build_initial_family(
            ctx.target, irf, n_sources, alpha, cfg.population, ctx.mode, cfg.seed, cfg.initial_spread
        )
        pop = Population(positions, alpha, population_chi_squared(positions, alpha, ctx, executor))
        history = [pop.best_chi2]
        alphas = [pop.alpha]
        if progress:
            progress(0, history[0])

        stop = StopReason.MAX_GENERATIONS
        generation = 0
        if _noise_floor_reached(history[-1], cfg, ctx):
            stop = StopReason.NOISE_FLOOR
        else:
            for generation in range(1, cfg.max_generations + 1):
                started = time.perf_counter()
                pop = step_generation(pop, ctx, cfg, _rng(cfg.seed, generation), executor)
                history.append(pop.best_chi2)
                alphas.append(pop.alpha)
                metrics.generations_total.inc()
                metrics.best_chi2.set(history[-1])
                metrics.generation_seconds.observe(time.perf_counter() - started)
                if progress:
                    progress(generation, history[-1])
                if generation % settings.progress_every == 0:
                    logger.info("ga_generation", generation=generation, best_chi2=history[-1], alpha=pop.alpha)
                if _noise_floor_reached(history[-1], cfg, ctx):
                    stop = StopReason.NOISE_FLOOR
                    break
                if _stalled(history, cfg):
                    stop = StopReason.STALLED
                    break

    best = pop.positions[pop.best_index]
    final_alpha = pop.alpha
    if cfg.alpha_refit == "end" and ctx.mode.uses_deviation:
        final_alpha = _refit(best, pop.alpha, ctx)
        if final_alpha != pop.alpha:
            history.append(ctx.chi_squared_at(best, final_alpha))
            alphas.append(final_alpha)

    metrics.fits_total.labels(stop_reason=stop.value).inc()
    record = GaRunRecord(
        sources=SourceSet(best, final_alpha, target.grid),
        best_chi2=history,
        stop_reason=stop,
        generations=generation,
        noise_floor=cfg.noise_floor,
        alpha_history=alphas,
    )
    logger.info(
        "ga_finished",
        n_sources=n_sources,
        alpha=final_alpha,
        chi2=record.final_chi2,
        generations=generation,
        stop_reason=stop.value,
    )
    return record

