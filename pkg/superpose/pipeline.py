"""Orchestrates the full fit: Z estimate, N selection, final GA and histograms."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from superpose.calibration.residual import Autocorrelation
from superpose.config.logging import fit_stage, get_logger
from superpose.core.signal import SampledSignal
from superpose.errors import InputError
from superpose.evaluation.histogram import SourceHistogram, histogram_sources, histogram_stack
from superpose.evaluation.render import delta_kernel, render_smoothed, sphere_profile, superpixel_grid
from superpose.io.schemas import RunConfig
from superpose.model.forward import BackgroundMode, source_field, working_target
from superpose.model.irf import IrfModel
from superpose.selection.bounds import BoundReport, estimate_optimum
from superpose.selection.greedy import GreedyResult, greedy_find_alphaN
from superpose.selection.support import SupportEstimate, estimate_support
from superpose.solver.ga import GaRunRecord, StopReason, run

logger = get_logger(__name__)


@dataclass
class FitOutcome:
    record: GaRunRecord
    total_intensity: float
    greedy: GreedyResult | None = None
    preliminary: GaRunRecord | None = None
    support: SupportEstimate | None = None
    bounds: BoundReport | None = None
    histograms: list[SourceHistogram] = field(default_factory=list)
    render: SampledSignal | None = None

    @property
    def superpixel(self) -> float | None:
        return self.bounds.superpixel if self.bounds else None

    @property
    def flagged(self) -> bool:
        """The GA hit its generation ceiling without meeting a configured noise floor."""
        return self.record.noise_floor is not None and self.record.stop_reason is StopReason.MAX_GENERATIONS


class FitPipeline:
    def __init__(
        self,
        irf: IrfModel,
        config: RunConfig | None = None,
        mode: BackgroundMode | str | None = None,
        autocorrelation: Autocorrelation | None = None,
        progress: Callable[[int, float], None] | None = None,
        workers: int | None = None,
    ):
        self.irf = irf
        self.config = config or RunConfig()
        self.mode = BackgroundMode(mode if mode is not None else self.config.mode)
        self.autocorrelation = autocorrelation
        self.progress = progress
        self.workers = workers

    def greedy(self, signal: SampledSignal) -> GreedyResult:
        """Peel-off estimate of Z with alpha0 = max S_* / (k max I~_*)."""
        target = working_target(signal, self.mode)
        grid = target.grid
        unit = source_field(grid.nearest_center(grid.center), self.irf, grid, self.mode)
        if target.flat.max() <= 0 or unit.max() <= 0:
            raise InputError("signal has no positive counts to fit")
        alpha0 = float(target.flat.max() / (self.config.selection.greedy_steps_per_peak * unit.max()))
        result = greedy_find_alphaN(
            target,
            self.irf,
            alpha0,
            self.mode,
            max_steps=self.config.selection.max_greedy_sources,
            scan_global=self.config.selection.scan_global,
        )
        if result.n_sources == 0:
            raise InputError(f"greedy estimate found no sources: {result.diagnostic}")
        return result

    def preliminary(self, signal: SampledSignal, greedy: GreedyResult) -> GaRunRecord:
        cfg = self.config.ga.model_copy(
            update={"max_generations": min(self.config.ga.max_generations, self.config.selection.preliminary_generations)}
        )
        logger.info("preliminary_fit_started", n_sources=greedy.n_sources, alpha=greedy.alpha0)
        with fit_stage("preliminary", greedy.n_sources):
            return run(signal, self.irf, greedy.n_sources, cfg, self.mode, alpha=greedy.alpha0, workers=self.workers)

    def select(self, signal: SampledSignal, preliminary: GaRunRecord) -> tuple[SupportEstimate, BoundReport]:
        """Support of the preliminary solution, then N_op and sigma_op."""
        bounds_cfg = self.config.bounds
        support = estimate_support(preliminary.sources, bounds_cfg.support_levels, bounds_cfg.support_tolerance)
        if bounds_cfg.noise_power is not None:
            noise_power, source = bounds_cfg.noise_power, "config"
        else:
            noise_power, source = preliminary.final_chi2, "preliminary_chi2"
        report = estimate_optimum(
            support.truth,
            self.irf,
            noise_power,
            epsilon=bounds_cfg.epsilon,
            small_m_threshold=bounds_cfg.small_m_threshold,
            G=self.autocorrelation,
            mode=self.mode,
            grid=signal.grid if self.mode.uses_deviation else None,
            noise_source=source,
        )
        return support, report

    def fit(self, signal: SampledSignal, n_sources: int | None = None) -> FitOutcome:
        """Fit ``signal``; ``n_sources=None`` selects N_op automatically.

        Both paths take Z from the greedy estimate and start the final GA at
        alpha = Z / N with the configured seed, so an explicit N equal to N_op
        reproduces the automatic run.
        """
        if self.irf.dimension != signal.grid.dimension:
            raise InputError(f"IRF is {self.irf.dimension}-D but the signal is {signal.grid.dimension}-D")
        greedy = self.greedy(signal)
        Z = greedy.total_intensity
        preliminary = support = bounds = None
        if n_sources is None:
            preliminary = self.preliminary(signal, greedy)
            support, bounds = self.select(signal, preliminary)
            n_sources = bounds.n_op_int
        elif n_sources < 1:
            raise InputError(f"N must be at least 1, got {n_sources}")

        logger.info("final_fit_started", n_sources=n_sources, total_intensity=Z, auto=bounds is not None)
        with fit_stage("final", n_sources):
            record = run(
                signal,
                self.irf,
                n_sources,
                self.config.ga,
                self.mode,
                alpha=Z / n_sources,
                progress=self.progress,
                workers=self.workers,
            )
        outcome = FitOutcome(record, Z, greedy, preliminary, support, bounds)
        self._histograms(outcome)
        self._render(outcome)
        logger.info(
            "fit_finished",
            n_sources=n_sources,
            alpha=outcome.record.sources.alpha,
            chi2=outcome.record.final_chi2,
            stop_reason=outcome.record.stop_reason.value,
            flagged=outcome.flagged,
        )
        return outcome

    def _histograms(self, outcome: FitOutcome) -> None:
        sources = outcome.record.sources
        outcome.histograms = histogram_stack(sources, self.config.render.histogram_levels)
        if outcome.superpixel is not None:
            outcome.histograms.append(histogram_sources(sources, outcome.superpixel))

    def _render(self, outcome: FitOutcome) -> None:
        render_cfg = self.config.render
        if render_cfg.kernel == "none":
            return
        sources = outcome.record.sources
        d_s = outcome.superpixel or sources.grid.pixel_size
        grid = superpixel_grid(sources.grid, d_s)
        if render_cfg.kernel == "sphere":
            if render_cfg.sphere_diameter is None:
                raise InputError("render.kernel 'sphere' needs render.sphere_diameter")
            kernel = sphere_profile(render_cfg.sphere_diameter, grid)
        else:
            kernel = delta_kernel(grid)
        outcome.render = render_smoothed(sources, kernel, grid, pad=render_cfg.pad)
        logger.info("render_finished", kernel=render_cfg.kernel, d_s=d_s, mass=float(np.sum(outcome.render.values)))
