"""Fit one target at several source counts with identical seeds."""

from __future__ import annotations

from typing import Callable

import numpy as np
import pandas as pd
from pydantic import BaseModel

from superpose.config.logging import fit_stage, get_logger
from superpose.core.signal import SampledSignal
from superpose.core.truth import GroundTruth
from superpose.evaluation.lobes import LineSpec
from superpose.evaluation.report import EvalReport, evaluate_reconstruction
from superpose.model.forward import BackgroundMode
from superpose.model.irf import IrfModel
from superpose.solver.ga import GaConfig, GaRunRecord, run

logger = get_logger(__name__)


class SweepRow(BaseModel):
    n_sources: int
    alpha: float
    chi2: float
    generations: int
    stop_reason: str
    sigma: float | None = None
    nn_rms: float | None = None
    lobe_std_px: float | None = None
    lobe_offset_px: float | None = None


def _row(record: GaRunRecord, report: EvalReport | None) -> SweepRow:
    row = SweepRow(
        n_sources=record.sources.n_sources,
        alpha=record.sources.alpha,
        chi2=record.final_chi2,
        generations=record.generations,
        stop_reason=record.stop_reason.value,
    )
    if report is None:
        return row
    row.sigma = report.sigma
    row.nn_rms = report.nn_rms
    if report.lobes:
        row.lobe_std_px = float(np.mean([lobe.std_px for lobe in report.lobes]))
        row.lobe_offset_px = float(np.max([abs(lobe.mean_offset_px) for lobe in report.lobes]))
    return row


def run_n_sweep(
    signal: SampledSignal,
    irf: IrfModel,
    counts: list[int],
    cfg: GaConfig | None = None,
    mode: BackgroundMode = BackgroundMode.NONE,
    total_intensity: float | None = None,
    truth: GroundTruth | None = None,
    lines: list[LineSpec] | None = None,
    progress: Callable[[int, int, float], None] | None = None,
) -> list[SweepRow]:
    """One GA run per N with alpha = Z / N and the same seed.

    Without ``total_intensity`` each run derives its alpha from the signal,
    which fixes the same Z for every N.
    """
    cfg = cfg or GaConfig()
    rows = []
    for n in counts:
        alpha = total_intensity / n if total_intensity is not None else None
        callback = (lambda g, best, n=n: progress(n, g, best)) if progress else None
        with fit_stage("sweep", n):
            record = run(signal, irf, n, cfg, mode=mode, alpha=alpha, progress=callback)
        report = None
        if truth is not None or lines:
            report = evaluate_reconstruction(record.sources, truth, irf.width, lines=lines)
        row = _row(record, report)
        logger.info("sweep_point", **row.model_dump())
        rows.append(row)
    return rows


def sweep_frame(rows: list[SweepRow]) -> pd.DataFrame:
    return pd.DataFrame([row.model_dump() for row in rows])
