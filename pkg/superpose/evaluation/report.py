"""Evaluation report for a reconstruction against a known ground truth."""

from __future__ import annotations

from pydantic import BaseModel, Field

from superpose.config.logging import get_logger
from superpose.core.signal import SourceSet
from superpose.core.truth import GroundTruth, truncate_ground_truth
from superpose.errors import TruncationError
from superpose.evaluation.histogram import histogram_sources, histogram_stack
from superpose.evaluation.lobes import LineSpec, LobeStats, line_lobe_stats
from superpose.evaluation.matching import matched_sigma, nearest_neighbour_rms

logger = get_logger(__name__)


class HistogramLevel(BaseModel):
    d_bin: float
    m_bin: int
    total: int


class EvalReport(BaseModel):
    n_sources: int
    alpha: float
    sigma: float | None = Field(default=None, description="matched position uncertainty")
    assignment_exact: bool | None = None
    assignment_excess: float | None = None
    superresolution: float | None = Field(default=None, description="M_s = d0 / (2 sigma)")
    sigma_op: float | None = None
    bound_ratio: float | None = Field(default=None, description="sigma_op / sigma")
    nn_rms: float | None = Field(default=None, description="nearest-neighbour diagnostic, not a matched sigma")
    histograms: list[HistogramLevel] = Field(default_factory=list)
    superpixel: float | None = None
    lobes: list[LobeStats] | None = None
    diagnostics: list[str] = Field(default_factory=list)


def evaluate_reconstruction(
    fitted: SourceSet,
    truth: GroundTruth | None,
    d0: float,
    sigma_op: float | None = None,
    superpixel: float | None = None,
    lines: list[LineSpec] | None = None,
    levels: int = 3,
) -> EvalReport:
    """Compare ``fitted`` with ``truth`` expanded to N sources at the fitted alpha.

    When the truth cannot be expanded to exactly N sources the matched sigma
    is undefined and only the nearest-neighbour RMS is reported.
    """
    report = EvalReport(n_sources=fitted.n_sources, alpha=fitted.alpha, sigma_op=sigma_op, superpixel=superpixel)
    stack = histogram_stack(fitted, levels, fitted.grid)
    if superpixel is not None:
        stack.append(histogram_sources(fitted, superpixel, fitted.grid))
    report.histograms = [HistogramLevel(d_bin=h.d_bin, m_bin=h.m_bin, total=h.total) for h in stack]

    if truth is not None:
        try:
            expanded = truncate_ground_truth(truth, fitted.alpha, fitted.n_sources).to_source_set(fitted.grid)
        except TruncationError as e:
            reference = SourceSet(truth.support, truth.total / truth.m, fitted.grid)
            report.nn_rms = nearest_neighbour_rms(reference, fitted)
            report.diagnostics.append(f"matched sigma undefined: {e}; nearest-neighbour RMS reported")
            logger.warning("matched_sigma_skipped", n_sources=fitted.n_sources, m=truth.m, deficit=e.deficit)
        else:
            match = matched_sigma(expanded, fitted)
            report.sigma = match.sigma
            report.assignment_exact = match.exact
            report.assignment_excess = match.excess
            if match.sigma > 0:
                report.superresolution = d0 / (2.0 * match.sigma)
                if sigma_op is not None:
                    report.bound_ratio = sigma_op / match.sigma

    if lines:
        report.lobes = line_lobe_stats(fitted, lines)

    logger.info(
        "reconstruction_evaluated",
        n_sources=fitted.n_sources,
        sigma=report.sigma,
        superresolution=report.superresolution,
        bound_ratio=report.bound_ratio,
    )
    return report
