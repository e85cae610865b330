"""Position uncertainty under the best one-to-one matching of two source sets."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.optimize import linear_sum_assignment
from scipy.spatial import cKDTree
from scipy.spatial.distance import cdist

from superpose.config.logging import get_logger
from superpose.config.settings import settings
from superpose.core.signal import SourceSet
from superpose.errors import EvaluationError

logger = get_logger(__name__)


@dataclass(frozen=True, eq=False)
class MatchResult:
    sigma: float
    assignment: np.ndarray
    cost: float
    exact: bool = True
    lower_bound: float | None = None

    @property
    def excess(self) -> float:
        """Relative cost excess over the lower bound; 0 for exact matchings."""
        if self.exact or not self.lower_bound:
            return 0.0
        return (self.cost - self.lower_bound) / self.lower_bound


def _greedy_assignment(cost: np.ndarray) -> np.ndarray:
    n = cost.shape[0]
    assignment = np.full(n, -1)
    taken = np.zeros(n, dtype=bool)
    for flat in np.argsort(cost, axis=None, kind="stable"):
        i, j = divmod(int(flat), n)
        if assignment[i] < 0 and not taken[j]:
            assignment[i] = j
            taken[j] = True
    return assignment


def matched_sigma(true_sources: SourceSet, fitted: SourceSet, exact_limit: int | None = None) -> MatchResult:
    """sigma^2 = (1/N) min over permutations tau of sum_k ||a_tau(k) - a~_k||^2.

    ``assignment[k]`` is the index of the true source matched to fitted source
    k. Above ``exact_limit`` sources a greedy matching is used and certified
    against max(sum of row minima, sum of column minima).
    """
    if true_sources.n_sources != fitted.n_sources:
        raise EvaluationError(
            f"matched sigma needs equal source counts, got {true_sources.n_sources} and {fitted.n_sources}"
        )
    exact_limit = settings.assignment_exact_limit if exact_limit is None else exact_limit
    n = fitted.n_sources
    cost = cdist(fitted.positions, true_sources.positions, metric="sqeuclidean")

    if n <= exact_limit:
        rows, cols = linear_sum_assignment(cost)
        assignment = cols[np.argsort(rows)]
        total = float(cost[np.arange(n), assignment].sum())
        return MatchResult(sigma=float(np.sqrt(total / n)), assignment=assignment, cost=total)

    assignment = _greedy_assignment(cost)
    total = float(cost[np.arange(n), assignment].sum())
    lower = float(max(cost.min(axis=1).sum(), cost.min(axis=0).sum()))
    result = MatchResult(
        sigma=float(np.sqrt(total / n)),
        assignment=assignment,
        cost=total,
        exact=False,
        lower_bound=lower,
    )
    if result.excess > settings.assignment_excess_limit:
        logger.warning("assignment_certificate_exceeded", n_sources=n, excess=result.excess)
    return result


def nearest_neighbour_rms(reference: SourceSet, fitted: SourceSet) -> float:
    """RMS distance from each fitted source to its nearest reference source.

    A diagnostic for unequal counts, not the matched sigma.
    """
    distance, _ = cKDTree(reference.positions).query(fitted.positions)
    return float(np.sqrt(np.mean(distance**2)))
