"""Uncertainty bound on the source positions and the optimal number of sources.

sigma^2(N) <= kappa'^2 / (kappa''^2 N) + kappa^2 N / kappa''^2, with

    kappa^2   = 4 ((F + E_G)(1 + 1/eps) + <||eta||^2>)
    kappa'^2  = 4 (1 + eps) Z^2 m / q (L + E_R)        q = 12, or 4 for small m
    kappa''^2 = Z^2 C,  C = min_s sum_i (dI~/dx_s)^2 - E_sigma

so N_op = kappa' / kappa and sigma_op^2 = 2 kappa' kappa / kappa''^2.
E_G is always dropped; the other translation terms vanish for IRFs with parity.
"""

from __future__ import annotations

import numpy as np
from pydantic import BaseModel, Field
from scipy.spatial import cKDTree

from superpose.calibration.residual import Autocorrelation
from superpose.config.logging import get_logger
from superpose.core.signal import PixelGrid
from superpose.core.truth import GroundTruth
from superpose.errors import BoundError
from superpose.model.forward import BackgroundMode
from superpose.model.irf import IrfModel

logger = get_logger(__name__)

TRADEOFF_FACTORS = (0.25, 0.5, 1.0, 2.0, 4.0)
_CURVE_POINTS = 256


class TradeoffPoint(BaseModel):
    n: float
    sigma: float
    ratio: float


class BoundReport(BaseModel):
    """Every term of the error budget, itemized for the run manifest."""

    m: int
    total_intensity: float = Field(description="Z = alpha N")
    d0: float
    pixel_size: float
    epsilon: float
    small_m: bool
    truncation_divisor: float
    noise_power: float
    noise_source: str = "config"
    F: float
    G0: float
    L: float
    norm_irf2: float
    Y_pair_sum: float
    C: float
    derivative_floor: float
    E_a: float = 0.0
    E_G: float = 0.0
    E_R: float = 0.0
    E_sigma: float = 0.0
    kappa2: float
    kappa_prime2: float
    kappa_second2: float
    n_op: float
    sigma_op: float
    superresolution: float = Field(description="M_s = d0 / (2 sigma_op)")
    superpixel: float
    curve: list[tuple[int, float]] = Field(default_factory=list)
    tradeoff: list[TradeoffPoint] = Field(default_factory=list)

    @property
    def n_op_int(self) -> int:
        return max(1, int(round(self.n_op)))

    def sigma_bound(self, n) -> np.ndarray | float:
        """Right-hand side of the sigma bound, square-rooted."""
        n = np.asarray(n, dtype=np.float64)
        value = np.sqrt(self.kappa_prime2 / (self.kappa_second2 * n) + self.kappa2 * n / self.kappa_second2)
        return float(value) if value.ndim == 0 else value


# -- translation errors ------------------------------------------------------


def translation_error(f_samples, grad_samples, d_p: float, dimension: int, parity: bool = False) -> float:
    """E_a = sqrt(2)^(D-1) (d_p / 2) || sum_i grad f(x_i) ||."""
    if parity:
        return 0.0
    grads = np.asarray(grad_samples, dtype=np.float64).reshape(np.size(f_samples), dimension)
    return float(np.sqrt(2.0) ** (dimension - 1) * (d_p / 2.0) * np.linalg.norm(grads.sum(axis=0)))


def lattice_gradient(values: np.ndarray, grid: PixelGrid) -> np.ndarray:
    """Finite-difference gradient of lattice samples as an (n, D) array in (x, y) order."""
    values = np.asarray(values, dtype=np.float64).reshape(grid.shape)
    parts = np.gradient(values, *reversed(grid.pitch)) if grid.dimension > 1 else [np.gradient(values, grid.pitch[0])]
    return np.stack([p.ravel() for p in reversed(parts)], axis=-1)


# -- sampled IRF on the bound lattice -----------------------------------------


class _BoundLattice:
    """I~_* sampled around a source at ``anchor`` on ``grid``."""

    def __init__(self, irf: IrfModel, mode: BackgroundMode, grid: PixelGrid | None):
        self.irf = irf
        self.mode = BackgroundMode(mode)
        self.grid = grid if grid is not None else irf.reference_grid()
        self.centers = self.grid.centers()
        self.anchor = self.grid.nearest_center(self.grid.center)

    def field(self, shift=None) -> np.ndarray:
        position = self.anchor if shift is None else self.anchor + np.asarray(shift)
        values = self.irf(self.centers - position)
        if self.mode.uses_deviation:
            values = values - values.mean()
        return values


def _close_pairs(support: np.ndarray, d0: float) -> np.ndarray:
    """Unordered index pairs (p, l), p < l, with ||y_p - y_l|| < d0."""
    if support.shape[0] < 2:
        return np.empty((0, 2), dtype=int)
    pairs = cKDTree(support).query_pairs(d0, output_type="ndarray")
    if pairs.size == 0:
        return np.empty((0, 2), dtype=int)
    distance = np.linalg.norm(support[pairs[:, 1]] - support[pairs[:, 0]], axis=1)
    return pairs[distance < d0]


def overlap(z, irf: IrfModel, mode: BackgroundMode = BackgroundMode.NONE, grid: PixelGrid | None = None) -> float:
    """Y(z) = sum_i |I~_*(x_i)| |I~_*(x_i - z)|."""
    lattice = _BoundLattice(irf, mode, grid)
    return float(np.abs(lattice.field()) @ np.abs(lattice.field(z)))


def compute_F(gt: GroundTruth, G: Autocorrelation, d0: float) -> float:
    """F = sum_p {R_p^2 G(0) + 2 sum_{l != p, close} R_l R_p G(y_l - y_p)}."""
    R = gt.intensities
    total = float(np.sum(R**2)) * G.at_zero
    pairs = _close_pairs(gt.support, d0)
    if pairs.size:
        p, l = pairs[:, 0], pairs[:, 1]
        lag = gt.support[l] - gt.support[p]
        # each unordered pair stands for (p, l) and (l, p)
        total += float(np.sum(2.0 * R[p] * R[l] * (G(lag) + G(-lag))))
    return total


def _pair_overlaps(gt: GroundTruth, lattice: _BoundLattice, d0: float) -> tuple[np.ndarray, np.ndarray]:
    pairs = _close_pairs(gt.support, d0)
    base = np.abs(lattice.field())
    if not pairs.size:
        return pairs, np.empty(0)
    lags = gt.support[pairs[:, 1]] - gt.support[pairs[:, 0]]
    forward = np.array([base @ np.abs(lattice.field(z)) for z in lags])
    backward = np.array([base @ np.abs(lattice.field(-z)) for z in lags])
    return pairs, forward + backward


def compute_L(
    gt: GroundTruth,
    irf: IrfModel,
    d0: float,
    mode: BackgroundMode = BackgroundMode.NONE,
    grid: PixelGrid | None = None,
) -> float:
    """L = ||I~_*||^2 + (3/m) sum_p sum_{l != p, close} Y(y_l - y_p)."""
    lattice = _BoundLattice(irf, mode, grid)
    norm2 = float(np.sum(lattice.field() ** 2))
    _, ordered = _pair_overlaps(gt, lattice, d0)
    return norm2 + 3.0 / gt.m * float(ordered.sum())


def _truncation_translation_error(gt: GroundTruth, lattice: _BoundLattice, d0: float) -> float:
    """E_R from the squared self term and every close ordered pair's overlap product."""
    grid = lattice.grid
    d_p, dim = grid.pixel_size, grid.dimension
    base = lattice.field()
    total = gt.m * translation_error(base**2, lattice_gradient(base**2, grid), d_p, dim)
    pairs = _close_pairs(gt.support, d0)
    for p, l in pairs:
        z = gt.support[l] - gt.support[p]
        for lag in (z, -z):
            product = np.abs(base) * np.abs(lattice.field(lag))
            total += translation_error(product, lattice_gradient(product, grid), d_p, dim)
    return total


def _sigma_translation_error(irf: IrfModel, grid: PixelGrid) -> float:
    """E_sigma: the largest E_a over the squared partial derivatives."""
    grads = irf.gradient(grid.centers())
    worst = 0.0
    for t in range(grid.dimension):
        squared = grads[:, t] ** 2
        worst = max(worst, translation_error(squared, lattice_gradient(squared, grid), grid.pixel_size, grid.dimension))
    return worst


# -- optimum ------------------------------------------------------------------


def sigma_tradeoff(n, n_op: float, sigma_op: float):
    """sigma(N) = sigma_op sqrt((N_op / N + N / N_op) / 2)."""
    n = np.asarray(n, dtype=np.float64)
    if np.any(n <= 0) or n_op <= 0 or sigma_op <= 0:
        raise BoundError("N, N_op and sigma_op must be positive")
    value = sigma_op * np.sqrt(0.5 * (n_op / n + n / n_op))
    return float(value) if value.ndim == 0 else value


def superpixel_size(sigma_op: float, d_p: float) -> float:
    """d_s = d_p 2^-k with k the integer nearest to log2(d_p / sigma_op)."""
    if sigma_op <= 0 or d_p <= 0:
        raise BoundError("sigma_op and d_p must be positive")
    return float(d_p * 2.0 ** (-round(np.log2(d_p / sigma_op))))


def _curve(report_kappas: tuple[float, float, float], n_op: float) -> list[tuple[int, float]]:
    k2, kp2, ks2 = report_kappas
    upper = max(4, int(np.ceil(4.0 * n_op)))
    n = np.unique(np.round(np.geomspace(1, upper, _CURVE_POINTS)).astype(int))
    sigma = np.sqrt(kp2 / (ks2 * n) + k2 * n / ks2)
    return [(int(a), float(b)) for a, b in zip(n, sigma)]


def estimate_optimum(
    gt: GroundTruth,
    irf: IrfModel,
    noise_power: float,
    epsilon: float = 1.0,
    small_m_threshold: int = 10,
    G: Autocorrelation | None = None,
    total_intensity: float | None = None,
    mode: BackgroundMode = BackgroundMode.NONE,
    grid: PixelGrid | None = None,
    noise_source: str = "config",
) -> BoundReport:
    """Evaluate every bound term and derive N_op, sigma_op and M_s.

    ``gt`` is the support estimate from a preliminary fit, ``G`` the
    calibration autocorrelation (a perfect fit when omitted) and ``grid`` the
    lattice the IRF terms are summed over (the reference lattice when omitted;
    pass the target grid under an unknown background).
    """
    if epsilon <= 0:
        raise BoundError(f"epsilon must be positive, got {epsilon}")
    if noise_power < 0:
        raise BoundError(f"noise power must be non-negative, got {noise_power}")
    d0 = irf.width
    G = G or Autocorrelation.zero(irf.pitch, irf.dimension)
    Z = gt.total if total_intensity is None else float(total_intensity)
    lattice = _BoundLattice(irf, mode, grid)
    d_p = lattice.grid.pixel_size

    F = compute_F(gt, G, d0)
    norm2 = float(np.sum(lattice.field() ** 2))
    _, ordered = _pair_overlaps(gt, lattice, d0)
    L = norm2 + 3.0 / gt.m * float(ordered.sum())

    grads = irf.gradient(lattice.centers - lattice.anchor)
    derivative_sums = np.sum(grads**2, axis=0)
    if irf.has_parity:
        E_a = E_R = E_sigma = 0.0
    else:
        base = lattice.field()
        E_a = translation_error(base, lattice_gradient(base, lattice.grid), d_p, irf.dimension)
        E_R = _truncation_translation_error(gt, lattice, d0)
        E_sigma = _sigma_translation_error(irf, lattice.grid)
    C = float(derivative_sums.min()) - E_sigma
    derivative_floor = float(np.sqrt(derivative_sums.min()))
    if derivative_floor <= 0:
        raise BoundError("IRF derivative norm vanishes on the lattice")
    if C <= 0:
        raise BoundError(f"C = min_s sum (dI/dx_s)^2 - E_sigma = {C:.4g} is not positive")

    small_m = gt.m < small_m_threshold
    divisor = 4.0 if small_m else 12.0
    kappa2 = 4.0 * (F * (1.0 + 1.0 / epsilon) + noise_power)
    kappa_prime2 = 4.0 * (1.0 + epsilon) * Z**2 * gt.m / divisor * (L + E_R)
    kappa_second2 = Z**2 * C
    if not (kappa2 > 0 and kappa_prime2 > 0 and kappa_second2 > 0):
        raise BoundError(
            f"bound constants must be positive (kappa^2={kappa2:.4g}, kappa'^2={kappa_prime2:.4g}, "
            f"kappa''^2={kappa_second2:.4g}); a zero noise power needs a nonzero IRF residual"
        )

    n_op = float(np.sqrt(kappa_prime2 / kappa2))
    sigma_op = float(np.sqrt(2.0 * np.sqrt(kappa_prime2 * kappa2) / kappa_second2))
    report = BoundReport(
        m=gt.m,
        total_intensity=Z,
        d0=d0,
        pixel_size=d_p,
        epsilon=epsilon,
        small_m=small_m,
        truncation_divisor=divisor,
        noise_power=noise_power,
        noise_source=noise_source,
        F=F,
        G0=G.at_zero,
        L=L,
        norm_irf2=norm2,
        Y_pair_sum=float(ordered.sum()),
        C=C,
        derivative_floor=derivative_floor,
        E_a=E_a,
        E_R=E_R,
        E_sigma=E_sigma,
        kappa2=kappa2,
        kappa_prime2=kappa_prime2,
        kappa_second2=kappa_second2,
        n_op=n_op,
        sigma_op=sigma_op,
        superresolution=d0 / (2.0 * sigma_op),
        superpixel=superpixel_size(sigma_op, d_p),
        curve=_curve((kappa2, kappa_prime2, kappa_second2), n_op),
        tradeoff=[
            TradeoffPoint(n=f * n_op, sigma=sigma_tradeoff(f * n_op, n_op, sigma_op), ratio=float(np.sqrt(0.5 * (1 / f + f))))
            for f in TRADEOFF_FACTORS
        ],
    )
    logger.info(
        "bounds_estimated",
        m=gt.m,
        Z=Z,
        F=F,
        L=L,
        C=C,
        n_op=n_op,
        sigma_op=sigma_op,
        superresolution=report.superresolution,
        d0=d0,
    )
    return report


def chi2_bound(
    gt: GroundTruth,
    irf: IrfModel,
    noise_power: float,
    epsilon: float,
    alpha: float,
    m: int | None = None,
    G: Autocorrelation | None = None,
    small_m_threshold: int = 10,
    mode: BackgroundMode = BackgroundMode.NONE,
    grid: PixelGrid | None = None,
) -> float:
    """Upper estimate of <||S_* - R_bar * I~_*||^2>.

    (1 + 1/eps) F + <||eta||^2> + (1 + eps) alpha^2 (m L + E_R) / q
    """
    if epsilon <= 0 or alpha <= 0:
        raise BoundError("epsilon and alpha must be positive")
    m = gt.m if m is None else int(m)
    d0 = irf.width
    G = G or Autocorrelation.zero(irf.pitch, irf.dimension)
    lattice = _BoundLattice(irf, mode, grid)
    F = compute_F(gt, G, d0)
    L = compute_L(gt, irf, d0, mode, grid)
    E_R = 0.0 if irf.has_parity else _truncation_translation_error(gt, lattice, d0)
    divisor = 4.0 if m < small_m_threshold else 12.0
    return float((1.0 + 1.0 / epsilon) * F + noise_power + (1.0 + epsilon) * alpha**2 * (m * L + E_R) / divisor)
