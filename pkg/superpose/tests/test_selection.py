"""Tests for the greedy Z estimate, support estimation and the bound on sigma."""

import numpy as np
import pytest

from superpose.calibration.residual import Autocorrelation, ResidualMap, autocorrelate
from superpose.core.signal import PixelGrid, SampledSignal, SourceSet
from superpose.core.truth import GroundTruth
from superpose.errors import BoundError
from superpose.model.forward import BackgroundMode, basis
from superpose.model.irf import gaussian_irf, pixelate_irf
from superpose.selection.bounds import (
    chi2_bound,
    compute_F,
    compute_L,
    estimate_optimum,
    overlap,
    sigma_tradeoff,
    superpixel_size,
    translation_error,
)
from superpose.selection.greedy import greedy_find_alphaN
from superpose.selection.support import estimate_support


class TestGreedy:
    def setup_method(self):
        self.grid = PixelGrid(extents=(40,), pitch=1.0)
        self.irf = gaussian_irf(1.5, 1.0, dimension=1)
        self.target = SampledSignal(grid=self.grid, values=500.0 * basis(np.array([[20.0]]), self.irf, self.grid))

    def test_single_source_total(self):
        result = greedy_find_alphaN(self.target, self.irf, 50.0, BackgroundMode.NONE)
        assert result.n_sources == 10
        assert result.total_intensity == pytest.approx(500.0)
        assert result.peaks.shape == (10, 1)
        assert result.diagnostic is None

    def test_global_scan(self):
        result = greedy_find_alphaN(self.target, self.irf, 50.0, BackgroundMode.NONE, max_steps=30, scan_global=True)
        assert result.n_sources == 10
        assert len(result.t_curve) == 31

    def test_alpha_too_large(self):
        result = greedy_find_alphaN(self.target, self.irf, 1500.0, BackgroundMode.NONE)
        assert result.n_sources == 0
        assert "smaller alpha0" in result.diagnostic

    def test_rejects_nonpositive_alpha(self):
        with pytest.raises(ValueError):
            greedy_find_alphaN(self.target, self.irf, 0.0)

    def test_two_sources(self):
        values = 100.0 * basis(np.array([[10.0], [28.0]]), self.irf, self.grid)
        result = greedy_find_alphaN(SampledSignal(self.grid, values), self.irf, 20.0, BackgroundMode.NONE)
        assert result.n_sources == 10
        assert result.total_intensity == pytest.approx(200.0)


class TestSupport:
    def test_clusters_become_support_points(self):
        grid = PixelGrid(extents=(32,), pitch=1.0)
        sources = SourceSet(positions=[10.0] * 5 + [20.0] * 3, alpha=2.0, grid=grid)
        estimate = estimate_support(sources, levels=3)
        assert estimate.stabilized
        assert estimate.level == 0
        assert estimate.truth.m == 2
        np.testing.assert_allclose(estimate.truth.support.ravel(), [10.0, 20.0])
        np.testing.assert_allclose(estimate.truth.intensities, [10.0, 6.0])
        assert estimate.truth.total == pytest.approx(sources.total_intensity)

    def test_centroid_of_bin(self):
        grid = PixelGrid(extents=(8, 8), pitch=1.0)
        sources = SourceSet(positions=[[3.1, 3.2], [3.3, 3.0], [6.0, 1.0]], alpha=1.0, grid=grid)
        estimate = estimate_support(sources, levels=0)
        order = np.argsort(estimate.truth.support[:, 0])
        np.testing.assert_allclose(estimate.truth.support[order], [[3.2, 3.1], [6.0, 1.0]])
        np.testing.assert_allclose(estimate.truth.intensities[order], [2.0, 1.0])


class TestTradeoff:
    def test_tradeoff_identity(self):
        assert sigma_tradeoff(7.3, 7.3, 0.4) == pytest.approx(0.4, abs=1e-12)
        assert sigma_tradeoff(14.6, 7.3, 0.4) / 0.4 == pytest.approx(np.sqrt(1.25), abs=1e-12)
        assert sigma_tradeoff(3.65, 7.3, 0.4) / 0.4 == pytest.approx(np.sqrt(1.25), abs=1e-12)

    def test_tradeoff_rejects_nonpositive(self):
        with pytest.raises(BoundError):
            sigma_tradeoff(0.0, 1.0, 1.0)

    @pytest.mark.parametrize("sigma_op, expected", [(0.3, 0.25), (0.6, 0.5), (1.0, 1.0), (3.0, 4.0)])
    def test_superpixel_rounding(self, sigma_op, expected):
        assert superpixel_size(sigma_op, 1.0) == pytest.approx(expected)

    def test_translation_error(self):
        assert translation_error(np.ones(3), np.ones(3), 1.0, 1, parity=True) == 0.0
        assert translation_error(np.ones(3), np.ones(3), 1.0, 1) == pytest.approx(1.5)
        grads = np.array([[1.0, 0.0], [0.0, 1.0]])
        assert translation_error(np.ones(2), grads, 2.0, 2) == pytest.approx(np.sqrt(2.0) * np.sqrt(2.0))


class TestEstimateOptimum:
    def setup_method(self):
        self.irf = gaussian_irf(1.5, 1.0, dimension=1)
        self.truth = GroundTruth(support=[[10.0], [11.0], [30.0]], intensities=[400.0, 300.0, 300.0])

    def test_report_is_consistent(self):
        report = estimate_optimum(self.truth, self.irf, noise_power=50.0)
        assert report.small_m and report.truncation_divisor == 4.0
        assert report.E_a == report.E_R == report.E_sigma == 0.0
        assert report.n_op == pytest.approx(np.sqrt(report.kappa_prime2 / report.kappa2))
        assert report.sigma_bound(report.n_op) == pytest.approx(report.sigma_op, rel=1e-12)
        assert report.superresolution == pytest.approx(report.d0 / (2.0 * report.sigma_op))
        assert report.total_intensity == pytest.approx(1000.0)
        assert len(report.tradeoff) == 5
        assert report.tradeoff[3].ratio == pytest.approx(np.sqrt(1.25))

    def test_noise_scaling(self):
        low = estimate_optimum(self.truth, self.irf, noise_power=50.0)
        high = estimate_optimum(self.truth, self.irf, noise_power=200.0)
        assert high.n_op == pytest.approx(low.n_op / 2.0, rel=1e-12)

    def test_close_pairs_raise_L(self):
        report = estimate_optimum(self.truth, self.irf, noise_power=50.0)
        assert report.L > report.norm_irf2
        far = GroundTruth(support=[[0.0], [20.0], [40.0]], intensities=[400.0, 300.0, 300.0])
        assert estimate_optimum(far, self.irf, noise_power=50.0).L == pytest.approx(report.norm_irf2)

    def test_unknown_background_on_target_grid(self):
        grid = PixelGrid(extents=(48,), pitch=1.0)
        report = estimate_optimum(
            self.truth, self.irf, noise_power=50.0, mode=BackgroundMode.UNKNOWN_CONSTANT, grid=grid
        )
        assert report.n_op > 0 and report.sigma_op > 0

    def test_tabulated_irf(self):
        def gauss(o):
            return np.exp(-0.5 * np.sum((o / 1.5) ** 2, axis=-1))

        irf = pixelate_irf(gauss, 1.0, dimension=1).tabulate(radius=12.0).normalized()
        report = estimate_optimum(self.truth, irf, noise_power=50.0)
        assert report.E_a >= 0.0 and report.E_R >= 0.0
        assert report.n_op > 0

    def test_zero_noise_needs_irf_residual(self):
        with pytest.raises(BoundError):
            estimate_optimum(self.truth, self.irf, noise_power=0.0)
        with pytest.raises(BoundError):
            estimate_optimum(self.truth, self.irf, noise_power=1.0, epsilon=0.0)

    def test_residual_feeds_F(self):
        grid = PixelGrid(extents=(9,), pitch=1.0).centered_like()
        g = ResidualMap(grid=grid, values=np.array([0, 0, 0, 0.01, -0.02, 0.01, 0, 0, 0]))
        G = autocorrelate(g)
        far = GroundTruth(support=[[0.0], [20.0]], intensities=[3.0, 4.0])
        assert compute_F(far, G, d0=3.0) == pytest.approx(25.0 * G.at_zero)
        report = estimate_optimum(far, self.irf, noise_power=0.0, G=G)
        assert report.F > 0 and report.n_op > 0

    def test_F_close_pair(self):
        lags = PixelGrid(extents=(3,), pitch=1.0).centered_like()
        G = Autocorrelation(lags=lags, values=np.array([0.02, 0.1, 0.02]))
        pair = GroundTruth(support=[[0.0], [1.0]], intensities=[2.0, 3.0])
        assert compute_F(pair, G, d0=2.0) == pytest.approx(1.78)
        assert compute_F(pair, G, d0=0.5) == pytest.approx(1.3)

    def test_L_close_pair(self):
        pair = GroundTruth(support=[[10.0], [12.0]], intensities=[400.0, 300.0])
        norm2 = overlap(np.array([0.0]), self.irf)
        shifted = overlap(np.array([2.0]), self.irf)
        assert shifted == pytest.approx(norm2 * np.exp(-4.0 / (4.0 * 1.5**2)), rel=1e-6)
        assert compute_L(pair, self.irf, d0=3.0) == pytest.approx(norm2 + 3.0 * shifted, rel=1e-12)
        assert compute_L(pair, self.irf, d0=1.5) == pytest.approx(norm2, rel=1e-12)

    def test_overlap_peaks_at_zero(self):
        assert overlap(np.array([1.5]), self.irf) < overlap(np.array([0.0]), self.irf)

    def test_chi2_bound_exceeds_noise(self):
        value = chi2_bound(self.truth, self.irf, noise_power=50.0, epsilon=1.0, alpha=10.0)
        assert value > 50.0
