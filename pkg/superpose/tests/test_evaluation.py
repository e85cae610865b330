"""Tests for matching, histograms, renders, line lobes, reports and N sweeps."""

import itertools

import numpy as np
import pytest

from superpose.core.signal import PixelGrid, SampledSignal, SourceSet
from superpose.core.truth import GroundTruth
from superpose.errors import EvaluationError, InputError
from superpose.evaluation.histogram import histogram_sources, histogram_stack
from superpose.evaluation.lobes import LineSpec, line_lobe_stats, perpendicular_histogram
from superpose.evaluation.matching import matched_sigma, nearest_neighbour_rms
from superpose.evaluation.render import delta_kernel, render_smoothed, sphere_profile, superpixel_grid
from superpose.evaluation.report import evaluate_reconstruction
from superpose.evaluation.sweep import run_n_sweep, sweep_frame
from superpose.model.forward import basis
from superpose.model.irf import gaussian_irf
from superpose.solver.ga import GaConfig


def _brute_force_sigma(true_positions, fitted_positions):
    n = len(fitted_positions)
    cost = np.sum((true_positions[:, None, :] - fitted_positions[None, :, :]) ** 2, axis=-1)
    permutations = np.array(list(itertools.permutations(range(n))))
    best = cost[permutations, np.arange(n)].sum(axis=1).min()
    return np.sqrt(best / n)


class TestMatching:
    def setup_method(self):
        self.grid = PixelGrid(extents=(16, 16), pitch=1.0)

    def test_matches_permutation_brute_force(self):
        for seed in range(100):
            rng = np.random.default_rng(seed)
            true_positions = rng.uniform(0.0, 15.0, size=(7, 2))
            fitted_positions = rng.uniform(0.0, 15.0, size=(7, 2))
            result = matched_sigma(
                SourceSet(true_positions, 1.0, self.grid), SourceSet(fitted_positions, 1.0, self.grid)
            )
            assert result.sigma == pytest.approx(_brute_force_sigma(true_positions, fitted_positions), rel=1e-12)
            assert result.exact and result.excess == 0.0

    def test_relabeling_invariance(self):
        rng = np.random.default_rng(8)
        true = SourceSet(rng.uniform(0.0, 15.0, size=(30, 2)), 1.0, self.grid)
        fitted = rng.uniform(0.0, 15.0, size=(30, 2))
        a = matched_sigma(true, SourceSet(fitted, 1.0, self.grid))
        b = matched_sigma(true, SourceSet(fitted[rng.permutation(30)], 1.0, self.grid))
        assert a.sigma == pytest.approx(b.sigma, rel=1e-12)

    def test_assignment_points_at_true_index(self):
        true = SourceSet([[1.0, 1.0], [10.0, 10.0]], 1.0, self.grid)
        fitted = SourceSet([[10.2, 10.0], [1.0, 0.9]], 1.0, self.grid)
        result = matched_sigma(true, fitted)
        np.testing.assert_array_equal(result.assignment, [1, 0])
        assert result.sigma == pytest.approx(np.sqrt((0.04 + 0.01) / 2))

    def test_unequal_counts(self):
        with pytest.raises(EvaluationError):
            matched_sigma(SourceSet([[1.0, 1.0]], 1.0, self.grid), SourceSet([[1.0, 1.0], [2.0, 2.0]], 1.0, self.grid))

    def test_greedy_fallback_is_certified(self):
        true_positions = np.array([[x, y] for x in range(2, 14, 3) for y in range(2, 14, 3)], dtype=float)
        fitted_positions = true_positions + np.random.default_rng(1).normal(0.0, 0.05, true_positions.shape)
        result = matched_sigma(
            SourceSet(true_positions, 1.0, self.grid), SourceSet(fitted_positions, 1.0, self.grid), exact_limit=0
        )
        assert not result.exact
        np.testing.assert_array_equal(result.assignment, np.arange(16))
        assert result.excess == pytest.approx(0.0, abs=1e-12)
        exact = matched_sigma(SourceSet(true_positions, 1.0, self.grid), SourceSet(fitted_positions, 1.0, self.grid))
        assert result.sigma == pytest.approx(exact.sigma)

    def test_nearest_neighbour_rms(self):
        reference = SourceSet([[0.0, 0.0], [10.0, 0.0]], 1.0, self.grid)
        fitted = SourceSet([[0.0, 1.0], [0.0, -1.0], [10.0, 2.0]], 1.0, self.grid)
        assert nearest_neighbour_rms(reference, fitted) == pytest.approx(np.sqrt(6.0 / 3.0))


class TestHistogram:
    def setup_method(self):
        self.grid = PixelGrid(extents=(8, 8), pitch=2.0)

    def test_counts_are_conserved(self):
        positions = np.random.default_rng(0).uniform(-3.0, 18.0, size=(500, 2))
        sources = SourceSet(positions, 0.5, self.grid)
        for hist in histogram_stack(sources, 3):
            assert hist.total == 500
            assert hist.intensities.sum() == pytest.approx(250.0)
        assert [h.d_bin for h in histogram_stack(sources, 3)] == [2.0, 1.0, 0.5, 0.25]

    def test_bins_align_with_pixel_edges(self):
        sources = SourceSet([[0.1, 0.1]], 1.0, self.grid)
        hist = histogram_sources(sources, 0.5)
        assert hist.edges[0][0] == pytest.approx(-1.0)
        assert hist.edges[1][0] == pytest.approx(-1.0)

    def test_occupied_bins_in_row_major_order(self):
        grid = PixelGrid(extents=(4, 4), pitch=1.0)
        sources = SourceSet([[0.2, 1.1], [0.1, 0.9], [2.0, 0.0]], 3.0, grid)
        centers, counts = histogram_sources(sources, 1.0).occupied()
        np.testing.assert_allclose(centers, [[2.0, 0.0], [0.0, 1.0]])
        np.testing.assert_array_equal(counts, [1, 2])
        frame = histogram_sources(sources, 1.0).to_frame()
        assert list(frame.columns) == ["x", "y", "count", "intensity"]
        assert frame["intensity"].tolist() == [3.0, 6.0]

    def test_bin_size_must_be_positive(self):
        with pytest.raises(InputError):
            histogram_sources(SourceSet([[0.0, 0.0]], 1.0, self.grid), 0.0)


class TestRender:
    def setup_method(self):
        self.grid = PixelGrid(extents=(32, 32), pitch=68.0, origin=(0.0, 0.0))

    def test_superpixel_grid_covers_field(self):
        fine = superpixel_grid(self.grid, 17.0)
        assert fine.extents == (128, 128)
        np.testing.assert_allclose(fine.edges(0)[[0, -1]], self.grid.edges(0)[[0, -1]])

    def test_delta_render_keeps_mass(self):
        fine = superpixel_grid(self.grid, 17.0)
        positions = np.random.default_rng(2).uniform(600.0, 1500.0, size=(200, 2))
        render = render_smoothed(SourceSet(positions, 4.0, fine), delta_kernel(fine), fine)
        assert render.total() == pytest.approx(800.0)

    @pytest.mark.parametrize("dimension", [1, 2])
    def test_sphere_is_unit_sum_and_symmetric(self, dimension):
        grid = PixelGrid(extents=(16,) * dimension, pitch=1.0)
        kernel = sphere_profile(5.0, grid)
        assert kernel.total() == pytest.approx(1.0)
        np.testing.assert_allclose(kernel.values, kernel.values[::-1], atol=1e-15)
        assert all(e % 2 == 1 for e in kernel.grid.extents)

    def test_sphere_render_keeps_interior_mass(self):
        fine = PixelGrid(extents=(40, 40), pitch=1.0)
        sources = SourceSet(np.random.default_rng(3).uniform(10.0, 30.0, size=(50, 2)), 2.0, fine)
        render = render_smoothed(sources, sphere_profile(4.0, fine), fine)
        assert render.total() == pytest.approx(100.0, rel=1e-9)

    def test_padded_render_keeps_edge_mass(self):
        fine = PixelGrid(extents=(20, 20), pitch=1.0)
        kernel = sphere_profile(6.0, fine)
        half = (kernel.grid.extents[0] - 1) // 2
        sources = SourceSet(np.repeat(fine.centers()[:1], 5, axis=0), 3.0, fine)
        render = render_smoothed(sources, kernel, fine)
        assert render.grid.extents == (20 + 2 * half, 20 + 2 * half)
        assert render.grid.origin == pytest.approx(tuple(o - half for o in fine.origin))
        assert render.total() == pytest.approx(15.0, rel=1e-9)
        assert render.values[half, 0] > 0.0

    def test_cropped_render_loses_edge_mass(self):
        fine = PixelGrid(extents=(20, 20), pitch=1.0)
        kernel = sphere_profile(6.0, fine)
        half = (kernel.grid.extents[0] - 1) // 2
        sources = SourceSet(np.repeat(fine.centers()[:1], 5, axis=0), 3.0, fine)
        render = render_smoothed(sources, kernel, fine, pad=False)
        assert render.grid == fine
        assert render.total() == pytest.approx(15.0 * kernel.values[half:, half:].sum(), rel=1e-9)
        assert render.total() < 15.0

    def test_kernel_pitch_must_match(self):
        kernel = delta_kernel(PixelGrid(extents=(4, 4), pitch=2.0))
        with pytest.raises(InputError):
            render_smoothed(SourceSet([[1.0, 1.0]], 1.0, self.grid), kernel, self.grid)
        with pytest.raises(InputError):
            sphere_profile(0.0, self.grid)


class TestLobes:
    def setup_method(self):
        self.grid = PixelGrid(extents=(32, 32), pitch=1.0)
        self.lines = [LineSpec(point=(10.0, 0.0), direction=(0.0, 1.0)), LineSpec(point=(20.0, 0.0), direction=(0.0, 1.0))]
        ys = np.linspace(2.0, 28.0, 14)
        self.positions = np.concatenate([np.column_stack([np.full(14, 10.0), ys]), np.column_stack([np.full(7, 20.0), ys[:7]])])

    def test_sources_on_the_lines(self):
        stats = line_lobe_stats(SourceSet(self.positions, 1.0, self.grid), self.lines)
        assert [s.count for s in stats] == [14, 7]
        for s in stats:
            assert s.mean_offset == pytest.approx(0.0, abs=1e-12)
            assert s.std == pytest.approx(0.0, abs=1e-12)

    def test_offset_in_pixels(self):
        shifted = self.positions + [0.5, 0.0]
        stats = line_lobe_stats(SourceSet(shifted, 1.0, self.grid), self.lines, pixel_size=0.5)
        assert abs(stats[0].mean_offset_px) == pytest.approx(1.0)
        assert abs(stats[1].mean_offset) == pytest.approx(0.5)

    def test_rotation_invariance(self):
        rng = np.random.default_rng(5)
        positions = self.positions + rng.normal(0.0, 0.3, self.positions.shape)
        angle = np.deg2rad(30.0)
        rot = np.array([[np.cos(angle), -np.sin(angle)], [np.sin(angle), np.cos(angle)]])
        lines = [
            LineSpec(point=tuple(rot @ np.asarray(line.point)), direction=tuple(rot @ np.asarray(line.direction)))
            for line in self.lines
        ]
        plain = line_lobe_stats(SourceSet(positions, 1.0, self.grid), self.lines)
        rotated = line_lobe_stats(SourceSet(positions @ rot.T, 1.0, self.grid), lines)
        for a, b in zip(plain, rotated):
            assert a.count == b.count
            assert a.std == pytest.approx(b.std, rel=1e-9)
            assert a.mean_offset == pytest.approx(b.mean_offset, abs=1e-9)

    def test_perpendicular_histogram_counts_every_source(self):
        counts, edges = perpendicular_histogram(SourceSet(self.positions, 1.0, self.grid), self.lines, 0.5)
        assert counts.sum() == 21
        np.testing.assert_allclose(np.diff(edges), 0.5)

    def test_needs_two_lines_in_2d(self):
        with pytest.raises(EvaluationError):
            line_lobe_stats(SourceSet(self.positions, 1.0, self.grid), self.lines[:1])
        line_grid = PixelGrid(extents=(32,), pitch=1.0)
        with pytest.raises(EvaluationError):
            line_lobe_stats(SourceSet([1.0, 2.0], 1.0, line_grid), self.lines)


class TestReport:
    def setup_method(self):
        self.grid = PixelGrid(extents=(16, 16), pitch=1.0)
        self.truth = GroundTruth(support=[[4.0, 4.0], [11.0, 9.0]], intensities=[30.0, 20.0])

    def test_exact_reconstruction(self):
        fitted = SourceSet([[4.0, 4.0]] * 3 + [[11.0, 9.0]] * 2, 10.0, self.grid)
        report = evaluate_reconstruction(fitted, self.truth, d0=3.0, superpixel=0.25)
        assert report.sigma == pytest.approx(0.0, abs=1e-12)
        assert report.superresolution is None
        assert report.assignment_exact
        assert len(report.histograms) == 5
        assert all(level.total == 5 for level in report.histograms)
        assert report.histograms[-1].d_bin == 0.25

    def test_superresolution_and_bound_ratio(self):
        fitted = SourceSet([[4.1, 4.0]] * 3 + [[11.0, 8.9]] * 2, 10.0, self.grid)
        report = evaluate_reconstruction(fitted, self.truth, d0=3.0, sigma_op=0.05)
        assert report.sigma == pytest.approx(0.1)
        assert report.superresolution == pytest.approx(15.0)
        assert report.bound_ratio == pytest.approx(0.5)
        assert report.nn_rms is None

    def test_untruncatable_truth_falls_back(self):
        fitted = SourceSet([[4.0, 4.0], [11.0, 9.0]], 10.0, self.grid)
        report = evaluate_reconstruction(fitted, self.truth, d0=3.0)
        assert report.sigma is None
        assert report.nn_rms == pytest.approx(0.0, abs=1e-12)
        assert "nearest-neighbour" in report.diagnostics[0]

    def test_lobes_attached(self):
        grid = PixelGrid(extents=(32, 32), pitch=1.0)
        fitted = SourceSet([[10.0, 5.0], [20.0, 5.0]], 1.0, grid)
        lines = [LineSpec(point=(10.0, 0.0), direction=(0.0, 1.0)), LineSpec(point=(20.0, 0.0), direction=(0.0, 1.0))]
        report = evaluate_reconstruction(fitted, None, d0=3.0, lines=lines)
        assert len(report.lobes) == 2
        assert report.sigma is None


class TestSweep:
    def setup_method(self):
        self.grid = PixelGrid(extents=(32,), pitch=1.0)
        self.irf = gaussian_irf(1.5, 1.0, dimension=1)
        truth = np.array([[12.3], [19.6]])
        self.signal = SampledSignal(self.grid, 100.0 * basis(truth, self.irf, self.grid))
        self.truth = GroundTruth(support=truth, intensities=[100.0, 100.0])
        self.cfg = GaConfig(population=10, crossover=4, mutation=4, max_generations=5, seed=1)

    def test_one_row_per_count(self):
        seen = set()
        rows = run_n_sweep(
            self.signal,
            self.irf,
            [2, 4],
            self.cfg,
            total_intensity=200.0,
            truth=self.truth,
            progress=lambda n, g, best: seen.add(n),
        )
        assert [row.n_sources for row in rows] == [2, 4]
        assert [row.alpha for row in rows] == pytest.approx([100.0, 50.0])
        assert all(row.sigma is not None for row in rows)
        assert seen == {2, 4}
        frame = sweep_frame(rows)
        assert list(frame["n_sources"]) == [2, 4]
        assert {"chi2", "stop_reason", "lobe_std_px"} <= set(frame.columns)

    def test_without_truth(self):
        rows = run_n_sweep(self.signal, self.irf, [3], self.cfg)
        assert rows[0].sigma is None
        assert rows[0].generations == 5
