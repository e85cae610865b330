"""Tests for calibration records, IRF fitting, the residual autocorrelation and spot detection."""

import numpy as np
import pytest

from superpose.calibration.fitting import fit_irf_family
from superpose.calibration.records import cocenter_normalize, fit_dispersion, fit_record_peak, normalize_spectrum
from superpose.calibration.residual import compute_residual_and_autocorr, pooled_residual
from superpose.calibration.spots import detect_spots
from superpose.core.signal import PixelGrid, SampledSignal
from superpose.errors import CalibrationError, InputError
from superpose.model.irf import IrfFamily, asymmetric_irf, asymmetric_profile, gaussian_irf


def _line_records(b1=2.5, b2=2.5, pitch=0.22, shifts=(0.0, 0.07, -0.05, 0.11)):
    grid = PixelGrid(extents=(64,), pitch=pitch)
    x = grid.centers()[:, 0]
    records = []
    for i, shift in enumerate(shifts):
        values = 800.0 / (np.exp(b1 * (x - 7.04 - shift)) + np.exp(-b2 * (x - 7.04 - shift)))
        records.append(SampledSignal(grid=grid, values=values, label=f"line-{i}"))
    return records


def _spot_records(shifts=((0.0, 0.0), (0.3, -0.2), (-0.4, 0.25))):
    grid = PixelGrid(extents=(15, 15), pitch=1.0)
    points = grid.centers()
    records = []
    for shift in shifts:
        rho2 = np.sum((points - 7.0 - np.asarray(shift)) ** 2, axis=1)
        records.append(SampledSignal(grid=grid, values=1000.0 * np.exp(-rho2 / (2 * 1.5**2)) + 50.0))
    return records


class TestNormalizeSpectrum:
    def setup_method(self):
        self.grid = PixelGrid(extents=(3,), pitch=1.0)

    def _signal(self, values):
        return SampledSignal(grid=self.grid, values=np.asarray(values, dtype=float))

    def test_pixel_ratio(self):
        out = normalize_spectrum(self._signal([5, 7, 9]), self._signal([3, 5, 7]), self._signal([1, 1, 1]))
        np.testing.assert_allclose(out.flat, [2.0, 1.5, 8.0 / 6.0])

    def test_zone_leaves_other_pixels(self):
        out = normalize_spectrum(
            self._signal([5, 7, 9]), self._signal([0, 5, 7]), self._signal([1, 1, 1]), zone=slice(1, 3)
        )
        np.testing.assert_allclose(out.flat, [5.0, 1.5, 8.0 / 6.0])

    def test_lamp_below_dark(self):
        with pytest.raises(CalibrationError, match=r"\[2\]"):
            normalize_spectrum(self._signal([5, 7, 9]), self._signal([3, 5, 1]), self._signal([1, 1, 1]))

    def test_grid_mismatch(self):
        other = SampledSignal(grid=PixelGrid(extents=(4,), pitch=1.0), values=np.ones(4))
        with pytest.raises(InputError):
            normalize_spectrum(self._signal([5, 7, 9]), other, self._signal([1, 1, 1]))


class TestCocenter:
    def test_one_dimensional_records_use_centroid(self):
        records = cocenter_normalize(_line_records())
        for record, shift in zip(records, (0.0, 0.07, -0.05, 0.11)):
            assert record.values.sum() == pytest.approx(1.0)
            assert record.center[0] == pytest.approx(7.04 + shift, abs=1e-6)
            assert record.background == 0.0
            assert record.accepted

    def test_two_dimensional_records_use_peak_fit(self):
        records = cocenter_normalize(_spot_records())
        np.testing.assert_allclose(records[1].center, [7.3, 6.8], atol=1e-6)
        assert records[1].background == pytest.approx(50.0, rel=1e-6)
        assert records[1].width == pytest.approx(3.0, rel=1e-6)
        assert records[1].values.sum() == pytest.approx(1.0)

    def test_peak_fit(self):
        center, background, width = fit_record_peak(_spot_records()[2])
        np.testing.assert_allclose(center, [6.6, 7.25], atol=1e-6)
        assert background == pytest.approx(50.0, rel=1e-6)
        assert width == pytest.approx(3.0, rel=1e-6)

    def test_width_range_marks_rejections(self):
        records = cocenter_normalize(_line_records(), width_range=(0.5, 1.0))
        assert not any(r.accepted for r in records)
        assert "above" in records[0].reason
        assert records[0].diagnostics()["accepted"] is False
        with pytest.raises(CalibrationError):
            fit_irf_family(records, IrfFamily.ASYMMETRIC_1D, 0.22)

    def test_invalid_record_sets(self):
        with pytest.raises(CalibrationError):
            cocenter_normalize([])
        mixed = _line_records()[:1] + [SampledSignal(grid=PixelGrid(extents=(64,), pitch=0.5), values=np.ones(64))]
        with pytest.raises(InputError):
            cocenter_normalize(mixed)


class TestIrfFit:
    def test_symmetric_asymmetric_family_recovered(self):
        fit = fit_irf_family(cocenter_normalize(_line_records()), IrfFamily.ASYMMETRIC_1D, 0.22)
        expected = asymmetric_irf(1.0, 2.5, 2.5, 0.22).normalized()
        np.testing.assert_allclose(fit.irf.parameters, expected.parameters, rtol=1e-4)
        assert fit.irf.lattice_sum() == pytest.approx(1.0)
        assert fit.converged >= 1
        assert fit.starts == 9
        assert len(fit.record_costs) == 4
        np.testing.assert_allclose(fit.shift, [0.0], atol=1e-6)

    def test_skewed_profile_recovered_with_origin(self):
        grid = PixelGrid(extents=(400,), pitch=0.1)
        x = grid.centers()[:, 0]
        records = [
            SampledSignal(grid=grid, values=asymmetric_profile(x - origin, 1.0, 2.0, 1.0), label=f"skew-{i}")
            for i, origin in enumerate((20.0, 20.13, 19.94))
        ]
        centered = cocenter_normalize(records)
        fit = fit_irf_family(centered, IrfFamily.ASYMMETRIC_1D, 0.1, normalize=False)
        a1, b1, b2 = fit.irf.parameters
        assert b1 == pytest.approx(2.0, rel=1e-6)
        assert b2 == pytest.approx(1.0, rel=1e-6)
        assert a1 == pytest.approx(1.0 / centered[0].scale, rel=1e-6)
        # skewed profiles have their centroid away from the model origin
        assert abs(centered[0].center[0] - 20.0) > 0.1
        for record, origin in zip(fit.records, (20.0, 20.13, 19.94)):
            assert record.center[0] == pytest.approx(origin, abs=1e-6)
        assert max(fit.record_costs) < 1e-16

    def test_gaussian_records_fit_halo_family(self):
        fit = fit_irf_family(cocenter_normalize(_spot_records()), "gaussian_halo", (1.0, 1.0))
        reference = gaussian_irf(1.5, 1.0, dimension=2)
        assert fit.irf.width == pytest.approx(3.0, rel=1e-3)
        assert fit.irf(np.zeros(2)) == pytest.approx(reference(np.zeros(2)), rel=1e-3)
        assert fit.cost < 1e-10

    def test_family_dimension_checked(self):
        with pytest.raises(InputError):
            fit_irf_family(cocenter_normalize(_spot_records()), IrfFamily.ASYMMETRIC_1D, 1.0)
        with pytest.raises(InputError):
            fit_irf_family(cocenter_normalize(_line_records()), IrfFamily.TABULATED, 0.22)


class TestResidual:
    def setup_method(self):
        self.records = cocenter_normalize(_line_records())

    def test_exact_irf_leaves_no_residual(self):
        irf = asymmetric_irf(1.0, 2.5, 2.5, 0.22).normalized()
        assert pooled_residual(self.records, irf).norm2() < 1e-12

    def test_autocorrelation_is_symmetric_and_peaks_at_zero(self):
        wrong = asymmetric_irf(1.0, 2.2, 2.9, 0.22).normalized()
        residual, G = compute_residual_and_autocorr(self.records, wrong)
        assert residual.norm2() > 0
        np.testing.assert_allclose(G.values, G.values[::-1], rtol=1e-12, atol=1e-18)
        assert G.at_zero == pytest.approx(residual.norm2(), rel=1e-12)
        assert np.all(np.abs(G.values) <= G.at_zero * (1 + 1e-12))
        assert G(np.array([1e3])) == 0.0

    def test_frames(self):
        residual, G = compute_residual_and_autocorr(self.records, asymmetric_irf(1.0, 2.2, 2.9, 0.22).normalized())
        assert list(residual.to_frame().columns) == ["x", "g"]
        assert list(G.to_frame().columns) == ["x", "G"]
        assert len(G.to_frame()) == G.values.size


class TestSpots:
    def setup_method(self):
        grid = PixelGrid(extents=(64, 48), pitch=1.0)
        points = grid.centers()
        values = np.full(grid.n_pixels, 100.0)
        for center in ((20.0, 20.0), (40.0, 30.0), (60.0, 24.0)):
            values += 500.0 * np.exp(-np.sum((points - center) ** 2, axis=1) / (2 * 1.5**2))
        self.image = SampledSignal(grid=grid, values=values, label="beads")

    def test_patches_around_isolated_spots(self):
        patches = detect_spots(self.image, expected_width=3.0)
        assert len(patches) == 2
        assert patches[0].grid.extents == (19, 19)
        assert patches[0].grid.origin == (11.0, 11.0)
        assert patches[0].label == "beads@20,20"
        assert patches[1].label == "beads@40,30"
        assert patches[0].values.max() == pytest.approx(600.0)

    def test_width_must_be_positive(self):
        with pytest.raises(InputError):
            detect_spots(self.image, expected_width=0.0)


class TestDispersion:
    def test_linear_map(self):
        dispersion = fit_dispersion([1.0, 2.0, 3.0], [10.0, 12.0, 14.0])
        assert dispersion.slope == pytest.approx(2.0)
        assert dispersion.intercept == pytest.approx(8.0)
        assert dispersion.rms == pytest.approx(0.0, abs=1e-12)
        assert dispersion(4.0) == pytest.approx(16.0)

    def test_needs_two_pairs(self):
        with pytest.raises(InputError):
            fit_dispersion([1.0], [10.0])
