"""
Testes de credibilidade, confiabilidade, cobertura e métricas
"""

import math

import numpy as np
import pandas as pd
import pytest
from scipy import integrate, stats

from pabcnn.calibration import (
    absolute_error_scatter,
    bin_index,
    coverage_report,
    credibility_map,
    diagram_from_pixels,
    gaussian_cdf,
    laplace_cdf,
    per_image_reliability,
    pooled_reliability,
    psnr,
    reliability_diagram,
    seg_accuracy,
    seg_uncertainty_cc,
    summarize_metrics,
)
from pabcnn.errors import EmptyEvaluationError, InvalidScaleError
from pabcnn.losses import Likelihood, LossKind
from pabcnn.uncertainty import aggregate

from tests.conftest import make_stack

ONE_MINUS_INV_E = 1 - math.exp(-1)


class TestCDF:

    def test_median(self):
        assert laplace_cdf(1.3, 1.3, 0.7) == pytest.approx(0.5)

    def test_one_scale_interval_matches_quadrature(self):
        mass = laplace_cdf(2.0 + 0.5, 2.0, 0.5) - laplace_cdf(2.0 - 0.5, 2.0, 0.5)
        quadrature, _ = integrate.quad(lambda t: stats.laplace.pdf(t, loc=2.0, scale=0.5), 1.5, 2.5)
        assert mass == pytest.approx(ONE_MINUS_INV_E, abs=1e-12)
        assert mass == pytest.approx(quadrature, abs=1e-9)
        assert round(mass, 4) == 0.6321

    def test_far_tail(self):
        assert laplace_cdf(40.0, 0.0, 1.0) == pytest.approx(1.0, abs=1e-12)

    def test_vectorized(self):
        values = laplace_cdf(np.array([-1.0, 0.0, 1.0]), 0.0, 1.0)
        np.testing.assert_allclose(values, [0.5 * math.exp(-1), 0.5, 1 - 0.5 * math.exp(-1)])

    @pytest.mark.parametrize('cdf', [laplace_cdf, gaussian_cdf])
    def test_non_positive_scale(self, cdf):
        with pytest.raises(InvalidScaleError):
            cdf(0.0, 0.0, 0.0)

    def test_gaussian_matches_scipy(self):
        assert gaussian_cdf(1.0, 0.0, 2.0) == pytest.approx(stats.norm.cdf(0.5))


def _posterior(mu, sigma, seg=0.9, passes=1):
    mu = np.asarray(mu, dtype=np.float64)
    stack = make_stack(mu, np.broadcast_to(sigma, mu.shape), mu1=np.full(mu.shape, seg), passes=passes,
                       loss_kind=LossKind.HYBRID_LAPLACE)
    return stack, aggregate(stack, Likelihood.LAPLACE)


class TestCredibility:

    def test_interval_of_one_scale(self):
        # eps = 0.2 * mu = sigma
        stack, posterior = _posterior(np.full((3, 3), 5.0), 1.0)
        cred = credibility_map(stack, posterior, eps_factor=0.2)
        np.testing.assert_allclose(cred.values, ONE_MINUS_INV_E)

    def test_identical_passes_match_single_pass(self):
        mu = np.random.default_rng(0).uniform(0.5, 2.0, (4, 4))
        single = credibility_map(*_posterior(mu, 0.3, passes=1))
        repeated = credibility_map(*_posterior(mu, 0.3, passes=6))
        np.testing.assert_allclose(repeated.values, single.values)

    def test_values_in_unit_interval(self):
        rng = np.random.default_rng(1)
        mu2 = rng.uniform(0.1, 3.0, (5, 6, 6))
        stack = make_stack(mu2, rng.uniform(0.05, 2.0, mu2.shape), mu1=np.full(mu2.shape, 0.8))
        cred = credibility_map(stack, aggregate(stack, Likelihood.LAPLACE))
        assert np.all((cred.values >= 0) & (cred.values <= 1))

    def test_non_positive_mean_excluded(self):
        stack, posterior = _posterior(np.array([[1.0, -0.5, 0.0]]), 0.5)
        cred = credibility_map(stack, posterior)
        assert cred.excluded_count == 2
        assert cred.evaluated_count == 1
        assert np.isnan(cred.values[0, 1]) and np.isnan(cred.values[0, 2])

    def test_background_not_evaluated(self):
        stack, posterior = _posterior(np.ones((2, 2)), 0.5, seg=0.2)
        cred = credibility_map(stack, posterior)
        assert cred.evaluated_count == 0
        assert cred.excluded_count == 0


class TestReliability:

    def test_bin_edges(self):
        np.testing.assert_array_equal(bin_index(np.array([0.0, 0.1, 0.1001, 0.55, 1.0]), 10), [0, 0, 1, 5, 9])

    def test_self_calibrated_world(self, laplace_world):
        stack, truth = laplace_world
        posterior = aggregate(stack, Likelihood.LAPLACE)
        cred = credibility_map(stack, posterior)
        assert cred.evaluated_count >= 100_000
        diagram = reliability_diagram(cred, posterior, truth, bins=10)
        assert diagram.cc >= 0.99
        assert 0.9 <= diagram.slope <= 1.1
        occupied = diagram.occupied
        assert np.all(np.abs(diagram.acc[occupied] - diagram.cred[occupied]) < 0.03)

    def test_all_hits(self):
        cred = np.array([0.15, 0.35, 0.55, 0.95])
        diagram = diagram_from_pixels(cred, np.ones(4, dtype=bool), bins=10)
        np.testing.assert_array_equal(diagram.acc[diagram.occupied], 1.0)
        assert diagram.cc is None
        assert diagram.slope == 0.0

    def test_constant_accuracy_has_flat_slope(self):
        cred = np.array([0.12, 0.18, 0.33, 0.37, 0.71, 0.79])
        hits = np.array([True, False, True, False, True, False])
        diagram = diagram_from_pixels(cred, hits, bins=10)
        np.testing.assert_allclose(diagram.acc[diagram.occupied], 0.5)
        assert diagram.cc is None
        assert diagram.slope == 0.0
        assert diagram.to_dict()['slope'] == 0.0

    def test_single_bin_undefined_fit(self):
        diagram = diagram_from_pixels(np.array([0.41, 0.42, 0.43]), np.array([True, False, True]), bins=10)
        assert diagram.occupied.sum() == 1
        assert diagram.cc is None and diagram.slope is None

    def test_empty_evaluation(self):
        stack, posterior = _posterior(np.ones((2, 2)), 0.5, seg=0.1)
        cred = credibility_map(stack, posterior)
        with pytest.raises(EmptyEvaluationError):
            reliability_diagram(cred, posterior, np.ones((2, 2)))

    def test_pooled_equals_concatenation(self, laplace_world):
        stack, truth = laplace_world
        posterior = aggregate(stack, Likelihood.LAPLACE)
        cred = credibility_map(stack, posterior)
        pooled = pooled_reliability([(cred, posterior, truth), (cred, posterior, truth)])
        single = reliability_diagram(cred, posterior, truth)
        np.testing.assert_array_equal(pooled.counts, 2 * single.counts)
        np.testing.assert_allclose(pooled.acc, single.acc)

    def test_per_image_summary_ignores_undefined(self):
        defined = diagram_from_pixels(np.array([0.15, 0.55, 0.95]), np.array([False, True, True]), 10)
        undefined = diagram_from_pixels(np.array([0.5]), np.array([True]), 10)
        summary = per_image_reliability([defined, undefined])
        assert summary['cc_n'] == 1
        assert summary['cc_mean'] == pytest.approx(defined.cc)

    def test_frame_layout(self):
        frame = diagram_from_pixels(np.array([0.15, 0.55]), np.array([True, False]), 4).to_frame()
        assert list(frame.columns) == ['bin_low', 'bin_high', 'cred', 'acc', 'count']
        assert len(frame) == 4


class TestCoverage:

    def test_self_calibrated_tail_mass(self, laplace_world):
        stack, truth = laplace_world
        report = coverage_report(aggregate(stack, Likelihood.LAPLACE), truth)
        assert report.evaluated >= 100_000
        assert report.overall == pytest.approx(1 - math.exp(-2 * math.sqrt(2)), abs=0.02)
        assert report.band is None or 0.0 <= report.band <= 1.0

    def test_huge_uncertainty_covers_everything(self):
        _, posterior = _posterior(np.ones((4, 4)), 1e6)
        assert coverage_report(posterior, np.zeros((4, 4))).overall == 1.0

    def test_band_selects_half_of_max(self):
        sigma = np.array([[1.0, 2.0, 0.5]]) / math.sqrt(2)
        _, posterior = _posterior(np.ones((1, 3)), sigma)
        report = coverage_report(posterior, np.ones((1, 3)))
        assert report.band_count == 1
        assert report.band_center == pytest.approx(2.0)

    def test_empty_segmentation(self):
        _, posterior = _posterior(np.ones((2, 2)), 1.0, seg=0.1)
        with pytest.raises(EmptyEvaluationError):
            coverage_report(posterior, np.ones((2, 2)))

    def test_scatter_pairs(self):
        _, posterior = _posterior(np.ones((2, 2)), 0.5)
        frame = absolute_error_scatter(posterior, np.full((2, 2), 1.5))
        np.testing.assert_allclose(frame['abs_error'], 0.5)
        np.testing.assert_allclose(frame['two_sigma'], 2 * math.sqrt(2) * 0.5)


class TestImageMetrics:

    def test_psnr_uniform_error(self):
        truth = np.random.default_rng(0).uniform(0, 1, (8, 8))
        assert psnr(truth + 0.1, truth, peak=1.0) == pytest.approx(20.0)

    def test_psnr_perfect(self):
        truth = np.ones((3, 3))
        assert psnr(truth, truth, 1.0) == math.inf

    def test_psnr_requires_positive_peak(self):
        with pytest.raises(ValueError):
            psnr(np.zeros(2), np.ones(2), 0.0)

    def test_seg_accuracy(self):
        seg = np.array([[1, 0], [0, 1]])
        assert seg_accuracy(seg, seg) == 1.0
        assert seg_accuracy(1 - seg, seg) == 0.0

    def test_seg_cc_perfect(self):
        truth = np.array([[1, 0], [1, 1]])
        final = np.array([[1, 1], [0, 1]])
        error = np.abs(final - truth).astype(float)
        assert seg_uncertainty_cc(error, final, truth) == pytest.approx(1.0)

    def test_seg_cc_independent_noise(self):
        rng = np.random.default_rng(3)
        truth = (rng.random((400, 400)) < 0.5).astype(int)
        final = (rng.random((400, 400)) < 0.5).astype(int)
        assert abs(seg_uncertainty_cc(rng.random((400, 400)), final, truth)) < 0.05

    def test_seg_cc_undefined_without_errors(self):
        seg = np.array([[1, 0], [0, 1]])
        assert seg_uncertainty_cc(np.random.default_rng(0).random((2, 2)), seg, seg) is None

    def test_summary_rows(self):
        frame = pd.DataFrame({'seg_accuracy': [0.9, 1.0], 'psnr': [20.0, math.inf], 'cc': [0.5, None]})
        summary = summarize_metrics(frame)
        assert summary['Segmentation Accuracy'] == '0.9500 (0.0500)'
        assert summary['Image PSNR (dB)'] == '20.0000 (0.0000)'
        assert summary['ACC vs Cred CC'] == '0.5000 (0.0000)'
