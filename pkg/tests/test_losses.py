"""
Testes das verossimilhanças negativas
"""

import math

import numpy as np
import pytest

from pabcnn.errors import ConfigMismatchError
from pabcnn.losses import (
    LossKind,
    Likelihood,
    bernoulli_nll,
    gaussian_nll,
    head_loss_and_grad,
    hybrid_gauss_loss,
    hybrid_laplace_loss,
    laplace_nll,
    laplace_only_loss,
)
from pabcnn.nn.unet import HeadKind, head_maps

SIGMA_FLOOR = 1e-4


class TestClosedForms:

    def test_bernoulli_single_pixel(self):
        assert bernoulli_nll([0.8], [1]) == pytest.approx(-math.log(0.8))
        assert bernoulli_nll([0.8], [0]) == pytest.approx(-math.log(0.2))

    def test_bernoulli_clamped_at_extremes(self):
        assert bernoulli_nll([0.0], [1]) == pytest.approx(-math.log(1e-7))
        assert math.isfinite(bernoulli_nll([1.0], [0]))

    def test_laplace_single_pixel(self):
        assert laplace_nll([1.0], [0.5], [2.0]) == pytest.approx(2.0)

    def test_gaussian_single_pixel(self):
        assert gaussian_nll([0.0], [1.0], [1.0]) == pytest.approx(0.5 + 0.5 * math.log(2 * math.pi))

    def test_hybrid_ignores_background_regression(self):
        mu1 = np.array([0.9, 0.1])
        mu2 = np.array([1.0, 100.0])
        sigma = np.array([1.0, 1.0])
        y_seg = np.array([1, 0])
        y_img = np.array([1.5, 0.0])
        expected = -math.log(0.9) - math.log(0.9) + 0.5 + math.log(2.0)
        assert hybrid_laplace_loss(mu1, mu2, sigma, y_seg, y_img) == pytest.approx(expected)

    def test_hybrid_gauss_ignores_background_regression(self):
        expected = -math.log(0.5) * 2 + 0.5 * math.log(2 * math.pi)
        loss = hybrid_gauss_loss([0.5, 0.5], [0.0, 9.0], [1.0, 1.0], [1, 0], [0.0, 0.0])
        assert loss == pytest.approx(expected)

    def test_laplace_only_counts_background(self):
        loss = laplace_only_loss([0.0, 0.0], [1.0, 1.0], [1.0, 0.0])
        assert loss == pytest.approx(1.0 + 2 * math.log(2.0))

    def test_shape_mismatch_rejected(self):
        with pytest.raises(ValueError):
            laplace_only_loss(np.zeros(3), np.ones(2), np.zeros(3))

    def test_non_finite_rejected(self):
        with pytest.raises(ValueError):
            hybrid_laplace_loss([0.5], [np.nan], [1.0], [1], [1.0])


class TestLossKind:

    def test_head_channels(self):
        assert LossKind.HYBRID_LAPLACE.head_channels == 3
        assert LossKind.HYBRID_GAUSS.head_channels == 3
        assert LossKind.LAPLACE_ONLY.head_channels == 2

    def test_likelihood(self):
        assert LossKind.HYBRID_GAUSS.likelihood is Likelihood.GAUSS
        assert LossKind.LAPLACE_ONLY.likelihood is Likelihood.LAPLACE


def _targets(rng, shape):
    y_seg = (rng.random(shape) < 0.5).astype(np.float64)
    y_img = np.where(y_seg > 0, rng.uniform(2.0, 3.0, shape), 0.0)
    return y_seg, y_img


class TestHeadLoss:

    @pytest.mark.parametrize('kind', list(LossKind))
    def test_matches_public_losses(self, kind):
        rng = np.random.default_rng(0)
        channels = kind.head_channels
        logits = rng.normal(size=(2, channels, 4, 4))
        y_seg, y_img = _targets(rng, (2, 4, 4))
        per_image, _ = head_loss_and_grad(kind, logits, y_seg, y_img, SIGMA_FLOOR)

        head = HeadKind.HYBRID if kind.is_hybrid else HeadKind.LAPLACIAN_ONLY
        maps = head_maps(logits, head, SIGMA_FLOOR)
        for n in range(2):
            if kind is LossKind.HYBRID_LAPLACE:
                expected = hybrid_laplace_loss(maps.mu1[n], maps.mu2[n], maps.sigma[n], y_seg[n], y_img[n])
            elif kind is LossKind.HYBRID_GAUSS:
                expected = hybrid_gauss_loss(maps.mu1[n], maps.mu2[n], maps.sigma[n], y_seg[n], y_img[n])
            else:
                expected = laplace_only_loss(maps.mu2[n], maps.sigma[n], y_img[n])
            assert per_image[n] == pytest.approx(expected, rel=1e-10)

    @pytest.mark.parametrize('kind', list(LossKind))
    def test_gradient_matches_finite_differences(self, kind):
        rng = np.random.default_rng(1)
        logits = rng.normal(size=(1, kind.head_channels, 3, 3))
        y_seg, y_img = _targets(rng, (1, 3, 3))
        _, grad = head_loss_and_grad(kind, logits, y_seg, y_img, SIGMA_FLOOR)

        step = 1e-6
        numeric = np.zeros_like(logits)
        for i in range(logits.size):
            plus, minus = logits.copy(), logits.copy()
            plus.flat[i] += step
            minus.flat[i] -= step
            f_plus = head_loss_and_grad(kind, plus, y_seg, y_img, SIGMA_FLOOR)[0].sum()
            f_minus = head_loss_and_grad(kind, minus, y_seg, y_img, SIGMA_FLOOR)[0].sum()
            numeric.flat[i] = (f_plus - f_minus) / (2 * step)
        np.testing.assert_allclose(grad, numeric, rtol=1e-5, atol=1e-6)

    def test_wrong_channel_count(self):
        logits = np.zeros((1, 2, 4, 4))
        with pytest.raises(ConfigMismatchError):
            head_loss_and_grad(LossKind.HYBRID_LAPLACE, logits, np.zeros((1, 4, 4)), np.zeros((1, 4, 4)), SIGMA_FLOOR)


LOG2 = math.log(2.0)


class TestHandValues:

    @pytest.mark.parametrize('loss, args, expected', [
        (hybrid_laplace_loss, ([0.5], [7.0], [3.0], [0], [0.0]), LOG2),
        (hybrid_laplace_loss, ([0.5], [1.0], [0.5], [1], [1.0]), LOG2),
        (hybrid_laplace_loss, ([0.9], [1.0], [1.0], [1], [2.0]), -math.log(0.9) + 1.0 + LOG2),
        (laplace_only_loss, ([0.0], [0.5], [0.0]), 0.0),
        (laplace_only_loss, ([0.0], [1.0], [1.0]), 1.0 + LOG2),
        (hybrid_gauss_loss, ([0.5], [1.3], [1.0], [1], [1.3]), LOG2 + 0.5 * math.log(2 * math.pi)),
    ])
    def test_single_pixel(self, loss, args, expected):
        assert loss(*args) == pytest.approx(expected, abs=1e-12)

    def test_rounded_values(self):
        assert hybrid_laplace_loss([0.9], [1.0], [1.0], [1], [2.0]) == pytest.approx(1.7985, abs=1e-4)
        assert laplace_only_loss([0.0], [1.0], [1.0]) == pytest.approx(1.6931, abs=1e-4)
        assert hybrid_gauss_loss([0.5], [1.3], [1.0], [1], [1.3]) == pytest.approx(1.6120, abs=1e-4)

    def test_laplace_only_is_sum_of_pixels(self):
        pair = laplace_only_loss([0.0, 0.3], [1.0, 0.7], [1.0, -0.2])
        single = laplace_only_loss([0.0], [1.0], [1.0]) + laplace_only_loss([0.3], [0.7], [-0.2])
        assert pair == pytest.approx(single, rel=1e-12)

    def test_gauss_without_vessels_is_bernoulli(self):
        rng = np.random.default_rng(4)
        mu1 = rng.uniform(0.05, 0.95, 12)
        loss = hybrid_gauss_loss(mu1, rng.normal(size=12), rng.uniform(0.5, 2.0, 12), np.zeros(12), np.zeros(12))
        assert loss == pytest.approx(bernoulli_nll(mu1, np.zeros(12)), rel=1e-12)


def _random_pixels(seed, n=20):
    rng = np.random.default_rng(seed)
    y_seg = (rng.random(n) < 0.5).astype(np.float64)
    return (rng.uniform(0.05, 0.95, n), rng.normal(size=n), rng.uniform(0.2, 2.0, n),
            y_seg, np.where(y_seg > 0, rng.normal(size=n), 0.0))


def _derivative(f, x, step=1e-6):
    return (f(x + step) - f(x - step)) / (2 * step)


class TestLossProperties:

    @pytest.mark.parametrize('seed', range(3))
    def test_hybrid_laplace_decomposes(self, seed):
        mu1, mu2, sigma, y_seg, y_img = _random_pixels(seed)
        parts = bernoulli_nll(mu1, y_seg) + laplace_nll(mu2, sigma, y_img, mask=y_seg)
        assert hybrid_laplace_loss(mu1, mu2, sigma, y_seg, y_img) == pytest.approx(parts, rel=1e-12)

    @pytest.mark.parametrize('seed', range(3))
    def test_hybrid_gauss_decomposes(self, seed):
        mu1, mu2, sigma, y_seg, y_img = _random_pixels(seed)
        parts = bernoulli_nll(mu1, y_seg) + gaussian_nll(mu2, sigma, y_img, mask=y_seg)
        assert hybrid_gauss_loss(mu1, mu2, sigma, y_seg, y_img) == pytest.approx(parts, rel=1e-12)

    def test_masked_part_computed_independently(self):
        mu1, mu2, sigma, y_seg, y_img = _random_pixels(7)
        vessel = y_seg > 0
        regression = np.sum(np.abs(y_img[vessel] - mu2[vessel]) / sigma[vessel] + np.log(2 * sigma[vessel]))
        cross_entropy = -np.sum(y_seg * np.log(mu1) + (1 - y_seg) * np.log(1 - mu1))
        assert hybrid_laplace_loss(mu1, mu2, sigma, y_seg, y_img) == pytest.approx(
            cross_entropy + regression, rel=1e-12)

    @pytest.mark.parametrize('residual', [0.3, 1.0, 2.5])
    def test_laplace_stationary_in_scale(self, residual):
        def loss(s):
            return hybrid_laplace_loss([0.6], [1.0], [s], [1], [1.0 + residual])

        assert _derivative(loss, residual) == pytest.approx(0.0, abs=1e-6)
        assert _derivative(loss, 0.8 * residual) < 0 < _derivative(loss, 1.2 * residual)

    @pytest.mark.parametrize('residual', [0.3, 1.0, 2.5])
    def test_gauss_stationary_in_scale(self, residual):
        def loss(s):
            return hybrid_gauss_loss([0.6], [1.0], [s], [1], [1.0 - residual])

        assert _derivative(loss, residual) == pytest.approx(0.0, abs=1e-6)

    @pytest.mark.parametrize('label', [0, 1])
    def test_bernoulli_decreases_toward_label(self, label):
        towards = np.linspace(0.1, 0.9, 9) if label else np.linspace(0.9, 0.1, 9)
        values = [hybrid_laplace_loss([m], [0.0], [0.5], [label], [0.0]) for m in towards]
        assert np.all(np.diff(values) < 0)
        assert hybrid_laplace_loss([float(label)], [0.0], [0.5], [label], [0.0]) == pytest.approx(
            -math.log(1 - 1e-7), abs=1e-9)

    @pytest.mark.parametrize('loss', [hybrid_laplace_loss, hybrid_gauss_loss])
    def test_residual_increases_loss(self, loss):
        values = [loss([0.7], [1.0], [0.5], [1], [1.0 + r]) for r in (0.0, 0.1, 0.5, 1.0, 3.0)]
        assert np.all(np.diff(values) > 0)

    def test_residual_increases_laplace_only(self):
        values = [laplace_only_loss([0.0], [0.5], [-r]) for r in (0.0, 0.1, 0.5, 1.0, 3.0)]
        assert np.all(np.diff(values) > 0)
