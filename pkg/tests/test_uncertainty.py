"""
Testes da predição MC e da agregação das incertezas
"""

import math

import numpy as np
import pytest

from pabcnn.errors import ConfigMismatchError
from pabcnn.losses import Likelihood, LossKind
from pabcnn.nn.unet import HeadKind, NetConfig, build_network
from pabcnn.uncertainty import aggregate, pass_seed, predict_mc

from tests.conftest import make_stack


def random_stack(rng, passes=5, shape=(6, 7), hybrid=True):
    mu1 = rng.uniform(0.0, 1.0, (passes, *shape)) if hybrid else None
    return make_stack(rng.normal(size=(passes, *shape)), rng.uniform(0.1, 2.0, (passes, *shape)), mu1=mu1)


class TestAggregate:

    def test_two_pass_worked_example(self):
        stack = make_stack(np.array([[[0.0]], [[2.0]]]), np.ones((2, 1, 1)))
        posterior = aggregate(stack, Likelihood.LAPLACE)
        assert posterior.img_mean[0, 0] == pytest.approx(1.0)
        assert posterior.img_unc[0, 0] == pytest.approx(math.sqrt(3.0), abs=1e-9)
        assert posterior.img_data[0, 0] == pytest.approx(math.sqrt(2.0))
        assert posterior.img_model[0, 0] == pytest.approx(1.0)

    def test_worked_example_matches_mixture_samples(self):
        rng = np.random.default_rng(0)
        draws = np.concatenate([rng.laplace(0.0, 1.0, 500_000), rng.laplace(2.0, 1.0, 500_000)])
        assert draws.std() == pytest.approx(math.sqrt(3.0), rel=0.005)

    def test_single_pass_has_no_model_term(self):
        stack = make_stack(np.full((1, 2, 2), 1.5), np.full((1, 2, 2), 0.4))
        posterior = aggregate(stack, 'laplace')
        np.testing.assert_allclose(posterior.img_unc, math.sqrt(2) * 0.4)
        assert not posterior.img_model.any()

    def test_gauss_uses_sigma_squared(self):
        stack = make_stack(np.full((1, 2, 2), 1.0), np.full((1, 2, 2), 0.4))
        np.testing.assert_allclose(aggregate(stack, Likelihood.GAUSS).img_unc, 0.4)

    def test_half_probability_segmentation(self):
        stack = make_stack(np.zeros((2, 1, 1)), np.ones((2, 1, 1)), mu1=np.full((2, 1, 1), 0.5))
        posterior = aggregate(stack, Likelihood.LAPLACE)
        assert posterior.seg_unc[0, 0] == pytest.approx(0.5)
        assert posterior.final_seg[0, 0] == 0

    @pytest.mark.parametrize('likelihood', list(Likelihood))
    def test_total_variance_identity(self, likelihood):
        posterior = aggregate(random_stack(np.random.default_rng(3)), likelihood)
        np.testing.assert_allclose(posterior.img_unc ** 2, posterior.img_data ** 2 + posterior.img_model ** 2,
                                   rtol=1e-12)
        np.testing.assert_allclose(posterior.seg_unc ** 2, posterior.seg_data ** 2 + posterior.seg_model ** 2,
                                   rtol=1e-12)

    def test_mixture_variance_oracle(self):
        rng = np.random.default_rng(5)
        mu2 = np.array([-1.0, 0.5, 2.0])[:, None, None]
        sigma = np.array([0.5, 1.0, 0.2])[:, None, None]
        posterior = aggregate(make_stack(mu2, sigma), Likelihood.LAPLACE)
        component = rng.integers(0, 3, 1_000_000)
        draws = rng.laplace(mu2.ravel()[component], sigma.ravel()[component])
        assert posterior.img_unc[0, 0] == pytest.approx(draws.std(), rel=0.01)

    def test_permutation_invariance(self):
        stack = random_stack(np.random.default_rng(8))
        a = aggregate(stack, Likelihood.LAPLACE)
        b = aggregate(stack.permuted([4, 2, 0, 3, 1]), Likelihood.LAPLACE)
        np.testing.assert_allclose(a.img_unc, b.img_unc, rtol=1e-12)
        np.testing.assert_allclose(a.seg_mean, b.seg_mean, rtol=1e-12)

    def test_seg_uncertainty_bounded(self):
        posterior = aggregate(random_stack(np.random.default_rng(9), passes=20), Likelihood.LAPLACE)
        assert np.all(posterior.seg_unc <= math.sqrt(0.5) + 1e-12)

    def test_masking(self):
        mu1 = np.array([[[0.9, 0.1]]])
        stack = make_stack(np.array([[[-0.5, 3.0]]]), np.ones((1, 1, 2)), mu1=mu1)
        posterior = aggregate(stack, Likelihood.LAPLACE)
        np.testing.assert_array_equal(posterior.final_seg, [[1, 0]])
        np.testing.assert_array_equal(posterior.masked_img_mean, [[0.0, 0.0]])
        assert posterior.masked_img_unc[0, 0] > 0 and posterior.masked_img_unc[0, 1] == 0

    def test_laplace_only_stack_has_no_segmentation(self):
        posterior = aggregate(random_stack(np.random.default_rng(1), hybrid=False), Likelihood.LAPLACE)
        assert not posterior.has_segmentation
        np.testing.assert_array_equal(posterior.masked_img_mean, posterior.img_mean)

    def test_kind_mismatch(self):
        stack = make_stack(np.zeros((1, 2, 2)), np.ones((1, 2, 2)), loss_kind=LossKind.HYBRID_GAUSS)
        with pytest.raises(ConfigMismatchError):
            aggregate(stack, Likelihood.LAPLACE)
        with pytest.raises(ConfigMismatchError):
            aggregate(stack, LossKind.HYBRID_LAPLACE)


class TestPredictMC:

    def test_same_seed_bit_identical(self, tiny_net):
        ckpt = build_network(tiny_net, 3, (8, 8))
        x = np.random.default_rng(0).normal(size=(3, 8, 8))
        a = predict_mc(ckpt, x, passes=3, seed=11)
        b = predict_mc(ckpt, x, passes=3, seed=11)
        np.testing.assert_array_equal(a.mu2, b.mu2)
        np.testing.assert_array_equal(a.mu1, b.mu1)
        assert a.seeds == tuple(pass_seed(11, k) for k in range(3))

    def test_passes_differ_with_dropout(self, tiny_net):
        ckpt = build_network(tiny_net, 3, (8, 8))
        stack = predict_mc(ckpt, np.ones((3, 8, 8)), passes=2, seed=0)
        assert stack.passes == 2
        assert not np.array_equal(stack.mu2[0], stack.mu2[1])

    def test_zero_dropout_gives_identical_passes(self):
        ckpt = build_network(NetConfig(depth=1, base_channels=2, dropout_rate=0.0), 3, (8, 8))
        stack = predict_mc(ckpt, np.ones((3, 8, 8)), passes=3, seed=0)
        for k in range(1, 3):
            np.testing.assert_array_equal(stack.mu2[k], stack.mu2[0])

    def test_expected_kind_checked(self):
        ckpt = build_network(NetConfig(depth=1, base_channels=2, head_kind=HeadKind.LAPLACIAN_ONLY), 3)
        with pytest.raises(ConfigMismatchError):
            predict_mc(ckpt, np.ones((3, 8, 8)), passes=1, seed=0, expected_kind=LossKind.HYBRID_LAPLACE)

    def test_invalid_pass_count(self, tiny_net):
        with pytest.raises(ValueError):
            predict_mc(build_network(tiny_net, 3), np.ones((3, 8, 8)), passes=0, seed=0)
