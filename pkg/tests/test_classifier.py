"""Discriminator forward/backward, scoring semantics, and eval invariances."""

import numpy as np
import pytest

from plume import classifier as clf_mod
from plume.classifier import ClassifierParams
from plume.errors import BatchTooSmallError, ModelNotTrainedError
from plume.nn import sigmoid


def make_params(dim=4, hidden1=6, hidden2=3, seed=0):
    return ClassifierParams.init(dim, np.random.default_rng(seed), hidden1, hidden2)


def mark_trained(params):
    """Give the batch-norms plausible eval statistics."""
    for bn in (params.bn1, params.bn2):
        rng = np.random.default_rng(bn.dim)
        bn.running_mean[...] = rng.standard_normal(bn.dim) * 0.1
        bn.running_var[...] = rng.uniform(0.5, 2.0, bn.dim)
        bn.batches_tracked = 1
    return params


def manual_eval_forward(x, params):
    """Independent numpy recomputation of the eval-mode network."""

    def bn_eval(a, bn):
        return (a - bn.running_mean) / np.sqrt(bn.running_var + bn.epsilon)

    def leaky(a):
        return np.where(a > 0, a, 0.01 * a)

    h1 = leaky(bn_eval(x @ params.lin1.value, params.bn1))
    z = leaky(bn_eval(h1 @ params.lin2.value, params.bn2))
    return sigmoid(z @ params.lin3.value)[:, 0]


class TestArchitecture:
    def test_default_parameter_count(self):
        params = ClassifierParams.init(3072, np.random.default_rng(0))
        assert params.param_count() == 3_670_528

    def test_dims(self):
        params = make_params()
        assert params.dim == 4
        assert params.embedding_dim == 3

    def test_zero_weights_give_half_probability(self):
        params = mark_trained(make_params())
        params.lin3.value[...] = 0.0
        scores = clf_mod.score_batch(np.ones((3, 4)), params)
        np.testing.assert_array_equal(scores, [0.5, 0.5, 0.5])


class TestEvalForward:
    def test_matches_manual_recomputation(self):
        params = mark_trained(make_params())
        x = np.random.default_rng(1).standard_normal((5, 4))
        np.testing.assert_allclose(
            clf_mod.score_batch(x, params), manual_eval_forward(x, params), rtol=1e-12
        )

    def test_single_row_equals_batched(self):
        params = mark_trained(make_params())
        x = np.random.default_rng(2).standard_normal((6, 4))
        batched = clf_mod.score_batch(x, params)
        single = np.array([clf_mod.score_batch(x[i : i + 1], params)[0] for i in range(6)])
        np.testing.assert_array_equal(batched, single)

    def test_row_order_invariance(self):
        params = mark_trained(make_params())
        x = np.random.default_rng(3).standard_normal((7, 4))
        perm = np.random.default_rng(4).permutation(7)
        np.testing.assert_array_equal(
            clf_mod.score_batch(x, params)[perm], clf_mod.score_batch(x[perm], params)
        )

    def test_repeated_calls_identical(self):
        params = mark_trained(make_params())
        x = np.random.default_rng(5).standard_normal((4, 4))
        np.testing.assert_array_equal(
            clf_mod.score_batch(x, params), clf_mod.score_batch(x, params)
        )

    def test_untrained_model_rejected(self):
        with pytest.raises(ModelNotTrainedError):
            clf_mod.score_batch(np.ones((2, 4)), make_params())

    def test_anomaly_score_is_complement(self):
        params = mark_trained(make_params())
        x = np.random.default_rng(6).standard_normal((4, 4))
        np.testing.assert_allclose(
            clf_mod.anomaly_score(x, params), 1.0 - clf_mod.score_batch(x, params)
        )


class TestDecide:
    def test_zero_embedding_is_half(self):
        params = make_params()
        np.testing.assert_array_equal(decide_scalar(params, np.zeros(3)), 0.5)

    def test_logit_monotone(self):
        params = make_params()
        params.lin3.value[...] = np.array([[1.0], [0.0], [0.0]])
        lo = decide_scalar(params, np.array([-2.0, 0.0, 0.0]))
        hi = decide_scalar(params, np.array([2.0, 0.0, 0.0]))
        assert lo < 0.5 < hi

    def test_three_quarters(self):
        params = make_params()
        params.lin3.value[...] = np.array([[np.log(3.0)], [0.0], [0.0]])
        np.testing.assert_allclose(
            decide_scalar(params, np.array([1.0, 0.0, 0.0])), 0.75, atol=1e-14
        )


def decide_scalar(params, z):
    return clf_mod.decide(z[None, :], params)[0, 0]


class TestTrainMode:
    def test_requires_two_rows(self):
        with pytest.raises(BatchTooSmallError):
            clf_mod.forward_train(np.ones((1, 4)), make_params())

    def test_forward_shapes(self):
        params = make_params()
        x = np.random.default_rng(0).standard_normal((8, 4))
        y_hat, z, logits, _ = clf_mod.forward_train(x, params)
        assert y_hat.shape == (8,)
        assert z.shape == (8, 3)
        assert logits.shape == (8,)
        np.testing.assert_allclose(y_hat, 1.0 / (1.0 + np.exp(-logits)))

    def test_backward_matches_finite_differences(self):
        rng = np.random.default_rng(11)
        params = make_params(seed=11)
        x = rng.standard_normal((6, 4))
        g_logits = rng.standard_normal(6)
        g_z = rng.standard_normal((6, 3))

        def loss_value(p):
            _, z, logits, _ = clf_mod.forward_train(x, p)
            return float(np.sum(g_logits * logits) + np.sum(g_z * z))

        _, _, _, caches = clf_mod.forward_train(x, params)
        clf_mod.backward_train(g_logits, g_z, caches, params)
        h = 1e-6
        for name, p in params.named().items():
            flat = p.value.ravel()
            gflat = p.grad.ravel()
            for i in range(0, flat.size, max(1, flat.size // 25)):
                orig = flat[i]
                flat[i] = orig + h
                up = loss_value(params)
                flat[i] = orig - h
                dn = loss_value(params)
                flat[i] = orig
                numeric = (up - dn) / (2 * h)
                np.testing.assert_allclose(
                    gflat[i], numeric, rtol=1e-4, atol=1e-7,
                    err_msg=f"{name}[{i}]",
                )
