"""Layer primitives: hand-computed values, finite differences, running stats."""

import numpy as np
import pytest

from plume import nn
from plume.errors import BatchTooSmallError, CheckInvalidError, DimensionError
from plume.nn import (
    BatchNormState,
    Parameter,
    batch_norm_backward,
    batch_norm_forward,
    batch_norm_leaky_backward,
    batch_norm_leaky_forward,
    grad_check,
    init_uniform,
    leaky_relu,
    leaky_relu_backward,
    linear_backward,
    linear_forward,
    sigmoid,
)


def central_diff(f, x, h=1e-5):
    """Elementwise central finite differences of a scalar function."""
    x = np.asarray(x, dtype=np.float64)
    grad = np.zeros_like(x)
    flat = x.ravel()
    gflat = grad.ravel()
    for i in range(flat.size):
        orig = flat[i]
        flat[i] = orig + h
        fp = f(x)
        flat[i] = orig - h
        fm = f(x)
        flat[i] = orig
        gflat[i] = (fp - fm) / (2 * h)
    return grad


class TestLinear:
    def test_identity_weight(self):
        out = linear_forward(np.array([[1.0, 2.0]]), np.eye(2))
        np.testing.assert_array_equal(out, [[1.0, 2.0]])

    def test_zero_weight_bias_only(self):
        out = linear_forward(
            np.array([[1.0, 2.0]]), np.zeros((2, 2)), np.array([3.0, 4.0])
        )
        np.testing.assert_array_equal(out, [[3.0, 4.0]])

    def test_hand_matrix(self):
        out = linear_forward(
            np.array([[1.0, 1.0]]),
            np.array([[2.0, 1.0], [1.0, 3.0]]),
            np.array([0.5, -0.5]),
        )
        np.testing.assert_allclose(out, [[3.5, 3.5]])

    def test_scalar_chain_rule(self):
        gi, gw, gb = linear_backward(
            np.array([[1.0]]), np.array([[2.0]]), np.array([[3.0]])
        )
        np.testing.assert_array_equal(gi, [[3.0]])
        np.testing.assert_array_equal(gw, [[2.0]])
        np.testing.assert_array_equal(gb, [1.0])

    def test_zero_grad_out(self):
        gi, gw, gb = linear_backward(
            np.zeros((3, 2)), np.ones((3, 4)), np.ones((4, 2))
        )
        assert not gi.any() and not gw.any() and not gb.any()

    def test_backward_matches_finite_differences(self):
        rng = np.random.default_rng(7)
        x = rng.standard_normal((3, 4))
        w = rng.standard_normal((4, 2))
        b = rng.standard_normal(2)
        probe = rng.standard_normal((3, 2))  # fixed projection to a scalar

        def loss_wrt(which):
            def f(v):
                args = {"x": x, "w": w, "b": b}
                args[which] = v
                return float(
                    np.sum(probe * linear_forward(args["x"], args["w"], args["b"]))
                )
            return f

        gi, gw, gb = linear_backward(probe, x, w)
        np.testing.assert_allclose(gi, central_diff(loss_wrt("x"), x), rtol=1e-6, atol=1e-8)
        np.testing.assert_allclose(gw, central_diff(loss_wrt("w"), w), rtol=1e-6, atol=1e-8)
        np.testing.assert_allclose(gb, central_diff(loss_wrt("b"), b), rtol=1e-6, atol=1e-8)

    def test_shape_mismatch_raises(self):
        with pytest.raises(DimensionError):
            linear_forward(np.ones((2, 3)), np.ones((4, 2)))
        with pytest.raises(DimensionError):
            linear_forward(np.ones((2, 3)), np.ones((3, 2)), np.ones(3))
        with pytest.raises(DimensionError):
            linear_backward(np.ones((2, 3)), np.ones((2, 3)), np.ones((3, 2)))


class TestLeakyRelu:
    def test_definition(self):
        np.testing.assert_allclose(
            leaky_relu(np.array([-1.0, 2.0]), slope=0.01), [-0.01, 2.0]
        )

    def test_positive_identity(self):
        x = np.array([0.5, 1.0, 7.0])
        np.testing.assert_array_equal(leaky_relu(x), x)

    def test_backward_matches_finite_differences(self):
        rng = np.random.default_rng(3)
        # keep points away from the kink at 0 where the derivative jumps
        x = rng.standard_normal(50)
        x = x[np.abs(x) > 1e-3]
        probe = rng.standard_normal(x.size)
        grad = leaky_relu_backward(probe, x)
        numeric = central_diff(lambda v: float(np.sum(probe * leaky_relu(v))), x)
        np.testing.assert_allclose(grad, numeric, rtol=1e-6, atol=1e-9)

    def test_kernel_matches_numpy_fallback(self):
        rng = np.random.default_rng(11)
        x = rng.standard_normal((16, 33))
        g = rng.standard_normal((16, 33))
        fwd_np = np.maximum(x, 0.01 * x)
        bwd_np = np.where(x > 0, g, 0.01 * g)
        np.testing.assert_array_equal(leaky_relu(x), fwd_np)
        np.testing.assert_array_equal(leaky_relu_backward(g, x), bwd_np)


class TestSigmoid:
    def test_zero(self):
        assert sigmoid(np.array([0.0]))[0] == 0.5

    def test_saturation_no_overflow(self):
        out = sigmoid(np.array([500.0, -500.0]))
        assert out[0] == 1.0
        assert 0.0 <= out[1] < 1e-100

    def test_ln3(self):
        np.testing.assert_allclose(sigmoid(np.array([np.log(3.0)])), [0.75], atol=1e-15)


class TestBatchNorm:
    def test_hand_two_rows(self):
        state = BatchNormState(1)
        out, _ = batch_norm_forward(np.array([[1.0], [3.0]]), state, train=True)
        # mean 2, biased var 1
        np.testing.assert_allclose(out, [[-1.0], [1.0]], atol=1e-2)

    def test_constant_column_is_zeroed(self):
        state = BatchNormState(2)
        out, _ = batch_norm_forward(np.full((4, 2), 5.0), state, train=True)
        np.testing.assert_allclose(out, np.zeros((4, 2)), atol=1e-12)

    def test_running_stats_are_biased_and_blended(self):
        state = BatchNormState(1, momentum=0.1)
        x = np.array([[1.0], [3.0]])
        batch_norm_forward(x, state, train=True)
        np.testing.assert_allclose(state.running_mean, [0.2])  # 0.9*0 + 0.1*2
        np.testing.assert_allclose(state.running_var, [1.0])  # 0.9*1 + 0.1*1 (biased)
        assert state.batches_tracked == 1

    def test_eval_mode_uses_running_stats_and_never_mutates(self):
        state = BatchNormState(2, running_mean=np.array([1.0, 2.0]),
                               running_var=np.array([4.0, 9.0]), batches_tracked=1)
        x = np.array([[3.0, 5.0]])
        out, _ = batch_norm_forward(x, state, train=False)
        np.testing.assert_allclose(out, [[1.0, 1.0]], rtol=1e-5)
        np.testing.assert_array_equal(state.running_mean, [1.0, 2.0])
        assert state.batches_tracked == 1

    def test_output_columns_are_standardized(self):
        rng = np.random.default_rng(21)
        x = rng.standard_normal((64, 7)) * 3.0 + 1.5
        out, _ = batch_norm_forward(x, BatchNormState(7), train=True)
        assert np.all(np.abs(out.mean(axis=0)) < 1e-9)
        assert np.all(np.abs(out.var(axis=0) - 1.0) < 1e-4)

    def test_train_requires_two_rows(self):
        with pytest.raises(BatchTooSmallError):
            batch_norm_forward(np.ones((1, 3)), BatchNormState(3), train=True)

    def test_backward_matches_finite_differences(self):
        rng = np.random.default_rng(5)
        x = rng.standard_normal((6, 3))
        probe = rng.standard_normal((6, 3))

        def f(v):
            out, _ = batch_norm_forward(v, BatchNormState(3), train=True)
            return float(np.sum(probe * out))

        _, cache = batch_norm_forward(x, BatchNormState(3), train=True)
        grad = batch_norm_backward(probe, cache)
        np.testing.assert_allclose(grad, central_diff(f, x), rtol=1e-5, atol=1e-8)

    def test_kernel_matches_numpy_fallback(self):
        rng = np.random.default_rng(9)
        x = rng.standard_normal((8, 5))
        g = rng.standard_normal((8, 5))
        s_k, s_np = BatchNormState(5), BatchNormState(5)
        out_k, cache_k = batch_norm_forward(x, s_k, train=True)
        kernel = nn._bn_train_kernel
        nn._bn_train_kernel = None
        try:
            out_np, cache_np = batch_norm_forward(x, s_np, train=True)
        finally:
            nn._bn_train_kernel = kernel
        np.testing.assert_allclose(out_k, out_np, atol=1e-12)
        np.testing.assert_allclose(s_k.running_var, s_np.running_var, atol=1e-14)
        np.testing.assert_allclose(
            batch_norm_backward(g, cache_k), batch_norm_backward(g, cache_np),
            atol=1e-12,
        )


class TestFusedBatchNormLeaky:
    @pytest.mark.parametrize("train", [True, False])
    def test_matches_primitive_composition(self, train):
        rng = np.random.default_rng(13)
        x = rng.standard_normal((8, 5))
        g = rng.standard_normal((8, 5))
        init = dict(running_mean=np.array([0.1] * 5), running_var=np.array([2.0] * 5),
                    batches_tracked=3)
        s_f = BatchNormState(5, **{k: np.copy(v) if isinstance(v, np.ndarray) else v
                                   for k, v in init.items()})
        s_p = BatchNormState(5, **{k: np.copy(v) if isinstance(v, np.ndarray) else v
                                   for k, v in init.items()})
        out_f, cache_f = batch_norm_leaky_forward(x, s_f, train=train)
        xhat, cache_p = batch_norm_forward(x, s_p, train=train)
        out_p = leaky_relu(xhat)
        np.testing.assert_allclose(out_f, out_p, atol=1e-12)
        np.testing.assert_allclose(s_f.running_mean, s_p.running_mean, atol=1e-14)
        np.testing.assert_allclose(s_f.running_var, s_p.running_var, atol=1e-14)
        assert s_f.batches_tracked == s_p.batches_tracked
        grad_f = batch_norm_leaky_backward(g, cache_f)
        grad_p = batch_norm_backward(leaky_relu_backward(g, xhat), cache_p)
        np.testing.assert_allclose(grad_f, grad_p, atol=1e-12)


class TestInitUniform:
    def test_bounds_and_spread(self):
        rng = np.random.default_rng(0)
        w = init_uniform((200, 50), rng, fan_in=200)
        bound = np.sqrt(1.0 / 200)
        assert np.all(np.abs(w) <= bound)
        assert w.min() < -0.9 * bound and w.max() > 0.9 * bound


class TestGradCheck:
    def test_quadratic_exact(self):
        p = Parameter(np.array([1.0, -2.0, 3.0]))

        def loss():
            p.grad = 2.0 * p.value
            return float(np.sum(p.value**2))

        report = grad_check(loss, {"p": p}, tol=1e-8)
        assert report["passed"]
        assert report["max_rel_error"] <= 1e-8

    def test_corrupted_gradient_is_reported(self):
        p = Parameter(np.array([1.0, 2.0]))

        def loss():
            p.grad = 2.0 * p.value + 0.5  # wrong on purpose
            return float(np.sum(p.value**2))

        report = grad_check(loss, {"p": p})
        assert not report["passed"]

    def test_nondeterministic_closure_rejected(self):
        p = Parameter(np.array([1.0]))
        state = {"n": 0}

        def loss():
            state["n"] += 1
            p.grad = np.array([1.0])
            return float(state["n"])

        with pytest.raises(CheckInvalidError):
            grad_check(loss, {"p": p})
