"""Optimizer single-step arithmetic and the cyclical learning-rate schedule."""

import numpy as np

from plume import optim
from plume.nn import Parameter
from plume.optim import AdamW, AdamWConfig, ClrConfig, clr_lr_at


def make_param(values, grad=None):
    p = Parameter(np.asarray(values, dtype=np.float64))
    p.grad = np.zeros_like(p.value) if grad is None else np.asarray(grad, dtype=np.float64)
    return p


class TestAdamWStep:
    def test_hand_single_step(self):
        # t=1: m=(1-b1)g, v=(1-b2)g^2, bias correction cancels them exactly,
        # so the update is lr * g/(|g| + eps') with eps' = eps/sqrt(bc2)
        cfg = AdamWConfig(beta1=0.9, beta2=0.999, eps=1e-8, weight_decay=0.0)
        p = make_param([1.0], grad=[2.0])
        opt = AdamW({"p": p}, cfg)
        lr = 0.1
        opt.step(lr)
        m_hat = 0.1 * 2.0 / (1.0 - 0.9)
        v_hat = 0.001 * 4.0 / (1.0 - 0.999)
        expected = 1.0 - lr * m_hat / (np.sqrt(v_hat) + 1e-8)
        np.testing.assert_allclose(p.value, [expected], rtol=1e-12)

    def test_weight_decay_only_shrinks(self):
        cfg = AdamWConfig(weight_decay=0.01)
        p = make_param([4.0, -2.0])  # grad stays zero
        AdamW({"p": p}, cfg).step(0.5)
        np.testing.assert_allclose(p.value, np.array([4.0, -2.0]) * (1.0 - 0.5 * 0.01))

    def test_zero_lr_is_a_no_op_on_weights(self):
        p = make_param([1.0, 2.0], grad=[3.0, -1.0])
        opt = AdamW({"p": p}, AdamWConfig(weight_decay=0.01))
        opt.step(0.0)
        np.testing.assert_array_equal(p.value, [1.0, 2.0])
        assert opt.m["p"][0] != 0.0  # moments still accumulate

    def test_decay_is_decoupled_from_moments(self):
        # with zero grad the moments must stay exactly zero even though the
        # weights shrink, which distinguishes AdamW from L2-regularized Adam
        p = make_param([5.0])
        opt = AdamW({"p": p}, AdamWConfig(weight_decay=0.1))
        for _ in range(3):
            opt.step(0.01)
        np.testing.assert_array_equal(opt.m["p"], [0.0])
        np.testing.assert_array_equal(opt.v["p"], [0.0])
        np.testing.assert_allclose(p.value, [5.0 * (1.0 - 0.01 * 0.1) ** 3], rtol=1e-14)

    def test_sign_and_scale_after_many_steps(self):
        # constant gradient: update direction settles to -lr * sign(g)
        p = make_param([0.0], grad=[0.7])
        opt = AdamW({"p": p}, AdamWConfig(weight_decay=0.0))
        for _ in range(200):
            opt.step(0.01)
        before = p.value[0]
        opt.step(0.01)
        np.testing.assert_allclose(p.value[0] - before, -0.01, rtol=1e-3)

    def test_kernel_matches_numpy_fallback(self):
        rng = np.random.default_rng(0)
        shape = (7, 5)
        vals = rng.standard_normal(shape)
        grads = rng.standard_normal(shape)
        p_k = make_param(vals.copy(), grads.copy())
        p_np = make_param(vals.copy(), grads.copy())
        cfg = AdamWConfig()
        opt_k = AdamW({"p": p_k}, cfg)
        opt_np = AdamW({"p": p_np}, cfg)
        kernel = optim._adamw_update
        optim._adamw_update = optim._adamw_update_numpy
        try:
            for _ in range(5):
                opt_np.step(1e-3)
        finally:
            optim._adamw_update = kernel
        for _ in range(5):
            opt_k.step(1e-3)
        np.testing.assert_allclose(p_k.value, p_np.value, atol=1e-15)
        np.testing.assert_allclose(opt_k.v["p"], opt_np.v["p"], atol=1e-15)

    def test_multi_tensor_state_is_independent(self):
        a = make_param([1.0], grad=[1.0])
        b = make_param([1.0], grad=[0.0])
        opt = AdamW({"a": a, "b": b}, AdamWConfig(weight_decay=0.0))
        opt.step(0.1)
        assert a.value[0] != 1.0
        assert b.value[0] == 1.0


class TestClrSchedule:
    def test_start_at_base(self):
        clr = ClrConfig(base_lr=1e-4, max_lr=1e-3, step_size_iters=100)
        assert clr_lr_at(0, clr) == 1e-4

    def test_peak_at_step_size(self):
        clr = ClrConfig(base_lr=1e-4, max_lr=1e-3, step_size_iters=100)
        np.testing.assert_allclose(clr_lr_at(100, clr), 1e-3)

    def test_midpoint_of_descent(self):
        clr = ClrConfig(base_lr=1e-4, max_lr=1e-3, step_size_iters=100)
        np.testing.assert_allclose(clr_lr_at(150, clr), (1e-4 + 1e-3) / 2)

    def test_full_cycle_returns_to_base(self):
        clr = ClrConfig(base_lr=1e-4, max_lr=1e-3, step_size_iters=100)
        np.testing.assert_allclose(clr_lr_at(200, clr), 1e-4)
        np.testing.assert_allclose(clr_lr_at(300, clr), 1e-3)

    def test_bounds_hold_everywhere(self):
        clr = ClrConfig(base_lr=1e-4, max_lr=1e-3, step_size_iters=7)
        lrs = [clr_lr_at(i, clr) for i in range(100)]
        assert min(lrs) >= 1e-4 and max(lrs) <= 1e-3
