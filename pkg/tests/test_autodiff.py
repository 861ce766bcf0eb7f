"""Finite-difference and algebraic checks for the tensor engine."""

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from csg import autodiff as ad
from csg.autodiff import Tensor

TOL = 1e-4


def rnd(shape, seed=0, scale=1.0):
    return np.random.default_rng(seed).standard_normal(shape) * scale


class TestElementwiseGradients:
    def test_add_sub_mul_broadcast(self):
        a = rnd((3, 4), 1)
        b = rnd((4,), 2)

        def f(ts):
            return ad.tsum(ad.mul(ad.add(ts[0], ts[1]), ad.sub(ts[0], 0.5)))

        assert ad.gradient_check(f, [Tensor(a), Tensor(b)]) < TOL

    @pytest.mark.parametrize("op", [ad.relu, ad.tanh, ad.sigmoid, ad.exp])
    def test_unary(self, op):
        x = rnd((5, 3), 3) + 0.1  # nudge off relu's kink

        def f(ts):
            return ad.tsum(op(ts[0]))

        assert ad.gradient_check(f, [Tensor(x)]) < TOL

    def test_log_sqrt_positive_domain(self):
        x = np.abs(rnd((4, 4), 4)) + 0.5

        def f(ts):
            return ad.tsum(ad.log(ts[0])) + ad.tsum(ad.sqrt(ts[0]))

        assert ad.gradient_check(f, [Tensor(x)]) < TOL

    def test_abs_and_clip_away_from_kinks(self):
        x = rnd((6,), 5) * 3.0
        x = x[np.abs(np.abs(x) - 1.0) > 0.05]  # keep clear of clip edges

        def f(ts):
            return ad.tsum(ad.abs_(ts[0])) + ad.tsum(ad.clip(ts[0], -1.0, 1.0))

        assert ad.gradient_check(f, [Tensor(x)]) < TOL


class TestStructuralGradients:
    def test_matmul_chain(self):
        a = rnd((3, 5), 6)
        b = rnd((5, 2), 7)

        def f(ts):
            return ad.tsum(ad.matmul(ts[0], ts[1]))

        assert ad.gradient_check(f, [Tensor(a), Tensor(b)]) < TOL

    def test_softmax_log_softmax(self):
        x = rnd((4, 6), 8)
        w = rnd((4, 6), 9)

        def f(ts):
            return ad.tsum(ad.softmax(ts[0]) * w) \
                + ad.tsum(ad.log_softmax(ts[0]) * w)

        assert ad.gradient_check(f, [Tensor(x)]) < TOL

    def test_concat_reshape_getitem(self):
        a = rnd((2, 3), 10)
        b = rnd((2, 2), 11)

        def f(ts):
            cat = ad.concat([ts[0], ts[1]], axis=-1)
            flat = ad.reshape(cat, (10,))
            return ad.tsum(flat[2:7] * flat[2:7])

        assert ad.gradient_check(f, [Tensor(a), Tensor(b)]) < TOL

    def test_embedding_and_gather(self):
        table = rnd((8, 4), 12)
        idx = np.array([[1, 7, 3], [0, 0, 5]])
        sel = np.array([[0, 2, 1], [3, 3, 0]])

        def f(ts):
            e = ad.embedding_lookup(ts[0], idx)
            return ad.tsum(ad.gather_last(e, sel))

        assert ad.gradient_check(f, [Tensor(table)]) < TOL

    def test_mean_sum_axes(self):
        x = rnd((3, 4, 2), 13)

        def f(ts):
            return ad.tsum(ad.tmean(ts[0], axis=1) * ad.tsum(ts[0], axis=1))

        assert ad.gradient_check(f, [Tensor(x)]) < TOL

    def test_norm_l2(self):
        x = rnd((7,), 14)

        def f(ts):
            return ad.norm_l2(ts[0]) * 2.0

        assert ad.gradient_check(f, [Tensor(x)]) < TOL


class TestBackwardMechanics:
    def test_negative_control_detects_wrong_gradient(self):
        """A deliberately corrupted backward rule must trip the checker."""
        def bad_square(x):
            x = ad._wrap(x)

            def bw(out):
                x.accumulate(out.grad * 3.0 * x.data)  # should be 2 x

            return ad._node(x.data ** 2, (x,), bw)

        x = Tensor(rnd((4,), 15) + 2.0)
        err = ad.gradient_check(lambda ts: ad.tsum(bad_square(ts[0])), [x])
        assert err > 0.1

    def test_repeated_backward_accumulates(self):
        with ad.dtype_mode("float64"):
            x = Tensor(np.array([2.0, -1.0]), requires_grad=True)
            loss = ad.tsum(x * x)
            ad.backward(loss)
            g1 = x.grad.copy()
            ad.backward(loss)
            np.testing.assert_allclose(x.grad, 2.0 * g1)

    def test_shared_subexpression_counted_once_per_path(self):
        with ad.dtype_mode("float64"):
            x = Tensor(np.array(3.0), requires_grad=True)
            y = x * x          # dy/dx = 6
            loss = y + y       # d/dx = 12
            ad.backward(loss)
            assert x.grad == pytest.approx(12.0)

    def test_no_grad_detaches(self):
        x = Tensor(np.ones(3), requires_grad=True)
        with ad.no_grad():
            y = ad.tsum(x * 2.0)
        assert not y.requires_grad

    def test_no_grad_is_thread_local(self):
        """no_grad() on one thread must not detach graphs on another."""
        import threading

        inside = threading.Event()
        release = threading.Event()

        def hold_no_grad():
            with ad.no_grad():
                inside.set()
                release.wait(timeout=5)

        worker = threading.Thread(target=hold_no_grad)
        worker.start()
        assert inside.wait(timeout=5)
        try:
            x = Tensor(np.ones(3), requires_grad=True)
            y = ad.tsum(x * 2.0)
            assert y.requires_grad
            ad.backward(y)
            np.testing.assert_allclose(x.grad, 2.0)
        finally:
            release.set()
            worker.join()

    def test_backward_rejects_non_scalar_and_detached(self):
        x = Tensor(np.ones(3), requires_grad=True)
        with pytest.raises(ValueError):
            ad.backward(x * 2.0)
        with pytest.raises(ValueError):
            ad.backward(Tensor(np.array(1.0)))

    def test_shape_errors(self):
        with pytest.raises(ad.ShapeError):
            ad.add(Tensor(np.ones((2, 3))), Tensor(np.ones((2, 4))))
        with pytest.raises(ad.ShapeError):
            ad.matmul(Tensor(np.ones((2, 3))), Tensor(np.ones((4, 2))))
        with pytest.raises(ad.ShapeError):
            ad.embedding_lookup(Tensor(np.ones((4, 2))), np.array([5]))


class TestNumericProperties:
    @given(st.integers(min_value=2, max_value=16),
           st.integers(min_value=0, max_value=2 ** 31))
    @settings(max_examples=30, deadline=None)
    def test_softmax_rows_stochastic(self, k, seed):
        x = np.random.default_rng(seed).standard_normal((3, k)) * 5.0
        p = ad.softmax(Tensor(x)).data
        assert (p >= 0).all()
        np.testing.assert_allclose(p.sum(axis=-1), 1.0, atol=1e-5)

    def test_softmax_uniform_on_equal_logits(self):
        p = ad.softmax(Tensor(np.full((2, 6), 3.7))).data
        np.testing.assert_allclose(p, 1.0 / 6.0, atol=1e-6)

    def test_log_softmax_matches_log_of_softmax(self):
        x = rnd((3, 5), 16) * 10
        with ad.dtype_mode("float64"):
            a = ad.log_softmax(Tensor(x)).data
            b = np.log(ad.softmax(Tensor(x)).data)
        np.testing.assert_allclose(a, b, atol=1e-10)

    def test_dtype_mode_switches_and_restores(self):
        assert Tensor(1.0).data.dtype == np.float32
        with ad.dtype_mode("float64"):
            assert Tensor(1.0).data.dtype == np.float64
        assert Tensor(1.0).data.dtype == np.float32
        with pytest.raises(ValueError):
            ad.set_default_dtype("float16")
