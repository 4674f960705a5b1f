"""Tensor core: op contracts, attention semantics, autodiff vs finite differences."""

import numpy as np
import pytest

from sixview import tensor as T
from sixview.tensor import Tape, Tensor, backward

import oracles
from oracles import assert_grads_match, fd_gradient


def rnd(rng, *shape):
    return rng.standard_normal(shape).astype(np.float32)


class TestBasics:
    def test_matmul_identity(self):
        a = Tensor(np.eye(2))
        b = Tensor([[1, 2], [3, 4]])
        out = T.matmul(a, b)
        np.testing.assert_array_equal(out.data, [[1, 2], [3, 4]])

    def test_matmul_orthogonal_rows(self):
        out = T.matmul(Tensor([[1.0, 0.0]]), Tensor([[0.0], [5.0]]))
        np.testing.assert_array_equal(out.data, [[0.0]])

    def test_matmul_shape_mismatch_reports_both(self):
        with pytest.raises(T.ShapeError, match=r"2, 3.*4, 2"):
            T.matmul(Tensor(np.zeros((2, 3))), Tensor(np.zeros((4, 2))))

    def test_elementwise_shape_mismatch(self):
        with pytest.raises(T.ShapeError):
            T.add(Tensor(np.zeros((2, 3))), Tensor(np.zeros((3, 2))))

    def test_scalar_broadcast_only(self):
        out = T.mul(Tensor([1.0, 2.0]), 3.0)
        np.testing.assert_allclose(out.data, [3.0, 6.0])

    def test_determinism_same_inputs(self):
        rng = np.random.default_rng(7)
        x = rnd(rng, 5, 5)
        w = rnd(rng, 5, 5)
        a = T.matmul(Tensor(x), Tensor(w)).data
        b = T.matmul(Tensor(x), Tensor(w)).data
        np.testing.assert_array_equal(a, b)

    def test_finite_outputs(self):
        rng = np.random.default_rng(3)
        x = Tensor(rnd(rng, 4, 8))
        for out in (T.silu(x), T.mul(x, x), T.mean_all(x)):
            assert np.isfinite(out.data).all()


class TestBackwardContract:
    def test_sum_grad_is_ones(self):
        x = T.param(np.arange(6, dtype=np.float32).reshape(2, 3))
        with Tape():
            loss = T.sum_all(x)
            grads = backward(loss)
        np.testing.assert_array_equal(grads[x], np.ones((2, 3), np.float32))

    def test_sum_of_squares_grad(self):
        x = T.param([1.0, -2.0])
        with Tape():
            loss = T.sum_all(T.mul(x, x))
            backward(loss)
        np.testing.assert_allclose(x.grad, [2.0, -4.0], rtol=1e-6)

    def test_non_scalar_loss_rejected(self):
        x = T.param([1.0, 2.0])
        with Tape():
            y = T.mul(x, x)
            with pytest.raises(T.GraphError, match="scalar"):
                backward(y)

    def test_shared_subexpression_accumulates(self):
        # loss = sum(z) + sum(z) with z = x*x must double the gradient.
        x = T.param([1.0, 3.0])
        with Tape():
            z = T.mul(x, x)
            loss = T.add(T.sum_all(z), T.sum_all(z))
            backward(loss)
        np.testing.assert_allclose(x.grad, [4.0, 12.0], rtol=1e-6)

    def test_tape_consumed(self):
        x = T.param([2.0])
        with Tape() as tape:
            loss = T.sum_all(T.mul(x, x))
            backward(loss)
            assert tape.records == []

    def test_no_tape_means_no_recording(self):
        x = T.param([1.0])
        y = T.mul(x, x)
        assert not y.requires_grad

    def test_backward_without_tape_rejected(self):
        with pytest.raises(T.GraphError):
            backward(Tensor(1.0))


class TestAttentionSemantics:
    def test_single_key_returns_v_row(self):
        rng = np.random.default_rng(0)
        q, k, v = Tensor(rnd(rng, 3, 4)), Tensor(rnd(rng, 1, 4)), Tensor(rnd(rng, 1, 5))
        out = T.softmax_attention(q, k, v)
        np.testing.assert_allclose(out.data, np.repeat(v.data, 3, axis=0), rtol=1e-6)

    def test_mask_all_but_one_selects_that_row(self):
        rng = np.random.default_rng(1)
        q, k, v = Tensor(rnd(rng, 2, 4)), Tensor(rnd(rng, 5, 4)), Tensor(rnd(rng, 5, 3))
        mask = np.array([True, True, False, True, True])
        out = T.softmax_attention(q, k, v, mask)
        np.testing.assert_allclose(out.data, np.repeat(v.data[2:3], 2, axis=0), rtol=1e-6)

    def test_all_masked_rejected(self):
        rng = np.random.default_rng(2)
        q, k, v = Tensor(rnd(rng, 2, 4)), Tensor(rnd(rng, 3, 4)), Tensor(rnd(rng, 3, 3))
        with pytest.raises(ValueError, match="masked"):
            T.softmax_attention(q, k, v, np.ones(3, bool))

    def test_weight_rows_sum_to_one(self):
        rng = np.random.default_rng(3)
        x = rnd(rng, 4, 8)
        w = T.attention_weights(x, x)
        np.testing.assert_allclose(w.sum(axis=1), np.ones(4), atol=1e-6)

    def test_masked_key_contribution_exactly_zero(self):
        rng = np.random.default_rng(4)
        q, k = rnd(rng, 3, 4), rnd(rng, 6, 4)
        mask = np.zeros(6, bool)
        mask[4] = True
        w = T.attention_weights(q, k, mask)
        assert (w[:, 4] == 0.0).all()
        np.testing.assert_allclose(w.sum(axis=1), np.ones(3), atol=1e-6)


class TestFiniteDifferences:
    """Every primitive: analytic gradient vs central differences (step 1e-3).

    The differenced function is an independent float64 reference of the same
    math (see oracles.py), so the oracle also pins down the forward values.
    """

    def _check(self, rng, op, ref, arrays, wrt, step=1e-3, rtol=1e-3, atol=1e-5):
        out_f32 = op(*[Tensor(a) for a in arrays]).data
        ref_out = ref(*arrays)
        assert out_f32.shape == ref_out.shape
        np.testing.assert_allclose(out_f32, ref_out, rtol=1e-4, atol=1e-5)

        w = rng.standard_normal(out_f32.shape).astype(np.float32)

        def f(*arrs):
            return float((ref(*arrs) * w).sum())

        tensors = [T.param(a) for a in arrays]
        with Tape():
            out = op(*tensors)
            loss = T.sum_all(T.mul(out, Tensor(w)))
            grads = backward(loss)
        for i in wrt:
            fd = fd_gradient(f, arrays, i, step)
            assert_grads_match(grads[tensors[i]], fd, rtol, atol, what=f"arg {i}")

    def test_matmul(self):
        rng = np.random.default_rng(10)
        self._check(rng, T.matmul, oracles.ref_matmul, [rnd(rng, 3, 4), rnd(rng, 4, 2)], wrt=[0, 1])

    def test_linear(self):
        rng = np.random.default_rng(11)
        self._check(rng, T.linear, oracles.ref_linear,
                    [rnd(rng, 5, 4), rnd(rng, 4, 3), rnd(rng, 3)], wrt=[0, 1, 2])

    def test_conv2d_stride1(self):
        rng = np.random.default_rng(12)
        op = lambda x, w, b: T.conv2d(x, w, b, stride=1, padding=1)
        ref = lambda x, w, b: oracles.ref_conv2d(x, w, b, stride=1, padding=1)
        self._check(rng, op, ref, [rnd(rng, 2, 3, 5, 4), rnd(rng, 4, 3, 3, 3), rnd(rng, 4)], wrt=[0, 1, 2])

    def test_conv2d_stride2(self):
        rng = np.random.default_rng(13)
        op = lambda x, w, b: T.conv2d(x, w, b, stride=2, padding=1)
        ref = lambda x, w, b: oracles.ref_conv2d(x, w, b, stride=2, padding=1)
        self._check(rng, op, ref, [rnd(rng, 2, 2, 6, 8), rnd(rng, 3, 2, 3, 3), rnd(rng, 3)], wrt=[0, 1, 2])

    def test_silu(self):
        rng = np.random.default_rng(14)
        self._check(rng, T.silu, oracles.ref_silu, [rnd(rng, 3, 7)], wrt=[0])

    def test_groupnorm(self):
        rng = np.random.default_rng(15)
        op = lambda x, g, b: T.groupnorm(x, g, b, groups=2)
        ref = lambda x, g, b: oracles.ref_groupnorm(x, g, b, groups=2)
        self._check(rng, op, ref, [rnd(rng, 2, 4, 3, 3), rnd(rng, 4), rnd(rng, 4)], wrt=[0, 1, 2])

    def test_attention_batched(self):
        rng = np.random.default_rng(16)
        self._check(rng, T.attention, oracles.ref_attention,
                    [rnd(rng, 2, 3, 4), rnd(rng, 2, 5, 4), rnd(rng, 2, 5, 3)], wrt=[0, 1, 2])

    def test_softmax_attention(self):
        rng = np.random.default_rng(17)
        self._check(rng, T.softmax_attention, oracles.ref_softmax_attention,
                    [rnd(rng, 3, 4), rnd(rng, 5, 4), rnd(rng, 5, 2)], wrt=[0, 1, 2])

    def test_softmax_attention_masked(self):
        rng = np.random.default_rng(25)
        mask = np.array([False, True, False, False, True])
        op = lambda q, k, v: T.softmax_attention(q, k, v, mask)
        ref = lambda q, k, v: oracles.ref_softmax_attention(q, k, v, mask)
        self._check(rng, op, ref, [rnd(rng, 3, 4), rnd(rng, 5, 4), rnd(rng, 5, 2)], wrt=[0, 1, 2])

    def test_upsample(self):
        rng = np.random.default_rng(18)
        ref = lambda x: x.astype(np.float64).repeat(2, axis=2).repeat(2, axis=3)
        self._check(rng, lambda x: T.upsample_nearest(x, 2), ref, [rnd(rng, 2, 3, 3, 4)], wrt=[0])

    def test_downsample(self):
        rng = np.random.default_rng(19)
        ref = lambda x: x.astype(np.float64)[:, :, ::2, ::2]
        self._check(rng, lambda x: T.downsample_nearest(x, 2), ref, [rnd(rng, 2, 3, 4, 6)], wrt=[0])

    def test_broadcast_hw(self):
        rng = np.random.default_rng(20)
        ref = lambda x: np.broadcast_to(x.astype(np.float64), x.shape[:2] + (3, 5)).copy()
        self._check(rng, lambda x: T.broadcast_hw(x, 3, 5), ref, [rnd(rng, 2, 4, 1, 1)], wrt=[0])

    def test_concat(self):
        rng = np.random.default_rng(21)
        op = lambda a, b: T.concat([a, b], axis=1)
        ref = lambda a, b: np.concatenate([a.astype(np.float64), b.astype(np.float64)], axis=1)
        self._check(rng, op, ref, [rnd(rng, 2, 3, 4), rnd(rng, 2, 5, 4)], wrt=[0, 1])

    def test_permute_reshape(self):
        rng = np.random.default_rng(22)
        op = lambda x: T.reshape(T.permute(x, (0, 2, 1)), (2, 12))
        ref = lambda x: x.astype(np.float64).transpose(0, 2, 1).reshape(2, 12)
        self._check(rng, op, ref, [rnd(rng, 2, 3, 4)], wrt=[0])

    def test_elementwise_chain(self):
        rng = np.random.default_rng(23)
        op = lambda a, b: T.mul(T.add(a, b), T.sub(a, 0.5))
        ref = lambda a, b: (a.astype(np.float64) + b.astype(np.float64)) * (a.astype(np.float64) - 0.5)
        self._check(rng, op, ref, [rnd(rng, 4, 4), rnd(rng, 4, 4)], wrt=[0, 1])

    def test_mean_all(self):
        rng = np.random.default_rng(24)
        x = rnd(rng, 3, 5)
        xt = T.param(x)
        with Tape():
            loss = T.mean_all(T.mul(xt, xt))
            backward(loss)
        fd = fd_gradient(lambda a: float((a.astype(np.float64) ** 2).mean()), [x], 0)
        assert_grads_match(xt.grad, fd)


class TestShapeGuards:
    def test_downsample_indivisible(self):
        with pytest.raises(T.ShapeError):
            T.downsample_nearest(Tensor(np.zeros((1, 1, 5, 4))), 2)

    def test_conv_channel_mismatch(self):
        with pytest.raises(T.ShapeError):
            T.conv2d(Tensor(np.zeros((1, 3, 4, 4))), Tensor(np.zeros((2, 4, 3, 3))))

    def test_groupnorm_indivisible(self):
        with pytest.raises(T.ShapeError):
            T.groupnorm(Tensor(np.zeros((1, 6, 2, 2))), Tensor(np.ones(6)), Tensor(np.zeros(6)), groups=4)
