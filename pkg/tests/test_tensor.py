"""Autodiff core: forward values against numpy, gradients against finite differences."""

import numpy as np
import pytest

from maskdenoise import tensor as T
from maskdenoise.tensor import (
    NonFiniteError,
    ShapeError,
    Tensor,
    backward,
    gradcheck,
)


def leaf(arr):
    return Tensor(np.asarray(arr, dtype=np.float64), requires_grad=True)


def scalar_check(build_loss, params, n_probes=60, tol=1e-6):
    err = gradcheck(build_loss, params, n_probes=n_probes, h=1e-6)
    assert err < tol, f"max relative gradient error {err}"


class TestConstruction:
    def test_default_dtype_is_float32(self):
        t = Tensor([1, 2, 3])
        assert t.dtype == np.float32

    def test_float64_is_preserved(self):
        t = Tensor(np.zeros(3, dtype=np.float64))
        assert t.dtype == np.float64

    def test_nan_leaf_rejected(self):
        with pytest.raises(NonFiniteError):
            Tensor([1.0, np.nan])

    def test_inf_leaf_rejected(self):
        with pytest.raises(NonFiniteError):
            Tensor([np.inf])

    def test_trainable_leaf_starts_with_zero_grad(self):
        t = Tensor(np.ones(4), requires_grad=True)
        assert t.grad is not None
        assert np.all(t.grad == 0)


class TestBackwardContract:
    def test_non_scalar_loss_rejected(self):
        t = leaf(np.ones(3))
        with pytest.raises(ShapeError):
            backward(t + t)

    def test_unreached_leaf_keeps_zero_grad(self):
        a = leaf(np.ones(3))
        b = leaf(np.ones(3))
        backward(T.tsum(a * 2.0))
        assert np.all(b.grad == 0)
        assert np.allclose(a.grad, 2.0)

    def test_grad_accumulates_across_reuse(self):
        a = leaf(np.array([3.0]))
        backward(T.tsum(a + a))
        assert np.allclose(a.grad, 2.0)

    def test_deep_chain_does_not_recurse(self):
        # would overflow Python's recursion limit if backward recursed
        x = leaf(np.array([1.0]))
        y = x
        for _ in range(5000):
            y = y + 0.0
        backward(T.tsum(y))
        assert np.allclose(x.grad, 1.0)

    def test_inference_nodes_drop_graph(self):
        a = Tensor(np.ones(3))
        out = a + a
        assert out._parents == ()
        assert not out.requires_grad


class TestElementwise:
    def test_add_broadcast_values(self):
        a, b = leaf(np.ones((2, 3))), leaf(np.arange(3.0))
        out = a + b
        assert np.allclose(out.data, np.ones((2, 3)) + np.arange(3.0))

    def test_add_broadcast_grads(self):
        rng = np.random.default_rng(1)
        a, b = leaf(rng.normal(size=(2, 3))), leaf(rng.normal(size=(3,)))
        scalar_check(lambda: T.tsum((a + b) * (a + b)), [a, b])

    def test_mul_broadcast_grads(self):
        rng = np.random.default_rng(2)
        a, b = leaf(rng.normal(size=(4, 1, 3))), leaf(rng.normal(size=(2, 1)))
        scalar_check(lambda: T.tsum(a * b), [a, b])

    def test_sub_and_neg(self):
        a, b = leaf(np.array([5.0])), leaf(np.array([3.0]))
        backward(T.tsum(a - b))
        assert np.allclose(a.grad, 1.0)
        assert np.allclose(b.grad, -1.0)


class TestMatmul:
    def test_value_matches_numpy(self):
        rng = np.random.default_rng(3)
        a, b = rng.normal(size=(4, 5)), rng.normal(size=(5, 2))
        out = T.matmul(leaf(a), leaf(b))
        assert np.allclose(out.data, a @ b)

    def test_grads_2d(self):
        rng = np.random.default_rng(4)
        a, b = leaf(rng.normal(size=(3, 4))), leaf(rng.normal(size=(4, 2)))
        scalar_check(lambda: T.tsum(T.matmul(a, b)), [a, b])

    def test_grads_batched_with_broadcast(self):
        rng = np.random.default_rng(5)
        a = leaf(rng.normal(size=(2, 3, 4)))
        b = leaf(rng.normal(size=(4, 5)))
        scalar_check(lambda: T.tsum(T.matmul(a, b)), [a, b])

    def test_inner_dim_mismatch(self):
        with pytest.raises(ShapeError):
            T.matmul(leaf(np.ones((2, 3))), leaf(np.ones((2, 3))))

    def test_vector_operand_rejected(self):
        with pytest.raises(ShapeError):
            T.matmul(leaf(np.ones(3)), leaf(np.ones((3, 2))))


class TestShapeOps:
    def test_reshape_roundtrip_grad(self):
        x = leaf(np.arange(12.0).reshape(3, 4))
        scalar_check(lambda: T.tsum(T.reshape(x, (2, 6)) * T.reshape(x, (2, 6))), [x])

    def test_transpose_grad(self):
        rng = np.random.default_rng(6)
        x = leaf(rng.normal(size=(2, 3, 4)))
        w = rng.normal(size=(4, 3, 2))
        scalar_check(lambda: T.tsum(T.transpose(x, (2, 1, 0)) * w), [x])

    def test_roll2d_inverts_in_backward(self):
        rng = np.random.default_rng(7)
        x = leaf(rng.normal(size=(1, 4, 4, 2)))
        w = rng.normal(size=(1, 4, 4, 2))
        scalar_check(lambda: T.tsum(T.roll2d(x, 1, -2) * w), [x])

    def test_crop2d_values_and_grad(self):
        rng = np.random.default_rng(8)
        x = leaf(rng.normal(size=(1, 5, 6, 2)))
        out = T.crop2d(x, 3, 4)
        assert out.data.shape == (1, 3, 4, 2)
        assert np.allclose(out.data, x.data[:, :3, :4, :])
        scalar_check(lambda: T.tsum(T.crop2d(x, 3, 4) * T.crop2d(x, 3, 4)), [x])

    def test_pad_edge2d_replicates_last_row_col(self):
        x = leaf(np.arange(6.0).reshape(1, 2, 3, 1))
        out = T.pad_edge2d(x, 2, 1)
        assert out.data.shape == (1, 4, 4, 1)
        assert np.allclose(out.data[0, :, :, 0][2], [3, 4, 5, 5])
        assert np.allclose(out.data[0, :, :, 0][3], [3, 4, 5, 5])

    def test_pad_edge2d_grad_counts_replicas(self):
        x = leaf(np.ones((1, 2, 2, 1)))
        backward(T.tsum(T.pad_edge2d(x, 1, 1)))
        # corner pixel feeds itself plus 3 replicas
        assert np.allclose(x.grad[0, :, :, 0], [[1, 2], [2, 4]])

    def test_take_rows_gather_and_scatter(self):
        table = leaf(np.arange(10.0).reshape(5, 2))
        idx = np.array([0, 3, 3, 1])
        out = T.take_rows(table, idx)
        assert np.allclose(out.data, table.data[idx])
        backward(T.tsum(out))
        expect = np.zeros((5, 2))
        np.add.at(expect, idx, 1.0)
        assert np.allclose(table.grad, expect)


class TestNonlinearities:
    def test_softmax_rows_sum_to_one(self):
        rng = np.random.default_rng(9)
        x = leaf(rng.normal(size=(3, 7)) * 50)  # large logits stress stability
        out = T.softmax_lastdim(x)
        assert np.allclose(out.data.sum(axis=-1), 1.0)
        assert np.isfinite(out.data).all()

    def test_softmax_grad(self):
        rng = np.random.default_rng(10)
        x = leaf(rng.normal(size=(2, 5)))
        w = rng.normal(size=(2, 5))
        scalar_check(lambda: T.tsum(T.softmax_lastdim(x) * w), [x])

    def test_layer_norm_normalizes(self):
        rng = np.random.default_rng(11)
        x = leaf(rng.normal(size=(4, 8)) * 3 + 2)
        g = Tensor(np.ones(8, dtype=np.float64), requires_grad=True)
        b = Tensor(np.zeros(8, dtype=np.float64), requires_grad=True)
        out = T.layer_norm(x, g, b)
        assert np.allclose(out.data.mean(axis=-1), 0.0, atol=1e-12)
        assert np.allclose(out.data.var(axis=-1), 1.0, atol=1e-4)

    def test_layer_norm_grads(self):
        rng = np.random.default_rng(12)
        x = leaf(rng.normal(size=(3, 6)))
        g = leaf(rng.normal(size=(6,)))
        b = leaf(rng.normal(size=(6,)))
        w = rng.normal(size=(3, 6))
        scalar_check(lambda: T.tsum(T.layer_norm(x, g, b) * w), [x, g, b], tol=1e-5)

    def test_layer_norm_rejects_bad_eps(self):
        x = leaf(np.ones((2, 3)))
        g, b = leaf(np.ones(3)), leaf(np.zeros(3))
        with pytest.raises(ValueError):
            T.layer_norm(x, g, b, eps=0.0)

    def test_gelu_values(self):
        # gelu(0) = 0, gelu(x) -> x for large x, -> 0 for very negative x
        x = Tensor(np.array([0.0, 10.0, -10.0], dtype=np.float64))
        out = T.gelu(x)
        assert np.allclose(out.data, [0.0, 10.0, 0.0], atol=1e-6)

    def test_gelu_grad(self):
        rng = np.random.default_rng(13)
        x = leaf(rng.normal(size=(50,)))
        scalar_check(lambda: T.tsum(T.gelu(x)), [x])


class TestLossesAndReductions:
    def test_l1_value(self):
        p = leaf(np.array([1.0, 2.0, 3.0]))
        t = np.array([1.5, 2.0, 1.0])
        assert np.allclose(T.l1_loss(p, t).data, (0.5 + 0.0 + 2.0) / 3)

    def test_l1_grad_away_from_ties(self):
        rng = np.random.default_rng(14)
        p = leaf(rng.normal(size=(4, 4)))
        t = rng.normal(size=(4, 4))
        scalar_check(lambda: T.l1_loss(p, t), [p])

    def test_l1_tie_subgradient_is_zero(self):
        p = leaf(np.array([1.0, 2.0]))
        backward(T.l1_loss(p, np.array([1.0, 0.0])))
        assert p.grad[0] == 0.0
        assert np.allclose(p.grad[1], 0.5)

    def test_l1_shape_mismatch(self):
        with pytest.raises(ShapeError):
            T.l1_loss(leaf(np.ones(3)), np.ones(4))

    def test_mean_and_sum_grads(self):
        x = leaf(np.arange(6.0).reshape(2, 3))
        backward(T.mean(x))
        assert np.allclose(x.grad, 1.0 / 6)
        x.zero_grad()
        backward(T.tsum(x))
        assert np.allclose(x.grad, 1.0)


class TestConv3x3:
    def test_value_against_direct_convolution(self):
        rng = np.random.default_rng(15)
        x = rng.normal(size=(2, 5, 6, 3))
        w = rng.normal(size=(3, 3, 3, 4))
        b = rng.normal(size=(4,))
        out = T.conv3x3(Tensor(x), Tensor(w), Tensor(b)).data

        xp = np.pad(x, ((0, 0), (1, 1), (1, 1), (0, 0)))
        expect = np.zeros((2, 5, 6, 4))
        for ky in range(3):
            for kx in range(3):
                expect += xp[:, ky : ky + 5, kx : kx + 6, :] @ w[ky, kx]
        expect += b
        assert np.allclose(out, expect, atol=1e-12)

    def test_grads(self):
        rng = np.random.default_rng(16)
        x = leaf(rng.normal(size=(1, 4, 4, 2)))
        w = leaf(rng.normal(size=(3, 3, 2, 3)))
        b = leaf(rng.normal(size=(3,)))
        t = rng.normal(size=(1, 4, 4, 3))
        scalar_check(lambda: T.l1_loss(T.conv3x3(x, w, b), t), [x, w, b], tol=1e-5)

    def test_weight_shape_mismatch(self):
        with pytest.raises(ShapeError):
            T.conv3x3(leaf(np.ones((1, 4, 4, 2))), leaf(np.ones((3, 3, 5, 3))), leaf(np.ones(3)))


class TestGradcheckHarness:
    def test_detects_a_wrong_gradient(self):
        # a deliberately broken op must fail the check; guards the checker itself
        x = leaf(np.array([1.0, 2.0, 3.0]))

        def broken_double(t):
            out = t.data * 2.0

            def bwd(g):
                T._accum(t, g * 3.0)  # wrong on purpose

            return Tensor._from_op(out, (t,), bwd)

        err = gradcheck(lambda: T.tsum(broken_double(x)), [x], n_probes=3, h=1e-6)
        assert err > 0.3
