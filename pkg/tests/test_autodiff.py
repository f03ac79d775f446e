import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from utlo.autodiff import (
    CheckpointFormatError,
    ConfigurationError,
    ContractError,
    DimensionError,
    Parameter,
    Tensor,
    adam_step,
    backward,
    gradcheck,
    no_grad,
    ops,
    read_records,
    write_records,
)
from utlo.autodiff.checkpoint import decode_records, encode_records, f32_to_words, words_to_f32

H = 1e-3
TOL = 1e-3


@pytest.fixture
def rng():
    return np.random.default_rng(0)


def u(rng, *shape):
    return rng.uniform(-1, 1, size=shape)


def weighted_sum(t, w):
    """Scalar reduction with fixed random weights, so every output element matters."""
    return ops.sum(ops.mul(t, Tensor(w)))


def kink_mask(radius):
    def skip(which, arr):
        return np.abs(arr) < radius

    return skip


class TestMatmul:
    def test_identity(self):
        out = ops.matmul(Tensor(np.eye(2)), Tensor([[3.0, 4.0], [5.0, 6.0]]))
        np.testing.assert_array_equal(out.data, [[3, 4], [5, 6]])

    def test_hand_value(self):
        assert ops.matmul(Tensor([[1.0, 2.0]]), Tensor([[3.0], [4.0]])).data.tolist() == [[11.0]]

    def test_shape_mismatch_names_both_shapes(self):
        with pytest.raises(DimensionError, match=r"\(2, 3\).*\(2, 3\)"):
            ops.matmul(Tensor(np.ones((2, 3))), Tensor(np.ones((2, 3))))

    def test_gradcheck(self, rng):
        res = gradcheck(lambda a, b: ops.sum(ops.matmul(a, b)), [u(rng, 3, 3), u(rng, 3, 3)], h=H)
        assert res.ok(TOL), res


class TestConv2d:
    def test_identity_1x1(self, rng):
        x = u(rng, 2, 3, 5, 5).astype(np.float32)
        w = np.eye(3, dtype=np.float32).reshape(3, 3, 1, 1)
        np.testing.assert_array_equal(ops.conv2d(Tensor(x), Tensor(w)).data, x)

    def test_all_ones_3x3(self):
        out = ops.conv2d(Tensor(np.ones((1, 1, 3, 3))), Tensor(np.ones((1, 1, 3, 3))), stride=1, pad=0)
        assert out.shape == (1, 1, 1, 1)
        assert out.data.item() == 9.0

    @pytest.mark.parametrize("c_in,c_out", [(3, 4), (4, 2)])
    def test_gradcheck_padded(self, rng, c_in, c_out):
        # both the im2col and the output-shift paths
        x, w = u(rng, 2, c_in, 8, 8), u(rng, c_out, c_in, 3, 3)
        wts = u(rng, 2, c_out, 8, 8)
        res = gradcheck(lambda a, b: weighted_sum(ops.conv2d(a, b, stride=1, pad=1), wts), [x, w], h=H)
        assert res.ok(TOL), res

    def test_gradcheck_strided(self, rng):
        x, w = u(rng, 2, 3, 7, 7), u(rng, 2, 3, 3, 3)
        wts = u(rng, 2, 2, 4, 4)
        res = gradcheck(lambda a, b: weighted_sum(ops.conv2d(a, b, stride=2, pad=1), wts), [x, w], h=H)
        assert res.ok(TOL), res

    def test_gradcheck_1x1(self, rng):
        x, w = u(rng, 2, 3, 4, 4), u(rng, 5, 3, 1, 1)
        wts = u(rng, 2, 5, 4, 4)
        res = gradcheck(lambda a, b: weighted_sum(ops.conv2d(a, b), wts), [x, w], h=H)
        assert res.ok(TOL), res

    def test_matches_direct_loop(self, rng):
        x, w = u(rng, 1, 2, 5, 5), u(rng, 3, 2, 3, 3)
        out = ops.conv2d(Tensor(x), Tensor(w), stride=1, pad=1).data
        xp = np.pad(x, ((0, 0), (0, 0), (1, 1), (1, 1)))
        ref = np.zeros((1, 3, 5, 5))
        for o in range(3):
            for i in range(5):
                for j in range(5):
                    ref[0, o, i, j] = (xp[0, :, i : i + 3, j : j + 3] * w[o]).sum()
        np.testing.assert_allclose(out, ref, atol=1e-10)

    def test_non_integral_output(self):
        with pytest.raises(ConfigurationError):
            ops.conv2d(Tensor(np.ones((1, 1, 4, 4))), Tensor(np.ones((1, 1, 3, 3))), stride=2, pad=0)

    def test_unsupported_kernel(self):
        with pytest.raises(ConfigurationError):
            ops.conv2d(Tensor(np.ones((1, 1, 5, 5))), Tensor(np.ones((1, 1, 5, 5))))


class TestUpsample:
    def test_block_replication(self):
        out = ops.upsample_nearest(Tensor(np.array([[[[1.0, 2.0], [3.0, 4.0]]]])), 2).data[0, 0]
        np.testing.assert_array_equal(
            out, [[1, 1, 2, 2], [1, 1, 2, 2], [3, 3, 4, 4], [3, 3, 4, 4]]
        )

    @given(arrays(np.float64, (1, 2, 3, 3), elements=st.floats(-10, 10)))
    @settings(max_examples=25, deadline=None)
    def test_mean_conserved(self, x):
        out = ops.upsample_nearest(Tensor(x), 2).data
        np.testing.assert_allclose(out.mean(axis=(2, 3)), x.mean(axis=(2, 3)), atol=1e-9)

    def test_factor_below_two(self):
        with pytest.raises(ConfigurationError):
            ops.upsample_nearest(Tensor(np.ones((1, 1, 2, 2))), 1)

    def test_gradcheck(self, rng):
        wts = u(rng, 1, 1, 8, 8)
        res = gradcheck(lambda a: weighted_sum(ops.upsample_nearest(a, 2), wts), [u(rng, 1, 1, 4, 4)], h=H)
        assert res.ok(TOL), res


class TestElementwise:
    def test_softplus_zero(self):
        assert ops.softplus(Tensor(np.array([0.0]))).data[0] == pytest.approx(np.log(2), abs=1e-7)

    def test_softplus_no_overflow(self):
        x = np.array([50.0, 500.0, -500.0])
        out = ops.softplus(Tensor(x)).data
        ref = [float(np.longdouble(v).clip(0) + np.log1p(np.exp(-abs(np.longdouble(v))))) for v in x]
        np.testing.assert_allclose(out, ref, atol=1e-6)
        assert np.isfinite(out).all()

    def test_leaky_relu_negative(self):
        assert ops.leaky_relu(Tensor(np.array([-1.0])), 0.2).data[0] == pytest.approx(-0.2)

    def test_tanh_bounded(self):
        out = ops.tanh(Tensor(np.array([-1e4, 0.0, 1e4]))).data
        np.testing.assert_array_equal(out, [-1.0, 0.0, 1.0])

    @pytest.mark.parametrize(
        "name,fn",
        [
            ("add", lambda a, b: ops.add(a, b)),
            ("sub", lambda a, b: ops.sub(a, b)),
            ("mul", lambda a, b: ops.mul(a, b)),
        ],
    )
    def test_binary_gradcheck(self, rng, name, fn):
        wts = u(rng, 3, 4)
        res = gradcheck(lambda a, b: weighted_sum(fn(a, b), wts), [u(rng, 3, 4), u(rng, 3, 4)], h=H)
        assert res.ok(TOL), (name, res)

    def test_broadcast_gradcheck(self, rng):
        # per-channel bias and per-sample scale
        wts = u(rng, 2, 3, 4, 4)
        fn = lambda x, b, s: weighted_sum(ops.mul(ops.add(x, b), s), wts)  # noqa: E731
        res = gradcheck(fn, [u(rng, 2, 3, 4, 4), u(rng, 1, 3, 1, 1), u(rng, 2, 3, 1, 1)], h=H)
        assert res.ok(TOL), res

    def test_incompatible_broadcast(self):
        with pytest.raises(DimensionError):
            ops.add(Tensor(np.ones((2, 3))), Tensor(np.ones((3, 2))))

    @pytest.mark.parametrize("op", ["tanh", "softplus", "scale"])
    def test_unary_gradcheck(self, rng, op):
        fn = {"tanh": ops.tanh, "softplus": ops.softplus, "scale": lambda t: ops.scale(t, -2.5)}[op]
        wts = u(rng, 4, 5)
        res = gradcheck(lambda a: weighted_sum(fn(a), wts), [u(rng, 4, 5)], h=H)
        assert res.ok(TOL), res

    def test_leaky_relu_gradcheck(self, rng):
        # elements within one step of the kink are excluded: the central
        # difference straddles it there
        wts = u(rng, 6, 6)
        res = gradcheck(lambda a: weighted_sum(ops.leaky_relu(a, 0.2), wts), [u(rng, 6, 6)], h=H, skip=kink_mask(H))
        assert res.ok(TOL), res


class TestReductionsAndShape:
    def test_gradchecks(self, rng):
        w62, w25, w1222, w33, w42, w32, w43 = (
            u(rng, 6, 2), u(rng, 2, 5), u(rng, 1, 2, 2, 2), u(rng, 3, 3), u(rng, 4, 2), u(rng, 3, 2), u(rng, 4, 3)
        )
        cases = [
            (lambda a: ops.mean(ops.mul(a, a)), [u(rng, 3, 4)]),
            (lambda a: ops.sum(ops.mul(ops.sum(a, axis=1, keepdims=True), a)), [u(rng, 3, 4)]),
            (lambda a: weighted_sum(ops.reshape(a, (6, 2)), w62), [u(rng, 3, 4)]),
            (lambda a, b: weighted_sum(ops.concat([a, b], axis=1), w25), [u(rng, 2, 2), u(rng, 2, 3)]),
            (lambda a: weighted_sum(ops.avg_pool2d(a, 2), w1222), [u(rng, 1, 2, 4, 4)]),
            (lambda a: weighted_sum(ops.index_rows(a, [0, 2, 2]), w33), [u(rng, 4, 3)]),
            (lambda a: weighted_sum(ops.index_cols(a, 1, 3), w42), [u(rng, 4, 3)]),
            (lambda a, w, b: weighted_sum(ops.linear(a, w, b), w32), [u(rng, 3, 4), u(rng, 2, 4), u(rng, 2)]),
            (lambda a: ops.sum(ops.logsumexp(a)), [u(rng, 3, 4)]),
            (lambda a: weighted_sum(ops.transpose(a), w43), [u(rng, 3, 4)]),
        ]
        for fn, args in cases:
            res = gradcheck(fn, args, h=H)
            assert res.ok(TOL), res


class TestEmbedding:
    def test_identity_table(self):
        np.testing.assert_array_equal(ops.embedding(Tensor(np.eye(3)), 1).data, [0, 1, 0])

    def test_gradient_is_row_mask(self):
        table = Tensor(np.zeros((4, 3)), requires_grad=True)
        backward(ops.sum(ops.embedding(table, 2)))
        expected = np.zeros((4, 3))
        expected[2] = 1
        np.testing.assert_array_equal(table.grad, expected)

    def test_repeated_lookup_doubles(self, rng):
        table = u(rng, 4, 3)
        fn = lambda t: ops.sum(ops.add(ops.embedding(t, 1), ops.embedding(t, 1)))  # noqa: E731
        res = gradcheck(fn, [table], h=H)
        assert res.ok(TOL)
        t = Tensor(table, requires_grad=True)
        backward(fn(t))
        assert t.grad[1].tolist() == [2.0, 2.0, 2.0]
        assert not t.grad[[0, 2, 3]].any()

    def test_out_of_range(self):
        with pytest.raises(IndexError):
            ops.embedding(Tensor(np.eye(3)), 3)
        with pytest.raises(IndexError):
            ops.embedding(Tensor(np.eye(3)), -1)


class TestBackward:
    def test_sum_gives_ones(self):
        x = Tensor(np.zeros(5), requires_grad=True)
        backward(ops.sum(x))
        np.testing.assert_array_equal(x.grad, np.ones(5))

    def test_square(self):
        x = Tensor(np.array([1.0, 2.0]), requires_grad=True)
        backward(ops.sum(ops.mul(x, x)))
        np.testing.assert_array_equal(x.grad, [2.0, 4.0])

    def test_non_scalar_loss(self):
        x = Tensor(np.ones(3), requires_grad=True)
        with pytest.raises(ContractError):
            backward(ops.scale(x, 2.0))

    def test_frozen_tape(self):
        x = Tensor(np.ones(3), requires_grad=True)
        loss = ops.sum(x)
        with no_grad():
            with pytest.raises(ContractError):
                backward(loss)

    def test_no_grad_records_nothing(self):
        x = Tensor(np.ones(3), requires_grad=True)
        with no_grad():
            y = ops.sum(ops.mul(x, x))
        assert y._node is None and not y.requires_grad

    def test_accumulates_across_calls(self):
        x = Tensor(np.array([1.0, -1.0]), requires_grad=True)
        backward(ops.sum(x))
        backward(ops.sum(ops.scale(x, 3.0)))
        np.testing.assert_array_equal(x.grad, [4.0, 4.0])

    def test_shared_subexpression_visited_once(self):
        x = Tensor(np.array([2.0]), requires_grad=True)
        y = ops.mul(x, x)
        backward(ops.sum(ops.add(y, y)))
        assert x.grad.tolist() == [8.0]

    def test_replay_determinism(self):
        def run():
            rng = np.random.default_rng(5)
            x = Tensor(rng.standard_normal((2, 3, 8, 8)).astype(np.float32), requires_grad=True)
            w = Tensor(rng.standard_normal((4, 3, 3, 3)).astype(np.float32), requires_grad=True)
            y = ops.softplus(ops.conv2d(ops.leaky_relu(x, 0.2), w, pad=1))
            backward(ops.mean(y))
            return y.data, x.grad, w.grad

        a, b = run(), run()
        for p, q in zip(a, b):
            assert p.tobytes() == q.tobytes()

    @given(st.floats(-3, 3), st.floats(-3, 3))
    @settings(max_examples=20, deadline=None)
    def test_linearity(self, a, b):
        rng = np.random.default_rng(1)
        x0 = rng.standard_normal((3, 4)).astype(np.float32)

        def grads(ca, cb):
            x = Tensor(x0.copy(), requires_grad=True)
            l1 = ops.sum(ops.tanh(x))
            l2 = ops.mean(ops.softplus(ops.mul(x, x)))
            backward(ops.add(ops.scale(l1, ca), ops.scale(l2, cb)))
            return x.grad

        g = grads(a, b)
        np.testing.assert_allclose(g, a * grads(1.0, 0.0) + b * grads(0.0, 1.0), atol=1e-5)

    def test_graph_freed_without_gc(self):
        import gc
        import weakref

        gc.disable()
        try:
            x = Tensor(np.ones((4, 4)), requires_grad=True)
            y = ops.tanh(ops.mul(x, x))
            ref = weakref.ref(y)
            backward(ops.sum(y))
            del y
            assert ref() is None
        finally:
            gc.enable()


class TestAdam:
    def test_first_step_moves_by_lr(self):
        p = Parameter("p", np.array([0.0]))
        p.tensor.grad = np.array([1.0], dtype=np.float32)
        adam_step([p], lr=0.1, beta1=0.0, beta2=0.99, eps=1e-8)
        assert p.data[0] == pytest.approx(-0.1, abs=1e-6)
        assert p.grad is None

    def test_zero_gradient_is_noop(self):
        p = Parameter("p", np.array([1.5, -2.0]))
        p.tensor.grad = np.zeros(2, dtype=np.float32)
        adam_step([p], lr=0.1)
        np.testing.assert_array_equal(p.data, [1.5, -2.0])

    def test_quadratic_converges(self):
        p = Parameter("p", np.array([0.0]))
        for _ in range(100):
            loss = ops.sum(ops.mul(ops.sub(p.tensor, 3.0), ops.sub(p.tensor, 3.0)))
            backward(loss)
            adam_step([p], lr=0.1, beta1=0.9, beta2=0.999)
        assert abs(p.data[0] - 3.0) < 0.05

    def test_missing_gradient(self):
        a, b = Parameter("a", np.zeros(1)), Parameter("b", np.zeros(1))
        a.tensor.grad = np.ones(1, dtype=np.float32)
        with pytest.raises(ContractError, match="b"):
            adam_step([a, b], lr=0.1)

    def test_moments_start_at_zero(self):
        p = Parameter("G_l.b4.conv.weight", np.ones((2, 2)))
        assert not p.adam_m.any() and not p.adam_v.any() and p.step_count == 0


class TestCheckpointFormat:
    def test_round_trip(self, tmp_path):
        rng = np.random.default_rng(3)
        recs = {"a.weight": rng.standard_normal((2, 3, 1, 1)).astype(np.float32), "b": np.zeros(0, np.float32)}
        write_records(tmp_path / "x.ckpt", recs)
        back = read_records(tmp_path / "x.ckpt")
        assert list(back) == list(recs)
        for k in recs:
            assert back[k].dtype == np.float32
            assert back[k].tobytes() == recs[k].tobytes()

    def test_layout(self):
        blob = encode_records({"ab": np.array([1.0], np.float32)})
        assert blob[:4] == b"UTLO"
        assert int.from_bytes(blob[4:8], "little") == 1
        # name length, name, rank, dims, data
        assert blob[8:12] == (2).to_bytes(4, "little") and blob[12:14] == b"ab"
        assert blob[14:18] == (1).to_bytes(4, "little")
        assert np.frombuffer(blob[-4:], "<f4")[0] == 1.0

    def test_bad_magic(self):
        blob = bytearray(encode_records({"a": np.ones(2, np.float32)}))
        blob[:4] = b"XXXX"
        with pytest.raises(CheckpointFormatError, match="magic"):
            decode_records(bytes(blob))

    def test_truncated(self):
        blob = encode_records({"a": np.ones(4, np.float32)})
        with pytest.raises(CheckpointFormatError):
            decode_records(blob[:-3])

    @given(st.lists(st.integers(0, 2**32 - 1), max_size=8))
    def test_word_bits_survive(self, words):
        assert f32_to_words(words_to_f32(words)).tolist() == words
