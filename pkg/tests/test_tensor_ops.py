import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from triplenet import tensor as T
from conftest import naive_conv2d


@pytest.fixture(autouse=True)
def finite_checks():
    T.set_finite_checks(True)
    yield
    T.set_finite_checks(False)


class TestConv2d:
    def test_output_shape(self):
        x = T.tensor(np.zeros((1, 3, 32, 32)))
        w = T.tensor(np.zeros((64, 3, 3, 3)))
        assert T.conv2d(x, w, stride=1, pad=1).shape == (1, 64, 32, 32)

    def test_identity_scaled_kernel(self):
        x = T.tensor(np.ones((1, 1, 3, 3)))
        w = T.tensor(np.full((1, 1, 1, 1), 2.0))
        out = T.conv2d(x, w, stride=1, pad=0)
        assert np.array_equal(out.data, np.full((1, 1, 3, 3), 2.0))

    def test_matches_direct_loop_oracle(self):
        rng = np.random.default_rng(3)
        x = rng.standard_normal((2, 4, 8, 8)).astype(np.float32)
        w = rng.standard_normal((5, 4, 3, 3)).astype(np.float32)
        ours = T.conv2d(T.Tensor(x), T.Tensor(w), stride=1, pad=1).data
        oracle = naive_conv2d(x, w, stride=1, pad=1)
        rel = np.abs(ours - oracle).max() / np.abs(oracle).max()
        assert rel < 1e-5

    def test_strided_matches_oracle(self):
        rng = np.random.default_rng(4)
        x = rng.standard_normal((1, 2, 7, 7)).astype(np.float32)
        w = rng.standard_normal((3, 2, 3, 3)).astype(np.float32)
        ours = T.conv2d(T.Tensor(x), T.Tensor(w), stride=2, pad=1).data
        oracle = naive_conv2d(x, w, stride=2, pad=1)
        assert np.abs(ours - oracle).max() / np.abs(oracle).max() < 1e-5

    def test_channel_mismatch_names_both_shapes(self):
        x = T.tensor(np.zeros((1, 3, 8, 8)))
        w = T.tensor(np.zeros((4, 5, 3, 3)))
        with pytest.raises(T.ShapeError, match=r"\(1, 3, 8, 8\).*\(4, 5, 3, 3\)"):
            T.conv2d(x, w)

    def test_rejects_unsupported_kernel_and_stride(self):
        x = T.tensor(np.zeros((1, 1, 8, 8)))
        with pytest.raises(T.ShapeError):
            T.conv2d(x, T.tensor(np.zeros((1, 1, 5, 5))))
        with pytest.raises(T.ShapeError):
            T.conv2d(x, T.tensor(np.zeros((1, 1, 3, 3))), stride=3)

    def test_deterministic(self):
        rng = np.random.default_rng(5)
        x = T.Tensor(rng.standard_normal((2, 3, 9, 9)).astype(np.float32))
        w = T.Tensor(rng.standard_normal((4, 3, 3, 3)).astype(np.float32))
        a = T.conv2d(x, w, pad=1).data
        b = T.conv2d(x, w, pad=1).data
        assert np.array_equal(a, b)


class TestBatchNorm:
    def _bn(self, x, training=True, gamma=None, beta=None):
        c = x.shape[1]
        gamma = gamma if gamma is not None else np.ones(c, np.float32)
        beta = beta if beta is not None else np.zeros(c, np.float32)
        rm, rv = np.zeros(c, np.float32), np.ones(c, np.float32)
        out = T.batchnorm2d(T.Tensor(x), T.Tensor(gamma), T.Tensor(beta),
                            rm, rv, training=training)
        return out.data, rm, rv

    def test_train_mode_normalizes(self):
        rng = np.random.default_rng(0)
        x = (rng.standard_normal((4, 3, 5, 5)) * 3 + 2).astype(np.float32)
        y, _, _ = self._bn(x)
        assert np.abs(y.mean(axis=(0, 2, 3))).max() < 1e-5
        assert np.abs(y.var(axis=(0, 2, 3)) - 1).max() < 1e-4

    def test_zero_variance_channel_plus_shift(self):
        x = np.full((2, 1, 4, 4), 3.0, np.float32)
        y, _, _ = self._bn(x, beta=np.full(1, 5.0, np.float32))
        assert np.allclose(y, 5.0, atol=1e-4)

    def test_running_stats_follow_batch(self):
        rng = np.random.default_rng(1)
        x = (rng.standard_normal((8, 2, 4, 4)) + 4).astype(np.float32)
        _, rm, rv = self._bn(x)
        assert np.allclose(rm, 0.1 * x.mean(axis=(0, 2, 3)), rtol=1e-5)

    def test_eval_mode_uses_running_stats(self):
        x = np.ones((2, 1, 2, 2), np.float32)
        rm, rv = np.full(1, 1.0, np.float32), np.full(1, 4.0, np.float32)
        out = T.batchnorm2d(T.Tensor(x), T.tensor([2.0]), T.tensor([1.0]),
                            rm, rv, training=False)
        # (1 - 1)/sqrt(4 + eps) * 2 + 1 = 1, buffers untouched
        assert np.allclose(out.data, 1.0, atol=1e-5)
        assert rm[0] == 1.0 and rv[0] == 4.0

    def test_rejects_affine_shape_mismatch(self):
        with pytest.raises(T.ShapeError):
            T.batchnorm2d(T.tensor(np.zeros((1, 3, 2, 2))), T.tensor([1.0]),
                          T.tensor([0.0]), np.zeros(3), np.ones(3), True)


class TestActivationsAndPooling:
    def test_relu(self):
        out = T.relu(T.tensor([-1.0, 0.0, 2.0]))
        assert np.array_equal(out.data, [0.0, 0.0, 2.0])

    def test_avgpool_mean(self):
        x = T.tensor([[[[1.0, 2.0], [3.0, 4.0]]]])
        out = T.avgpool2d(x, 2, 2)
        assert out.data.reshape(()) == pytest.approx(2.5)

    def test_maxpool_basic(self):
        x = T.tensor(np.arange(16, dtype=np.float32).reshape(1, 1, 4, 4))
        out = T.maxpool2d(x, 2, 2)
        assert np.array_equal(out.data.reshape(2, 2), [[5, 7], [13, 15]])

    def test_maxpool_padding_never_wins(self):
        x = T.tensor(np.full((1, 1, 4, 4), -7.0))
        out = T.maxpool2d(x, 3, 2, pad=1)
        assert np.all(out.data == -7.0)

    def test_global_avgpool(self):
        x = T.tensor(np.arange(8, dtype=np.float32).reshape(1, 2, 2, 2))
        out = T.global_avgpool(x)
        assert out.shape == (1, 2, 1, 1)
        assert np.array_equal(out.data.reshape(2), [1.5, 5.5])


class TestConcatAdd:
    def test_concat_channel_sum(self):
        xs = [T.tensor(np.zeros((1, c, 4, 4))) for c in (3, 5, 2)]
        assert T.concat_channels(xs).shape == (1, 10, 4, 4)

    def test_concat_spatial_mismatch_rejected(self):
        xs = [T.tensor(np.zeros((1, 3, 4, 4))), T.tensor(np.zeros((1, 3, 5, 4)))]
        with pytest.raises(T.ShapeError):
            T.concat_channels(xs)

    def test_add_shape_mismatch_rejected(self):
        with pytest.raises(T.ShapeError):
            T.add(T.tensor(np.zeros((1, 2, 3, 3))), T.tensor(np.zeros((1, 3, 3, 3))))

    @settings(max_examples=25, deadline=None)
    @given(st.lists(st.integers(min_value=1, max_value=6), min_size=1, max_size=4),
           st.integers(min_value=1, max_value=3))
    def test_concat_then_slice_back_is_identity(self, channels, batch):
        rng = np.random.default_rng(sum(channels))
        xs = [T.Tensor(rng.standard_normal((batch, c, 3, 3)).astype(np.float32))
              for c in channels]
        cat = T.concat_channels(xs).data
        offset = 0
        for x in xs:
            c = x.shape[1]
            assert np.array_equal(cat[:, offset:offset + c], x.data)
            offset += c


class TestLinear:
    def test_matches_numpy(self):
        rng = np.random.default_rng(0)
        x = rng.standard_normal((3, 5)).astype(np.float32)
        w = rng.standard_normal((5, 4)).astype(np.float32)
        b = rng.standard_normal(4).astype(np.float32)
        out = T.linear(T.Tensor(x), T.Tensor(w), T.Tensor(b))
        assert np.allclose(out.data, x @ w + b, atol=1e-6)

    def test_rejects_mismatch(self):
        with pytest.raises(T.ShapeError):
            T.linear(T.tensor(np.zeros((2, 5))), T.tensor(np.zeros((4, 3))),
                     T.tensor(np.zeros(3)))


class TestSoftmaxCrossEntropy:
    def test_uniform_logits(self):
        logits = T.tensor(np.zeros((2, 10)))
        loss = T.softmax_cross_entropy(logits, np.array([3, 9]))
        assert float(loss.data) == pytest.approx(np.log(10.0), abs=1e-6)

    def test_huge_margin_saturates_to_zero(self):
        logits = np.full((2, 5), -50.0, np.float32)
        logits[0, 1] = 50.0
        logits[1, 4] = 50.0
        loss = T.softmax_cross_entropy(T.Tensor(logits), np.array([1, 4]))
        assert float(loss.data) < 1e-6

    def test_out_of_range_label_rejected(self):
        logits = T.tensor(np.zeros((2, 4)))
        with pytest.raises(ValueError):
            T.softmax_cross_entropy(logits, np.array([0, 4]))
        with pytest.raises(ValueError):
            T.softmax_cross_entropy(logits, np.array([-1, 0]))

    def test_gradient_matches_closed_form(self):
        # independent probability routine, written inline
        rng = np.random.default_rng(2)
        logits = rng.standard_normal((4, 10))
        labels = rng.integers(0, 10, 4)
        e = np.exp(logits - logits.max(axis=1, keepdims=True))
        probs = e / e.sum(axis=1, keepdims=True)
        onehot = np.eye(10)[labels]
        expected = (probs - onehot) / 4
        lt = T.Tensor(logits, requires_grad=True)
        tape = T.Tape()
        loss = T.softmax_cross_entropy(lt, labels, tape)
        T.backward(tape, loss)
        assert np.abs(lt.grad - expected).max() < 1e-6

    def test_softmax_rows_sum_to_one(self):
        rng = np.random.default_rng(3)
        sm = T.softmax(rng.standard_normal((6, 11)) * 20)
        assert np.abs(sm.sum(axis=1) - 1.0).max() < 1e-6


def test_finite_check_trips_on_inf():
    x = T.tensor(np.full((1, 1, 2, 2), np.float32(3e38)))
    w = T.tensor(np.full((1, 1, 1, 1), 10.0))
    with pytest.raises(FloatingPointError):
        T.conv2d(x, w)
