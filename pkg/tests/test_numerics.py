"""Gradient and optimizer checks for the array autodiff core."""

import io

import numpy as np
import pytest

from issr import numerics as nm

TOL = 1e-4


def check(fn, *inputs):
    err = nm.grad_check(fn, inputs)
    assert err < TOL, f"max relative gradient error {err}"


def weighted(out, seed=7):
    """Reduce to a scalar with fixed random weights so off-axis Jacobian
    entries are probed."""
    w = nm.constant(np.random.default_rng(seed).normal(size=out.data.shape))
    return nm.tensor_sum(nm.mul(out, w))


class TestOpGradients:
    def setup_method(self):
        self.rng = np.random.default_rng(5)

    def test_add_broadcast(self):
        a = self.rng.normal(size=(3, 4))
        b = self.rng.normal(size=(4,))
        check(lambda x, y: weighted(nm.add(x, y)), a, b)

    def test_mul_broadcast(self):
        a = self.rng.normal(size=(3, 4))
        b = self.rng.normal(size=(3, 1))
        check(lambda x, y: weighted(nm.mul(x, y)), a, b)

    def test_matmul(self):
        a = self.rng.normal(size=(3, 4))
        b = self.rng.normal(size=(4, 2))
        check(lambda x, y: weighted(nm.matmul(x, y)), a, b)

    def test_matmul_rejects_higher_rank(self):
        a = nm.constant(np.zeros((2, 3, 4)))
        b = nm.constant(np.zeros((2, 4, 2)))
        with pytest.raises(ValueError, match="2-D"):
            nm.matmul(a, b)

    def test_transpose(self):
        a = self.rng.normal(size=(3, 4))
        check(lambda x: weighted(nm.transpose(x)), a)

    def test_reshape(self):
        a = self.rng.normal(size=(3, 4))
        check(lambda x: weighted(nm.reshape(x, (2, 6))), a)

    def test_take_accumulates_repeats(self):
        a = self.rng.normal(size=(5, 3))
        idx = np.array([0, 2, 2, 4])
        check(lambda x: weighted(nm.take(x, idx)), a)

    def test_concat(self):
        a = self.rng.normal(size=(2, 3))
        b = self.rng.normal(size=(2, 2))
        check(lambda x, y: weighted(nm.concat([x, y], axis=1)), a, b)

    @pytest.mark.parametrize("axis,keepdims", [(None, False), (0, True), (1, False)])
    def test_sum(self, axis, keepdims):
        a = self.rng.normal(size=(3, 4))
        check(lambda x: weighted(nm.tensor_sum(x, axis=axis, keepdims=keepdims)), a)

    @pytest.mark.parametrize("axis", [None, 0, 1])
    def test_mean(self, axis):
        a = self.rng.normal(size=(3, 4))
        check(lambda x: weighted(nm.tensor_mean(x, axis=axis)), a)

    def test_relu(self):
        # keep inputs away from the kink at zero
        a = self.rng.choice([-1.0, 1.0], size=(3, 4)) * self.rng.uniform(0.2, 1.0, (3, 4))
        check(lambda x: weighted(nm.relu(x)), a)

    def test_tanh(self):
        check(lambda x: weighted(nm.tanh(x)), self.rng.normal(size=(3, 4)))

    def test_sigmoid(self):
        check(lambda x: weighted(nm.sigmoid(x)), self.rng.normal(size=(3, 4)))

    def test_log(self):
        check(lambda x: weighted(nm.log(x)), self.rng.uniform(0.5, 2.0, (3, 4)))

    def test_clip_inside_bounds(self):
        a = self.rng.uniform(0.3, 0.7, (3, 4))
        check(lambda x: weighted(nm.clip(x, 0.1, 0.9)), a)

    def test_softmax(self):
        check(lambda x: weighted(nm.softmax(x, axis=-1)), self.rng.normal(size=(3, 4)))

    def test_affine_batch_and_bias(self):
        w = self.rng.normal(size=(2, 3))
        x = self.rng.normal(size=(4, 3))
        b = self.rng.normal(size=(2,))
        check(lambda W, X, B: weighted(nm.affine(W, X, B)), w, x, b)

    def test_affine_single_vector(self):
        w = self.rng.normal(size=(2, 3))
        x = self.rng.normal(size=(3,))
        check(lambda W, X: weighted(nm.affine(W, X)), w, x)

    def test_mean_pool(self):
        a = self.rng.normal(size=(3,))
        b = self.rng.normal(size=(3,))
        check(lambda x, y: weighted(nm.mean_pool([x, y])), a, b)

    def test_dot(self):
        a = self.rng.normal(size=(4,))
        b = self.rng.normal(size=(4,))
        check(nm.dot, a, b)


class TestForwardOracles:
    def test_softmax_hand_values(self):
        out = nm.softmax(nm.constant(np.log([1.0, 2.0, 4.0])))
        np.testing.assert_allclose(out.data, [1 / 7, 2 / 7, 4 / 7], rtol=1e-12)

    def test_sigmoid_at_zero(self):
        assert nm.sigmoid(nm.constant(np.array(0.0))).data == 0.5

    def test_clip_clamps(self):
        out = nm.clip(nm.constant(np.array([-1.0, 0.5, 2.0])), 0.0, 1.0)
        np.testing.assert_array_equal(out.data, [0.0, 0.5, 1.0])

    def test_take_matches_numpy(self):
        arr = np.arange(12.0).reshape(4, 3)
        idx = np.array([3, 0, 3])
        out = nm.take(nm.constant(arr), idx)
        np.testing.assert_array_equal(out.data, arr[idx])

    def test_unbroadcast_sums_over_expanded_rows(self):
        a = nm.parameter(np.zeros((3, 4)))
        b = nm.parameter(np.zeros(4))
        nm.tensor_sum(nm.add(a, b)).backward()
        np.testing.assert_array_equal(b.grad, np.full(4, 3.0))

    def test_reuse_accumulates_gradient(self):
        x = nm.parameter(np.array([2.0]))
        nm.tensor_sum(nm.add(x, x)).backward()
        np.testing.assert_array_equal(x.grad, [2.0])

    def test_operator_sugar(self):
        a = nm.constant(np.array([1.0, 2.0]))
        b = nm.constant(np.array([3.0, 4.0]))
        np.testing.assert_array_equal((a + b).data, [4.0, 6.0])
        np.testing.assert_array_equal((a - b).data, [-2.0, -2.0])
        np.testing.assert_array_equal((a * b).data, [3.0, 8.0])
        np.testing.assert_array_equal((-a).data, [-1.0, -2.0])
        m = nm.constant(np.eye(2))
        np.testing.assert_array_equal((m @ m).data, np.eye(2))

    def test_activation_dispatch(self):
        x = nm.constant(np.array([-1.0, 1.0]))
        np.testing.assert_array_equal(nm.activation(x, "relu").data, [0.0, 1.0])
        assert nm.activation(x, "identity") is x
        with pytest.raises(ValueError, match="unknown activation"):
            nm.activation(x, "swish")

    def test_assert_finite(self):
        nm.assert_finite(nm.constant(np.ones(3)))
        with pytest.raises(FloatingPointError):
            nm.assert_finite(np.array([1.0, np.inf]))

    def test_parameter_and_constant_flags(self):
        assert nm.parameter(np.ones(2)).requires_grad
        assert not nm.constant(np.ones(2)).requires_grad


class TestAdam:
    def test_first_step_is_signed_learning_rate(self):
        p = np.array([0.0, 0.0])
        g = np.array([0.3, -0.7])
        state = nm.AdamState.initial([p], learning_rate=0.1)
        nm.adam_step([p], [g], state)
        # bias correction makes the first update lr * g / (|g| + eps)
        np.testing.assert_allclose(p, [-0.1, 0.1], rtol=1e-6)
        assert state.step_count == 1

    def test_none_gradient_leaves_parameter_unchanged(self):
        p = np.array([1.5])
        state = nm.AdamState.initial([p], learning_rate=0.1)
        nm.adam_step([p], [None], state)
        np.testing.assert_array_equal(p, [1.5])

    def test_float32_stays_float32(self):
        p = np.ones(3, dtype=np.float32)
        g = np.full(3, 0.5, dtype=np.float32)
        state = nm.AdamState.initial([p], learning_rate=0.01)
        nm.adam_step([p], [g], state)
        assert p.dtype == np.float32

    def test_optimizer_updates_in_place(self):
        x = nm.parameter(np.array([1.0]))
        opt = nm.AdamOptimizer({"x": x}, learning_rate=0.5)
        nm.tensor_sum(nm.mul(x, x)).backward()
        opt.step()
        assert x.data[0] < 1.0
        opt.zero_grad()
        assert x.grad is None

    def test_two_steps_match_hand_rollout(self):
        lr, b1, b2, eps = 0.1, 0.9, 0.999, 1e-8
        p = np.array([1.0])
        state = nm.AdamState.initial([p], lr, b1, b2, eps)
        m = v = 0.0
        x = 1.0
        for t in (1, 2):
            g = 2 * x  # gradient of x^2 evaluated at the current iterate
            nm.adam_step([p], [np.array([g])], state)
            m = b1 * m + (1 - b1) * g
            v = b2 * v + (1 - b2) * g * g
            x -= lr * (m / (1 - b1**t)) / (np.sqrt(v / (1 - b2**t)) + eps)
            np.testing.assert_allclose(p, [x], rtol=1e-12)


class TestTensorIO:
    @pytest.mark.parametrize("dtype", [np.float32, np.float64])
    @pytest.mark.parametrize("shape", [(4,), (2, 3), (2, 1, 3)])
    def test_round_trip(self, dtype, shape, tmp_path):
        arr = np.random.default_rng(0).normal(size=shape).astype(dtype)
        path = tmp_path / "t.bin"
        nm.save_tensor(path, arr)
        back = nm.load_tensor(path)
        assert back.dtype == arr.dtype
        assert back.shape == arr.shape
        np.testing.assert_array_equal(back, arr)

    def test_stream_concatenation(self):
        buf = io.BytesIO()
        a = np.arange(3.0)
        b = np.arange(4.0).reshape(2, 2).astype(np.float32)
        nm.write_array(buf, a)
        nm.write_array(buf, b)
        buf.seek(0)
        np.testing.assert_array_equal(nm.read_array(buf), a)
        np.testing.assert_array_equal(nm.read_array(buf), b)

    def test_bad_magic_rejected(self):
        with pytest.raises(ValueError, match="not a tensor record"):
            nm.read_array(io.BytesIO(b"JUNKxxxx"))

    def test_unsupported_version_rejected(self):
        buf = io.BytesIO()
        nm.write_array(buf, np.zeros(1))
        raw = bytearray(buf.getvalue())
        raw[4] = 2  # bump format version
        with pytest.raises(ValueError, match="version"):
            nm.read_array(io.BytesIO(bytes(raw)))
