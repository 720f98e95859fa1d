import math

import numpy as np
import pytest

from srlgnn import tensor as T


def t(data, grad=False):
    return T.Tensor(np.asarray(data, dtype=np.float64), requires_grad=grad)


class TestForward:
    def test_matmul_identity(self):
        a = t([[1.0, 2.0], [3.0, 4.0]])
        out = T.matmul(a, t(np.eye(2)))
        np.testing.assert_allclose(out.data, [[1, 2], [3, 4]])

    def test_matmul_shape_mismatch_reports_both_shapes(self):
        with pytest.raises(T.ShapeError, match=r"\(2, 3\).*\(2, 2\)"):
            T.matmul(t(np.zeros((2, 3))), t(np.zeros((2, 2))))

    def test_softmax_uniform(self):
        out = T.softmax(t([0.0, 0.0, 0.0]))
        np.testing.assert_allclose(out.data, [1 / 3] * 3)

    def test_softmax_rows_sum_to_one_and_positive(self):
        rng = np.random.default_rng(0)
        out = T.softmax(t(rng.standard_normal((5, 7)) * 10))
        np.testing.assert_allclose(out.data.sum(axis=-1), np.ones(5), atol=1e-6)
        assert (out.data > 0).all()

    def test_softmax_shift_invariance(self):
        x = np.array([0.3, -1.2, 2.0])
        a = T.softmax(t(x)).data
        b = T.softmax(t(x + 42.0)).data
        np.testing.assert_allclose(a, b, atol=1e-12)

    def test_bce_at_zero_logit(self):
        out = T.bce_with_logits(t(0.0), 1.0)
        assert out.item() == pytest.approx(math.log(2), rel=1e-12)

    def test_bce_stable_at_large_logits(self):
        assert T.bce_with_logits(t(500.0), 1.0).item() == pytest.approx(0.0, abs=1e-12)
        assert T.bce_with_logits(t(-500.0), 0.0).item() == pytest.approx(0.0, abs=1e-12)

    def test_nonfinite_raises(self):
        with pytest.raises(T.NonFiniteError):
            T.Tensor(np.array([1.0, np.inf]))

    def test_add_bias_broadcast(self):
        out = T.add(t([[1.0, 2.0], [3.0, 4.0]]), t([10.0, 20.0]))
        np.testing.assert_allclose(out.data, [[11, 22], [13, 24]])

    def test_add_rejects_general_broadcast(self):
        with pytest.raises(T.ShapeError):
            T.add(t(np.zeros((2, 3))), t(np.zeros((2, 1))))

    def test_concat_last_axis(self):
        out = T.concat([t([[1.0], [2.0]]), t([[3.0], [4.0]])])
        np.testing.assert_allclose(out.data, [[1, 3], [2, 4]])

    def test_relu_grad_zero_at_zero(self):
        x = t([[-1.0, 0.0, 2.0]], grad=True)
        with T.Tape() as tape:
            y = T.sum_all(T.relu(x))
            tape.backward(y)
        np.testing.assert_allclose(tape.grad(x), [[0.0, 0.0, 1.0]])


class TestBackward:
    def test_grad_check_sum_of_squares(self):
        rng = np.random.default_rng(1)
        x = t(rng.standard_normal((3, 4)), grad=True)
        err = T.grad_check(lambda v: T.sum_all(T.mul(v, v)), x)
        assert err < 1e-6
        # analytic gradient is 2x
        with T.Tape() as tape:
            tape.backward(T.sum_all(T.mul(x, x)))
        np.testing.assert_allclose(tape.grad(x), 2 * x.data, atol=1e-12)

    def test_reuse_accumulates_both_paths(self):
        # y = sum(x * x) + sum(x): grad = 2x + 1
        rng = np.random.default_rng(2)
        x = t(rng.standard_normal(5), grad=True)
        with T.Tape() as tape:
            y = T.add(T.sum_all(T.mul(x, x)), T.sum_all(x))
            tape.backward(y)
        np.testing.assert_allclose(tape.grad(x), 2 * x.data + 1, atol=1e-12)
        err = T.grad_check(
            lambda v: T.add(T.sum_all(T.mul(v, v)), T.sum_all(v)), x)
        assert err < 1e-6

    def test_untracked_tensors_get_no_grad(self):
        x = t([1.0, 2.0])
        with T.Tape() as tape:
            tape.backward(T.sum_all(T.mul(x, x)))
        assert tape.grad(x) is None

    def test_backward_requires_scalar(self):
        x = t([1.0, 2.0], grad=True)
        with T.Tape() as tape:
            y = T.mul(x, x)
            with pytest.raises(T.ShapeError):
                tape.backward(y)


class TestAdam:
    def test_zero_gradient_leaves_params(self):
        p = {"w": t([1.0, 2.0], grad=True)}
        state = T.AdamState(p, lr=0.1)
        T.adam_step(p, {"w": np.zeros(2)}, state)
        np.testing.assert_allclose(p["w"].data, [1.0, 2.0])

    def test_single_step_hand_computed(self):
        # p=1, g=1, lr=0.1: bias-corrected m_hat = v_hat = 1,
        # so p' = 1 - 0.1 / (1 + eps) ~ 0.9
        p = {"w": t(1.0, grad=True)}
        state = T.AdamState(p, lr=0.1)
        T.adam_step(p, {"w": np.array(1.0)}, state)
        assert p["w"].item() == pytest.approx(0.9, abs=1e-8)

    def test_converges_on_quadratic(self):
        p = {"w": t(0.0, grad=True)}
        state = T.AdamState(p, lr=0.1)
        for _ in range(100):
            g = 2 * (p["w"].data - 3.0)
            T.adam_step(p, {"w": g}, state)
        assert abs(p["w"].item() - 3.0) < 0.05

    def test_deterministic(self):
        def run():
            p = {"w": t([0.5, -0.5], grad=True)}
            state = T.AdamState(p, lr=0.01)
            rng = np.random.default_rng(7)
            for _ in range(50):
                T.adam_step(p, {"w": rng.standard_normal(2)}, state)
            return p["w"].data.copy()

        a, b = run(), run()
        assert (a == b).all()

    def test_shape_mismatch(self):
        p = {"w": t([1.0, 2.0], grad=True)}
        state = T.AdamState(p)
        with pytest.raises(T.ShapeError):
            T.adam_step(p, {"w": np.zeros(3)}, state)


class TestCheckpoint:
    @pytest.mark.parametrize("precision", ["f32", "f64"])
    def test_round_trip(self, tmp_path, precision):
        rng = np.random.default_rng(3)
        dtype = T.DTYPES[precision]
        params = {
            "a.w": T.Tensor(rng.standard_normal((3, 4)).astype(dtype), requires_grad=True),
            "a.b": T.Tensor(rng.standard_normal(4).astype(dtype), requires_grad=True),
            "scalar": T.Tensor(np.asarray(1.25, dtype=dtype), requires_grad=True),
        }
        path = tmp_path / "ckpt.bin"
        T.save_checkpoint(path, params, precision)
        loaded, prec = T.load_checkpoint(path)
        assert prec == precision
        assert list(loaded) == list(params)
        for name in params:
            assert loaded[name].data.dtype == dtype
            np.testing.assert_array_equal(loaded[name].data, params[name].data)

    def test_header_is_json_line(self, tmp_path):
        path = tmp_path / "ckpt.bin"
        T.save_checkpoint(path, {"w": t([1.0], grad=True)}, "f64")
        import json
        header = json.loads(path.read_bytes().split(b"\n", 1)[0])
        assert header["version"] == 1
        assert header["params"] == [{"name": "w", "shape": [1]}]

    def test_truncated_file_rejected(self, tmp_path):
        path = tmp_path / "ckpt.bin"
        T.save_checkpoint(path, {"w": t(np.zeros(8), grad=True)}, "f64")
        raw = path.read_bytes()
        path.write_bytes(raw[:-4])
        with pytest.raises(ValueError, match="truncated"):
            T.load_checkpoint(path)
