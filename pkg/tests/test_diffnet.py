import numpy as np
import pytest

from artifactqc import errors
from artifactqc.diffnet import (
    GraphDef,
    ParamStore,
    adam_step,
    backward,
    forward,
    grad_check,
)
from artifactqc.diffnet import ops as diffnet_ops


def _naive_conv2d(x, w, b, stride, pad):
    """Loop-based convolution oracle, independent of the im2col path."""
    bsz, cin, h, wid = x.shape
    cout, _, kh, kw = w.shape
    xp = np.pad(x, ((0, 0), (0, 0), (pad, pad), (pad, pad)))
    ho = (h + 2 * pad - kh) // stride + 1
    wo = (wid + 2 * pad - kw) // stride + 1
    y = np.zeros((bsz, cout, ho, wo))
    for n in range(bsz):
        for o in range(cout):
            for i in range(ho):
                for j in range(wo):
                    patch = xp[n, :, i * stride:i * stride + kh, j * stride:j * stride + kw]
                    y[n, o, i, j] = (patch * w[o]).sum() + b[o]
    return y


class TestForward:
    def test_dense_identity(self):
        params = ParamStore()
        params.add("w", np.eye(3))
        params.add("b", np.zeros(3))
        g = GraphDef(inputs=["x"], params=["w", "b"])
        g.dense("x", "w", "b")
        x = np.array([[1.0, -2.0, 3.0]])
        out, _ = forward(g, [x], params)
        assert np.array_equal(out, x)

    def test_relu(self):
        g = GraphDef(inputs=["x"])
        g.relu("x")
        out, _ = forward(g, [np.array([-1.0, 2.0])], ParamStore())
        assert np.array_equal(out, [0.0, 2.0])

    def test_conv_averaging_kernel_constant_interior(self):
        params = ParamStore()
        params.add("w", np.full((1, 1, 3, 3), 1.0 / 9.0))
        params.add("b", np.zeros(1))
        g = GraphDef(inputs=["x"], params=["w", "b"])
        g.conv2d("x", "w", "b", stride=1, pad=0)
        x = np.full((1, 1, 8, 8), 5.0)
        out, _ = forward(g, [x], params)
        np.testing.assert_allclose(out, 5.0, rtol=1e-12)

    @pytest.mark.parametrize("stride,pad", [(1, 0), (1, 1), (2, 1), (2, 0)])
    def test_conv_matches_naive_oracle(self, rng, stride, pad):
        x = rng.standard_normal((2, 3, 7, 6))
        w = rng.standard_normal((4, 3, 3, 3))
        b = rng.standard_normal(4)
        params = ParamStore()
        params.add("w", w)
        params.add("b", b)
        g = GraphDef(inputs=["x"], params=["w", "b"])
        g.conv2d("x", "w", "b", stride=stride, pad=pad)
        out, _ = forward(g, [x], params)
        np.testing.assert_allclose(out, _naive_conv2d(x, w, b, stride, pad), atol=1e-12)

    def test_unknown_reference_rejected(self):
        g = GraphDef(inputs=["x"])
        with pytest.raises(errors.UnknownNode):
            g.relu("y")

    def test_unknown_op_rejected(self):
        g = GraphDef(inputs=["x"])
        with pytest.raises(errors.UnknownNode):
            g.add("transmogrify", "x")

    def test_shape_mismatch(self):
        params = ParamStore()
        params.add("w", np.eye(3))
        params.add("b", np.zeros(3))
        g = GraphDef(inputs=["x"], params=["w", "b"])
        g.dense("x", "w", "b")
        with pytest.raises(errors.ShapeMismatch):
            forward(g, [np.ones((1, 4))], params)

    def test_deterministic_bitwise(self, rng):
        params = ParamStore()
        params.add("w", rng.standard_normal((4, 1, 3, 3)))
        params.add("b", rng.standard_normal(4))
        g = GraphDef(inputs=["x"], params=["w", "b"])
        g.relu(g.conv2d("x", "w", "b", stride=2, pad=1))
        x = rng.standard_normal((2, 1, 8, 8))
        a, _ = forward(g, [x], params)
        b_, _ = forward(g, [x], params)
        assert np.array_equal(a, b_)


class TestBackward:
    def test_grad_of_sum_is_ones(self):
        g = GraphDef(inputs=["x"])
        g.sum_("x")
        x = np.arange(6.0).reshape(2, 3)
        _, tape = forward(g, [x], ParamStore())
        backward(tape, 1.0)
        assert np.array_equal(tape.grad("x"), np.ones((2, 3)))

    def test_dense_weight_grad_is_outer_product(self, rng):
        # linear-layer calculus: dL/dW = g^T x for y = x W^T
        x = rng.standard_normal((1, 3))
        gout = rng.standard_normal((1, 2))
        params = ParamStore()
        params.add("w", rng.standard_normal((2, 3)))
        params.add("b", np.zeros(2))
        g = GraphDef(inputs=["x"], params=["w", "b"])
        g.dense("x", "w", "b")
        _, tape = forward(g, [x], params)
        backward(tape, gout)
        np.testing.assert_allclose(params.grad("w"), np.outer(gout[0], x[0]), atol=1e-12)
        np.testing.assert_allclose(params.grad("b"), gout[0], atol=1e-12)

    def test_out_grad_shape_checked(self, rng):
        g = GraphDef(inputs=["x"])
        g.relu("x")
        _, tape = forward(g, [rng.standard_normal((2, 2))], ParamStore())
        with pytest.raises(errors.ShapeMismatch):
            backward(tape, np.ones(3))

    def test_finite_difference_oracle_mixed_graph(self, rng):
        params = ParamStore()
        params.add("cw", rng.standard_normal((3, 2, 3, 3)) * 0.4)
        params.add("cb", rng.standard_normal(3) * 0.1)
        params.add("dw", rng.standard_normal((2, 3)) * 0.4)
        params.add("db", np.zeros(2))
        g = GraphDef(inputs=["x"], params=["cw", "cb", "dw", "db"])
        h = g.leaky_relu(g.conv2d("x", "cw", "cb", stride=1, pad=1), alpha=0.1)
        h = g.dense(g.gap(h), "dw", "db")
        h = g.concat([h, g.exp(g.affine(h, scale=0.1))], axis=1)
        g.set_output(g.logsumexp(g.sum_(g.mul(h, h), axis=1)))
        x = rng.standard_normal((2, 2, 6, 6))
        report = grad_check(g, [x], params, seed=11)
        assert report.max_rel_error < 1e-4

    def test_input_gradients_match_finite_differences(self, rng):
        g = GraphDef(inputs=["x"])
        g.sum_(g.mul(g.exp(g.affine("x", scale=0.5)), "x"))
        x = rng.standard_normal((3, 2))
        out, tape = forward(g, [x], ParamStore())
        backward(tape, 1.0)
        gx = tape.grad("x")
        h = 1e-6
        for idx in np.ndindex(x.shape):
            xp = x.copy()
            xp[idx] += h
            xm = x.copy()
            xm[idx] -= h
            fd = (forward(g, [xp], ParamStore())[0] - forward(g, [xm], ParamStore())[0]) / (2 * h)
            assert gx[idx] == pytest.approx(float(fd), rel=1e-6, abs=1e-9)


class TestAdam:
    def test_zero_gradients_leave_params_unchanged(self):
        params = ParamStore()
        params.add("w", np.array([1.0, -2.0]))
        adam_step(params, lr=0.1)
        assert np.array_equal(params.value("w"), [1.0, -2.0])

    def test_lr_zero_is_identity(self, rng):
        params = ParamStore()
        params.add("w", rng.standard_normal(4))
        before = params.value("w").copy()
        params.grad("w")[:] = rng.standard_normal(4)
        adam_step(params, lr=0.0)
        assert np.array_equal(params.value("w"), before)

    def test_single_step_hand_oracle(self):
        # scalar parameter, gradient 1, defaults: first-step update is
        # lr * mhat / (sqrt(vhat) + eps) with mhat = vhat = 1
        params = ParamStore()
        params.add("w", np.array([0.5]))
        params.grad("w")[:] = 1.0
        adam_step(params, lr=1e-3)
        expected = 0.5 - 1e-3 * 1.0 / (np.sqrt(1.0) + 1e-8)
        assert params.value("w")[0] == pytest.approx(expected, abs=1e-15)
        assert params.value("w")[0] == pytest.approx(0.5 - 0.001, abs=1e-8)

    def test_gradients_zeroed_after_step(self):
        params = ParamStore()
        params.add("w", np.array([1.0]))
        params.grad("w")[:] = 2.0
        adam_step(params, lr=0.01)
        assert np.array_equal(params.grad("w"), [0.0])

    def test_quadratic_bowl_convergence(self):
        # f(w) = w^2: 500 steps at lr 0.05 from w=1 reach |w| < 0.01
        params = ParamStore()
        params.add("w", np.array([1.0]))
        for _ in range(500):
            params.grad("w")[:] = 2.0 * params.value("w")
            adam_step(params, lr=0.05)
        assert abs(params.value("w")[0]) < 0.01


class TestGradCheck:
    def test_linear_graph_is_exact(self, rng):
        params = ParamStore()
        params.add("w", rng.standard_normal((1, 5)))
        params.add("b", np.zeros(1))
        g = GraphDef(inputs=["x"], params=["w", "b"])
        g.sum_(g.dense("x", "w", "b"))
        report = grad_check(g, [rng.standard_normal((3, 5))], params)
        assert report.max_rel_error < 1e-8

    def test_requires_scalar_output(self, rng):
        g = GraphDef(inputs=["x"])
        g.relu("x")
        with pytest.raises(ValueError):
            grad_check(g, [rng.standard_normal((2, 2))], ParamStore())

    def test_detects_corrupted_backward_rule(self, rng, monkeypatch):
        # mutation oracle: a 2% error in one vjp must trip the check
        fwd, bwd = diffnet_ops.OPS["mul"]

        def broken(node, g, out, aux, a, b):
            grads = bwd(node, g, out, aux, a, b)
            return [grads[0], grads[1] * 1.02]  # corrupt the parameter-side vjp

        params = ParamStore()
        params.add("w", rng.standard_normal(6))
        g = GraphDef(inputs=["x"], params=["w"])
        g.sum_(g.mul("x", "w"))
        x = rng.standard_normal(6)
        clean = grad_check(g, [x], params, seed=2)
        assert clean.max_rel_error < 1e-8
        monkeypatch.setitem(diffnet_ops.OPS, "mul", (fwd, broken))
        corrupted = grad_check(g, [x], params, seed=2)
        assert corrupted.max_rel_error > 1e-4


class TestParamStore:
    def test_save_load_round_trip(self, tmp_path, rng):
        params = ParamStore()
        params.add("alpha", rng.standard_normal((2, 3)))
        params.add("beta.w", rng.standard_normal(5))
        params.add("scalarish", np.array(2.5))
        path = tmp_path / "ck.mqcp"
        params.save(path)
        loaded = ParamStore.load(path)
        assert loaded.names() == params.names()
        for name in params.names():
            assert np.array_equal(loaded.value(name), params.value(name))
        # re-saving reproduces the bytes
        path2 = tmp_path / "ck2.mqcp"
        loaded.save(path2)
        assert path.read_bytes() == path2.read_bytes()

    def test_duplicate_name_rejected(self):
        params = ParamStore()
        params.add("w", np.zeros(2))
        with pytest.raises(ValueError):
            params.add("w", np.zeros(2))

    def test_bad_magic(self, tmp_path):
        path = tmp_path / "junk.mqcp"
        path.write_bytes(b"JUNKJUNKJUNK")
        with pytest.raises(errors.BadMagic):
            ParamStore.load(path)

    def test_truncated_checkpoint(self, tmp_path, rng):
        params = ParamStore()
        params.add("w", rng.standard_normal(8))
        path = tmp_path / "ck.mqcp"
        params.save(path)
        path.write_bytes(path.read_bytes()[:-4])
        with pytest.raises(errors.TruncatedFile):
            ParamStore.load(path)

    def test_grad_shape_checked(self):
        params = ParamStore()
        params.add("w", np.zeros((2, 2)))
        with pytest.raises(errors.ShapeMismatch):
            params.accumulate_grad("w", np.zeros(3))
