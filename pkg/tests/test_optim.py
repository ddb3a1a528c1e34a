import numpy as np
import pytest

from bvsmooth import autodiff as ad
from bvsmooth.errors import NonFiniteValue
from bvsmooth.optim import (
    LayoutBuilder,
    OptimizerState,
    ParamVector,
    adam_step,
    constrain_spd,
    load_checkpoint,
    optimizer_step,
    packed_size,
    save_checkpoint,
    sgd_step,
    slice_of,
    unconstrain_spd,
)
from bvsmooth.rng import stream_rng

from helpers import finite_difference_grad, random_spd


class TestParamVector:
    def test_layout_roundtrip(self):
        pv = (
            LayoutBuilder()
            .add("w", np.arange(6.0).reshape(2, 3))
            .add("b", np.array([7.0, 8.0]))
            .pack()
        )
        np.testing.assert_allclose(pv.get("w"), np.arange(6.0).reshape(2, 3))
        np.testing.assert_allclose(pv.get("b"), [7.0, 8.0])
        assert pv.values.shape == (8,)

    def test_slice_of_on_tape(self):
        pv = LayoutBuilder().add("a", np.array([1.0, 2.0])).add("m", np.eye(2)).pack()

        def f(vec):
            a = slice_of(vec, pv, "a")
            m = slice_of(vec, pv, "m")
            return a @ (m @ a)

        value, grad = ad.value_and_grad(f, pv.values)
        assert value == pytest.approx(5.0)
        fd = finite_difference_grad(lambda z: float(ad.value_and_grad(f, z)[0]), pv.values)
        np.testing.assert_allclose(grad, fd, atol=1e-6)


class TestConstrainSPD:
    def test_zero_slice_1d_gives_unit(self):
        out = constrain_spd(np.zeros(1), 1)
        assert out[0, 0] == pytest.approx(1.0)

    def test_zero_slice_2d_gives_identity(self):
        np.testing.assert_allclose(constrain_spd(np.zeros(3), 2), np.eye(2), atol=1e-14)

    def test_roundtrip(self):
        rng = stream_rng(50)
        for d in (1, 2, 3):
            m = random_spd(rng, d)
            packed = unconstrain_spd(m)
            assert packed.shape == (packed_size(d),)
            np.testing.assert_allclose(constrain_spd(packed, d), m, atol=1e-10)

    def test_gradient_matches_finite_differences(self):
        rng = stream_rng(51)
        d = 3
        x0 = rng.standard_normal(packed_size(d)) * 0.4
        v = rng.standard_normal(d)

        def f(x):
            return v @ (constrain_spd(x, d) @ v) + ad.logdet_spd(constrain_spd(x, d))

        _, grad = ad.value_and_grad(f, x0)
        fd = finite_difference_grad(lambda z: float(ad.value_and_grad(f, z)[0]), x0)
        scale = np.maximum(np.abs(fd), 1e-8)
        assert np.max(np.abs(grad - fd) / scale) < 1e-5

    def test_always_positive_definite(self):
        rng = stream_rng(52)
        for _ in range(20):
            packed = rng.standard_normal(packed_size(3)) * 3.0
            out = constrain_spd(packed, 3)
            assert np.linalg.eigvalsh(out).min() > 0.0


class TestOptimizers:
    def test_zero_gradient_keeps_params(self):
        pv = ParamVector(np.array([1.0, -2.0]), {"x": (0, (2,))})
        state = OptimizerState.adam(2, learning_rate=0.1)
        state, out = adam_step(state, pv, np.zeros(2))
        np.testing.assert_allclose(out.values, pv.values)
        assert state.step == 1

    def test_first_step_magnitude_is_learning_rate(self):
        pv = ParamVector(np.zeros(3), {"x": (0, (3,))})
        state = OptimizerState.adam(3, learning_rate=0.05)
        grad = np.array([3.0, -1.0, 0.25])
        _, out = adam_step(state, pv, grad)
        # bias-corrected first step moves lr * sign(grad) up to eps rounding
        np.testing.assert_allclose(out.values, 0.05 * np.sign(grad), rtol=1e-6)

    def test_ascent_on_concave_objective(self):
        # maximize -(x - 2)^2 from 0: standard scalar optimization check
        pv = ParamVector(np.zeros(1), {"x": (0, (1,))})
        state = OptimizerState.adam(1, learning_rate=0.1)
        for _ in range(100):
            grad = -2.0 * (pv.values - 2.0)
            state, pv = adam_step(state, pv, grad)
        assert abs(pv.values[0] - 2.0) < 0.05

    def test_sgd_step(self):
        pv = ParamVector(np.zeros(2), {"x": (0, (2,))})
        state = OptimizerState.sgd(2, learning_rate=0.5)
        state, out = sgd_step(state, pv, np.array([1.0, -2.0]))
        np.testing.assert_allclose(out.values, [0.5, -1.0])

    def test_lr_decay_shrinks_steps(self):
        pv = ParamVector(np.zeros(1), {"x": (0, (1,))})
        state = OptimizerState.adam(1, learning_rate=0.1, lr_decay=0.5)
        state, p1 = adam_step(state, pv, np.array([1.0]))
        step1 = abs(p1.values[0])
        state, p2 = adam_step(state, p1, np.array([1.0]))
        step2 = abs(p2.values[0] - p1.values[0])
        assert step2 < step1

    def test_nonfinite_gradient_raises(self):
        pv = ParamVector(np.zeros(1), {"x": (0, (1,))})
        state = OptimizerState.adam(1)
        with pytest.raises(NonFiniteValue):
            adam_step(state, pv, np.array([np.nan]))

    def test_clipping(self):
        pv = ParamVector(np.zeros(2), {"x": (0, (2,))})
        state = OptimizerState.sgd(2, learning_rate=1.0, clip_norm=1.0)
        _, out = sgd_step(state, pv, np.array([30.0, 40.0]))
        assert np.linalg.norm(out.values) == pytest.approx(1.0)


class TestCheckpoints:
    def test_roundtrip(self, tmp_path):
        rng = stream_rng(53)
        pv = LayoutBuilder().add("w", rng.standard_normal((2, 2))).add("b", rng.standard_normal(2)).pack()
        state = OptimizerState.adam(6, learning_rate=0.01, clip_norm=10.0, lr_decay=0.99)
        state = adam_step(state, pv, rng.standard_normal(6))[0]
        path = tmp_path / "ckpt.json"
        save_checkpoint(path, pv, state)
        pv2, state2 = load_checkpoint(path)
        assert np.array_equal(pv2.values, pv.values)
        assert pv2.layout == pv.layout
        assert np.array_equal(state2.m, state.m)
        assert np.array_equal(state2.v, state.v)
        assert state2.step == state.step
        assert state2.lr_decay == state.lr_decay

    def test_optimizer_step_dispatch(self):
        pv = ParamVector(np.zeros(1), {"x": (0, (1,))})
        for method in ("adam", "sgd"):
            state = OptimizerState.adam(1) if method == "adam" else OptimizerState.sgd(1)
            out_state, _ = optimizer_step(state, pv, np.ones(1))
            assert out_state.step == 1
