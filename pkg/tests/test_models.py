import numpy as np
import pytest

from bvsmooth.models import (
    LatentDynamics,
    LGParams,
    NonlinearEmission,
    Trajectory,
    load_trajectory,
    save_trajectory,
    simulate_lg,
    simulate_nonlinear,
)
from bvsmooth.nets import LayerParams, MLPParams, init_mlp
from bvsmooth.rng import stream_rng


def tiny_noise_params(a=1.0):
    eps = 1e-12
    return LGParams.from_scalars(0.0, eps, a, eps, 1.0, eps)


class TestSimulateLG:
    def test_degenerate_noise_pins_everything_to_zero(self):
        traj = simulate_lg(tiny_noise_params(a=1.0), 50, seed=0)
        assert np.max(np.abs(traj.states)) < 1e-4
        assert np.max(np.abs(traj.observations)) < 1e-4

    def test_same_seed_same_trajectory(self):
        params = LGParams.from_scalars(0.0, 1.0, 0.9, 0.1, 1.0, 0.5)
        t1 = simulate_lg(params, 200, seed=7)
        t2 = simulate_lg(params, 200, seed=7)
        assert np.array_equal(t1.states, t2.states)
        assert np.array_equal(t1.observations, t2.observations)
        t3 = simulate_lg(params, 200, seed=8)
        assert not np.array_equal(t1.states, t3.states)

    def test_streams_are_independent(self):
        params = LGParams.from_scalars(0.0, 1.0, 0.9, 0.1, 1.0, 0.5)
        t1 = simulate_lg(params, 50, seed=7, stream=(0,))
        t2 = simulate_lg(params, 50, seed=7, stream=(1,))
        assert not np.array_equal(t1.states, t2.states)

    def test_zero_transition_kills_autocorrelation(self):
        # A = 0: states are iid, so the empirical lag-1 autocorrelation is a
        # Monte Carlo zero with stderr about 1/sqrt(n)
        params = LGParams.from_scalars(0.0, 1.0, 0.0, 1.0, 1.0, 0.5)
        n = 10_000
        x = simulate_lg(params, n, seed=3).states[:, 0]
        ac = np.corrcoef(x[:-1], x[1:])[0, 1]
        assert abs(ac) < 4.0 / np.sqrt(n)

    def test_long_run_variance(self):
        # stationary variance Q / (1 - A^2) within Monte Carlo error
        a, q = 0.8, 0.36
        params = LGParams.from_scalars(0.0, q / (1 - a * a), a, q, 1.0, 0.5)
        n = 100_000
        x = simulate_lg(params, n, seed=5).states[:, 0]
        target = q / (1 - a * a)
        # variance of the sample variance for a stationary AR(1)
        se = target * np.sqrt(2.0 / n) * np.sqrt((1 + a * a) / (1 - a * a))
        assert abs(x.var() - target) < 4 * se


class TestSimulateNonlinear:
    def test_zero_weight_decoder_is_constant(self):
        dec = MLPParams([
            LayerParams(np.zeros((4, 1)), np.zeros(4)),
            LayerParams(np.zeros((1, 4)), np.array([0.9])),
        ])
        emission = NonlinearEmission(dec, True, np.array([[1e-12]]))
        dyn = LatentDynamics(np.zeros(1), np.eye(1), np.eye(1) * 0.5, np.eye(1) * 0.3)
        traj = simulate_nonlinear(dyn, emission, 30, seed=1)
        np.testing.assert_allclose(traj.observations, np.cos(0.9), atol=1e-5)

    def test_tiny_noise_matches_decoder_exactly(self):
        rng = stream_rng(40)
        dec = init_mlp([1, 8, 1], rng)
        emission = NonlinearEmission(dec, True, np.array([[1e-12]]))
        dyn = LatentDynamics(np.zeros(1), np.eye(1), np.eye(1) * 0.9, np.eye(1) * 0.1)
        traj = simulate_nonlinear(dyn, emission, 40, seed=2)
        h = np.asarray(emission.mean(traj.states))
        np.testing.assert_allclose(traj.observations, h, atol=1e-5)

    def test_emission_noise_is_centered(self):
        rng = stream_rng(41)
        dec = init_mlp([1, 4, 1], rng)
        r = 0.25
        emission = NonlinearEmission(dec, True, np.array([[r]]))
        dyn = LatentDynamics(np.zeros(1), np.eye(1), np.eye(1) * 0.9, np.eye(1) * 0.1)
        n = 10_000
        traj = simulate_nonlinear(dyn, emission, n, seed=3)
        resid = traj.observations - np.asarray(emission.mean(traj.states))
        assert abs(resid.mean()) < 4.0 * np.sqrt(r / n)


class TestTrajectoryCSV:
    def test_roundtrip_is_exact(self, tmp_path):
        params = LGParams.from_scalars(0.0, 1.0, 0.9, 0.1, 1.0, 0.5)
        traj = simulate_lg(params, 40, seed=9)
        path = tmp_path / "traj.csv"
        save_trajectory(traj, path)
        back = load_trajectory(path)
        assert np.array_equal(back.states, traj.states)
        assert np.array_equal(back.observations, traj.observations)

    def test_header_layout(self, tmp_path):
        params = LGParams(
            a0=np.zeros(2), q0=np.eye(2), a=np.eye(2) * 0.5, q=np.eye(2) * 0.2,
            b=np.ones((3, 2)), r=np.eye(3),
        )
        traj = simulate_lg(params, 5, seed=1)
        path = tmp_path / "traj.csv"
        save_trajectory(traj, path)
        header = open(path).readline().strip()
        assert header == "k,x_0,x_1,y_0,y_1,y_2"

    def test_length_mismatch_rejected(self):
        with pytest.raises(Exception):
            Trajectory(np.zeros((3, 1)), np.zeros((4, 1)))
