"""State-space model definitions and trajectory simulation.

Two generative families live here: the fully linear-Gaussian model, and the
variant whose emission mean is a nonlinear decoder (tanh MLP, optionally
wrapped in cos to make it noninjective) while prior and transitions stay
linear.
"""

import csv
from dataclasses import dataclass
from typing import Any

import numpy as np

from . import autodiff as ad
from . import linalg
from .errors import DimMismatch, LengthMismatch
from .nets import MLPParams, mlp_forward
from .rng import stream_rng


@dataclass
class LatentDynamics:
    """Gaussian prior N(a0, q0) and transition x' ~ N(a x, q)."""

    a0: Any
    q0: Any
    a: Any
    q: Any

    @property
    def dim(self):
        return np.asarray(self.a0).shape[0] if not hasattr(self.a0, "value") else self.a0.value.shape[0]


@dataclass
class LGParams:
    """Linear-Gaussian model (a0, q0, a, q, b, r); also the variational
    parameter tuple when a second model of the same form plays that role."""

    a0: Any
    q0: Any
    a: Any
    q: Any
    b: Any
    r: Any

    @property
    def dim_state(self):
        return _arr(self.a0).shape[0]

    @property
    def dim_obs(self):
        return _arr(self.b).shape[0]

    @property
    def dynamics(self):
        return LatentDynamics(self.a0, self.q0, self.a, self.q)

    def validate(self):
        d, m = self.dim_state, self.dim_obs
        if _arr(self.a).shape != (d, d) or _arr(self.b).shape != (m, d):
            raise DimMismatch("system matrices do not chain with a0")
        for name, mat in (("q0", self.q0), ("q", self.q), ("r", self.r)):
            linalg.check_spd(_arr(mat), name)
        return self

    @classmethod
    def from_scalars(cls, a0, q0, a, q, b, r):
        """Convenience constructor for the d = m = 1 case."""
        return cls(
            np.array([float(a0)]),
            np.array([[float(q0)]]),
            np.array([[float(a)]]),
            np.array([[float(q)]]),
            np.array([[float(b)]]),
            np.array([[float(r)]]),
        )


def _arr(x):
    return x.value if hasattr(x, "value") else np.asarray(x, dtype=float)


@dataclass
class NonlinearEmission:
    """Observation y ~ N(h(x), r) with h = decoder MLP, optionally cos-wrapped.

    ``apply_cos`` makes the emission mean noninjective on purpose.
    """

    decoder: MLPParams
    apply_cos: bool
    r: Any

    @property
    def dim_obs(self):
        return _arr(self.r).shape[0]

    def mean(self, x):
        """Emission mean h(x); accepts a single state (d,) or a batch (B, d)."""
        out = mlp_forward(self.decoder, x)
        if self.apply_cos:
            out = ad.cos(out)
        return out


@dataclass
class Trajectory:
    """Simulated states x_{0:n} and observations y_{0:n}."""

    states: np.ndarray  # (n + 1, d)
    observations: np.ndarray  # (n + 1, m)

    def __post_init__(self):
        self.states = np.asarray(self.states, dtype=float)
        self.observations = np.asarray(self.observations, dtype=float)
        if self.states.shape[0] != self.observations.shape[0]:
            raise LengthMismatch("states and observations must have equal length")
        if not (np.all(np.isfinite(self.states)) and np.all(np.isfinite(self.observations))):
            raise ValueError("trajectory contains non-finite values")

    def __len__(self):
        return self.states.shape[0]


def simulate_lg(params, n, seed, stream=()):
    """Simulate n + 1 steps of the linear-Gaussian model; deterministic in seed."""
    rng = stream_rng(seed, *stream)
    d, m = params.dim_state, params.dim_obs
    l0 = linalg.cholesky(_arr(params.q0))
    lq = linalg.cholesky(_arr(params.q))
    lr = linalg.cholesky(_arr(params.r))
    a, b = _arr(params.a), _arr(params.b)
    states = np.empty((n + 1, d))
    obs = np.empty((n + 1, m))
    x = _arr(params.a0) + l0 @ rng.standard_normal(d)
    for k in range(n + 1):
        states[k] = x
        obs[k] = b @ x + lr @ rng.standard_normal(m)
        x = a @ x + lq @ rng.standard_normal(d)
    return Trajectory(states, obs)


def simulate_nonlinear(dynamics, emission, n, seed, stream=()):
    """Simulate with linear latent dynamics and the nonlinear emission."""
    rng = stream_rng(seed, *stream)
    d = _arr(dynamics.a0).shape[0]
    m = emission.dim_obs
    l0 = linalg.cholesky(_arr(dynamics.q0))
    lq = linalg.cholesky(_arr(dynamics.q))
    lr = linalg.cholesky(_arr(emission.r))
    a = _arr(dynamics.a)
    states = np.empty((n + 1, d))
    obs = np.empty((n + 1, m))
    x = _arr(dynamics.a0) + l0 @ rng.standard_normal(d)
    for k in range(n + 1):
        states[k] = x
        obs[k] = emission.mean(x) + lr @ rng.standard_normal(m)
        x = a @ x + lq @ rng.standard_normal(d)
    return Trajectory(states, obs)


# ---------------------------------------------------------------------------
# CSV serialization: header k,x_0..x_{d-1},y_0..y_{m-1}, 17 significant digits
# ---------------------------------------------------------------------------

def save_trajectory(traj, path):
    d = traj.states.shape[1]
    m = traj.observations.shape[1]
    header = ["k"] + [f"x_{i}" for i in range(d)] + [f"y_{j}" for j in range(m)]
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(header)
        for k in range(len(traj)):
            row = [str(k)]
            row += [f"{v:.17g}" for v in traj.states[k]]
            row += [f"{v:.17g}" for v in traj.observations[k]]
            writer.writerow(row)


def load_trajectory(path):
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        d = sum(1 for h in header if h.startswith("x_"))
        m = sum(1 for h in header if h.startswith("y_"))
        states, obs = [], []
        for row in reader:
            vals = [float(v) for v in row[1:]]
            states.append(vals[:d])
            obs.append(vals[d : d + m])
    return Trajectory(np.array(states), np.array(obs))
