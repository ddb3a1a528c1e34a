"""Bootstrap particle filtering and backward-simulation smoothing.

The forward pass is a plain bootstrap filter with systematic resampling at
every step. The backward pass draws whole smoothing trajectories: the index
at the final time comes from the final weights, and each earlier ancestor is
drawn from the exact categorical with probabilities proportional to
filter-weight times transition density into the already-chosen next state.
No rejection sampling; cost is O(N M) per step, arranged trajectory-major so
the heavy arrays stream contiguously.
"""

import csv
from dataclasses import dataclass
from typing import Callable, List

import numpy as np

from . import linalg
from .errors import WeightCollapse
from .functionals import eval_additive
from .gaussian import Gaussian, logpdf
from .rng import stream_rng


@dataclass
class ParticleSet:
    positions: np.ndarray  # (N, d)
    log_weights: np.ndarray  # (N,)

    @property
    def size(self):
        return self.positions.shape[0]

    def normalized_weights(self):
        lw = self.log_weights
        mx = np.max(lw)
        if not np.isfinite(mx):
            raise WeightCollapse("all particle weights are zero")
        w = np.exp(lw - mx)
        return w / w.sum()


@dataclass
class ParticleFilterResult:
    sets: List[ParticleSet]
    loglik: float

    def __len__(self):
        return len(self.sets)


@dataclass
class SmoothingSample:
    trajectories: np.ndarray  # (M, n + 1, d)

    @property
    def n_draws(self):
        return self.trajectories.shape[0]


@dataclass
class ParticleModel:
    """Samplers and densities a particle smoother needs.

    ``emission_logpdf(x, y)`` must accept a batch of states (N, d).
    ``backward_logweights`` is an optional fused kernel for the smoother's
    inner loop: given particle positions (N, d), a per-particle additive bias
    (N,), and chosen next states (M, d), it returns the (M, N) table of
    unnormalized log weights up to a row constant.
    """

    dim: int
    prior_sample: Callable
    transition_sample: Callable
    transition_logpdf: Callable
    emission_logpdf: Callable
    backward_logweights: Callable = None

    @classmethod
    def linear_gaussian(cls, params):
        base = cls.linear_gaussian_dynamics(params.dynamics)
        b = np.asarray(params.b, dtype=float)
        emis = _CenteredGaussian(params.r)

        def emission_logpdf(x, y):
            return emis(y[None, :] - x @ b.T)

        base.emission_logpdf = emission_logpdf
        return base

    @classmethod
    def nonlinear_emission(cls, dynamics, emission):
        base = cls.linear_gaussian_dynamics(dynamics)
        emis = _CenteredGaussian(emission.r)

        def emission_logpdf(x, y):
            return emis(y[None, :] - np.asarray(emission.mean(x), dtype=float))

        base.emission_logpdf = emission_logpdf
        return base

    @classmethod
    def linear_gaussian_dynamics(cls, dynamics):
        d = np.asarray(dynamics.a0).shape[0]
        l0 = linalg.cholesky(np.asarray(dynamics.q0, dtype=float))
        lq = linalg.cholesky(np.asarray(dynamics.q, dtype=float))
        a = np.asarray(dynamics.a, dtype=float)
        a0 = np.asarray(dynamics.a0, dtype=float)
        trans = _CenteredGaussian(dynamics.q)

        def prior_sample(rng, n):
            return a0 + rng.standard_normal((n, d)) @ l0.T

        def transition_sample(rng, x):
            return x @ a.T + rng.standard_normal(x.shape) @ lq.T

        def transition_logpdf(x, x_next):
            return trans(x_next - x @ a.T)

        backward_logweights = None
        if d == 1:
            a_scalar = float(a[0, 0])
            half_prec = 0.5 / float(np.asarray(dynamics.q)[0, 0])

            def backward_logweights(positions, bias, next_states):
                # logw[j, i] = bias_i - (t_j - a x_i)^2 / (2 q), row consts dropped
                centers = a_scalar * positions[:, 0]
                dev = next_states - centers[None, :]  # (M, 1) - (1, N) -> (M, N)
                dev *= dev
                dev *= -half_prec
                dev += bias[None, :]
                return dev

        return cls(d, prior_sample, transition_sample, transition_logpdf,
                   lambda x, y: None, backward_logweights)


class _CenteredGaussian:
    """Batched log density of N(0, cov); whitening factor precomputed once.

    The scalar case skips the stacked matmul entirely, which matters when the
    backward pass streams (M, N) tables.
    """

    def __init__(self, cov):
        cov = np.asarray(cov, dtype=float)
        lower = linalg.cholesky(cov)
        d = cov.shape[0]
        self._dim = d
        self._white_t = np.linalg.inv(lower).T
        self._inv_var = 1.0 / cov[0, 0] if d == 1 else None
        self._const = linalg.spd_logdet(cov) + d * np.log(2.0 * np.pi)

    def __call__(self, dev):
        if self._dim == 1:
            flat = dev[..., 0]
            quad = flat * flat
            quad *= self._inv_var
        else:
            white = dev @ self._white_t
            quad = np.einsum("...d,...d->...", white, white)
        quad += self._const
        quad *= -0.5
        return quad


def systematic_resample(weights, u):
    """Systematic resampling: one uniform, N evenly spaced pointers."""
    n = weights.shape[0]
    cumulative = np.cumsum(weights)
    cumulative[-1] = 1.0
    pointers = (u + np.arange(n)) / n
    return np.searchsorted(cumulative, pointers)


def bootstrap_filter(model, y, n_particles, seed, stream=()):
    """Bootstrap filter with systematic resampling before every propagation.

    Returns the weighted particle sets for k = 0..n and the standard
    log-likelihood estimate sum_k log mean(exp(new weights)).
    """
    y = np.asarray(y, dtype=float)
    if n_particles < 2:
        raise WeightCollapse("need at least two particles")
    rng = stream_rng(seed, *stream)
    sets = []
    loglik = 0.0
    x = model.prior_sample(rng, n_particles)
    for k in range(y.shape[0]):
        if k > 0:
            prev = sets[-1]
            idx = systematic_resample(prev.normalized_weights(), rng.uniform())
            x = model.transition_sample(rng, prev.positions[idx])
        lw = model.emission_logpdf(x, y[k])
        mx = np.max(lw)
        if not np.isfinite(mx):
            raise WeightCollapse(f"zero likelihood everywhere at step {k}")
        loglik += mx + np.log(np.mean(np.exp(lw - mx)))
        sets.append(ParticleSet(x, lw))
    return ParticleFilterResult(sets, float(loglik))


def ffbsi_sample(model, filter_result, n_draws, seed, stream=()):
    """Backward-simulation smoothing trajectories from a filter run.

    Exact categorical ancestor draws; the (M, N) weight table per step is
    built trajectory-major so cumulative sums run along contiguous rows.
    Row-constant terms of the log weights are dropped (they cancel in the
    normalized categorical), and filter log-weights are max-shifted once per
    step so the exponentials stay in range without a per-row pass.
    """
    rng = stream_rng(seed, *stream)
    sets = filter_result.sets
    n = len(sets) - 1
    d = model.dim
    trajs = np.empty((n_draws, n + 1, d))
    final_w = sets[n].normalized_weights()
    idx = np.searchsorted(np.cumsum(final_w), rng.uniform(size=n_draws))
    idx = np.minimum(idx, final_w.shape[0] - 1)
    trajs[:, n, :] = sets[n].positions[idx]
    for k in range(n - 1, -1, -1):
        cur = sets[k]
        shift = np.max(cur.log_weights)
        if not np.isfinite(shift):
            raise WeightCollapse(f"filter weights degenerate at step {k}")
        bias = cur.log_weights - shift
        next_states = np.ascontiguousarray(trajs[:, k + 1, :])
        if model.backward_logweights is not None:
            logw = model.backward_logweights(cur.positions, bias, next_states)
        else:
            logw = model.transition_logpdf(
                cur.positions[None, :, :], next_states[:, None, :]
            )
            logw += bias[None, :]
        np.exp(logw, out=logw)
        cum = np.cumsum(logw, axis=1, out=logw)
        totals = cum[:, -1]
        if np.any(totals <= 0.0) or not np.all(np.isfinite(totals)):
            raise WeightCollapse(f"backward weights degenerate at step {k}")
        u = rng.uniform(size=n_draws) * totals
        idx = np.empty(n_draws, dtype=np.intp)
        for j in range(n_draws):
            idx[j] = np.searchsorted(cum[j], u[j])
        np.minimum(idx, cur.size - 1, out=idx)
        trajs[:, k, :] = cur.positions[idx]
    return SmoothingSample(trajs)


def additive_estimate(sample, f):
    """Trajectory-wise additive values: (sample mean, standard error).

    Uses the functional's batched term when it broadcasts over a leading
    trajectory axis; falls back to per-trajectory evaluation otherwise.
    """
    trajs = sample.trajectories
    m, steps, _ = trajs.shape
    try:
        vals = np.zeros((m, f.dim))
        for k in range(steps - 1):
            term = np.asarray(f.term(k, trajs[:, k], trajs[:, k + 1]), dtype=float)
            vals += term.reshape(m, f.dim)
    except Exception:
        vals = np.stack([eval_additive(t, f) for t in trajs])
    mean = vals.mean(axis=0)
    stderr = vals.std(axis=0, ddof=1) / np.sqrt(m) if m > 1 else np.zeros_like(mean)
    return mean, stderr


def marginal_moments(sample):
    """Per-time mean and variance of the smoothing draws: (n + 1, d) each."""
    mean = sample.trajectories.mean(axis=0)
    var = sample.trajectories.var(axis=0, ddof=1)
    return mean, var


def save_smoothing_sample(sample, path):
    """CSV rows (trajectory id, k, components) for audit."""
    m, steps, d = sample.trajectories.shape
    header = ["trajectory", "k"] + [f"x_{i}" for i in range(d)]
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(header)
        for j in range(m):
            for k in range(steps):
                writer.writerow([str(j), str(k)] + [f"{v:.17g}" for v in sample.trajectories[j, k]])
