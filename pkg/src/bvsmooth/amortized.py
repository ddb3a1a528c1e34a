"""Amortized variational recursions for the nonlinear-emission model.

One shared set of networks produces every per-step variational parameter.
The recursion mirrors a Kalman pass: an affine predict step under learned
linear latent dynamics, then a measurement update that is either

* ``johnson``: conjugation of the predictive with a Gaussian likelihood
  approximation whose natural parameters an encoder reads off y_k alone, or
* ``gated``: a learned update network that sees the predictive parameters
  together with y_k, mixed with the predictive through a forget gate in
  (mean, pre-constraint variance) space so positive definiteness survives
  any gate value.

Backward kernels come from conjugating the learned transition with the
filtered law one step earlier, exactly as in the linear case, so the result
is a standard backward family and every downstream tool applies unchanged.

The Monte Carlo ELBO keeps every Gaussian cross term closed-form and samples
only the emission term, with reparameterized noise drawn outside the tape.
"""

from typing import Optional

import numpy as np

from . import autodiff as ad
from .errors import UnsupportedPrimitive
from .gaussian import Gaussian, NaturalGaussian, from_natural, natural_product, to_natural
from .kalman import backward_kernel_from, smoother_pass
from .nets import gate_forward, mlp_forward
from .rng import stream_rng
from .variational import (
    BackwardVariational,
    expected_state_logjoint,
    family_entropy,
)

MODE_JOHNSON = "johnson"
MODE_GATED = "gated"


def _dim(x):
    return (x.value if isinstance(x, ad.Var) else np.asarray(x)).shape[0]


def _diag_embed(vec, d):
    if d == 1:
        return ad.reshape(vec, (1, 1))
    return ad.scatter(vec, np.arange(d) * (d + 1), (d, d))


def _diag_of(mat, d):
    if d == 1:
        return ad.reshape(mat, (1,))
    return ad.take(mat, (np.arange(d), np.arange(d)))


def softplus_inv(x):
    """Inverse softplus, elementwise and tape-generic."""
    return x + ad.log(1.0 - ad.exp(-1.0 * x))


def encode_eta(net, y):
    """Encoder output as natural parameters with eta2 = -softplus(raw) < 0.

    The net's output splits in half: first the linear channel, then the raw
    (pre-constraint) precision channel, diagonal by construction.
    """
    out = mlp_forward(net, y)
    d = net.out_dim // 2
    eta1 = ad.take(out, slice(0, d))
    raw = ad.take(out, slice(d, 2 * d))
    eta2 = _diag_embed(-1.0 * ad.softplus(raw), d)
    return NaturalGaussian(eta1, eta2)


def predict_step(prev, dynamics):
    """Affine propagation through the learned transition."""
    a, q = dynamics.a, dynamics.q
    cov = a @ prev.cov @ ad.transpose(a) + q
    return Gaussian(a @ prev.mean, 0.5 * (cov + ad.transpose(cov)))


def conjugate_update(u, encoded):
    """Measurement update by Gaussian conjugation in natural parameters."""
    return from_natural(natural_product(to_natural(u), encoded))


def _features(u, y):
    d = _dim(u.mean)
    return ad.concat([u.mean, ad.log(_diag_of(u.cov, d)), y])


def gated_update(u, y, update_net, gate):
    """Learned update r(u_k, y_k) with a forget gate.

    Both the predictive and the net output live as (mean, pre-constraint
    variance) vectors; the gate takes a convex combination coordinate-wise
    and the variance channel is re-constrained by softplus afterwards.
    """
    d = _dim(u.mean)
    feats = _features(u, y)
    raw = mlp_forward(update_net, feats)
    s = gate_forward(gate, feats)
    u_params = ad.concat([u.mean, softplus_inv(_diag_of(u.cov, d))])
    mixed = s * u_params + (1.0 - s) * raw
    mean = ad.take(mixed, slice(0, d))
    var = ad.softplus(ad.take(mixed, slice(d, 2 * d)))
    return Gaussian(mean, _diag_embed(var, d))


def backward_from_dynamics(q_prev, dynamics):
    """Backward kernel of x_{k-1} | x_k from the filtered law at k-1 and the
    learned transition; plain two-Gaussian conjugation."""
    return backward_kernel_from(q_prev, dynamics.a, dynamics.q)


def amortized_family(dynamics, y, mode, encoder=None, update_net=None, gate=None):
    """Run the filtering-style recursion over a sequence; returns the family.

    ``stepwise`` holds the per-step filtered laws; kernels attach each new
    step to the previous one, so any prefix of the output is itself a valid
    family (the construction is online).
    """
    y = np.asarray(y, dtype=float)
    q_list = []
    kernels = []
    for k in range(y.shape[0]):
        if k == 0:
            u = Gaussian(dynamics.a0, dynamics.q0)
        else:
            prev = q_list[-1]
            kernels.append(backward_from_dynamics(prev, dynamics))
            u = predict_step(prev, dynamics)
        if mode == MODE_JOHNSON:
            q_k = conjugate_update(u, encode_eta(encoder, y[k]))
        elif mode == MODE_GATED:
            q_k = gated_update(u, y[k], update_net, gate)
        else:
            raise ValueError(f"unknown mode {mode!r}")
        q_list.append(q_k)
    return BackwardVariational(q_list[-1], kernels, stepwise=q_list)


def prefix_family(fam, n):
    """The family over x_{0:n} induced by truncating an online run."""
    return BackwardVariational(fam.stepwise[n], fam.kernels[:n], stepwise=fam.stepwise[: n + 1])


def sample_mc_noise(n_steps, n_samples, seed, stream=()):
    """Standard-normal reparameterization noise, (n_steps, n_samples)."""
    rng = stream_rng(seed, *stream)
    return rng.standard_normal((n_steps, n_samples))


def mc_elbo_nonlinear(dynamics, emission, fam, y, noise):
    """ELBO with closed-form Gaussian terms and a sampled emission term.

    ``dynamics`` is the data model's latent part, ``emission`` its decoder
    head; ``fam`` the variational family. ``noise`` must be standard normal
    of shape (n + 1, n_samples): the estimator is deterministic given it.
    Scalar latent states only (the decoder's sampling path needs a matrix
    square root otherwise).
    """
    y = np.asarray(y, dtype=float)
    if _dim(fam.terminal.mean) != 1:
        raise UnsupportedPrimitive("sampled emission term supports 1-D latent states only")
    marginals, pairwise = smoother_pass(fam.terminal, fam.kernels)
    total = expected_state_logjoint(dynamics, marginals, pairwise)
    total = total + family_entropy(fam)

    r = np.asarray(emission.r, dtype=float)
    r_inv = np.linalg.inv(r)
    m = r.shape[0]
    log_norm = float(np.linalg.slogdet(2.0 * np.pi * r)[1])
    n_samples = noise.shape[1]
    for k, marg in enumerate(marginals):
        std = ad.sqrt(ad.reshape(marg.cov, (1,)))
        x = marg.mean + std * noise[k][:, None]
        h = emission.mean(x)
        dev = y[k][None, :] - h
        quad = ad.asum((dev @ r_inv) * dev, axis=1)
        total = total + (-0.5 / n_samples) * ad.asum(quad) - 0.5 * log_norm
    return total
