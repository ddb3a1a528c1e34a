"""Exact inference for linear-Gaussian state-space models.

Filtering with Joseph-form covariance updates, the exact log-likelihood,
backward (reverse-time) kernels, smoothing marginals with pairwise joints,
and closed-form smoothed expectations of pair-quadratic additive functionals.

The recursions are generic over plain arrays and autodiff Vars, so the same
code evaluates and differentiates.
"""

from dataclasses import dataclass
from typing import Any, List

import numpy as np

from . import autodiff as ad
from .errors import LengthMismatch
from .gaussian import LOG_2PI, Gaussian, PairwiseGaussian


def _sym(m):
    return 0.5 * (m + ad.transpose(m))


@dataclass
class LinearBackwardKernel:
    """Affine-Gaussian conditional of the earlier state given the later one:
    x_prev | x ~ N(gain @ x + offset, cov)."""

    gain: Any
    offset: Any
    cov: Any

    def condition(self, x):
        return Gaussian(self.gain @ x + self.offset, self.cov)


@dataclass
class FilterSequence:
    """Predictive and filtering laws for k = 0..n plus the log-likelihood.

    ``predictives[0]`` is the prior (no data); ``filters[k]`` conditions on
    observations up to and including k.
    """

    predictives: List[Gaussian]
    filters: List[Gaussian]
    loglik: Any

    def __len__(self):
        return len(self.filters)


def filter_update(pred, b, r, y_k):
    """One measurement update; returns (posterior, log-evidence increment)."""
    s = _sym(b @ pred.cov @ ad.transpose(b) + r)
    s_inv = ad.inv_spd(s)
    gain = pred.cov @ ad.transpose(b) @ s_inv
    innovation = y_k - b @ pred.mean
    mean = pred.mean + gain @ innovation
    eye = np.eye(_dim(pred.mean))
    ikb = eye - gain @ b
    cov = _sym(ikb @ pred.cov @ ad.transpose(ikb) + gain @ r @ ad.transpose(gain))
    m = _dim(innovation)
    ll = -0.5 * (innovation @ (s_inv @ innovation) + ad.logdet_spd(s) + m * LOG_2PI)
    return Gaussian(mean, cov), ll


def _dim(x):
    return (x.value if isinstance(x, ad.Var) else np.asarray(x)).shape[0]


def kalman_filter(params, y):
    """Run the predict/update recursion over observations y (n + 1, m).

    The log-likelihood accumulates the innovation evidence
    log N(y_k; B pred_mean, B pred_cov B' + R) step by step.
    """
    y = np.asarray(y, dtype=float)
    if y.ndim != 2:
        raise LengthMismatch("observations must be a (n + 1, m) array")
    pred = Gaussian(params.a0, params.q0)
    predictives, filters = [], []
    loglik = 0.0
    a, q, b, r = params.a, params.q, params.b, params.r
    for k in range(y.shape[0]):
        if k > 0:
            prev = filters[-1]
            pred = Gaussian(a @ prev.mean, _sym(a @ prev.cov @ ad.transpose(a) + q))
        predictives.append(pred)
        post, ll = filter_update(pred, b, r, y[k])
        filters.append(post)
        loglik = loglik + ll
    return FilterSequence(predictives, filters, loglik)


def backward_kernel_from(filt, a, q):
    """Reverse-time kernel of x_prev given x when x = a x_prev + noise(q) and
    x_prev ~ filt. This is the usual smoother gain construction."""
    pred_cov = _sym(a @ filt.cov @ ad.transpose(a) + q)
    gain = filt.cov @ ad.transpose(a) @ ad.inv_spd(pred_cov)
    offset = filt.mean - gain @ (a @ filt.mean)
    cov = _sym(filt.cov - gain @ a @ filt.cov)
    return LinearBackwardKernel(gain, offset, cov)


def backward_kernels(params, filt):
    """Kernels of x_{k-1} | x_k, y_{0:k-1} for k = 1..n, from the filter pass."""
    return [backward_kernel_from(filt.filters[k - 1], params.a, params.q) for k in range(1, len(filt))]


def smoother_pass(terminal, kernels):
    """Propagate the terminal law backwards through the kernels.

    Returns (marginals, pairwise): marginals[k] is the smoothed law of x_k,
    pairwise[k] the smoothed joint of (x_k, x_{k+1}), for k up to n.
    """
    marginals = [terminal]
    pairwise = []
    current = terminal
    for kern in reversed(kernels):
        mean = kern.gain @ current.mean + kern.offset
        cross = kern.gain @ current.cov  # Cov(x_{k-1}, x_k)
        cov = _sym(kern.gain @ current.cov @ ad.transpose(kern.gain) + kern.cov)
        prev = Gaussian(mean, cov)
        pairwise.append(
            PairwiseGaussian(
                mean_u=mean, mean_v=current.mean, cov_uu=cov, cov_uv=cross, cov_vv=current.cov
            )
        )
        marginals.append(prev)
        current = prev
    marginals.reverse()
    pairwise.reverse()
    return marginals, pairwise


def smoothed_additive(marginals, pairwise, f):
    """Closed-form smoothed expectation of an additive functional.

    Requires pair-quadratic terms; raises UnsupportedFunctionalForm otherwise.
    """
    totals = [0.0] * f.dim
    for k, pw in enumerate(pairwise):
        quads = f.require_quadratics(k)
        for i, pq in enumerate(quads):
            totals[i] = totals[i] + pq.expect(pw)
    if any(isinstance(t, ad.Var) for t in totals):
        return totals
    return np.array(totals, dtype=float)


def smooth(params, y):
    """Filter + backward kernels + smoother in one call.

    Returns (filter_sequence, kernels, marginals, pairwise).
    """
    filt = kalman_filter(params, y)
    kerns = backward_kernels(params, filt)
    marginals, pairwise = smoother_pass(filt.filters[-1], kerns)
    return filt, kerns, marginals, pairwise
