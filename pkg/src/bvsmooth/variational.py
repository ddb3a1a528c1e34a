"""Backward-factorized variational families over state sequences.

A family here is a terminal Gaussian together with affine-Gaussian backward
kernels: the joint law of x_{0:n} factorizes as terminal(x_n) times the
product of kernels of x_{k-1} given x_k. For a linear-Gaussian surrogate
model, the filtering pass supplies exactly such a family (the model's own
smoothing posterior), which is how the variational candidate is built in the
linear experiments.

Three computations live here.

* The evidence lower bound in closed form: expected complete-data log density
  under the family plus the family entropy, everything Gaussian-exact.
* The same bound by a forward recursion on a per-step conditional statistic.
  Writing the family's joint density forward in time with the help of
  arbitrary positive per-step reference densities q_k telescopes exactly, so
  the statistic T_k(x_k) = E[log p/q | x_k] obeys a one-step recursion whose
  increments are quadratic in (x_{k-1}, x_k). T_k stays an exact quadratic
  form; no sampling is involved.
* The per-step mismatch profile for the additive-smoothing error bound: each
  entry compares the joint built from an anchor law and a backward kernel
  against the joint built by pushing the previous anchor through the model's
  transition and conditioning on the observation. Total variation is bounded
  through the Gaussian KL divergence (Pinsker), clamped at its trivial cap.
"""

from dataclasses import dataclass
from typing import Any, List, Optional

import numpy as np

from . import autodiff as ad
from .errors import InvalidMixingConstants, LengthMismatch
from .functionals import PairQuadratic, QuadraticForm
from .gaussian import (
    LOG_2PI,
    Gaussian,
    PairwiseGaussian,
    kl_divergence,
)
from .kalman import (
    backward_kernels,
    filter_update,
    kalman_filter,
    smoothed_additive,
    smoother_pass,
)


@dataclass
class BackwardVariational:
    """Terminal law q_n plus backward kernels q_{k-1|k}, optionally with the
    per-step laws q_k that an online construction produces along the way."""

    terminal: Gaussian
    kernels: List[Any]
    stepwise: Optional[List[Gaussian]] = None

    def __len__(self):
        return len(self.kernels) + 1


def lg_posterior_family(params, y):
    """The model's own smoothing posterior as a backward family.

    Terminal = filter at n, kernels from the filtering pass; stepwise holds
    the filter laws (these are the online per-step densities).
    """
    filt = kalman_filter(params, y)
    kerns = backward_kernels(params, filt)
    return BackwardVariational(filt.filters[-1], kerns, stepwise=list(filt.filters))


def variational_marginals(q):
    """Smoothing marginals and pairwise joints of the family's joint law."""
    return smoother_pass(q.terminal, q.kernels)


def variational_smoothed_additive(q, f):
    """Expectation of an additive functional under the family's joint law."""
    marginals, pairwise = variational_marginals(q)
    return smoothed_additive(marginals, pairwise, f)


# ---------------------------------------------------------------------------
# log-density quadratic builders
# ---------------------------------------------------------------------------

def log_gaussian_form(g):
    """log N(x; mean, cov) as a QuadraticForm in x."""
    prec = ad.inv_spd(g.cov)
    p = -0.5 * prec
    b = prec @ g.mean
    c = -0.5 * (g.mean @ (prec @ g.mean)) - 0.5 * (ad.logdet_spd(g.cov) + g.dim * LOG_2PI)
    return QuadraticForm(p, b, c)


def log_transition_pair(a, q):
    """log N(v; a u, q) as a PairQuadratic in (u, v)."""
    q_inv = ad.inv_spd(q)
    at = ad.transpose(a)
    d = _dim_of(q)
    return PairQuadratic(
        puu=-0.5 * (at @ q_inv @ a),
        puv=at @ q_inv,
        pvv=-0.5 * q_inv,
        bu=np.zeros(d),
        bv=np.zeros(d),
        c=-0.5 * (ad.logdet_spd(q) + d * LOG_2PI),
    )


def log_emission_form(b, r, y_k):
    """log N(y_k; b x, r) as a QuadraticForm in x."""
    r_inv = ad.inv_spd(r)
    bt = ad.transpose(b)
    m = _dim_of(r)
    return QuadraticForm(
        p=-0.5 * (bt @ r_inv @ b),
        b=bt @ (r_inv @ y_k),
        c=-0.5 * (y_k @ (r_inv @ y_k)) - 0.5 * (ad.logdet_spd(r) + m * LOG_2PI),
    )


def log_backward_kernel_pair(kern, d):
    """log N(u; gain v + offset, cov) as a PairQuadratic in (u, v)."""
    c_inv = ad.inv_spd(kern.cov)
    g, o = kern.gain, kern.offset
    gt = ad.transpose(g)
    return PairQuadratic(
        puu=-0.5 * c_inv,
        puv=c_inv @ g,
        pvv=-0.5 * (gt @ c_inv @ g),
        bu=c_inv @ o,
        bv=-(gt @ (c_inv @ o)),
        c=-0.5 * (o @ (c_inv @ o)) - 0.5 * (ad.logdet_spd(kern.cov) + d * LOG_2PI),
    )


def _dim_of(x):
    return (x.value if isinstance(x, ad.Var) else np.asarray(x)).shape[0]


# ---------------------------------------------------------------------------
# ELBO, closed form
# ---------------------------------------------------------------------------

def expected_state_logjoint(dynamics, marginals, pairwise):
    """E[log chi(x_0)] + sum_k E[log transition(x_{k-1} -> x_k)] under the
    family's marginals and pairwise joints."""
    prior_form = log_gaussian_form(Gaussian(dynamics.a0, dynamics.q0))
    total = prior_form.expect(marginals[0].mean, marginals[0].cov)
    if pairwise:
        trans_pair = log_transition_pair(dynamics.a, dynamics.q)
        for pw in pairwise:
            total = total + trans_pair.expect(pw)
    return total


def expected_linear_emission(b, r, y, marginals):
    """sum_k E[log N(y_k; b x_k, r)] under the marginals."""
    total = 0.0
    for k, marg in enumerate(marginals):
        form = log_emission_form(b, r, y[k])
        total = total + form.expect(marg.mean, marg.cov)
    return total


def family_entropy(q):
    """Entropy of the joint law: terminal entropy plus one term per kernel.

    The kernels are homoscedastic in the conditioning state, so each
    contributes 0.5 log det(2 pi e cov) exactly.
    """
    d = q.terminal.dim
    total = 0.5 * (ad.logdet_spd(q.terminal.cov) + d * (LOG_2PI + 1.0))
    for kern in q.kernels:
        total = total + 0.5 * (ad.logdet_spd(kern.cov) + d * (LOG_2PI + 1.0))
    return total


def elbo_closed_form(theta, lam, y):
    """ELBO of model theta with the surrogate posterior of model lam.

    The family is lam's own smoothing posterior (terminal filter + backward
    kernels); with lam = theta the family contains the true posterior and the
    bound equals the log-likelihood exactly.
    """
    y = np.asarray(y, dtype=float)
    fam = lg_posterior_family(lam, y)
    marginals, pairwise = variational_marginals(fam)
    cross = expected_state_logjoint(theta.dynamics, marginals, pairwise)
    emis = expected_linear_emission(theta.b, theta.r, y, marginals)
    return cross + emis + family_entropy(fam)


# ---------------------------------------------------------------------------
# ELBO, forward recursion on the conditional statistic
# ---------------------------------------------------------------------------

def elbo_recursive(theta, q, y):
    """Recursive ELBO via the quadratic statistic T_k(x_k).

    ``q`` must carry per-step laws (``stepwise``): the online family. Each
    increment is the log ratio of transition-times-emission times previous
    step law over kernel-times-current step law; conditioning on x_k through
    the backward kernel keeps T_k an exact quadratic form. Returns
    (elbo, trace of T_k forms).
    """
    if q.stepwise is None:
        raise LengthMismatch("recursive ELBO needs the per-step laws (stepwise)")
    y = np.asarray(y, dtype=float)
    n = len(q.kernels)
    if len(q.stepwise) != n + 1 or y.shape[0] != n + 1:
        raise LengthMismatch("stepwise laws, kernels and observations disagree on n")
    d = q.terminal.dim

    prior_form = log_gaussian_form(Gaussian(theta.a0, theta.q0))
    t_form = (
        prior_form
        + log_emission_form(theta.b, theta.r, y[0])
        + _negate(log_gaussian_form(q.stepwise[0]))
    )
    trace = [t_form]
    trans_pair = log_transition_pair(theta.a, theta.q)
    for k in range(1, n + 1):
        kern = q.kernels[k - 1]
        step = (
            t_form.lift_u(d)
            + trans_pair
            + log_emission_form(theta.b, theta.r, y[k]).lift_v(d)
            + log_gaussian_form(q.stepwise[k - 1]).lift_u(d)
            - log_backward_kernel_pair(kern, d)
            - log_gaussian_form(q.stepwise[k]).lift_v(d)
        )
        t_form = step.condition_u(kern.gain, kern.offset, kern.cov)
        trace.append(t_form)
    elbo = t_form.expect(q.stepwise[n].mean, q.stepwise[n].cov)
    return elbo, trace


def _negate(form):
    return QuadraticForm(-1.0 * form.p, -1.0 * form.b, -1.0 * form.c)


# ---------------------------------------------------------------------------
# mismatch profile and the additive error bound
# ---------------------------------------------------------------------------

@dataclass
class MismatchProfile:
    """Per-step discrepancy constants c_0..c_n and the anchor laws behind them."""

    values: Any
    anchors: List[Gaussian]


def transition_pair_joint(g, a, q):
    """Joint of (u, v) with u ~ g and v | u ~ N(a u, q), in block form."""
    at = ad.transpose(a)
    return PairwiseGaussian(
        mean_u=g.mean,
        mean_v=a @ g.mean,
        cov_uu=g.cov,
        cov_uv=g.cov @ at,
        cov_vv=_symm(a @ g.cov @ at + q),
    )


def kernel_pair_joint(g, kern):
    """Joint of (u, v) with v ~ g and u | v ~ kernel, in block form."""
    gt = ad.transpose(kern.gain)
    mean_u = kern.gain @ g.mean + kern.offset
    return PairwiseGaussian(
        mean_u=mean_u,
        mean_v=g.mean,
        cov_uu=_symm(kern.gain @ g.cov @ gt + kern.cov),
        cov_uv=kern.gain @ g.cov,
        cov_vv=g.cov,
    )


def observe(g, h, r, y):
    """Posterior of g after observing y ~ N(h x, r)."""
    post, _ = filter_update(g, h, r, np.asarray(y, dtype=float))
    return post


def _symm(m):
    return 0.5 * (m + ad.transpose(m))


KL_NOISE_FLOOR = 1e-12


def pinsker_mismatch(p_joint, q_joint):
    """2 min(1, sqrt(KL/2)): total-variation proxy via Pinsker, capped at its
    trivial bound.

    A KL at or below float-roundoff scale is treated as an exact match: the
    square root would otherwise amplify 1e-15 arithmetic noise (or NaN on a
    negative roundoff) into a spurious 1e-8 constant.
    """
    kl = kl_divergence(p_joint, q_joint)
    if float(kl.value if isinstance(kl, ad.Var) else kl) <= KL_NOISE_FLOOR:
        return 0.0
    return 2.0 * ad.minimum_const(ad.sqrt(0.5 * kl), 1.0)


def mismatch_profile_linear(theta, lam, y, anchors=None):
    """Per-step constants for a linear-Gaussian surrogate against model theta.

    ``anchors`` defaults to lam's filter laws; the last anchor must coincide
    with the family terminal. Entry 0 compares the first anchor with the
    model's time-0 posterior; entry k >= 1 compares the kernel-based joint of
    (x_{k-1}, x_k) with the joint obtained by pushing anchor k-1 through the
    model transition and conditioning on y_k.
    """
    y = np.asarray(y, dtype=float)
    fam = lg_posterior_family(lam, y)
    if anchors is None:
        anchors = list(fam.stepwise)
    n = len(fam.kernels)
    if len(anchors) != n + 1:
        raise LengthMismatch("need one anchor per time step")
    _require_matching_terminal(anchors[-1], fam.terminal)

    d = theta.dim_state
    phi0 = observe(Gaussian(theta.a0, theta.q0), theta.b, theta.r, y[0])
    values = [pinsker_mismatch(anchors[0], phi0)]
    for k in range(1, n + 1):
        family_joint = kernel_pair_joint(anchors[k], fam.kernels[k - 1]).as_joint()
        pushed = transition_pair_joint(anchors[k - 1], theta.a, theta.q).as_joint()
        obs_mat = np.concatenate([np.zeros((theta.dim_obs, d)), _plain(theta.b)], axis=1)
        model_joint = observe(pushed, obs_mat, theta.r, y[k])
        values.append(pinsker_mismatch(family_joint, model_joint))
    if not any(isinstance(v, ad.Var) for v in values):
        values = np.array([float(v) for v in values])
    return MismatchProfile(values, list(anchors))


def _plain(x):
    return x.value if isinstance(x, ad.Var) else np.asarray(x, dtype=float)


def _require_matching_terminal(anchor, terminal, tol=1e-8):
    am, tm = _plain(anchor.mean), _plain(terminal.mean)
    ac, tc = _plain(anchor.cov), _plain(terminal.cov)
    if np.max(np.abs(am - tm)) > tol or np.max(np.abs(ac - tc)) > tol:
        raise LengthMismatch("final anchor must equal the family terminal")


def additive_error_bound(values, sigma_min, sigma_max, step_bounds):
    """The additive-smoothing error bound as an explicit finite double sum.

    With rho = 1 - sigma_min/sigma_max, the bound is

        2 (sigma_max/sigma_min) * sum_k ||h_k||_inf *
            ( c_0 + sum_{m=1}^{k} rho^{k-m+1} c_m
                  + c_{k+1} + sum_{m=k+2}^{n} rho^{m-k-1} c_m )

    where k runs over the functional's steps 0..n-1 and c has length n + 1.
    The degenerate sigma_min == sigma_max case is allowed (rho = 0).
    """
    c = np.asarray(values, dtype=float)
    h = np.asarray(step_bounds, dtype=float)
    if not (0.0 < sigma_min <= sigma_max < np.inf):
        raise InvalidMixingConstants(f"need 0 < sigma_min <= sigma_max, got ({sigma_min}, {sigma_max})")
    n = c.shape[0] - 1
    if h.shape[0] != n:
        raise LengthMismatch("need one step bound per functional term (n of them)")
    rho = 1.0 - sigma_min / sigma_max

    # forward[k] = sum_{m=1}^{k} rho^{k-m+1} c_m, backward[k] = sum_{m=k+2}^{n} rho^{m-k-1} c_m
    forward = np.zeros(n + 1)
    for k in range(1, n + 1):
        forward[k] = rho * (forward[k - 1] + c[k])
    backward = np.zeros(n + 1)
    for k in range(n - 2, -1, -1):
        backward[k] = rho * (backward[k + 1] + c[k + 2])

    total = 0.0
    for k in range(n):
        total += h[k] * (c[0] + forward[k] + c[k + 1] + backward[k])
    return 2.0 * (sigma_max / sigma_min) * total
