"""Finite-state HMMs where every quantity in the additive-smoothing error
bound is exactly computable.

With a counting reference measure, the per-step model "densities" are the
S x S tables transition * emission, so the uniform bounds sigma_- / sigma_+
are literal minima and maxima, the per-step mismatch constants are exact L1
distances between S^2 joint tables, and both sides of the bound are plain
finite sums. That turns the theorem into a machine-checkable property.
"""

from dataclasses import dataclass
from typing import List, Optional

import numpy as np

from .errors import DegenerateModel, DimMismatch, LengthMismatch
from .functionals import AdditiveFunctional
from .variational import additive_error_bound


@dataclass
class DiscreteHMM:
    """Finite-state chain with per-time emission log-likelihood vectors.

    ``emis_loglik[k, x]`` is log g_k(x, y_k) for the observation actually
    seen at time k; storing it this way keeps the verifier independent of
    any particular observation alphabet.
    """

    init: np.ndarray  # (S,)
    trans: np.ndarray  # (S, S), rows x_k, columns x_{k+1}
    emis_loglik: np.ndarray  # (n + 1, S)

    def __post_init__(self):
        self.init = np.asarray(self.init, dtype=float)
        self.trans = np.asarray(self.trans, dtype=float)
        self.emis_loglik = np.asarray(self.emis_loglik, dtype=float)

    @property
    def n_states(self):
        return self.init.shape[0]

    @property
    def horizon(self):
        return self.emis_loglik.shape[0] - 1

    def validate(self):
        s = self.n_states
        if self.trans.shape != (s, s) or self.emis_loglik.shape[1] != s:
            raise DimMismatch("state counts disagree across model pieces")
        if np.any(np.abs(self.trans.sum(axis=1) - 1.0) > 1e-12) or np.abs(self.init.sum() - 1.0) > 1e-12:
            raise DegenerateModel("rows of trans and init must sum to 1")
        if np.any(self.trans <= 0.0) or np.any(self.init <= 0.0):
            raise DegenerateModel("all probabilities must be strictly positive")
        return self

    @classmethod
    def from_emission_matrix(cls, init, trans, emission, y_indices):
        """Build per-time emission vectors from an (S, O) matrix and observed
        symbol indices."""
        emission = np.asarray(emission, dtype=float)
        rows = np.log(emission[:, np.asarray(y_indices, dtype=int)]).T
        return cls(init, trans, rows)


@dataclass
class DiscreteSmoothing:
    filters: np.ndarray  # (n + 1, S)
    kernels: List[np.ndarray]  # kernels[j][v, u] = P(x_j = u | x_{j+1} = v, y_{0:j})
    marginals: np.ndarray  # (n + 1, S)
    pairwise: np.ndarray  # (n, S, S) joint of (x_k, x_{k+1})
    loglik: float


def filter_smooth(model):
    """Exact forward filter, backward kernels, and smoothing marginals."""
    s = model.n_states
    n = model.horizon
    lik = np.exp(model.emis_loglik)
    filters = np.empty((n + 1, s))
    loglik = 0.0
    cur = model.init * lik[0]
    z = cur.sum()
    loglik += np.log(z)
    filters[0] = cur / z
    kernels = []
    for k in range(1, n + 1):
        # kernel rows condition on x_k: P(x_{k-1} | x_k, y_{0:k-1})
        joint = filters[k - 1][:, None] * model.trans  # [u, v]
        pred = joint.sum(axis=0)
        kernels.append((joint / pred[None, :]).T)
        cur = pred * lik[k]
        z = cur.sum()
        loglik += np.log(z)
        filters[k] = cur / z
    marginals = np.empty((n + 1, s))
    marginals[n] = filters[n]
    pairwise = np.empty((n, s, s))
    for k in range(n, 0, -1):
        joint_vu = marginals[k][:, None] * kernels[k - 1]  # [v, u]
        pairwise[k - 1] = joint_vu.T  # [u, v] = (x_{k-1}, x_k)
        marginals[k - 1] = joint_vu.sum(axis=0)
    return DiscreteSmoothing(filters, kernels, marginals, pairwise, float(loglik))


@dataclass
class DiscreteBackwardVariational:
    """Terminal pmf plus row-stochastic backward kernel tables.

    ``kernels[j][v, u]`` is the candidate law of x_j = u given x_{j+1} = v.
    """

    terminal: np.ndarray
    kernels: List[np.ndarray]

    def validate(self):
        if np.any(self.terminal <= 0) or abs(self.terminal.sum() - 1.0) > 1e-10:
            raise DegenerateModel("terminal must be a strictly positive pmf")
        for kern in self.kernels:
            if np.any(kern <= 0) or np.any(np.abs(kern.sum(axis=1) - 1.0) > 1e-10):
                raise DegenerateModel("kernels must be strictly positive and row-stochastic")
        return self

    @classmethod
    def from_smoothing(cls, sm):
        return cls(sm.filters[-1].copy(), [k.copy() for k in sm.kernels])


def variational_marginals(q):
    """Marginals and pairwise joints of the candidate family's joint law."""
    n = len(q.kernels)
    s = q.terminal.shape[0]
    marginals = np.empty((n + 1, s))
    marginals[n] = q.terminal
    pairwise = np.empty((n, s, s))
    for k in range(n, 0, -1):
        joint_vu = marginals[k][:, None] * q.kernels[k - 1]
        pairwise[k - 1] = joint_vu.T
        marginals[k - 1] = joint_vu.sum(axis=0)
    return marginals, pairwise


def functional_tables(f, n, s):
    """Evaluate an additive functional on the integer state grid."""
    if isinstance(f, np.ndarray):
        tables = np.asarray(f, dtype=float)
        if tables.shape != (n, s, s):
            raise DimMismatch(f"expected tables of shape {(n, s, s)}, got {tables.shape}")
        return tables
    tables = np.empty((n, s, s))
    for k in range(n):
        for u in range(s):
            for v in range(s):
                tables[k, u, v] = float(np.asarray(f.term(k, u, v)).reshape(()))
    return tables


def additive_expectation(pairwise, tables):
    """Exact expectation of sum_k table_k(x_k, x_{k+1}) under pairwise joints."""
    return float(np.sum(pairwise * tables))


# ---------------------------------------------------------------------------
# bound ingredients
# ---------------------------------------------------------------------------

def step_densities(model):
    """The S x S tables transition * next-step emission, one per step."""
    lik = np.exp(model.emis_loglik)
    return [model.trans * lik[k + 1][None, :] for k in range(model.horizon)]


def density_bounds(model, q):
    """(sigma_-, sigma_+): joint min / max over every step-density entry and
    every candidate kernel entry."""
    lo, hi = np.inf, -np.inf
    for table in step_densities(model):
        lo = min(lo, float(table.min()))
        hi = max(hi, float(table.max()))
    for kern in q.kernels:
        lo = min(lo, float(kern.min()))
        hi = max(hi, float(kern.max()))
    if lo <= 0.0:
        raise DegenerateModel("sigma_- must be strictly positive")
    return lo, hi


def mismatch_profile(model, q, anchors=None):
    """Exact per-step constants c_0..c_n as L1 distances between joints.

    ``anchors`` defaults to the true filter laws with the final entry forced
    to the candidate terminal (the terminal anchor is not free). Entry k
    compares anchor_k (x) kernel_{k-1} with the normalized push-forward of
    anchor_{k-1} through the step density.
    """
    sm = filter_smooth(model)
    n = model.horizon
    if anchors is None:
        anchors = sm.filters.copy()
        anchors[n] = q.terminal
    anchors = np.asarray(anchors, dtype=float)
    if anchors.shape[0] != n + 1:
        raise LengthMismatch("need one anchor pmf per time step")
    if np.max(np.abs(anchors[n] - q.terminal)) > 1e-12:
        raise LengthMismatch("final anchor must equal the candidate terminal")

    densities = step_densities(model)
    values = np.empty(n + 1)
    phi0 = model.init * np.exp(model.emis_loglik[0])
    phi0 /= phi0.sum()
    values[0] = float(np.abs(anchors[0] - phi0).sum())
    for k in range(1, n + 1):
        family_joint = (anchors[k][:, None] * q.kernels[k - 1]).T  # [u, v]
        pushed = anchors[k - 1][:, None] * densities[k - 1]
        pushed /= pushed.sum()
        values[k] = float(np.abs(family_joint - pushed).sum())
    return values


@dataclass
class BoundCheck:
    lhs: float
    rhs: float
    holds: bool
    sigma_min: float
    sigma_max: float
    rho: float
    mismatch: np.ndarray


def check_additive_error_bound(model, q, f, anchors=None, slack=1e-10):
    """Exact two-sided check of the additive-smoothing error bound.

    lhs: |candidate expectation - exact smoothed expectation|, both exact.
    rhs: the explicit double sum with exact mismatch constants, exact
    sup-norms, and exact density bounds.
    """
    n, s = model.horizon, model.n_states
    tables = functional_tables(f, n, s)
    sm = filter_smooth(model)
    exact = additive_expectation(sm.pairwise, tables)
    _, q_pairwise = variational_marginals(q)
    candidate = additive_expectation(q_pairwise, tables)
    lhs = abs(candidate - exact)

    values = mismatch_profile(model, q, anchors)
    sigma_min, sigma_max = density_bounds(model, q)
    step_bounds = np.abs(tables).max(axis=(1, 2))
    rhs = additive_error_bound(values, sigma_min, sigma_max, step_bounds)
    return BoundCheck(
        lhs=lhs,
        rhs=rhs,
        holds=bool(lhs <= rhs + slack),
        sigma_min=sigma_min,
        sigma_max=sigma_max,
        rho=1.0 - sigma_min / sigma_max,
        mismatch=values,
    )


# ---------------------------------------------------------------------------
# random instances
# ---------------------------------------------------------------------------

def random_model(s, n, rng, emission_range=(0.2, 1.0), floor=0.15):
    """Random strictly-positive model; ``floor`` keeps entries away from 0."""
    trans = floor + rng.uniform(0.0, 1.0, size=(s, s))
    trans /= trans.sum(axis=1, keepdims=True)
    init = floor + rng.uniform(0.0, 1.0, size=s)
    init /= init.sum()
    lo, hi = emission_range
    emis = np.log(rng.uniform(lo, hi, size=(n + 1, s)))
    return DiscreteHMM(init, trans, emis).validate()


def dirichlet_jitter(q, kappa, rng):
    """Resample each kernel row (and the terminal) around its current value
    with Dirichlet concentration kappa; kappa = inf returns the input."""
    if np.isinf(kappa):
        return DiscreteBackwardVariational(q.terminal.copy(), [k.copy() for k in q.kernels])
    terminal = rng.dirichlet(kappa * q.terminal)
    terminal = np.maximum(terminal, 1e-12)
    terminal /= terminal.sum()
    kernels = []
    for kern in q.kernels:
        rows = np.vstack([rng.dirichlet(kappa * row) for row in kern])
        rows = np.maximum(rows, 1e-12)
        rows /= rows.sum(axis=1, keepdims=True)
        kernels.append(rows)
    return DiscreteBackwardVariational(terminal, kernels)
