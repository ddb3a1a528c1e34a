"""Additive state functionals and the quadratic-form algebra behind their
closed-form smoothed expectations.

An additive functional accumulates per-step terms over consecutive state
pairs: h(x_{0:n}) = sum_{k=0}^{n-1} term_k(x_k, x_{k+1}). When every term is
(at most) quadratic in the pair, its expectation under a pairwise Gaussian is
exact; ``PairQuadratic`` carries those coefficients and ``QuadraticForm`` the
single-argument case.
"""

from dataclasses import dataclass
from typing import Any, Callable, Optional, Sequence

import numpy as np

from . import autodiff as ad
from .errors import LengthMismatch, UnsupportedFunctionalForm


def _sym(m):
    return 0.5 * (m + ad.transpose(m))


@dataclass
class QuadraticForm:
    """q(x) = x' P x + b . x + c with P kept symmetric."""

    p: Any
    b: Any
    c: Any

    def evaluate(self, x):
        return x @ (self.p @ x) + self.b @ x + self.c

    def expect(self, mean, cov):
        """E[q(X)] for X ~ N(mean, cov)."""
        return mean @ (self.p @ mean) + ad.trace(self.p @ cov) + self.b @ mean + self.c

    def lift_u(self, dim_v):
        """View q(u) as a pair quadratic constant in v."""
        return PairQuadratic(
            puu=self.p,
            puv=np.zeros((_dim(self.p), dim_v)),
            pvv=np.zeros((dim_v, dim_v)),
            bu=self.b,
            bv=np.zeros(dim_v),
            c=self.c,
        )

    def lift_v(self, dim_u):
        """View q(v) as a pair quadratic constant in u."""
        return PairQuadratic(
            puu=np.zeros((dim_u, dim_u)),
            puv=np.zeros((dim_u, _dim(self.p))),
            pvv=self.p,
            bu=np.zeros(dim_u),
            bv=self.b,
            c=self.c,
        )

    def __add__(self, other):
        return QuadraticForm(self.p + other.p, self.b + other.b, self.c + other.c)


def _dim(p):
    v = p.value if isinstance(p, ad.Var) else np.asarray(p)
    return v.shape[0]


@dataclass
class PairQuadratic:
    """h(u, v) = u' Puu u + u' Puv v + v' Pvv v + bu . u + bv . v + c."""

    puu: Any
    puv: Any
    pvv: Any
    bu: Any
    bv: Any
    c: Any

    def evaluate(self, u, v):
        return (
            u @ (self.puu @ u)
            + u @ (self.puv @ v)
            + v @ (self.pvv @ v)
            + self.bu @ u
            + self.bv @ v
            + self.c
        )

    def expect(self, pw):
        """E[h(U, V)] under a PairwiseGaussian.

        Uses E[U' M V] = mu_u' M mu_v + tr(M' Cov(U, V)).
        """
        mu, mv = pw.mean_u, pw.mean_v
        return (
            mu @ (self.puu @ mu)
            + ad.trace(self.puu @ pw.cov_uu)
            + mu @ (self.puv @ mv)
            + ad.trace(ad.transpose(self.puv) @ pw.cov_uv)
            + mv @ (self.pvv @ mv)
            + ad.trace(self.pvv @ pw.cov_vv)
            + self.bu @ mu
            + self.bv @ mv
            + self.c
        )

    def condition_u(self, gain, offset, cov):
        """Integrate u out against u | v ~ N(gain v + offset, cov).

        Returns the QuadraticForm in v equal to E[h(U, v) | v]. Requires the
        stored Puu to be symmetric (it always is for log-density sums).
        """
        g, o = gain, offset
        gt = ad.transpose(g)
        p = _sym(gt @ (self.puu @ g)) + _sym(gt @ self.puv) + _sym(self.pvv)
        b = (
            2.0 * (gt @ (self.puu @ o))
            + ad.transpose(self.puv) @ o
            + gt @ self.bu
            + self.bv
        )
        c = o @ (self.puu @ o) + ad.trace(self.puu @ cov) + self.bu @ o + self.c
        return QuadraticForm(p, b, c)

    def __add__(self, other):
        return PairQuadratic(
            self.puu + other.puu,
            self.puv + other.puv,
            self.pvv + other.pvv,
            self.bu + other.bu,
            self.bv + other.bv,
            self.c + other.c,
        )

    def __sub__(self, other):
        return PairQuadratic(
            self.puu - other.puu,
            self.puv - other.puv,
            self.pvv - other.pvv,
            self.bu - other.bu,
            self.bv - other.bv,
            self.c - other.c,
        )


@dataclass
class AdditiveFunctional:
    """Per-step terms term(k, x_k, x_{k+1}) -> vector of length ``dim``.

    ``pair_quadratics(k)`` supplies one PairQuadratic per output coordinate
    when the term is (at most) quadratic; closed-form smoothers require it.
    ``sup_bound(k)`` is the sup norm of the step term when known.
    """

    dim: int
    term: Callable[[int, Any, Any], np.ndarray]
    pair_quadratics: Optional[Callable[[int], Sequence[PairQuadratic]]] = None
    sup_bound: Optional[Callable[[int], float]] = None

    def require_quadratics(self, k):
        if self.pair_quadratics is None:
            raise UnsupportedFunctionalForm(
                "functional has no pair-quadratic representation; "
                "use a sampling estimator instead"
            )
        return self.pair_quadratics(k)


def eval_additive(states, f):
    """Pathwise value sum_{k=0}^{n-1} term(k, x_k, x_{k+1}) over a trajectory."""
    states = np.asarray(states, dtype=float)
    if states.shape[0] < 2:
        raise LengthMismatch("need at least two states to form one pair term")
    total = np.zeros(f.dim)
    for k in range(states.shape[0] - 1):
        total += np.asarray(f.term(k, states[k], states[k + 1]), dtype=float).reshape(f.dim)
    return total


# ---------------------------------------------------------------------------
# common functionals
# ---------------------------------------------------------------------------

def state_sum(d):
    """term_k(x, x') = x; the state-estimation functional."""

    def quads(_k):
        out = []
        for i in range(d):
            e = np.zeros(d)
            e[i] = 1.0
            out.append(
                PairQuadratic(np.zeros((d, d)), np.zeros((d, d)), np.zeros((d, d)), e, np.zeros(d), 0.0)
            )
        return out

    return AdditiveFunctional(dim=d, term=lambda k, x, xn: np.asarray(x, dtype=float), pair_quadratics=quads)


def next_state_sum(d):
    """term_k(x, x') = x'."""

    def quads(_k):
        out = []
        for i in range(d):
            e = np.zeros(d)
            e[i] = 1.0
            out.append(
                PairQuadratic(np.zeros((d, d)), np.zeros((d, d)), np.zeros((d, d)), np.zeros(d), e, 0.0)
            )
        return out

    return AdditiveFunctional(dim=d, term=lambda k, x, xn: np.asarray(xn, dtype=float), pair_quadratics=quads)


def pair_product():
    """Scalar term_k(x, x') = x * x' for 1-D states."""

    def quads(_k):
        return [PairQuadratic(np.zeros((1, 1)), np.ones((1, 1)), np.zeros((1, 1)), np.zeros(1), np.zeros(1), 0.0)]

    return AdditiveFunctional(
        dim=1,
        term=lambda k, x, xn: np.atleast_1d(np.asarray(x, dtype=float) * np.asarray(xn, dtype=float)),
        pair_quadratics=quads,
    )


def zero_functional(d=1, dim=1):
    """Identically-zero functional over d-dimensional states."""
    return AdditiveFunctional(
        dim=dim,
        term=lambda k, x, xn: np.zeros(dim),
        pair_quadratics=lambda k: [
            PairQuadratic(np.zeros((d, d)), np.zeros((d, d)), np.zeros((d, d)), np.zeros(d), np.zeros(d), 0.0)
            for _ in range(dim)
        ],
        sup_bound=lambda k: 0.0,
    )
