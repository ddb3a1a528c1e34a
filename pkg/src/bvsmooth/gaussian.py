"""Gaussian-distribution calculus: moment and natural parameters, conditioning,
KL divergence, conjugation, and block-joint helpers.

The functions here are generic: fields may be plain ndarrays or autodiff
``Var`` nodes, and the same formulas serve both evaluation and training.
Validation is explicit (``validate()``) rather than automatic, so hot
recursions pay nothing for it.
"""

from dataclasses import dataclass
from typing import Any

import numpy as np

from . import autodiff as ad
from . import linalg
from .errors import DimMismatch, NotPositiveDefinite

LOG_2PI = float(np.log(2.0 * np.pi))


def _value(x):
    return x.value if isinstance(x, ad.Var) else np.asarray(x, dtype=float)


@dataclass
class Gaussian:
    """Mean/covariance pair. ``mean`` is (d,), ``cov`` is (d, d)."""

    mean: Any
    cov: Any

    @property
    def dim(self):
        return _value(self.mean).shape[0]

    def validate(self, sym_tol=1e-10):
        """Check shapes, symmetry and positive definiteness of the value."""
        m, c = _value(self.mean), _value(self.cov)
        if m.ndim != 1 or c.shape != (m.shape[0], m.shape[0]):
            raise DimMismatch(f"mean {m.shape} incompatible with cov {c.shape}")
        if not linalg.is_symmetric(c, sym_tol):
            raise NotPositiveDefinite("covariance is not symmetric")
        linalg.cholesky(c)
        return self


@dataclass
class NaturalGaussian:
    """Exponential-family coordinates: eta1 = cov^-1 mean, eta2 = -cov^-1 / 2."""

    eta1: Any
    eta2: Any

    def validate(self, sym_tol=1e-10):
        e2 = _value(self.eta2)
        if not linalg.is_symmetric(e2, sym_tol):
            raise NotPositiveDefinite("eta2 is not symmetric")
        linalg.cholesky(-2.0 * e2)
        return self


@dataclass
class PairwiseGaussian:
    """Joint law of a pair (u, v) kept in block form.

    ``cov_uv`` is Cov(u, v), rows indexing u. Block form avoids assembling
    2d x 2d matrices inside recursions; ``as_joint`` builds one on demand.
    """

    mean_u: Any
    mean_v: Any
    cov_uu: Any
    cov_uv: Any
    cov_vv: Any

    def as_joint(self):
        mean = ad.concat([self.mean_u, self.mean_v])
        cov = ad.block2x2(self.cov_uu, self.cov_uv, ad.transpose(self.cov_uv), self.cov_vv)
        return Gaussian(mean, cov)

    def marginal_u(self):
        return Gaussian(self.mean_u, self.cov_uu)

    def marginal_v(self):
        return Gaussian(self.mean_v, self.cov_vv)


# ---------------------------------------------------------------------------
# parameter conversions and conjugation
# ---------------------------------------------------------------------------

def to_natural(g):
    prec = ad.inv_spd(g.cov)
    return NaturalGaussian(prec @ g.mean, -0.5 * prec)


def from_natural(ng):
    """Moment parameters; raises NotPositiveDefinite if -eta2 is not PD."""
    cov = ad.inv_spd(-2.0 * ng.eta2)
    return Gaussian(cov @ ng.eta1, cov)


def natural_product(a, b):
    """Conjugation of two Gaussians: add natural parameters.

    Raises NotPositiveDefinite when the sum no longer describes a proper
    density (improper conjugation).
    """
    eta1 = a.eta1 + b.eta1
    eta2 = a.eta2 + b.eta2
    linalg.cholesky(-2.0 * _value(eta2))
    return NaturalGaussian(eta1, eta2)


# ---------------------------------------------------------------------------
# conditioning and KL
# ---------------------------------------------------------------------------

def condition(joint, dim_x, y_value):
    """Condition a joint Gaussian over (x, y) on y = y_value; returns law of x.

    ``dim_x`` gives the split point: the first dim_x coordinates are x.
    """
    mean, cov = joint.mean, joint.cov
    mx = ad.take(mean, slice(0, dim_x))
    my = ad.take(mean, slice(dim_x, None))
    sxx = ad.take(cov, (slice(0, dim_x), slice(0, dim_x)))
    sxy = ad.take(cov, (slice(0, dim_x), slice(dim_x, None)))
    syy = ad.take(cov, (slice(dim_x, None), slice(dim_x, None)))
    gain = sxy @ ad.inv_spd(syy)
    mean_c = mx + gain @ (np.asarray(y_value, dtype=float) - my)
    cov_c = sxx - gain @ ad.transpose(sxy)
    return Gaussian(mean_c, 0.5 * (cov_c + ad.transpose(cov_c)))


def kl_divergence(p, q):
    """KL(p || q) between Gaussians of equal dimension."""
    d = p.dim
    if q.dim != d:
        raise DimMismatch("KL between Gaussians of different dimension")
    q_prec = ad.inv_spd(q.cov)
    delta = p.mean - q.mean
    return 0.5 * (
        ad.logdet_spd(q.cov)
        - ad.logdet_spd(p.cov)
        + ad.trace(q_prec @ p.cov)
        + delta @ (q_prec @ delta)
        - float(d)
    )


def entropy(g):
    """Differential entropy 0.5 * log det(2 pi e cov)."""
    d = g.dim
    return 0.5 * (ad.logdet_spd(g.cov) + d * (LOG_2PI + 1.0))


# ---------------------------------------------------------------------------
# densities and sampling (float-only)
# ---------------------------------------------------------------------------

def logpdf(g, x):
    """Log density at x; x may be (d,) or a batch (k, d)."""
    x = np.asarray(x, dtype=float)
    mean, cov = _value(g.mean), _value(g.cov)
    dev = np.atleast_2d(x - mean)
    white = linalg.spd_sqrt_solve(cov, dev.T)
    quad = np.sum(white * white, axis=0)
    out = -0.5 * (quad + linalg.spd_logdet(cov) + mean.shape[0] * LOG_2PI)
    return out if x.ndim > 1 else float(out[0])


def sample(g, rng, size=None):
    """Draw from the Gaussian: Cholesky factor times standard normals."""
    mean, cov = _value(g.mean), _value(g.cov)
    lower = linalg.cholesky(cov)
    z = rng.standard_normal((mean.shape[0],) if size is None else (size, mean.shape[0]))
    return mean + z @ lower.T if size is not None else mean + lower @ z
