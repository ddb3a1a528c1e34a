"""Shared oracles for the test suite.

Everything here is deliberately independent of the library's own recursions:
brute-force joint Gaussians, grid quadrature, path enumeration, and central
finite differences. These are the second route of every dual-route check.
"""

import numpy as np


def finite_difference_grad(f, x, step=1e-5):
    """Central finite differences of a scalar function of a flat vector."""
    x = np.asarray(x, dtype=float)
    grad = np.zeros_like(x)
    for i in range(x.shape[0]):
        e = np.zeros_like(x)
        e[i] = step
        grad[i] = (f(x + e) - f(x - e)) / (2.0 * step)
    return grad


def random_spd(rng, d, scale=1.0, jitter=0.5):
    """Random well-conditioned SPD matrix."""
    a = rng.standard_normal((d, d))
    return scale * (a @ a.T + jitter * np.eye(d))


def random_lg_params(rng, d=1, m=1, stable=True):
    """Random linear-Gaussian model with a stable transition."""
    from bvsmooth.models import LGParams

    a = rng.standard_normal((d, d)) * 0.5
    if stable:
        eig = np.max(np.abs(np.linalg.eigvals(a)))
        if eig >= 0.95:
            a *= 0.9 / eig
    return LGParams(
        a0=rng.standard_normal(d) * 0.5,
        q0=random_spd(rng, d, scale=0.5, jitter=0.3),
        a=a,
        q=random_spd(rng, d, scale=0.3, jitter=0.2),
        b=rng.standard_normal((m, d)),
        r=random_spd(rng, m, scale=0.4, jitter=0.3),
    )


class JointGaussianOracle:
    """Brute-force joint Gaussian of (x_{0:n}, y_{0:n}) for a linear model.

    Builds the full (n+1)(d+m)-dimensional mean and covariance directly from
    the generative recursion and answers smoothing questions by plain block
    conditioning. No Kalman-style recursion anywhere.
    """

    def __init__(self, params, n):
        d = params.dim_state
        m = params.dim_obs
        a0 = np.asarray(params.a0, dtype=float)
        q0 = np.asarray(params.q0, dtype=float)
        a = np.asarray(params.a, dtype=float)
        q = np.asarray(params.q, dtype=float)
        b = np.asarray(params.b, dtype=float)
        r = np.asarray(params.r, dtype=float)
        nx = (n + 1) * d
        mean_x = np.zeros(nx)
        cov_x = np.zeros((nx, nx))
        mean_x[:d] = a0
        cov_x[:d, :d] = q0
        for k in range(1, n + 1):
            sk = slice(k * d, (k + 1) * d)
            sp = slice((k - 1) * d, k * d)
            mean_x[sk] = a @ mean_x[sp]
            # Cov(x_k, x_j) = A Cov(x_{k-1}, x_j) for j < k
            for j in range(k):
                sj = slice(j * d, (j + 1) * d)
                block = a @ cov_x[sp, sj]
                cov_x[sk, sj] = block
                cov_x[sj, sk] = block.T
            cov_x[sk, sk] = a @ cov_x[sp, sp] @ a.T + q
        big_b = np.kron(np.eye(n + 1), b)
        self.d, self.m, self.n = d, m, n
        self.mean_x = mean_x
        self.cov_x = cov_x
        self.mean_y = big_b @ mean_x
        self.cov_y = big_b @ cov_x @ big_b.T + np.kron(np.eye(n + 1), r)
        self.cov_xy = cov_x @ big_b.T

    def loglik(self, y):
        y = np.asarray(y, dtype=float).ravel()
        dev = y - self.mean_y
        sign, logdet = np.linalg.slogdet(self.cov_y)
        assert sign > 0
        quad = dev @ np.linalg.solve(self.cov_y, dev)
        return -0.5 * (quad + logdet + y.shape[0] * np.log(2 * np.pi))

    def posterior(self, y):
        """Mean and covariance of x_{0:n} given all observations."""
        y = np.asarray(y, dtype=float).ravel()
        gain = self.cov_xy @ np.linalg.inv(self.cov_y)
        mean = self.mean_x + gain @ (y - self.mean_y)
        cov = self.cov_x - gain @ self.cov_xy.T
        return mean, 0.5 * (cov + cov.T)

    def smoothed_marginal(self, y, k):
        mean, cov = self.posterior(y)
        sk = slice(k * self.d, (k + 1) * self.d)
        return mean[sk], cov[sk, sk]


def grid_expectation(f, lo, hi, num, logpdf):
    """1-D quadrature E[f(X)] for an unnormalized log density."""
    xs = np.linspace(lo, hi, num)
    w = np.exp(logpdf(xs))
    w /= np.trapezoid(w, xs)
    return np.trapezoid(f(xs) * w, xs)
