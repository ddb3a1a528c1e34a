"""Particle smoothing as a reference: forward filter, backward simulation.

On a linear-Gaussian model the exact smoother is available, so the sampled
trajectories can be checked against it directly.
"""

import numpy as np

from bvsmooth import LGParams, state_sum
from bvsmooth.kalman import smooth, smoothed_additive
from bvsmooth.models import simulate_lg
from bvsmooth.particle import (
    ParticleModel,
    additive_estimate,
    bootstrap_filter,
    ffbsi_sample,
    marginal_moments,
)

theta = LGParams.from_scalars(0.0, 1.0, 0.5, 0.4, 1.0, 0.5)
traj = simulate_lg(theta, 100, seed=42)

filt, _, marginals, pairwise = smooth(theta, traj.observations)
exact = smoothed_additive(marginals, pairwise, state_sum(1))

model = ParticleModel.linear_gaussian(theta)
pf = bootstrap_filter(model, traj.observations, n_particles=2000, seed=1)
print(f"particle loglik estimate: {pf.loglik:9.3f}   exact: {float(filt.loglik):9.3f}")

sample = ffbsi_sample(model, pf, n_draws=1000, seed=2)
est, stderr = additive_estimate(sample, state_sum(1))
z = (est[0] - exact[0]) / stderr[0]
print(f"additive estimate {est[0]:8.3f} +- {stderr[0]:.3f}   exact {exact[0]:8.3f}   z = {z:+.2f}")

means, _ = marginal_moments(sample)
exact_means = np.array([g.mean[0] for g in marginals])
print(f"max marginal-mean deviation: {np.max(np.abs(means[:, 0] - exact_means)):.4f}")
