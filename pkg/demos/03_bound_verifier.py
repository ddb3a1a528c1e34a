"""The additive-smoothing error bound, checked exactly on finite-state models.

On a finite state space every ingredient of the bound is a finite table:
the per-step mismatch constants are exact L1 distances, the mixing constants
are literal minima and maxima, and both sides of the inequality are exact.
"""

import numpy as np

from bvsmooth.discrete import (
    DiscreteBackwardVariational,
    check_additive_error_bound,
    dirichlet_jitter,
    filter_smooth,
    random_model,
)
from bvsmooth.rng import stream_rng

rng = stream_rng(2024)
print(f"{'S':>3} {'n':>4} {'kappa':>7} {'lhs':>10} {'rhs':>12} {'margin':>9}")
for i in range(10):
    s = int(rng.integers(2, 5))
    n = int(rng.integers(5, 31))
    kappa = float(rng.choice([3.0, 10.0, 50.0]))
    model = random_model(s, n, rng)
    exact = DiscreteBackwardVariational.from_smoothing(filter_smooth(model))
    candidate = dirichlet_jitter(exact, kappa, rng)
    tables = rng.uniform(-1.0, 1.0, size=(n, s, s))
    res = check_additive_error_bound(model, candidate, tables)
    assert res.holds
    print(f"{s:>3} {n:>4} {kappa:>7.1f} {res.lhs:>10.4f} {res.rhs:>12.2f} {res.rhs / max(res.lhs, 1e-12):>9.1f}x")

print("\nno perturbation (kappa = inf): the error vanishes with the mismatch")
model = random_model(3, 12, rng)
exact = DiscreteBackwardVariational.from_smoothing(filter_smooth(model))
res = check_additive_error_bound(model, exact, rng.uniform(-1, 1, size=(12, 3, 3)))
print(f"lhs = {res.lhs:.2e}, rhs = {res.rhs:.2e}, holds = {res.holds}")
