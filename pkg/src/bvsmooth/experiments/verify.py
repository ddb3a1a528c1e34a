"""Bound verifier: sweep random finite-state instances, check the additive
error bound exactly on each, and probe the linear-growth corollary."""

import csv

import numpy as np

from ..discrete import (
    DiscreteBackwardVariational,
    check_additive_error_bound,
    dirichlet_jitter,
    filter_smooth,
    random_model,
)
from ..rng import stream_rng

INSTANCE_STREAM = 31
GROWTH_STREAM = 32


def random_instance(seed, instance_id, state_counts, horizons, kappas):
    rng = stream_rng(seed, INSTANCE_STREAM, instance_id)
    s = int(rng.choice(state_counts))
    n = int(rng.choice(horizons))
    kappa = float(rng.choice(kappas))
    model = random_model(s, n, rng)
    q = dirichlet_jitter(DiscreteBackwardVariational.from_smoothing(filter_smooth(model)), kappa, rng)
    tables = rng.uniform(-1.0, 1.0, size=(n, s, s))
    return model, q, tables, s, n, kappa


def run_bound_verify(cfg, record):
    seed = int(cfg["seed"])
    rows = []
    violations = 0
    for i in range(int(cfg["instances"])):
        model, q, tables, s, n, kappa = random_instance(
            seed, i, cfg["state_counts"], cfg["horizons"], cfg["kappas"]
        )
        res = check_additive_error_bound(model, q, tables)
        if not res.holds:
            violations += 1
        rows.append([i, s, n, kappa, res.sigma_min, res.sigma_max, res.rho,
                     res.lhs, res.rhs, res.holds])

    with open(record.register("verifier.csv"), "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["instance_id", "S", "n", "kappa", "sigma_minus", "sigma_plus",
                         "rho", "lhs", "rhs", "holds"])
        for row in rows:
            writer.writerow(
                row[:4] + [f"{v:.17g}" for v in row[4:9]] + [str(bool(row[9])).lower()]
            )

    growth = cfg["growth"]
    growth_rows = run_growth_sweep(seed, growth)
    with open(record.register("growth.csv"), "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["n", "lhs", "linear_cap", "marginal_lhs", "marginal_cap"])
        for row in growth_rows:
            writer.writerow([row[0]] + [f"{v:.17g}" for v in row[1:]])

    record.metrics["instances"] = len(rows)
    record.metrics["violations"] = violations
    return record, violations


def run_growth_sweep(seed, growth_cfg):
    """Fixed per-step structure, growing horizon: the error must stay under
    the linear-in-n cap, and a single-step functional's error must stay
    bounded uniformly in n."""
    s = int(growth_cfg["s"])
    kappa = float(growth_cfg["kappa"])
    horizons = [int(v) for v in growth_cfg["horizons"]]
    marginal_k = int(growth_cfg["marginal_k"])
    rng = stream_rng(seed, GROWTH_STREAM)

    # one homogeneous template: constant transition row pattern and a single
    # emission vector reused every step
    trans = 0.15 + rng.uniform(0.0, 1.0, size=(s, s))
    trans /= trans.sum(axis=1, keepdims=True)
    init = 0.15 + rng.uniform(0.0, 1.0, size=s)
    init /= init.sum()
    emis_row = np.log(rng.uniform(0.3, 1.0, size=s))
    table = rng.uniform(-1.0, 1.0, size=(s, s))

    rows = []
    for n in horizons:
        from ..discrete import DiscreteHMM

        model = DiscreteHMM(init, trans, np.tile(emis_row, (n + 1, 1))).validate()
        sm = filter_smooth(model)
        q = dirichlet_jitter(
            DiscreteBackwardVariational.from_smoothing(sm), kappa, stream_rng(seed, GROWTH_STREAM, n)
        )
        tables = np.tile(table, (n, 1, 1))
        res = check_additive_error_bound(model, q, tables)
        c_plus = float(np.max(res.mismatch))
        h_inf = float(np.abs(table).max())
        ratio = res.sigma_max / res.sigma_min
        cap = 4.0 * ratio * (1.0 + res.rho / (1.0 - res.rho)) * c_plus * h_inf * n if res.rho < 1 else np.inf

        marg_tables = np.zeros((n, s, s))
        marg_tables[marginal_k] = table
        res_m = check_additive_error_bound(model, q, marg_tables)
        cap_m = 4.0 * ratio * (1.0 + res.rho / (1.0 - res.rho)) * c_plus * h_inf if res.rho < 1 else np.inf
        rows.append([n, res.lhs, cap, res_m.lhs, cap_m])
    return rows
