import itertools

import numpy as np
import pytest

from bvsmooth.discrete import (
    BoundCheck,
    DiscreteBackwardVariational,
    DiscreteHMM,
    additive_expectation,
    check_additive_error_bound,
    density_bounds,
    dirichlet_jitter,
    filter_smooth,
    functional_tables,
    mismatch_profile,
    random_model,
    variational_marginals,
)
from bvsmooth.errors import DegenerateModel
from bvsmooth.rng import stream_rng


def enumerate_paths(model, tables=None):
    """Exhaustive-path oracle: posterior marginals, pairwise joints, loglik,
    and (optionally) the exact additive expectation."""
    s, n = model.n_states, model.horizon
    lik = np.exp(model.emis_loglik)
    total = 0.0
    marginals = np.zeros((n + 1, s))
    pairwise = np.zeros((n, s, s))
    additive = 0.0
    for path in itertools.product(range(s), repeat=n + 1):
        w = model.init[path[0]] * lik[0][path[0]]
        for k in range(n):
            w *= model.trans[path[k], path[k + 1]] * lik[k + 1][path[k + 1]]
        total += w
        for k in range(n + 1):
            marginals[k, path[k]] += w
        for k in range(n):
            pairwise[k, path[k], path[k + 1]] += w
        if tables is not None:
            additive += w * sum(tables[k, path[k], path[k + 1]] for k in range(n))
    return marginals / total, pairwise / total, np.log(total), additive / total


class TestExactSmoothing:
    def test_iid_rows_make_smoothing_local(self):
        # equal transition rows: the chain is iid, smoothing = per-step posterior
        rng = stream_rng(400)
        row = np.array([0.3, 0.7])
        model = DiscreteHMM(
            np.array([0.3, 0.7]), np.vstack([row, row]),
            np.log(rng.uniform(0.2, 1.0, size=(6, 2))),
        ).validate()
        sm = filter_smooth(model)
        lik = np.exp(model.emis_loglik)
        for k in range(6):
            local = row * lik[k] if k > 0 else model.init * lik[0]
            np.testing.assert_allclose(sm.marginals[k], local / local.sum(), atol=1e-12)

    def test_against_path_enumeration(self):
        rng = stream_rng(401)
        model = random_model(3, 6, rng)
        tables = rng.uniform(-1, 1, size=(6, 3, 3))
        marg, pair, loglik, additive = enumerate_paths(model, tables)
        sm = filter_smooth(model)
        np.testing.assert_allclose(sm.marginals, marg, atol=1e-10)
        np.testing.assert_allclose(sm.pairwise, pair, atol=1e-10)
        assert sm.loglik == pytest.approx(loglik, abs=1e-10)
        assert additive_expectation(sm.pairwise, tables) == pytest.approx(additive, abs=1e-10)

    def test_uniform_emissions_recover_prior_chain(self):
        rng = stream_rng(402)
        model = random_model(3, 5, rng)
        model = DiscreteHMM(model.init, model.trans, np.zeros((6, 3)))
        sm = filter_smooth(model)
        prior = model.init.copy()
        for k in range(6):
            np.testing.assert_allclose(sm.marginals[k], prior, atol=1e-12)
            prior = prior @ model.trans


class TestMismatchProfile:
    def test_exact_family_gives_zero(self):
        rng = stream_rng(403)
        model = random_model(3, 8, rng)
        q = DiscreteBackwardVariational.from_smoothing(filter_smooth(model))
        values = mismatch_profile(model, q)
        np.testing.assert_allclose(values, 0.0, atol=1e-12)

    def test_row_uniform_kernels_hand_case(self):
        # S = 2, n = 2 instance small enough to compute the distance by hand
        model = DiscreteHMM(
            np.array([0.5, 0.5]),
            np.array([[0.7, 0.3], [0.2, 0.8]]),
            np.log(np.array([[1.0, 1.0], [0.4, 0.9], [0.8, 0.5]])),
        ).validate()
        sm = filter_smooth(model)
        uniform = DiscreteBackwardVariational(
            sm.filters[-1].copy(), [np.full((2, 2), 0.5) for _ in range(2)]
        )
        values = mismatch_profile(model, uniform)
        # hand computation for k = 1: anchors are true filters
        anchors = sm.filters
        j1 = (anchors[1][:, None] * uniform.kernels[0]).T
        dens = model.trans * np.exp(model.emis_loglik[1])[None, :]
        j2 = anchors[0][:, None] * dens
        j2 /= j2.sum()
        assert values[1] == pytest.approx(np.abs(j1 - j2).sum(), abs=1e-14)
        assert values[0] == pytest.approx(0.0, abs=1e-14)

    def test_continuity_toward_exact(self):
        rng = stream_rng(404)
        model = random_model(3, 6, rng)
        sm = filter_smooth(model)
        exact = DiscreteBackwardVariational.from_smoothing(sm)
        previous = np.inf
        for kappa in (10.0, 1e3, 1e5, np.inf):
            q = dirichlet_jitter(exact, kappa, stream_rng(405, int(min(kappa, 1e6))))
            peak = float(np.max(mismatch_profile(model, q)))
            assert peak <= previous + 1e-9 or peak < 1e-3
            previous = peak
        assert peak < 1e-12


class TestDensityBounds:
    def test_uniform_model_degenerate_rho(self):
        model = DiscreteHMM(
            np.array([0.5, 0.5]), np.full((2, 2), 0.5), np.zeros((3, 2))
        ).validate()
        q = DiscreteBackwardVariational(np.array([0.5, 0.5]), [np.full((2, 2), 0.5)] * 2)
        lo, hi = density_bounds(model, q)
        assert lo == pytest.approx(hi)
        assert 1.0 - lo / hi == pytest.approx(0.0)

    def test_hand_computed_min_max(self):
        model = DiscreteHMM(
            np.array([0.5, 0.5]),
            np.array([[0.6, 0.4], [0.3, 0.7]]),
            np.log(np.array([[1.0, 1.0], [0.5, 1.0], [0.25, 0.8]])),
        ).validate()
        sm = filter_smooth(model)
        q = DiscreteBackwardVariational.from_smoothing(sm)
        lo, hi = density_bounds(model, q)
        # step densities: k=0 uses emission row 1, k=1 uses row 2
        d0 = model.trans * np.array([0.5, 1.0])[None, :]
        d1 = model.trans * np.array([0.25, 0.8])[None, :]
        candidates = np.concatenate(
            [d0.ravel(), d1.ravel()] + [k.ravel() for k in q.kernels]
        )
        assert lo == pytest.approx(candidates.min())
        assert hi == pytest.approx(candidates.max())

    def test_rho_always_in_unit_interval(self):
        rng = stream_rng(406)
        for _ in range(20):
            model = random_model(int(rng.integers(2, 5)), int(rng.integers(2, 12)), rng)
            q = dirichlet_jitter(
                DiscreteBackwardVariational.from_smoothing(filter_smooth(model)),
                float(rng.uniform(2, 50)), rng,
            )
            lo, hi = density_bounds(model, q)
            rho = 1.0 - lo / hi
            assert 0.0 <= rho < 1.0


class TestBoundCheck:
    def test_exact_family_zero_both_sides(self):
        rng = stream_rng(407)
        model = random_model(3, 7, rng)
        q = DiscreteBackwardVariational.from_smoothing(filter_smooth(model))
        tables = rng.uniform(-1, 1, size=(7, 3, 3))
        res = check_additive_error_bound(model, q, tables)
        assert res.lhs == pytest.approx(0.0, abs=1e-12)
        assert res.rhs == pytest.approx(0.0, abs=1e-10)
        assert res.holds

    def test_randomized_instances_always_hold(self):
        rng = stream_rng(408)
        worst = 0.0
        for i in range(60):
            s = int(rng.integers(2, 5))
            n = int(rng.integers(2, 31))
            model = random_model(s, n, rng)
            q = dirichlet_jitter(
                DiscreteBackwardVariational.from_smoothing(filter_smooth(model)),
                float(rng.uniform(1.5, 60.0)), rng,
            )
            tables = rng.uniform(-1, 1, size=(n, s, s))
            res = check_additive_error_bound(model, q, tables)
            assert res.holds, f"instance {i}: lhs={res.lhs} rhs={res.rhs}"
            if res.rhs > 0:
                worst = max(worst, res.lhs / res.rhs)
        assert worst <= 1.0

    def test_marginal_functional_uniformly_bounded(self):
        # single nonzero step term: the error stays bounded as n grows
        rng = stream_rng(409)
        s = 3
        trans = 0.15 + rng.uniform(0, 1, size=(s, s))
        trans /= trans.sum(axis=1, keepdims=True)
        init = np.full(s, 1.0 / s)
        emis_row = np.log(rng.uniform(0.3, 1.0, size=s))
        table = rng.uniform(-1, 1, size=(s, s))
        errors = []
        caps = []
        for n in (10, 40, 80, 160):
            model = DiscreteHMM(init, trans, np.tile(emis_row, (n + 1, 1))).validate()
            sm = filter_smooth(model)
            q = dirichlet_jitter(
                DiscreteBackwardVariational.from_smoothing(sm), 12.0, stream_rng(410, n)
            )
            tables = np.zeros((n, s, s))
            tables[4] = table
            res = check_additive_error_bound(model, q, tables)
            sigma_ratio = res.sigma_max / res.sigma_min
            c_plus = float(np.max(res.mismatch))
            cap = 4.0 * sigma_ratio * (1 + res.rho / (1 - res.rho)) * c_plus * np.abs(table).max()
            errors.append(res.lhs)
            caps.append(cap)
            assert res.lhs <= cap + 1e-10
        assert max(errors) <= max(caps)

    def test_validation_rejects_bad_models(self):
        with pytest.raises(DegenerateModel):
            DiscreteHMM(np.array([0.5, 0.5]), np.array([[1.0, 0.0], [0.5, 0.5]]), np.zeros((2, 2))).validate()
        with pytest.raises(DegenerateModel):
            DiscreteBackwardVariational(np.array([1.0, 0.0]), []).validate()


class TestHelpers:
    def test_from_emission_matrix(self):
        init = np.array([0.6, 0.4])
        trans = np.array([[0.7, 0.3], [0.4, 0.6]])
        emis = np.array([[0.5, 0.4, 0.1], [0.1, 0.3, 0.6]])
        model = DiscreteHMM.from_emission_matrix(init, trans, emis, [0, 2, 1])
        np.testing.assert_allclose(np.exp(model.emis_loglik[0]), emis[:, 0])
        np.testing.assert_allclose(np.exp(model.emis_loglik[1]), emis[:, 2])
        np.testing.assert_allclose(np.exp(model.emis_loglik[2]), emis[:, 1])

    def test_functional_tables_from_callable(self):
        from bvsmooth.functionals import AdditiveFunctional

        f = AdditiveFunctional(dim=1, term=lambda k, u, v: np.array([float(u - v + k)]))
        tables = functional_tables(f, 2, 2)
        assert tables[0, 1, 0] == pytest.approx(1.0)
        assert tables[1, 0, 1] == pytest.approx(0.0)

    def test_variational_marginals_normalized(self):
        rng = stream_rng(411)
        model = random_model(4, 9, rng)
        q = dirichlet_jitter(
            DiscreteBackwardVariational.from_smoothing(filter_smooth(model)), 5.0, rng
        )
        marg, pair = variational_marginals(q)
        np.testing.assert_allclose(marg.sum(axis=1), 1.0, atol=1e-12)
        np.testing.assert_allclose(pair.sum(axis=(1, 2)), 1.0, atol=1e-12)
