import math

import numpy as np
import pytest
from hypothesis import given, strategies as st
from scipy.stats import multivariate_normal
from sklearn.gaussian_process import GaussianProcessRegressor
from sklearn.gaussian_process.kernels import RBF, ConstantKernel, WhiteKernel

from autostat import kernels as kl
from autostat.gp import (Dataset, Posterior, ScoredModel, bic, decompose_posterior, fit_kernel,
                         lml_gradient, log_marginal_likelihood, optimize_params, predict)
from autostat.kernels import parse_kernel
from autostat.numerics import covariance, pack_params, unpack_params

from _kernels import random_expr

seeds = st.integers(0, 2**32 - 1)


@pytest.fixture
def wave():
    rng = np.random.default_rng(0)
    x = np.linspace(0, 4, 60)
    return Dataset(x, np.sin(2 * np.pi * x) + 0.1 * rng.standard_normal(60))


class TestDataset:
    def test_standardisation(self):
        d = Dataset([0, 1, 2, 3], [1.0, 3.0, 5.0, 7.0])
        assert d.y_mean == 4.0
        assert np.isclose(d.y_standardized.std(), 1.0)

    def test_constant_outputs(self):
        d = Dataset([0, 1, 2], [5.0, 5.0, 5.0])
        assert d.y_std == 1.0 and np.all(d.y_standardized == 0)

    @pytest.mark.parametrize("xs, ys", [([0, 1], [1.0]), ([], []), ([0, np.nan], [1, 2])])
    def test_rejects_bad_input(self, xs, ys):
        with pytest.raises(ValueError):
            Dataset(xs, ys)


class TestBic:
    def test_arithmetic(self):
        assert bic(-100.0, 3, 100) == pytest.approx(200 + 3 * math.log(100), abs=1e-12)
        assert bic(-100.0, 3, 100) == pytest.approx(213.8155105579643, abs=1e-10)

    def test_scored_model_identity(self):
        m = ScoredModel.from_fit(parse_kernel("SE(1,1) + WN(1)"), -12.5, 40)
        assert m.param_count == 3
        assert m.bic == -2 * m.log_ml + m.param_count * math.log(m.n)


class TestLikelihood:
    @given(seeds)
    def test_matches_multivariate_normal(self, seed):
        rng = np.random.default_rng(seed)
        e = kl.add(random_expr(rng, depth=2), parse_kernel("WN(0.1)"))
        x = np.sort(rng.uniform(0, 5, 30))
        d = Dataset(x, rng.standard_normal(30))
        K = covariance(e, x)
        K[np.diag_indices(30)] += 1e-9 * np.mean(np.diag(K))
        want = multivariate_normal(np.zeros(30), K).logpdf(d.y_standardized)
        assert log_marginal_likelihood(e, d) == pytest.approx(want, rel=1e-8, abs=1e-8)

    @given(seeds)
    def test_gradient_matches_finite_differences(self, seed):
        rng = np.random.default_rng(seed)
        e = kl.add(random_expr(rng, depth=2), parse_kernel("WN(0.5)"))
        x = np.sort(rng.uniform(-2, 2, 10))
        d = Dataset(x, rng.standard_normal(10))
        theta = pack_params(e)
        g = lml_gradient(e, d)
        h = 1e-5
        for i in range(len(theta)):
            up, dn = theta.copy(), theta.copy()
            up[i] += h
            dn[i] -= h
            fd = (log_marginal_likelihood(unpack_params(e, up), d)
                  - log_marginal_likelihood(unpack_params(e, dn), d)) / (2 * h)
            assert abs(g[i] - fd) <= 1e-4 * max(abs(fd), 1e-2)


class TestPrediction:
    def test_matches_scikit_learn(self):
        rng = np.random.default_rng(1)
        x = np.sort(rng.uniform(0, 10, 40))
        y = np.sin(x) + 0.1 * rng.standard_normal(40)
        d = Dataset(x, y)
        ours = parse_kernel("SE(1.3, 0.9) + WN(0.05)")
        ref = GaussianProcessRegressor(
            ConstantKernel(1.3, "fixed") * RBF(0.9, "fixed") + WhiteKernel(0.05, "fixed"),
            optimizer=None, normalize_y=True, alpha=1e-9 * 1.35).fit(x[:, None], y)
        q = np.linspace(-1, 11, 37) + 0.0123  # avoid exact training inputs
        mean, var = predict(ours, d, q)
        rm, rs = ref.predict(q[:, None], return_std=True)
        assert np.allclose(mean, rm, atol=1e-6)
        assert np.allclose(np.sqrt(var), rs, atol=1e-6)

    @given(seeds)
    def test_components_sum_to_prediction(self, seed):
        rng = np.random.default_rng(seed)
        e = kl.add(random_expr(rng, depth=3), parse_kernel("WN(0.2)"))
        x = np.sort(rng.uniform(-2, 2, 25))
        d = Dataset(x, rng.standard_normal(25))
        q = np.linspace(-2.5, 2.5, 31)
        mean, _ = predict(e, d, q)
        comps = decompose_posterior(e, d, q)
        assert len(comps) == len(kl.to_normal_form(e))
        total = d.y_mean + sum(c.mean for c in comps)
        assert np.allclose(total, mean, rtol=0, atol=1e-8 * max(1.0, np.abs(mean).max()))
        assert all(np.all(c.variance >= 0) for c in comps)

    def test_noise_components_flagged(self, wave):
        comps = decompose_posterior(parse_kernel("PER(1,1,1) + WN(0.1)"), wave, wave.xs)
        flags = {kl.structure(c.term.to_expr()): c.is_noise for c in comps}
        assert flags == {"PER": False, "WN": True}


class TestOptimisation:
    def test_single_point_cannot_be_fitted(self):
        with pytest.raises(ValueError, match="two observations"):
            fit_kernel(parse_kernel("SE + WN"), Dataset([0.0], [1.0]), restarts=1)

    def test_restarts_must_be_positive(self, wave):
        with pytest.raises(ValueError):
            optimize_params(parse_kernel("SE + WN"), wave, restarts=0)

    def test_deterministic(self, wave):
        a = fit_kernel(parse_kernel("SE + WN"), wave, restarts=2, rng_seed=3)
        b = fit_kernel(parse_kernel("SE + WN"), wave, restarts=2, rng_seed=3)
        assert a == b

    def test_never_worse_than_the_incoming_start(self, wave):
        start = parse_kernel("SE(0.5, 2) + WN(0.3)")
        _, lml = optimize_params(start, wave, restarts=1, rng_seed=0)
        assert lml >= log_marginal_likelihood(start, wave)

    def test_stored_scores_are_reproducible(self, wave):
        m = fit_kernel(parse_kernel("PER + WN"), wave, restarts=3)
        again = log_marginal_likelihood(parse_kernel(str(m.kernel)), wave)
        assert again == pytest.approx(m.log_ml, abs=1e-9)
        assert m.bic == bic(m.log_ml, 4, wave.n)

    def test_recovers_period(self, wave):
        m = fit_kernel(parse_kernel("PER + WN"), wave, restarts=5)
        per = next(n for n in kl.iter_nodes(m.kernel) if getattr(n, "kind", None) is kl.Kind.PER)
        assert per.params[2] == pytest.approx(1.0, rel=0.01)
        assert m.restarts_used >= 1

    @pytest.mark.parametrize("start", ["PER + WN", "PER(1, 0.01, 0.5) + WN(1)"])
    def test_periodic_correlation_length_resolved_by_inputs(self, start):
        x = np.linspace(0, 10, 100)
        data = Dataset(x, np.random.default_rng(7).standard_normal(100))
        m = fit_kernel(parse_kernel(start), data, restarts=3, rng_seed=0)
        per = next(n for n in kl.iter_nodes(m.kernel) if getattr(n, "kind", None) is kl.Kind.PER)
        _, ell, period = per.params
        assert period >= 2 * (x[1] - x[0]) * (1 - 1e-9)
        assert ell * period / (2 * math.pi) >= (x[1] - x[0]) * (1 - 1e-9)

    def test_posterior_variance_shrinks_at_data(self, wave):
        m = fit_kernel(parse_kernel("SE + WN"), wave, restarts=2)
        post = Posterior(m.kernel, wave)
        _, v_in = post.conditional(m.kernel, wave.xs[:5])
        _, v_out = post.conditional(m.kernel, np.array([40.0]))
        assert v_out[0] > v_in.max()
