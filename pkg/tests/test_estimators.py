import numpy as np
import pytest
from sklearn.base import clone
from sklearn.exceptions import NotFittedError
from sklearn.model_selection import cross_val_score

from autostat import GaussianProcessModel, KernelSearchRegressor
from autostat import kernels as kl


@pytest.fixture(scope="module")
def xy():
    rng = np.random.default_rng(0)
    x = rng.uniform(0, 6, 50)  # unsorted on purpose
    return x, np.sin(2 * x) + 0.5 * x + 0.1 * rng.standard_normal(50)


class TestGaussianProcessModel:
    def test_params_and_clone(self):
        est = GaussianProcessModel(kernel="PER + WN", restarts=3)
        assert est.get_params()["kernel"] == "PER + WN"
        c = clone(est)
        assert c.get_params() == est.get_params() and c is not est

    def test_fit_predict(self, xy):
        x, y = xy
        est = GaussianProcessModel("SE + LIN + WN", restarts=2).fit(x, y)
        mean, sd = est.predict(x[:, None], return_std=True)
        assert mean.shape == sd.shape == (50,) and np.all(sd > 0)
        assert est.score(x, y) > 0.9
        assert est.n_features_in_ == 1 and np.isfinite(est.bic_)
        assert kl.structure(est.kernel_) == "LIN + SE + WN"

    def test_components_sum_to_prediction(self, xy):
        x, y = xy
        est = GaussianProcessModel("SE + LIN + WN", restarts=2).fit(x, y)
        q = np.linspace(-1, 7, 25)
        cols = est.transform(q)
        assert cols.shape == (25, 3)
        assert np.allclose(cols.sum(axis=1) + est.y_mean_, est.predict(q), atol=1e-8)

    def test_describe(self, xy):
        x, y = xy
        descs = GaussianProcessModel("SE + LIN + WN", restarts=2).fit(x, y).describe()
        assert len(descs) == 3 and any(d.is_noise for d in descs)

    def test_not_fitted(self):
        with pytest.raises(NotFittedError):
            GaussianProcessModel().predict([1.0])

    def test_rejects_multiple_features(self):
        with pytest.raises(ValueError, match="single input feature"):
            GaussianProcessModel().fit(np.zeros((5, 2)), np.zeros(5))

    def test_works_with_model_selection(self, xy):
        x, y = xy
        scores = cross_val_score(GaussianProcessModel("SE + WN", restarts=1), x[:, None], y,
                                 cv=3)
        assert scores.shape == (3,)


class TestKernelSearchRegressor:
    def test_search_and_report(self, xy, tmp_path):
        x, y = xy
        est = KernelSearchRegressor(max_depth=1, restarts=1).fit(x, y)
        assert len(est.trace_) == 2
        assert est.bic_ == min(r.selected.bic for r in est.trace_)
        est.report(tmp_path)
        assert (tmp_path / "report.md").exists() and (tmp_path / "model.json").exists()

    def test_fixed_language(self, xy):
        x, y = xy
        est = KernelSearchRegressor(language="SE", restarts=1).fit(x, y)
        assert kl.structure(est.kernel_) == "SE + WN"
