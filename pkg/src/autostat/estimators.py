"""scikit-learn estimators wrapping kernel fitting and kernel search."""

from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator, RegressorMixin
from sklearn.utils.validation import check_is_fitted

from . import kernels as kl
from .describe import describe_components
from .gp import Dataset, Posterior, fit_kernel
from .report import render_report
from .search import SearchConfig, greedy_search
from .validation import check_inputs, check_series


def _dataset(X, y, x_unit, y_unit) -> Dataset:
    xs, ys = check_series(X, y)
    order = np.argsort(xs, kind="stable")  # descriptions use contiguous CV folds
    return Dataset(xs[order], ys[order], x_unit, y_unit)


class _PosteriorMixin:
    """Prediction, decomposition and reporting from a fitted ``model_``."""

    def predict(self, X, return_std=False):
        """Posterior predictive mean (and standard deviation) of the latent function."""
        check_is_fitted(self, "model_")
        mean, var = self.posterior_.predict(check_inputs(X))
        if return_std:
            return mean, np.sqrt(var)
        return mean

    def decompose(self, X):
        """Posterior of each additive component at ``X``.

        Means exclude the output offset, so their sum plus ``y_mean_`` is
        :meth:`predict`.
        """
        check_is_fitted(self, "model_")
        return self.posterior_.decompose(check_inputs(X))

    def transform(self, X):
        """Component posterior means, one column per additive component."""
        comps = self.decompose(X)
        return np.column_stack([c.mean for c in comps])

    def describe(self):
        """Descriptions of the components, most useful first."""
        check_is_fitted(self, "model_")
        return describe_components(self.model_.kernel, self.data_)

    def report(self, out_dir):
        """Write a report for the fitted model and return it."""
        descriptions = self.describe()
        return render_report(self.model_, self.data_, descriptions, out_dir=out_dir,
                             trace=getattr(self, "trace_", None))

    def _finish(self, model, data):
        self.model_ = model
        self.data_ = data
        self.kernel_ = model.kernel
        self.posterior_ = Posterior(model.kernel, data)
        self.y_mean_ = data.y_mean
        self.n_features_in_ = 1
        self.bic_ = model.bic
        self.log_marginal_likelihood_ = model.log_ml
        return self


class GaussianProcessModel(_PosteriorMixin, RegressorMixin, BaseEstimator):
    """GP regression with a fixed kernel structure.

    Parameters
    ----------
    kernel : str
        Kernel expression such as ``"SE + PER * LIN + WN"``.  Parameter
        values in the string are used as one optimisation start.
    restarts : int
        Random restarts of the parameter optimisation.
    random_state : int
    x_unit, y_unit : str
        Units used in descriptions and reports.

    Attributes
    ----------
    kernel_ : KernelExpr
        Kernel with fitted parameters.
    bic_, log_marginal_likelihood_ : float
    """

    def __init__(self, kernel="SE + WN", restarts=10, random_state=0, x_unit="", y_unit=""):
        self.kernel = kernel
        self.restarts = restarts
        self.random_state = random_state
        self.x_unit = x_unit
        self.y_unit = y_unit

    def fit(self, X, y):
        data = _dataset(X, y, self.x_unit, self.y_unit)
        expr = kl.parse_kernel(self.kernel) if isinstance(self.kernel, str) else self.kernel
        model = fit_kernel(expr, data, restarts=self.restarts, rng_seed=self.random_state)
        return self._finish(model, data)


class KernelSearchRegressor(_PosteriorMixin, RegressorMixin, BaseEstimator):
    """GP regression whose kernel is chosen by greedy BIC search.

    Parameters
    ----------
    max_depth : int
    restarts : int
    random_state : int
    language : str
        One of FULL, SE_ONLY, LINEAR, MKL, TCI, SPECTRAL, CHANGEPOINT.
    interpretable : bool
        Distribute products over sums during the search.
    n_jobs : int
    x_unit, y_unit : str

    Attributes
    ----------
    kernel_ : KernelExpr
    trace_ : SearchTrace
    bic_, log_marginal_likelihood_ : float

    Examples
    --------
    >>> import numpy as np
    >>> x = np.linspace(0, 5, 60)
    >>> est = KernelSearchRegressor(max_depth=2, restarts=2).fit(x, np.sin(x))
    >>> est.predict(x).shape
    (60,)
    """

    def __init__(self, max_depth=10, restarts=10, random_state=0, language="FULL",
                 interpretable=False, n_jobs=1, x_unit="", y_unit=""):
        self.max_depth = max_depth
        self.restarts = restarts
        self.random_state = random_state
        self.language = language
        self.interpretable = interpretable
        self.n_jobs = n_jobs
        self.x_unit = x_unit
        self.y_unit = y_unit

    def fit(self, X, y):
        data = _dataset(X, y, self.x_unit, self.y_unit)
        config = SearchConfig(max_depth=self.max_depth, restarts=self.restarts,
                              rng_seed=self.random_state, language=self.language,
                              interpretable=self.interpretable, jobs=self.n_jobs)
        model, self.trace_ = greedy_search(data, config)
        return self._finish(model, data)
