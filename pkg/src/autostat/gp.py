"""Gaussian-process inference for a fixed kernel structure.

All fitting happens on standardised outputs (zero mean, unit variance, as
stored on :class:`Dataset`); predictions and decompositions are returned in
the original output units.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass

import numpy as np
from scipy.linalg import cho_solve, solve_triangular
from scipy.linalg.lapack import dpotri
from scipy.optimize import minimize
from scipy.signal import lombscargle

from . import kernels as kl
from .kernels import UNCONSTRAINED, Base, KernelExpr, Kind, ProductTerm
from .numerics import (
    CholeskyError,
    Inputs,
    cholesky_with_jitter,
    covariance,
    evaluate,
    evaluate_adjoint,
    pack_params,
    unpack_params,
)

log = logging.getLogger(__name__)

LOG_2PI = math.log(2.0 * math.pi)


class OptimizationError(RuntimeError):
    """Every start of a parameter optimisation failed."""


@dataclass
class Dataset:
    """Observed 1-D inputs and outputs plus labels for reporting."""

    xs: np.ndarray
    ys: np.ndarray
    x_unit: str = ""
    y_unit: str = ""
    name: str = "data"

    def __post_init__(self):
        self.xs = np.asarray(self.xs, dtype=float).ravel()
        self.ys = np.asarray(self.ys, dtype=float).ravel()
        if self.xs.shape != self.ys.shape:
            raise ValueError(f"xs and ys differ in length ({len(self.xs)} vs {len(self.ys)})")
        if len(self.xs) < 1:
            raise ValueError("need at least one observation")
        if not (np.all(np.isfinite(self.xs)) and np.all(np.isfinite(self.ys))):
            raise ValueError("observations must be finite")
        self.y_mean = float(np.mean(self.ys))
        std = float(np.std(self.ys))
        self.y_std = std if std > 0 else 1.0

    @property
    def n(self) -> int:
        return len(self.xs)

    @property
    def y_standardized(self) -> np.ndarray:
        return (self.ys - self.y_mean) / self.y_std

    @property
    def x_range(self) -> float:
        r = float(self.xs.max() - self.xs.min())
        return r if r > 0 else 1.0

    def subset(self, idx) -> "Dataset":
        idx = np.asarray(idx)
        return Dataset(self.xs[idx], self.ys[idx], self.x_unit, self.y_unit, self.name)


@dataclass
class ScoredModel:
    kernel: KernelExpr
    log_ml: float
    bic: float
    param_count: int
    restarts_used: int = 0
    n: int = 0

    @classmethod
    def from_fit(cls, kernel, log_ml, n, restarts_used=0) -> "ScoredModel":
        k = kl.count_params(kernel)
        return cls(kernel, float(log_ml), bic(log_ml, k, n), k, restarts_used, n)


@dataclass
class PosteriorComponent:
    term: ProductTerm
    mean: np.ndarray
    variance: np.ndarray
    is_noise: bool = False


def bic(log_ml: float, param_count: int, n: int) -> float:
    """-2 log p(D|M) + |M| log n."""
    if n < 1:
        raise ValueError("n must be at least 1")
    return -2.0 * log_ml + param_count * math.log(n)


# ---------------------------------------------------------------------------
# marginal likelihood


class _Objective:
    """Log marginal likelihood as a function of the unconstrained parameters."""

    def __init__(self, kernel: KernelExpr, data: Dataset):
        self.kernel = kernel
        self.inputs = Inputs(data.xs)
        self.y = data.y_standardized
        self.n = data.n

    def value(self, theta) -> float:
        K = evaluate(self.kernel, self.inputs, theta)
        L, _, _ = cholesky_with_jitter(K)
        alpha = cho_solve((L, True), self.y, check_finite=False)
        return float(-0.5 * self.y @ alpha - np.log(np.diag(L)).sum() - 0.5 * self.n * LOG_2PI)

    def value_and_grad(self, theta) -> tuple[float, np.ndarray]:
        K, contract = evaluate_adjoint(self.kernel, self.inputs, theta)
        L, _, _ = cholesky_with_jitter(K)
        alpha = cho_solve((L, True), self.y, check_finite=False)
        lml = float(-0.5 * self.y @ alpha - np.log(np.diag(L)).sum() - 0.5 * self.n * LOG_2PI)
        Kinv, info = dpotri(L, lower=1)
        if info != 0:
            raise CholeskyError("inverse of the Gram matrix failed")
        # dpotri fills the lower triangle only
        Kinv += np.tril(Kinv, -1).T
        W = np.outer(alpha, alpha)
        W -= Kinv
        g = 0.5 * contract(W)
        if not (math.isfinite(lml) and np.all(np.isfinite(g))):
            raise CholeskyError("non-finite likelihood")
        return lml, g


def log_marginal_likelihood(kernel: KernelExpr, data: Dataset) -> float:
    return _Objective(kernel, data).value(pack_params(kernel))


def lml_gradient(kernel: KernelExpr, data: Dataset) -> np.ndarray:
    """Gradient in the unconstrained space of :func:`numerics.pack_params`."""
    return _Objective(kernel, data).value_and_grad(pack_params(kernel))[1]


# ---------------------------------------------------------------------------
# optimisation

# parameters optimised in raw input units; a window's end is optimised as
# the log of its width, like the positive parameters
RAW_PARAMS = UNCONSTRAINED - {"end"}

# bound on log-space parameters; keeps exp() finite and the Gram matrix sane
LOG_BOUND = 30.0


def _dominant_periods(data: "Dataset", count: int = 5) -> tuple[np.ndarray, np.ndarray]:
    """Periods and powers of the strongest periodogram peaks of detrended outputs."""
    xs, y = data.xs, data.y_standardized
    spacing = np.diff(np.unique(xs))
    empty = (np.empty(0), np.empty(0))
    if len(spacing) < 3 or data.x_range <= 0:
        return empty
    y = y - np.polyval(np.polyfit(xs, y, 1), xs)
    if not np.any(y):
        return empty
    f_lo = 1.0 / data.x_range
    f_hi = 0.5 / max(spacing.min(), np.median(spacing) / 4.0)
    freqs = np.geomspace(f_lo, f_hi, 2000)
    power = lombscargle(xs, y, 2.0 * np.pi * freqs, precenter=True)
    interior = (power[1:-1] > power[:-2]) & (power[1:-1] >= power[2:])
    peaks = np.flatnonzero(interior) + 1
    peaks = peaks[np.argsort(power[peaks])[::-1][:count]]
    return 1.0 / freqs[peaks], power[peaks]


class ParamSampler:
    """Scale-aware random initialisation of kernel parameters."""

    def __init__(self, data: Dataset):
        self.x_min = float(data.xs.min())
        self.x_max = float(data.xs.max())
        self.x_range = data.x_range or 1.0
        self.x_mean = float(data.xs.mean())
        self.x_std = float(data.xs.std()) or 1.0
        self.periods, power = _dominant_periods(data)
        # sidelobes of a strong peak are rarely worth a start
        self.period_weights = power ** 2 / np.sum(power ** 2) if len(power) else power

    def _draw(self, node, name, rng) -> float:
        """One unconstrained value for parameter ``name`` of ``node``."""
        r = self.x_range
        kind = node.kind if isinstance(node, Base) else None
        if name == "variance":
            u = rng.choice([0.1, 1.0])
            if kind is Kind.LIN:
                u /= self.x_std ** 2
            return rng.normal(math.log(u), 1.0)
        if name == "lengthscale":
            if kind is Kind.PER:
                return rng.normal(0.0, 1.0)
            return rng.normal(math.log(r / 10.0), 1.0)
        if name == "period":
            if len(self.periods) and rng.random() < 0.5:
                # the likelihood basin narrows as the number of cycles grows
                p = rng.choice(self.periods, p=self.period_weights)
                return rng.normal(math.log(p), 0.1 * p / r)
            k = rng.integers(2, 26)
            return rng.normal(math.log(r / k), 0.5)
        if name == "offset":
            return rng.normal(self.x_mean, self.x_std)
        if name in ("location", "start"):
            return rng.uniform(self.x_min, self.x_max)
        if name == "end":
            return rng.normal(math.log(r / 5.0), 0.5)
        if name == "steepness":
            return rng.normal(math.log(r / 20.0), 0.5)
        raise KeyError(name)

    def sample(self, kernel: KernelExpr, rng, base=None, perturb: bool = False) -> np.ndarray:
        """Draw a start.

        Entries of ``base`` that are NaN are sampled from the prior; the rest
        are kept, or jittered when ``perturb`` is set.  Without ``base`` every
        parameter is sampled.
        """
        out = []
        i = 0
        for node in kl.param_nodes(kernel):
            for name in kl.own_param_names(node):
                prior = self._draw(node, name, rng)
                if base is None or math.isnan(base[i]):
                    out.append(prior)
                elif perturb:
                    sd = 0.02 * self.x_range if name in RAW_PARAMS else 0.3
                    out.append(base[i] + rng.normal(0.0, sd))
                else:
                    out.append(base[i])
                i += 1
        return np.array(out, dtype=float)


def _search_space(kernel: KernelExpr, data: Dataset) -> tuple[np.ndarray, np.ndarray]:
    """Map from optimiser coordinates to parameters, and box bounds on the coordinates.

    Returns ``(A, box)`` with ``theta = A @ u``.  Location-like parameters
    live in raw input units; dividing them by the input spread keeps the
    problem well conditioned.  Periods shorter than twice the smallest input
    spacing alias on sampled data and are excluded.  A periodic factor is
    optimised through log(lengthscale * period) rather than its lengthscale:
    when the correlation length within a period, lengthscale * period / 2 pi,
    drops below the input spacing the factor is indistinguishable from noise
    on these inputs, except that its zero-mean offset can mimic the
    correlation that centring the outputs leaves in iid residuals.
    """
    nodes = [(node, name) for node in kl.param_nodes(kernel) for name in kl.own_param_names(node)]
    names = [name for _, name in nodes]
    x_std = float(data.xs.std()) or 1.0
    raw = np.array([name in RAW_PARAMS for name in names], dtype=bool)
    A = np.diag(np.where(raw, x_std, 1.0))
    lo = np.full(len(names), -LOG_BOUND)
    hi = np.full(len(names), LOG_BOUND)
    x_lo, x_hi = float(data.xs.min()), float(data.xs.max())
    reach = 100.0 * (x_hi - x_lo + x_std)
    lo[raw], hi[raw] = x_lo - reach, x_hi + reach
    spacing = np.diff(np.unique(data.xs))
    min_gap = float(spacing.min()) if len(spacing) else 1.0
    for i, name in enumerate(names):
        if name == "period":
            lo[i] = math.log(2.0 * min_gap)
        elif name == "end":
            # log window width; narrower windows cannot be resolved anyway
            lo[i] = math.log(1e-3 * min_gap)
    for i, (node, name) in enumerate(nodes):
        if name == "lengthscale" and isinstance(node, Base) and node.kind is Kind.PER:
            p = i + 1  # the period follows the lengthscale
            A[i, p] = -1.0
            lo[i] = math.log(2.0 * math.pi * min_gap)
            hi[i] = 2.0 * LOG_BOUND
    return A, np.column_stack([lo, hi])


def _fit(kernel, data, restarts, rng_seed, max_iter=200, tol=1e-6):
    if restarts < 1:
        raise ValueError("restarts must be at least 1")
    if data.n < 2:
        raise ValueError("fitting needs at least two observations")
    objective = _Objective(kernel, data)
    sampler = ParamSampler(data)
    A, bounds = _search_space(kernel, data)
    incoming = pack_params(kernel)
    inherited = bool(len(incoming)) and not np.all(np.isnan(incoming))

    def fun(u):
        try:
            v, g = objective.value_and_grad(A @ u)
        except np.linalg.LinAlgError:
            return _INFEASIBLE, np.zeros_like(u)
        return -v, -(A.T @ g)

    best_theta, best_lml, used = None, -math.inf, 0
    for r in range(restarts + 1):
        rng = np.random.default_rng([rng_seed, r])
        if r == 0:
            theta0 = sampler.sample(kernel, rng, base=incoming)
        elif inherited:
            theta0 = sampler.sample(kernel, rng, base=incoming, perturb=True)
        else:
            theta0 = sampler.sample(kernel, rng)
        u0 = np.clip(np.linalg.solve(A, theta0), bounds[:, 0], bounds[:, 1])
        if fun(u0)[0] >= _INFEASIBLE:
            continue
        res = minimize(fun, u0, jac=True, method="L-BFGS-B", bounds=bounds,
                       options={"maxiter": max_iter, "ftol": tol})
        if not np.isfinite(res.fun) or res.fun >= _INFEASIBLE:
            continue
        used += 1
        if -res.fun > best_lml:
            best_theta, best_lml = A @ res.x, -float(res.fun)
    if best_theta is None:
        raise OptimizationError(f"all {restarts + 1} starts failed for {kl.structure(kernel)}")
    return unpack_params(kernel, best_theta), best_lml, used


# objective value reported for points where the Gram matrix cannot be factored
_INFEASIBLE = 1e300


def optimize_params(kernel: KernelExpr, data: Dataset, restarts: int = 10, rng_seed: int = 0,
                    max_iter: int = 200, tol: float = 1e-6) -> tuple[KernelExpr, float]:
    """Maximise the marginal likelihood from ``restarts`` random starts.

    The kernel's own parameter values are used as one additional start; NaN
    parameters (fresh kernels proposed by the search) are drawn at random.
    Returns the fitted kernel and its log marginal likelihood.
    """
    fitted, lml, _ = _fit(kernel, data, restarts, rng_seed, max_iter, tol)
    return fitted, lml


def fit_kernel(kernel: KernelExpr, data: Dataset, restarts: int = 10, rng_seed: int = 0,
               max_iter: int = 200, tol: float = 1e-6) -> ScoredModel:
    if kl.count_params(kernel) == 0:
        raise ValueError("kernel has no parameters")
    fitted, lml, used = _fit(kernel, data, restarts, rng_seed, max_iter, tol)
    # score the rebuilt kernel so stored fields are reproducible from its print
    lml = log_marginal_likelihood(fitted, data)
    return ScoredModel.from_fit(fitted, lml, data.n, used)


# ---------------------------------------------------------------------------
# posterior


class Posterior:
    """Cached factorisation of the training Gram matrix for one kernel."""

    def __init__(self, kernel: KernelExpr, data: Dataset):
        self.kernel = kernel
        self.data = data
        K = covariance(kernel, data.xs)
        self.L, self.jitter, _ = cholesky_with_jitter(K)
        self.alpha = cho_solve((self.L, True), data.y_standardized, check_finite=False)

    def conditional(self, expr: KernelExpr, query) -> tuple[np.ndarray, np.ndarray]:
        """Posterior mean and variance of the function drawn from ``expr``.

        ``expr`` is the full kernel or any additive part of it; results are
        in standardised units.
        """
        query = np.asarray(query, dtype=float).ravel()
        Kqx = covariance(expr, query, self.data.xs)
        mean = Kqx @ self.alpha
        v = solve_triangular(self.L, Kqx.T, lower=True, check_finite=False)
        prior = np.diag(covariance(expr, query, query))
        var = prior - np.einsum("ij,ij->j", v, v)
        tol = 1e-10 * np.maximum(1.0, np.abs(prior))
        if np.any(var < -tol):
            raise np.linalg.LinAlgError(f"negative predictive variance {var.min():g}")
        return mean, np.clip(var, 0.0, None)

    def predict(self, query) -> tuple[np.ndarray, np.ndarray]:
        mean, var = self.conditional(self.kernel, query)
        s = self.data.y_std
        return mean * s + self.data.y_mean, var * s * s

    def decompose(self, query, terms=None) -> list[PosteriorComponent]:
        s = self.data.y_std
        if terms is None:
            terms = kl.to_normal_form(self.kernel).terms
        out = []
        for term in terms:
            mean, var = self.conditional(term.to_expr(), query)
            out.append(PosteriorComponent(term, mean * s, var * s * s, term.is_noise))
        return out


def predict(kernel: KernelExpr, data: Dataset, query_xs) -> tuple[np.ndarray, np.ndarray]:
    """Posterior predictive mean and variance (original units)."""
    return Posterior(kernel, data).predict(query_xs)


def decompose_posterior(kernel: KernelExpr, data: Dataset, query_xs) -> list[PosteriorComponent]:
    """Posterior of each additive term of the kernel's normal form.

    Component means exclude the constant output offset ``data.y_mean``, so
    ``sum(c.mean) + data.y_mean`` equals the predictive mean.
    """
    return Posterior(kernel, data).decompose(query_xs)
