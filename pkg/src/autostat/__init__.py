"""Gaussian-process kernel search for 1-D series, with reports written in English."""

__version__ = "0.1.0"

from .describe import describe_components, describe_kernel
from .estimators import GaussianProcessModel, KernelSearchRegressor
from .gp import Dataset, ScoredModel, bic, decompose_posterior, fit_kernel, predict
from .kernels import parse_kernel, print_kernel, to_normal_form
from .search import Language, SearchConfig, greedy_search

__all__ = [
    "Dataset", "GaussianProcessModel", "KernelSearchRegressor", "Language", "ScoredModel",
    "SearchConfig", "bic", "decompose_posterior", "describe_components", "describe_kernel",
    "fit_kernel", "greedy_search", "parse_kernel", "predict", "print_kernel", "to_normal_form",
]
