"""Input checks shared by the estimators."""

from __future__ import annotations

import numpy as np
from sklearn.utils.validation import check_array, check_X_y


def check_inputs(X) -> np.ndarray:
    """Return the single input feature of ``X`` as a 1-D float array.

    ``X`` may be 1-D or a column vector.
    """
    X = np.asarray(X) if not hasattr(X, "shape") else X
    if np.ndim(X) == 1:
        X = np.reshape(X, (-1, 1))
    X = check_array(X, dtype=np.float64, ensure_2d=True)
    if X.shape[1] != 1:
        raise ValueError(f"expected a single input feature, got {X.shape[1]}")
    return X[:, 0]


def check_series(X, y) -> tuple[np.ndarray, np.ndarray]:
    """Validate a 1-D regression problem and return ``(xs, ys)``."""
    if np.ndim(X) == 1:
        X = np.reshape(X, (-1, 1))
    X, y = check_X_y(X, y, dtype=np.float64, y_numeric=True, ensure_min_samples=2)
    if X.shape[1] != 1:
        raise ValueError(f"expected a single input feature, got {X.shape[1]}")
    return X[:, 0], y
