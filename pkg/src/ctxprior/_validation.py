"""Input validation helpers shared by the estimators."""

import numpy as np

from .exceptions import InvalidShape, NonFiniteValue


def as_matrix(X, name="X", allow_nan=False) -> np.ndarray:
    X = np.asarray(X, dtype=float)
    if X.ndim == 1:
        X = X.reshape(-1, 1)
    if X.ndim != 2:
        raise InvalidShape(f"{name} must be 2-D, got shape {X.shape}")
    if not allow_nan and not np.all(np.isfinite(X)):
        bad = np.argwhere(~np.isfinite(X))[0]
        raise NonFiniteValue(f"{name} has a non-finite entry", row=int(bad[0]), field=int(bad[1]))
    return X


def as_vector(y, name="y") -> np.ndarray:
    y = np.asarray(y, dtype=float)
    if y.ndim == 2 and 1 in y.shape:
        y = y.ravel()
    if y.ndim != 1:
        raise InvalidShape(f"{name} must be 1-D, got shape {y.shape}")
    if not np.all(np.isfinite(y)):
        bad = int(np.flatnonzero(~np.isfinite(y))[0])
        raise NonFiniteValue(f"{name} has a non-finite entry", row=bad)
    return y


def as_labels(y, name="labels") -> np.ndarray:
    y = np.asarray(y)
    if y.ndim != 1:
        raise InvalidShape(f"{name} must be 1-D")
    if y.dtype != bool:
        uniq = np.unique(y)
        if not np.all(np.isin(uniq, [0, 1])):
            raise InvalidShape(f"{name} must be binary 0/1, got values {uniq[:5]}")
        y = y.astype(bool)
    return y
