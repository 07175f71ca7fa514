"""Linear-algebra and statistics kernel: PCA, least squares, correlation and
split-half reliability.

The functional API (``pca_fit``, ``ols_fit``, ...) operates on plain arrays
and dataclasses; :class:`PCAProjector` and :class:`OLSRegressor` wrap it in
the scikit-learn estimator protocol.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy import linalg
from sklearn.base import BaseEstimator, RegressorMixin, TransformerMixin
from sklearn.utils.validation import check_is_fitted

from ._validation import as_matrix, as_vector
from .exceptions import (
    ConstantInput,
    DimensionMismatch,
    InvalidK,
    InvalidShape,
    SingularSystem,
    TooFewSubjects,
)

# relative eigenvalue gap below which two components count as tied
TIE_RTOL = 1e-10
# condition number of R beyond which an unregularized solve is refused
SINGULAR_COND = 1e12


# ----------------------------------------------------------------------------
# PCA
# ----------------------------------------------------------------------------


@dataclass(frozen=True)
class PcaBasis:
    mean: np.ndarray
    components: np.ndarray
    explained_variance: np.ndarray

    @property
    def n_components(self) -> int:
        return self.components.shape[0]

    @property
    def n_features(self) -> int:
        return self.components.shape[1]

    def project(self, X) -> np.ndarray:
        return pca_project(self, X)

    def back_project(self, Z) -> np.ndarray:
        Z = as_matrix(Z, name="Z")
        return Z @ self.components + self.mean


def _fix_signs(vecs: np.ndarray) -> np.ndarray:
    """Flip each row so its largest-magnitude entry is positive."""
    idx = np.argmax(np.abs(vecs), axis=1)
    signs = np.sign(vecs[np.arange(vecs.shape[0]), idx])
    signs[signs == 0] = 1.0
    return vecs * signs[:, None]


def _order_components(values: np.ndarray, vecs: np.ndarray):
    """Sort by decreasing eigenvalue; tied groups by lexicographic order."""
    order = np.argsort(-values, kind="stable")
    values, vecs = values[order], vecs[order]
    scale = max(float(values[0]) if values.size else 0.0, np.finfo(float).tiny)
    out_v, out_c = [], []
    i = 0
    while i < values.size:
        j = i + 1
        while j < values.size and values[i] - values[j] <= TIE_RTOL * scale:
            j += 1
        group = sorted(range(i, j), key=lambda m: tuple(-vecs[m]))
        out_v.extend(values[group])
        out_c.extend(vecs[group])
        i = j
    return np.asarray(out_v), np.asarray(out_c).reshape(vecs.shape)


def pca_fit(X, k: int) -> PcaBasis:
    """Top-``k`` principal axes of the rows of ``X``.

    ``explained_variance`` holds eigenvalues of the sample covariance
    (denominator ``n - 1``).
    """
    X = as_matrix(X, name="X")
    n, d = X.shape
    if n < 2:
        raise InvalidShape(f"pca_fit needs at least 2 rows, got {n}")
    k = int(k)
    if k < 1 or k > min(n - 1, d):
        raise InvalidK(f"k={k} outside [1, min(n-1, d)] = [1, {min(n - 1, d)}]")

    mean = X.mean(axis=0)
    Xc = X - mean
    values = vecs = None
    if d > n:
        gram = Xc @ Xc.T / (n - 1)
        w, u = linalg.eigh(gram, subset_by_index=[n - k, n - 1])
        w, u = w[::-1], u[:, ::-1]
        if w[-1] > 1e-10 * max(w[0], np.finfo(float).tiny):
            vecs = (Xc.T @ u / np.sqrt(w * (n - 1))).T
            values = w
    if vecs is None:
        if d > n:
            # rank-deficient gram: fall back to the thin SVD
            _, s, vt = np.linalg.svd(Xc, full_matrices=False)
            values, vecs = s[:k] ** 2 / (n - 1), vt[:k]
        else:
            cov = Xc.T @ Xc / (n - 1)
            lo = 0 if d <= 64 else d - k
            w, v = linalg.eigh(cov, subset_by_index=[lo, d - 1])
            values, vecs = w[::-1], v[:, ::-1].T
    values = np.clip(values, 0.0, None)
    values, vecs = _order_components(values, _fix_signs(vecs))
    return PcaBasis(mean=mean, components=vecs[:k].copy(), explained_variance=values[:k].copy())


def pca_project(basis: PcaBasis, X) -> np.ndarray:
    X = as_matrix(X, name="X")
    if X.shape[1] != basis.n_features:
        raise DimensionMismatch(
            f"expected {basis.n_features} columns, got {X.shape[1]}", field="X"
        )
    return (X - basis.mean) @ basis.components.T


class PCAProjector(TransformerMixin, BaseEstimator):
    """Deterministic PCA transformer with sign and tie conventions fixed."""

    def __init__(self, n_components: int = 20):
        self.n_components = n_components

    def fit(self, X, y=None):
        self.basis_ = pca_fit(X, self.n_components)
        self.n_features_in_ = self.basis_.n_features
        return self

    def transform(self, X):
        check_is_fitted(self, "basis_")
        return pca_project(self.basis_, X)

    def inverse_transform(self, Z):
        check_is_fitted(self, "basis_")
        return self.basis_.back_project(Z)


# ----------------------------------------------------------------------------
# Least squares
# ----------------------------------------------------------------------------


@dataclass(frozen=True)
class RegressionModel:
    weights: np.ndarray
    intercept: float

    @property
    def input_dim(self) -> int:
        return self.weights.shape[0]

    def predict(self, X) -> np.ndarray:
        X = as_matrix(X, name="X")
        if X.shape[1] != self.input_dim:
            raise DimensionMismatch(f"expected {self.input_dim} columns, got {X.shape[1]}")
        return X @ self.weights + self.intercept


def ols_fit(X, y, ridge: float = 0.0) -> RegressionModel:
    """Least squares with an unpenalized intercept, solved by QR.

    Minimizes ``||y - X b - c||^2 + ridge * ||b||^2``.
    """
    X = as_matrix(X, name="X")
    y = as_vector(y, name="y")
    n, p = X.shape
    if y.shape[0] != n:
        raise InvalidShape(f"X has {n} rows but y has {y.shape[0]}")
    if ridge < 0:
        raise InvalidShape(f"ridge must be >= 0, got {ridge}")
    if ridge == 0 and n < p + 1:
        raise InvalidShape(f"need n >= p + 1 for an unregularized fit (n={n}, p={p})")

    x_mean = X.mean(axis=0)
    y_mean = float(y.mean())
    A = X - x_mean
    rhs = y - y_mean
    if p == 0:
        return RegressionModel(weights=np.zeros(0), intercept=y_mean)
    if ridge > 0:
        A = np.vstack([A, np.sqrt(ridge) * np.eye(p)])
        rhs = np.concatenate([rhs, np.zeros(p)])
    q, r = np.linalg.qr(A)
    if ridge == 0:
        cond = np.linalg.cond(r)
        if not np.isfinite(cond) or cond > SINGULAR_COND:
            raise SingularSystem(f"design matrix is numerically singular (cond={cond:.3g})")
    b = linalg.solve_triangular(r, q.T @ rhs)
    return RegressionModel(weights=b, intercept=y_mean - float(x_mean @ b))


class OLSRegressor(RegressorMixin, BaseEstimator):
    def __init__(self, ridge: float = 0.0):
        self.ridge = ridge

    def fit(self, X, y):
        self.model_ = ols_fit(X, y, self.ridge)
        self.coef_ = self.model_.weights
        self.intercept_ = self.model_.intercept
        self.n_features_in_ = self.model_.input_dim
        return self

    def predict(self, X):
        check_is_fitted(self, "model_")
        return self.model_.predict(X)


# ----------------------------------------------------------------------------
# Correlation and reliability
# ----------------------------------------------------------------------------


def pearson(a, b) -> float:
    a = as_vector(a, name="a")
    b = as_vector(b, name="b")
    if a.shape != b.shape:
        raise InvalidShape(f"length mismatch: {a.shape[0]} vs {b.shape[0]}")
    if a.shape[0] < 3:
        raise InvalidShape("pearson needs at least 3 observations")
    da = a - a.mean()
    db = b - b.mean()
    na = np.sqrt(da @ da)
    nb = np.sqrt(db @ db)
    if na == 0 or nb == 0:
        raise ConstantInput("correlation undefined for a constant input")
    return float(np.clip((da @ db) / (na * nb), -1.0, 1.0))


def spearman_brown(r: float) -> float:
    """Step a split-half correlation up to full-length reliability."""
    r = float(r)
    if not -1.0 < r <= 1.0:
        raise ValueError(f"spearman_brown is defined on (-1, 1], got {r}")
    return 2.0 * r / (1.0 + r)


@dataclass(frozen=True)
class ReliabilityEstimate:
    split_half_r: float
    corrected_rc: float
    n_resamples: int
    mean: float
    sd: float
    values: np.ndarray = field(default_factory=lambda: np.zeros(0), repr=False)
    sampling: str = "split without replacement"


def mean_sd(values) -> tuple[float, float]:
    """Mean and sample standard deviation (ddof=1; 0 for a single value)."""
    values = np.asarray(values, dtype=float)
    if values.size == 0:
        return float("nan"), float("nan")
    sd = float(values.std(ddof=1)) if values.size > 1 else 0.0
    return float(values.mean()), sd


def _ordered(per_subject, subject_ids):
    M = np.asarray(per_subject, dtype=float)
    if M.ndim != 2:
        raise InvalidShape("per_subject must be a subjects x scenes matrix")
    if M.shape[0] < 2:
        raise TooFewSubjects(f"need at least 2 subjects, got {M.shape[0]}")
    if subject_ids is not None:
        if len(subject_ids) != M.shape[0]:
            raise InvalidShape("subject_ids length differs from matrix rows")
        M = M[np.argsort(np.asarray(subject_ids, dtype=str), kind="stable")]
    return M


def _half_correlation(M: np.ndarray, in_a: np.ndarray) -> float:
    present = ~np.isnan(M)
    vals = np.where(present, M, 0.0)
    cnt_a = present[in_a].sum(axis=0)
    cnt_b = present[~in_a].sum(axis=0)
    keep = (cnt_a > 0) & (cnt_b > 0)
    mean_a = vals[in_a].sum(axis=0)[keep] / cnt_a[keep]
    mean_b = vals[~in_a].sum(axis=0)[keep] / cnt_b[keep]
    return pearson(mean_a, mean_b)


def split_half_ceiling(
    per_subject, n_resamples: int = 1000, seed: int = 0, subject_ids=None
) -> ReliabilityEstimate:
    """Noise ceiling from random split halves of the subject pool.

    ``per_subject`` is subjects x scenes with NaN for missing ratings.
    Resample ``i`` draws its split from ``default_rng([seed, i])`` applied
    to subjects ordered by ``subject_ids`` (row order when omitted).
    """
    M = _ordered(per_subject, subject_ids)
    n_subj = M.shape[0]
    raw = np.empty(n_resamples)
    for i in range(n_resamples):
        perm = np.random.default_rng([seed, i]).permutation(n_subj)
        in_a = np.zeros(n_subj, dtype=bool)
        in_a[perm[: n_subj // 2]] = True
        raw[i] = _half_correlation(M, in_a)
    corrected = np.array([spearman_brown(r) for r in raw])
    mean, sd = mean_sd(corrected)
    r_bar = float(raw.mean())
    return ReliabilityEstimate(
        split_half_r=r_bar,
        corrected_rc=spearman_brown(r_bar),
        n_resamples=n_resamples,
        mean=mean,
        sd=sd,
        values=corrected,
    )


def odd_even_reliability(per_subject, subject_ids=None) -> ReliabilityEstimate:
    """Split-half reliability between odd- and even-numbered subjects."""
    M = _ordered(per_subject, subject_ids)
    in_a = np.arange(M.shape[0]) % 2 == 0
    r = _half_correlation(M, in_a)
    rc = spearman_brown(r)
    return ReliabilityEstimate(
        split_half_r=r,
        corrected_rc=rc,
        n_resamples=1,
        mean=rc,
        sd=0.0,
        values=np.array([rc]),
        sampling="odd/even subjects",
    )
