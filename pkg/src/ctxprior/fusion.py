"""Fusing detector confidences with predicted expectations.

:class:`FusionClassifier` is a linear rule over z-scored features (a
detector score plus model-predicted expectations), fit with an L2-penalized
logistic or squared-hinge loss. The rest of the module covers
cross-validated training, ROC analysis, miss/false-alarm counts, and the
association-index transfer analysis.
"""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass, field
from typing import Mapping, Sequence

import numpy as np
from scipy import optimize
from scipy.special import expit
from sklearn.base import BaseEstimator, ClassifierMixin
from sklearn.utils.validation import check_is_fitted

from ._validation import as_labels, as_matrix
from .dataset import DetectorScore, PresenceMatrix, RatingDimension, SceneRecord
from .exceptions import (
    ConstantInput,
    DegenerateFold,
    EmptyAnchor,
    InvalidShape,
    MissingChannel,
    MissingGroundTruth,
    MissingScore,
    NonConvergence,
    SingleClassInput,
)
from .numerics import pearson

SCORE = "score"


class FusionClassifier(ClassifierMixin, BaseEstimator):
    """Linear classifier over z-scored features; positive iff score > 0.

    ``loss`` is ``"logistic"`` (Newton iterations) or ``"squared_hinge"``
    (L-BFGS). The penalty is ``regularization / 2 * ||w||^2``; the bias is
    not penalized.
    """

    def __init__(self, loss="logistic", regularization=1.0, max_iter=100, tol=1e-10):
        self.loss = loss
        self.regularization = regularization
        self.max_iter = max_iter
        self.tol = tol

    def fit(self, X, y):
        X = as_matrix(X)
        y = as_labels(y)
        if X.shape[0] != y.shape[0]:
            raise InvalidShape("X and y lengths differ")
        if y.all() or not y.any():
            raise SingleClassInput("training labels contain a single class")
        self.mean_ = X.mean(axis=0)
        sd = X.std(axis=0)
        sd[sd == 0] = 1.0
        self.scale_ = sd
        Z = (X - self.mean_) / sd
        A = np.column_stack([Z, np.ones(len(Z))])
        t = np.where(y, 1.0, -1.0)
        if self.loss == "logistic":
            theta = self._newton(A, t)
        elif self.loss == "squared_hinge":
            theta = self._lbfgs(A, t)
        else:
            raise InvalidShape(f"unknown loss {self.loss!r}")
        self.coef_ = theta[:-1]
        self.intercept_ = float(theta[-1])
        self.threshold_ = 0.0
        self.classes_ = np.array([False, True])
        self.n_features_in_ = X.shape[1]
        return self

    def _penalty(self, p):
        pen = np.full(p, float(self.regularization))
        pen[-1] = 0.0
        return pen

    def _newton(self, A, t):
        pen = self._penalty(A.shape[1])

        def objective(theta):
            m = t * (A @ theta)
            return np.logaddexp(0.0, -m).sum() + 0.5 * pen @ theta ** 2

        theta = np.zeros(A.shape[1])
        f = objective(theta)
        for _ in range(self.max_iter):
            m = t * (A @ theta)
            p = expit(-m)
            grad = -A.T @ (t * p) + pen * theta
            h = p * (1 - p)
            H = (A * h[:, None]).T @ A + np.diag(pen) + 1e-12 * np.eye(A.shape[1])
            step = np.linalg.solve(H, grad)
            decrement = float(grad @ step)
            if decrement / 2 <= self.tol * max(1.0, abs(f)):
                return theta
            alpha = 1.0
            while True:
                cand = theta - alpha * step
                fc = objective(cand)
                if fc <= f - 0.25 * alpha * decrement or alpha < 1e-10:
                    break
                alpha *= 0.5
            theta, f = cand, fc
        if self.regularization == 0:
            raise NonConvergence("logistic fit did not converge (separable data needs regularization > 0)")
        raise NonConvergence(f"logistic fit did not converge in {self.max_iter} iterations")

    def _lbfgs(self, A, t):
        pen = self._penalty(A.shape[1])

        def fun(theta):
            slack = np.maximum(0.0, 1.0 - t * (A @ theta))
            val = slack @ slack + 0.5 * pen @ theta ** 2
            grad = -2.0 * A.T @ (t * slack) + pen * theta
            return val, grad

        res = optimize.minimize(fun, np.zeros(A.shape[1]), jac=True, method="L-BFGS-B",
                                options={"maxiter": 50 * self.max_iter, "gtol": 1e-10, "ftol": 1e-15})
        if not res.success and res.status != 2:
            raise NonConvergence(f"squared-hinge fit failed: {res.message}")
        return res.x

    def decision_function(self, X):
        check_is_fitted(self, "coef_")
        X = as_matrix(X)
        return ((X - self.mean_) / self.scale_) @ self.coef_ + self.intercept_

    def predict(self, X):
        # ties at the threshold resolve to "absent"
        return self.decision_function(X) > self.threshold_

    def predict_proba(self, X):
        p = expit(self.decision_function(X))
        return np.column_stack([1 - p, p])

    def raw_boundary(self) -> tuple[np.ndarray, float]:
        """Weights and bias of the decision boundary in unscaled feature units."""
        check_is_fitted(self, "coef_")
        w = self.coef_ / self.scale_
        return w, self.intercept_ - float(w @ self.mean_)


# ----------------------------------------------------------------------------
# Feature assembly
# ----------------------------------------------------------------------------


@dataclass(frozen=True)
class FusionFeatureSet:
    """Ordered fusion columns: ``"score"`` then ``"<category>:<dimension>"`` entries."""

    name: str
    columns: tuple

    def __post_init__(self):
        cols = tuple(self.columns)
        if not cols or cols[0] != SCORE:
            cols = (SCORE,) + tuple(c for c in cols if c != SCORE)
        parsed = [SCORE]
        for c in cols[1:]:
            cat, _, dim = c.partition(":")
            if not cat or not dim:
                raise InvalidShape(f"fusion column {c!r} is not '<category>:<dimension>'")
            parsed.append(f"{cat}:{RatingDimension.parse(dim).value}")
        if len(set(parsed)) != len(parsed):
            raise InvalidShape(f"duplicate fusion columns in {self.name!r}")
        object.__setattr__(self, "columns", tuple(parsed))

    @property
    def expectation_columns(self) -> list[tuple[str, RatingDimension]]:
        out = []
        for c in self.columns[1:]:
            cat, _, dim = c.partition(":")
            out.append((cat, RatingDimension(dim)))
        return out


def standard_feature_sets(target: str, categories: Sequence[str] = ("car", "person")) -> list[FusionFeatureSet]:
    """Baseline plus the augmentations compared for each detector."""
    t = target
    all_ratings = tuple(f"{c}:{d.value}" for c in categories for d in RatingDimension)
    return [
        FusionFeatureSet("score", (SCORE,)),
        FusionFeatureSet("score+likelihood", (SCORE, f"{t}:likelihood")),
        FusionFeatureSet("score+ypos", (SCORE, f"{t}:ypos")),
        FusionFeatureSet("score+scale", (SCORE, f"{t}:scale")),
        FusionFeatureSet("score+likelihood+ypos+scale", (SCORE, f"{t}:likelihood", f"{t}:ypos", f"{t}:scale")),
        FusionFeatureSet("score+all_ratings", (SCORE,) + all_ratings),
    ]


@dataclass
class FusionData:
    X: np.ndarray
    labels: np.ndarray
    columns: tuple
    scene_ids: list


def build_fusion_features(
    scores: Sequence[DetectorScore],
    expectation_models: Mapping,
    scenes: Sequence[SceneRecord],
    feature_set: FusionFeatureSet,
    *,
    detector_id: str,
    category: str,
) -> FusionData:
    """Detector score and model-predicted expectations for each scene.

    ``expectation_models`` maps ``(category, dimension)`` to fitted
    expectation models; only their predictions, never human ratings, enter
    the matrix.
    """
    lookup = {s.scene_id: s.confidence for s in scores if s.detector_id == detector_id and s.category == category}
    ids, col_score, labels = [], [], []
    for s in scenes:
        if s.scene_id not in lookup:
            raise MissingScore(f"no {detector_id}/{category} score for scene {s.scene_id!r}")
        if not s.ground_truth or category not in s.ground_truth:
            raise MissingGroundTruth(f"scene {s.scene_id!r} has no ground truth for {category!r}")
        ids.append(s.scene_id)
        col_score.append(lookup[s.scene_id])
        labels.append(bool(s.ground_truth[category]))
    cols = [np.asarray(col_score, dtype=float)]
    for cat, dim in feature_set.expectation_columns:
        model = expectation_models.get((cat, dim))
        if model is None:
            raise MissingChannel(f"no expectation model for {cat}/{dim.value}")
        cols.append(np.asarray(model.predict_scenes(scenes), dtype=float))
    return FusionData(np.column_stack(cols), np.asarray(labels, dtype=bool), feature_set.columns, ids)


# ----------------------------------------------------------------------------
# Training and evaluation
# ----------------------------------------------------------------------------


def balance_classes(labels, seed: int = 0) -> np.ndarray:
    """Indices keeping every scene of the rarer class and an equal-sized
    seeded draw from the other."""
    y = as_labels(labels)
    pos, neg = np.flatnonzero(y), np.flatnonzero(~y)
    if len(pos) == 0 or len(neg) == 0:
        raise SingleClassInput("cannot balance a single-class set")
    rng = np.random.default_rng(seed)
    if len(neg) > len(pos):
        neg = rng.choice(neg, size=len(pos), replace=False)
    elif len(pos) > len(neg):
        pos = rng.choice(pos, size=len(neg), replace=False)
    return np.sort(np.concatenate([pos, neg]))


def stratified_folds(labels, k: int, seed: int) -> list[np.ndarray]:
    y = as_labels(labels)
    if k < 2:
        raise InvalidShape("k_folds must be >= 2")
    rng = np.random.default_rng(seed)
    folds = [[] for _ in range(k)]
    offset = 0
    for cls in (True, False):
        idx = rng.permutation(np.flatnonzero(y == cls))
        for j, part in enumerate(np.array_split(idx, k)):
            folds[(j + offset) % k].extend(part.tolist())
        offset += len(idx) % k
    return [np.sort(np.asarray(f, dtype=int)) for f in folds]


@dataclass
class FusionResult:
    classifier: FusionClassifier
    accuracy: float
    fold_accuracies: np.ndarray
    oof_scores: np.ndarray = field(repr=False)
    oof_decisions: np.ndarray = field(repr=False)


def train_fusion(
    features,
    labels,
    k_folds: int = 5,
    seed: int = 0,
    regularization: float = 1.0,
    loss: str = "logistic",
) -> FusionResult:
    """Cross-validated accuracy (mean over held-out folds) plus a final
    classifier refit on all rows."""
    X = as_matrix(features)
    y = as_labels(labels)
    folds = stratified_folds(y, k_folds, seed)
    accs = np.empty(k_folds)
    oof = np.empty(len(y))
    for j, test in enumerate(folds):
        train = np.setdiff1d(np.arange(len(y)), test)
        if y[train].all() or not y[train].any():
            raise DegenerateFold(f"training fold {j} contains a single class")
        clf = FusionClassifier(loss=loss, regularization=regularization).fit(X[train], y[train])
        oof[test] = clf.decision_function(X[test])
        accs[j] = np.mean((oof[test] > clf.threshold_) == y[test])
    final = FusionClassifier(loss=loss, regularization=regularization).fit(X, y)
    return FusionResult(final, float(accs.mean()), accs, oof, oof > 0.0)


# ----------------------------------------------------------------------------
# ROC
# ----------------------------------------------------------------------------


@dataclass
class RocCurve:
    thresholds: np.ndarray
    fpr: np.ndarray
    tpr: np.ndarray
    auc: float

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["threshold", "fpr", "tpr"])
        for t, f, p in zip(self.thresholds, self.fpr, self.tpr):
            w.writerow([repr(float(t)), repr(float(f)), repr(float(p))])
        return buf.getvalue()


def roc(scores, labels) -> RocCurve:
    """Threshold sweep over midpoints of the sorted unique scores.

    A scene is declared positive when its score exceeds the threshold;
    thresholds run from +inf to -inf so the curve goes (0,0) -> (1,1).
    """
    s = np.asarray(scores, dtype=float).ravel()
    y = as_labels(labels)
    if s.shape != y.shape:
        raise InvalidShape("scores and labels differ in length")
    n_pos, n_neg = int(y.sum()), int((~y).sum())
    if n_pos == 0 or n_neg == 0:
        raise SingleClassInput("ROC needs at least one positive and one negative")
    uniq = np.unique(s)
    mids = (uniq[1:] + uniq[:-1]) / 2.0
    thresholds = np.concatenate([[np.inf], mids[::-1], [-np.inf]])
    # positives/negatives scoring at each unique value, highest first
    order = np.searchsorted(uniq, s)
    pos_at = np.bincount(order[y], minlength=len(uniq))[::-1]
    neg_at = np.bincount(order[~y], minlength=len(uniq))[::-1]
    tpr = np.concatenate([[0.0], np.cumsum(pos_at) / n_pos])
    fpr = np.concatenate([[0.0], np.cumsum(neg_at) / n_neg])
    auc = float(np.sum(np.diff(fpr) * (tpr[1:] + tpr[:-1]) / 2.0))
    return RocCurve(thresholds, fpr, tpr, auc)


# ----------------------------------------------------------------------------
# Errors
# ----------------------------------------------------------------------------


@dataclass
class ErrorBreakdown:
    misses: int
    false_alarms: int
    hits: int
    correct_rejections: int
    decisions: np.ndarray = field(repr=False)

    def to_dict(self) -> dict:
        return {
            "misses": self.misses,
            "false_alarms": self.false_alarms,
            "hits": self.hits,
            "correct_rejections": self.correct_rejections,
        }


def breakdown_from_decisions(decisions, labels) -> ErrorBreakdown:
    d = np.asarray(decisions, dtype=bool)
    y = as_labels(labels)
    return ErrorBreakdown(
        misses=int(np.sum(y & ~d)),
        false_alarms=int(np.sum(~y & d)),
        hits=int(np.sum(y & d)),
        correct_rejections=int(np.sum(~y & ~d)),
        decisions=d,
    )


def error_breakdown(classifier, features, labels) -> ErrorBreakdown:
    """Misses and false alarms at the classifier's operating threshold."""
    return breakdown_from_decisions(classifier.predict(as_matrix(features)), labels)


# ----------------------------------------------------------------------------
# Association and transfer
# ----------------------------------------------------------------------------


@dataclass(frozen=True)
class AssociationIndex:
    category: str
    anchor: str
    value: float
    averaged_value: float
    per_anchor: tuple = ()


def _association(presence: PresenceMatrix, object_label: str, anchor_label: str) -> float:
    obj = presence.column(object_label)
    anchor = presence.column(anchor_label)
    n_anchor = int(anchor.sum())
    if n_anchor == 0:
        raise EmptyAnchor(f"anchor {anchor_label!r} is absent from every scene")
    return abs(np.sum(obj & anchor) / n_anchor - obj.sum() / len(obj))


def association_index(presence: PresenceMatrix, object_label: str, anchor_label) -> AssociationIndex:
    """``|p(object | anchor) - p(object)|``; a sequence of anchors is
    averaged into ``averaged_value``."""
    anchors = [anchor_label] if isinstance(anchor_label, str) else list(anchor_label)
    values = tuple(_association(presence, object_label, a) for a in anchors)
    return AssociationIndex(
        category=object_label,
        anchor="+".join(anchors),
        value=values[0],
        averaged_value=float(np.mean(values)),
        per_anchor=tuple(zip(anchors, values)),
    )


def permutation_pvalue(a, b, n_permutations: int = 10_000, seed: int = 0) -> tuple[float, float]:
    """Pearson r and its two-sided permutation p-value."""
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    r = pearson(a, b)
    rng = np.random.default_rng(seed)
    hits = 0
    for _ in range(n_permutations):
        if abs(pearson(a, rng.permutation(b))) >= abs(r) - 1e-12:
            hits += 1
    return r, (hits + 1) / (n_permutations + 1)


def transfer_analysis(
    benefits: Mapping[str, float],
    association: Mapping[str, float],
    baseline: Mapping[str, float],
    n_permutations: int = 10_000,
    seed: int = 0,
) -> dict:
    """Correlate per-category augmentation benefit with association strength
    and with baseline accuracy. Undefined correlations are reported as None."""
    cats = list(benefits)
    if len(cats) < 3:
        raise InvalidShape("transfer analysis needs at least 3 categories")
    gain = np.array([benefits[c] for c in cats], dtype=float)
    out = {"categories": cats, "n_permutations": n_permutations}
    for key, other in (("association", association), ("baseline", baseline)):
        x = np.array([other[c] for c in cats], dtype=float)
        try:
            r, p = permutation_pvalue(gain, x, n_permutations, seed)
            out[key] = {"r": r, "p": p}
        except ConstantInput as exc:
            out[key] = {"r": None, "p": None, "undefined": str(exc)}
    return out
