"""Channel-subset expectation models and their evaluation protocols.

An expectation model projects each selected feature channel onto its
leading principal components, z-scores the projections and regresses a
rating dimension on them. Evaluation follows two protocols: k-fold
cross-validation with concatenated out-of-fold predictions, and repeated
random 80/20 splits whose paired correlations drive model comparison.
"""

from __future__ import annotations

import csv
import hashlib
import io
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
from sklearn.base import BaseEstimator, RegressorMixin
from sklearn.utils.validation import check_is_fitted

from ._validation import as_matrix, as_vector
from .dataset import (
    CHANNELS,
    Channel,
    RatingAggregate,
    RatingDimension,
    SceneRecord,
    SchemaConfig,
    channel_label,
    channel_subsets,
    parse_channels,
    rating_matrix,
)
from .exceptions import (
    ConstantInput,
    InsufficientScenes,
    InvalidShape,
    MissingChannel,
    UnpairedDistributions,
)
from .numerics import (
    PcaBasis,
    ReliabilityEstimate,
    mean_sd,
    ols_fit,
    pca_fit,
    pca_project,
    pearson,
    split_half_ceiling,
)

SIGNIFICANT = 0.001
EQUIVALENT = 0.05


@dataclass(frozen=True)
class ModelSpec:
    channels: tuple[Channel, ...]
    category: str = "car"
    dimension: RatingDimension = RatingDimension.LIKELIHOOD
    pca_dims: int = 20
    ridge: float = 0.0
    standardize: bool = True

    def __post_init__(self):
        object.__setattr__(self, "channels", parse_channels(self.channels))
        object.__setattr__(self, "dimension", RatingDimension.parse(self.dimension))
        if self.pca_dims < 1:
            raise InvalidShape(f"pca_dims must be >= 1, got {self.pca_dims}")
        if self.ridge < 0:
            raise InvalidShape(f"ridge must be >= 0, got {self.ridge}")

    @property
    def label(self) -> str:
        return channel_label(self.channels)

    def to_dict(self) -> dict:
        return {
            "channels": self.label,
            "category": self.category,
            "dimension": self.dimension.value,
            "pca_dims": self.pca_dims,
            "ridge": self.ridge,
            "standardize": self.standardize,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "ModelSpec":
        return cls(
            channels=d["channels"],
            category=d["category"],
            dimension=d["dimension"],
            pca_dims=int(d["pca_dims"]),
            ridge=float(d["ridge"]),
            standardize=bool(d["standardize"]),
        )


def effective_dims(pca_dims: int, n_train: int, channel_dim: int) -> int:
    return max(1, min(pca_dims, n_train - 2, channel_dim))


def _regress_projected(Z, y, ridge, standardize):
    """z-score projected features and fit the regression on them."""
    n, total = Z.shape
    if n <= total + 1:
        raise InsufficientScenes(f"{n} training scenes for {total} regressors")
    if standardize:
        mu, sd = Z.mean(axis=0), Z.std(axis=0, ddof=1)
        sd[sd <= 1e-12 * max(1.0, float(sd.max(initial=0.0)))] = 1.0
    else:
        mu, sd = np.zeros(total), np.ones(total)
    return mu, sd, ols_fit((Z - mu) / sd, y, ridge)


class ExpectationModel(RegressorMixin, BaseEstimator):
    """Per-channel PCA followed by least-squares regression.

    ``X`` holds the selected channels' features side by side, in the order
    given by ``channels``; ``channel_dims`` gives each block's width. When
    ``pca_bases`` is supplied the bases are used as-is instead of being fit
    on the training rows (global PCA scope).
    """

    def __init__(
        self,
        channels="NC",
        channel_dims=None,
        pca_dims=20,
        ridge=0.0,
        standardize=True,
        pca_bases=None,
    ):
        self.channels = channels
        self.channel_dims = channel_dims
        self.pca_dims = pca_dims
        self.ridge = ridge
        self.standardize = standardize
        self.pca_bases = pca_bases

    def _blocks(self, X):
        chans = parse_channels(self.channels)
        dims = self.channel_dims
        if dims is None:
            if len(chans) != 1:
                raise InvalidShape("channel_dims is required with more than one channel")
            dims = (X.shape[1],)
        dims = tuple(int(d) for d in dims)
        if len(dims) != len(chans) or sum(dims) != X.shape[1]:
            raise InvalidShape(f"channel_dims {dims} do not tile {X.shape[1]} columns")
        edges = np.cumsum((0,) + dims)
        return chans, [X[:, a:b] for a, b in zip(edges[:-1], edges[1:])]

    def fit(self, X, y):
        X = as_matrix(X)
        y = as_vector(y)
        n = X.shape[0]
        chans, blocks = self._blocks(X)
        if self.pca_bases is not None:
            bases = list(self.pca_bases)
            if len(bases) != len(chans):
                raise InvalidShape("one PCA basis per channel is required")
        else:
            bases = []
            for block in blocks:
                k = effective_dims(self.pca_dims, n, block.shape[1])
                if n < 3:
                    raise InsufficientScenes(f"{n} training scenes cannot support PCA")
                bases.append(pca_fit(block, k))
        Z = np.hstack([pca_project(b, blk) for b, blk in zip(bases, blocks)])
        self.z_mean_, self.z_scale_, self.regression_ = _regress_projected(Z, y, self.ridge, self.standardize)
        self.bases_ = bases
        self.channels_ = chans
        self.k_ = tuple(b.n_components for b in bases)
        self.n_features_in_ = X.shape[1]
        return self

    def transform(self, X):
        """Standardized projections fed to the regression."""
        check_is_fitted(self, "regression_")
        X = as_matrix(X)
        _, blocks = self._blocks(X)
        Z = np.hstack([pca_project(b, blk) for b, blk in zip(self.bases_, blocks)])
        return (Z - self.z_mean_) / self.z_scale_

    def predict(self, X):
        return self.regression_.predict(self.transform(X))

    @property
    def input_dim(self) -> int:
        check_is_fitted(self, "regression_")
        return self.regression_.input_dim

    def feature_weights(self, channel) -> np.ndarray:
        """Regression weights mapped back onto one channel's raw features."""
        check_is_fitted(self, "regression_")
        ch = Channel.parse(channel)
        if ch not in self.channels_:
            raise MissingChannel(f"model has no {ch.name} channel")
        i = self.channels_.index(ch)
        start = sum(self.k_[:i])
        sl = slice(start, start + self.k_[i])
        w = self.regression_.weights[sl] / self.z_scale_[sl]
        return self.bases_[i].components.T @ w

    # scene-level conveniences, populated by fit_expectation_model
    def predict_scenes(self, scenes: Sequence[SceneRecord]) -> np.ndarray:
        check_is_fitted(self, "regression_")
        return self.predict(design_matrix(scenes, self.channels_))


# ----------------------------------------------------------------------------
# Scene-level assembly
# ----------------------------------------------------------------------------


def design_matrix(scenes: Sequence[SceneRecord], channels) -> np.ndarray:
    chans = parse_channels(channels)
    rows = []
    for s in scenes:
        try:
            rows.append(np.concatenate([s.channel_features[ch] for ch in chans]))
        except KeyError as exc:
            raise MissingChannel(f"scene {s.scene_id!r} lacks channel {exc.args[0].name}") from None
    return np.vstack(rows) if rows else np.zeros((0, 0))


def channel_dims(scenes: Sequence[SceneRecord], channels) -> tuple[int, ...]:
    if not scenes:
        raise InsufficientScenes("no scenes")
    dims = []
    for ch in parse_channels(channels):
        if ch not in scenes[0].channel_features:
            raise MissingChannel(f"scene {scenes[0].scene_id!r} lacks channel {ch.name}")
        dims.append(int(scenes[0].channel_features[ch].shape[0]))
    return tuple(dims)


@dataclass
class TrainingData:
    scene_ids: list[str]
    blocks: dict  # Channel -> n x d array
    y: np.ndarray

    def X(self, channels) -> np.ndarray:
        return np.hstack([self.blocks[ch] for ch in parse_channels(channels)])

    def dims(self, channels) -> tuple[int, ...]:
        return tuple(self.blocks[ch].shape[1] for ch in parse_channels(channels))

    @property
    def fingerprint(self) -> str:
        return hashlib.sha256("\x1f".join(self.scene_ids).encode()).hexdigest()[:16]


def training_data(
    scenes: Sequence[SceneRecord],
    aggregates: Sequence[RatingAggregate],
    category: str,
    dimension,
    channels=CHANNELS,
) -> TrainingData:
    """Scenes with a defined target value, in ``scenes`` order.

    Geometry dimensions keep only scenes where at least one box was drawn.
    """
    dimension = RatingDimension.parse(dimension)
    chans = parse_channels(channels)
    lookup = {a.scene_id: a for a in aggregates if a.category == category}
    ids, ys, picked = [], [], []
    for s in scenes:
        agg = lookup.get(s.scene_id)
        if agg is None:
            continue
        v = agg.value(dimension)
        if v is None:
            continue
        ids.append(s.scene_id)
        ys.append(v)
        picked.append(s)
    if not picked:
        raise InsufficientScenes(f"no scenes with {category}/{dimension.value} targets")
    blocks = {ch: design_matrix(picked, [ch]) for ch in chans}
    return TrainingData(ids, blocks, np.asarray(ys, dtype=float))


def fit_expectation_model(
    spec: ModelSpec,
    scenes: Sequence[SceneRecord],
    aggregates: Sequence[RatingAggregate],
) -> ExpectationModel:
    data = training_data(scenes, aggregates, spec.category, spec.dimension, spec.channels)
    model = ExpectationModel(
        channels=spec.label,
        channel_dims=data.dims(spec.channels),
        pca_dims=spec.pca_dims,
        ridge=spec.ridge,
        standardize=spec.standardize,
    ).fit(data.X(spec.channels), data.y)
    model.spec_ = spec
    model.training_scene_ids_ = list(data.scene_ids)
    return model


# ----------------------------------------------------------------------------
# Cross-validation
# ----------------------------------------------------------------------------


@dataclass
class CvResult:
    spec: ModelSpec
    r_cv: float
    fold_count: int
    n_scenes: int
    predictions: np.ndarray = field(repr=False)
    observed: np.ndarray = field(repr=False)
    scene_ids: list = field(repr=False, default_factory=list)


def kfold_indices(n: int, k: int, seed: int) -> list[np.ndarray]:
    """Seeded partition of ``range(n)`` into ``k`` folds differing by <= 1 in size."""
    if not 2 <= k <= n:
        raise InvalidShape(f"need 2 <= k <= n_scenes (k={k}, n={n})")
    perm = np.random.default_rng(seed).permutation(n)
    return [np.sort(f) for f in np.array_split(perm, k)]


def _global_bases(data: TrainingData, chans, pca_dims: int, n_train: int):
    return [
        pca_fit(data.blocks[ch], effective_dims(pca_dims, n_train, data.blocks[ch].shape[1]))
        for ch in chans
    ]


def _fit_predict(spec: ModelSpec, data: TrainingData, train, test, bases=None) -> np.ndarray:
    chans = spec.channels
    model = ExpectationModel(
        channels=spec.label,
        channel_dims=data.dims(chans),
        pca_dims=spec.pca_dims,
        ridge=spec.ridge,
        standardize=spec.standardize,
        pca_bases=bases,
    )
    X = data.X(chans)
    model.fit(X[train], data.y[train])
    return model.predict(X[test])


def kfold_eval(
    spec: ModelSpec,
    scenes: Sequence[SceneRecord],
    aggregates: Sequence[RatingAggregate],
    k: int = 5,
    seed: int = 0,
    pca_scope: str = "per_fold",
) -> CvResult:
    data = training_data(scenes, aggregates, spec.category, spec.dimension, spec.channels)
    n = len(data.y)
    folds = kfold_indices(n, k, seed)
    bases = None
    if pca_scope == "global":
        bases = _global_bases(data, spec.channels, spec.pca_dims, n - max(len(f) for f in folds))
    elif pca_scope != "per_fold":
        raise InvalidShape(f"unknown pca_scope {pca_scope!r}")
    pred = np.full(n, np.nan)
    for fold in folds:
        train = np.setdiff1d(np.arange(n), fold)
        pred[fold] = _fit_predict(spec, data, train, fold, bases)
    return CvResult(
        spec=spec,
        r_cv=pearson(pred, data.y),
        fold_count=k,
        n_scenes=n,
        predictions=pred,
        observed=data.y,
        scene_ids=data.scene_ids,
    )


# ----------------------------------------------------------------------------
# Repeated 80/20 splits
# ----------------------------------------------------------------------------


def split_indices(n: int, index: int, seed: int, train_frac: float = 0.8):
    """Train/test indices of split ``index``; depends only on (seed, index, n)."""
    n_train = int(round(train_frac * n))
    if not 0 < n_train < n:
        raise InvalidShape(f"train_frac={train_frac} leaves an empty side for n={n}")
    perm = np.random.default_rng([seed, index]).permutation(n)
    return np.sort(perm[:n_train]), np.sort(perm[n_train:])


@dataclass
class SplitDistribution:
    spec: ModelSpec
    correlations: np.ndarray = field(repr=False)
    mean: float
    sd: float
    stream: tuple = ()
    pca_dims_effective: dict = field(default_factory=dict)

    @classmethod
    def from_values(cls, spec, values, stream=(), k_eff=None):
        values = np.asarray(values, dtype=float)
        mean, sd = mean_sd(values)
        return cls(spec, values, mean, sd, tuple(stream), dict(k_eff or {}))

    @property
    def n_splits(self) -> int:
        return self.correlations.shape[0]


def _safe_pearson(a, b) -> float:
    try:
        return pearson(a, b)
    except ConstantInput:
        return float("nan")


def _split_worker(args):
    """Correlations of every channel set on a batch of split indices."""
    blocks, y, channel_sets, indices, seed, train_frac, pca_dims, ridge, standardize, scope_bases = args
    n = y.shape[0]
    out = np.empty((len(indices), len(channel_sets)))
    for row, i in enumerate(indices):
        train, test = split_indices(n, i, seed, train_frac)
        if scope_bases is None:
            needed = {ch for cs in channel_sets for ch in cs}
            bases = {
                ch: pca_fit(blocks[ch][train], effective_dims(pca_dims, len(train), blocks[ch].shape[1]))
                for ch in needed
            }
        else:
            bases = {ch: scope_bases[ch] for ch in {c for cs in channel_sets for c in cs}}
        z_train = {ch: pca_project(bases[ch], blocks[ch][train]) for ch in bases}
        z_test = {ch: pca_project(bases[ch], blocks[ch][test]) for ch in bases}
        for col, cs in enumerate(channel_sets):
            # same arithmetic as ExpectationModel.fit/predict with prefit bases
            mu, sd, reg = _regress_projected(np.hstack([z_train[ch] for ch in cs]), y[train], ridge, standardize)
            pred = reg.predict((np.hstack([z_test[ch] for ch in cs]) - mu) / sd)
            out[row, col] = _safe_pearson(pred, y[test])
    return out


def _run_splits(data: TrainingData, channel_sets, n_splits, seed, train_frac, pca_dims,
                ridge, standardize, pca_scope, jobs) -> np.ndarray:
    scope_bases = None
    if pca_scope == "global":
        n_train = int(round(train_frac * len(data.y)))
        needed = [ch for ch in CHANNELS if any(ch in cs for cs in channel_sets)]
        scope_bases = dict(zip(needed, _global_bases(data, needed, pca_dims, n_train)))
    elif pca_scope != "per_fold":
        raise InvalidShape(f"unknown pca_scope {pca_scope!r}")
    blocks = {ch: data.blocks[ch] for ch in CHANNELS if any(ch in cs for cs in channel_sets)}
    base_args = (blocks, data.y, channel_sets)
    tail = (seed, train_frac, pca_dims, ridge, standardize, scope_bases)
    if jobs <= 1 or n_splits < 2:
        return _split_worker(base_args + (list(range(n_splits)),) + tail)
    chunks = [c.tolist() for c in np.array_split(np.arange(n_splits), min(jobs * 4, n_splits))]
    with ProcessPoolExecutor(max_workers=jobs) as pool:
        parts = list(pool.map(_split_worker, [base_args + (c,) + tail for c in chunks]))
    return np.vstack(parts)


def _stream(seed, n_splits, train_frac, data: TrainingData, pca_scope):
    return (int(seed), int(n_splits), float(train_frac), len(data.y), data.fingerprint, pca_scope)


def repeated_split_eval(
    spec: ModelSpec,
    scenes: Sequence[SceneRecord],
    aggregates: Sequence[RatingAggregate],
    n_splits: int = 1000,
    train_frac: float = 0.8,
    seed: int = 0,
    pca_scope: str = "per_fold",
    jobs: int = 1,
) -> SplitDistribution:
    data = training_data(scenes, aggregates, spec.category, spec.dimension, spec.channels)
    corr = _run_splits(data, [spec.channels], n_splits, seed, train_frac, spec.pca_dims,
                       spec.ridge, spec.standardize, pca_scope, jobs)[:, 0]
    n_train = int(round(train_frac * len(data.y)))
    k_eff = {ch.value: effective_dims(spec.pca_dims, n_train, data.blocks[ch].shape[1]) for ch in spec.channels}
    return SplitDistribution.from_values(spec, corr, _stream(seed, n_splits, train_frac, data, pca_scope), k_eff)


# ----------------------------------------------------------------------------
# Model comparison and the full table
# ----------------------------------------------------------------------------


@dataclass(frozen=True)
class ComparisonEntry:
    label: str
    reference: str
    p_frac: float

    @property
    def flag(self) -> str:
        if self.label == self.reference:
            return ""
        if self.p_frac < SIGNIFICANT:
            return "*"
        if self.p_frac > EQUIVALENT:
            return "#"
        return ""


def compare_models(dist_a: SplitDistribution, dist_b: SplitDistribution) -> ComparisonEntry:
    """Fraction of paired splits in which ``dist_a`` strictly beats ``dist_b``."""
    if dist_a.stream != dist_b.stream or dist_a.n_splits != dist_b.n_splits:
        raise UnpairedDistributions(
            f"split streams differ: {dist_a.stream} vs {dist_b.stream}"
        )
    wins = np.count_nonzero(dist_a.correlations > dist_b.correlations)
    return ComparisonEntry(dist_a.spec.label, dist_b.spec.label, wins / dist_a.n_splits)


@dataclass(frozen=True)
class EvalConfig:
    pca_dims: int = 20
    pca_scope: str = "per_fold"
    n_splits: int = 1000
    train_frac: float = 0.8
    k_folds: int = 5
    ridge: float = 0.0
    standardize: bool = True
    n_resamples: int = 1000
    seed: int = 0
    jobs: int = 1
    specs: tuple | None = None

    def spec_list(self):
        if self.specs is None:
            return channel_subsets()
        return [parse_channels(s) for s in self.specs]


@dataclass
class SpecTable:
    category: str
    dimension: RatingDimension
    ceiling: ReliabilityEstimate | None
    distributions: dict  # label -> SplitDistribution
    comparisons: dict  # label -> ComparisonEntry
    best: str
    n_scenes: int
    config: EvalConfig

    def rows(self) -> list[dict]:
        out = []
        if self.ceiling is None:
            out.append({"model": "Ceil", "mean": None, "sd": None, "p_frac": None, "flag": "", "available": False})
        else:
            out.append({"model": "Ceil", "mean": self.ceiling.mean, "sd": self.ceiling.sd,
                        "p_frac": None, "flag": "", "available": True})
        for label, dist in self.distributions.items():
            cmp = self.comparisons[label]
            out.append({
                "model": label,
                "mean": dist.mean,
                "sd": dist.sd,
                "p_frac": cmp.p_frac,
                "flag": cmp.flag,
                "best": label == self.best,
                "available": True,
                "pca_dims_effective": dist.pca_dims_effective,
            })
        return out

    def to_json(self) -> dict:
        cfg = self.config
        return {
            "category": self.category,
            "dimension": self.dimension.value,
            "n_scenes": self.n_scenes,
            "best": self.best,
            "ceiling": None if self.ceiling is None else {
                "mean": self.ceiling.mean,
                "sd": self.ceiling.sd,
                "split_half_r": self.ceiling.split_half_r,
                "n_resamples": self.ceiling.n_resamples,
                "sampling": self.ceiling.sampling,
            },
            "rows": self.rows(),
            "protocol": {
                "n_splits": cfg.n_splits, "train_frac": cfg.train_frac, "pca_dims": cfg.pca_dims,
                "pca_scope": cfg.pca_scope, "ridge": cfg.ridge, "standardize": cfg.standardize,
                "seed": cfg.seed, "significance": {"*": f"p_frac < {SIGNIFICANT}", "#": f"p_frac > {EQUIVALENT}"},
            },
        }

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["category", "dimension", "model", "mean", "sd", "p_frac", "flag", "best"])
        for row in self.rows():
            w.writerow([
                self.category, self.dimension.value, row["model"],
                "" if row["mean"] is None else repr(row["mean"]),
                "" if row["sd"] is None else repr(row["sd"]),
                "" if row["p_frac"] is None else repr(row["p_frac"]),
                row["flag"], int(bool(row.get("best"))),
            ])
        return buf.getvalue()

    def split_matrix_csv(self) -> str:
        """Per-split correlations, one column per model, for plotting."""
        labels = list(self.distributions)
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["split"] + labels)
        cols = [self.distributions[l].correlations for l in labels]
        for i in range(len(cols[0]) if cols else 0):
            w.writerow([i] + [repr(float(c[i])) for c in cols])
        return buf.getvalue()


def evaluate_all_specs(
    scenes: Sequence[SceneRecord],
    aggregates: Sequence[RatingAggregate],
    category: str,
    dimension,
    config: EvalConfig | None = None,
    ratings=None,
    schema: SchemaConfig | None = None,
) -> SpecTable:
    """Ceiling plus repeated-split distributions for every channel subset.

    PCA bases are computed once per split and channel and shared by all
    subsets, which gives the same numbers as calling
    :func:`repeated_split_eval` per subset.
    """
    config = config or EvalConfig()
    dimension = RatingDimension.parse(dimension)
    channel_sets = config.spec_list()
    needed = tuple(ch for ch in CHANNELS if any(ch in cs for cs in channel_sets))
    data = training_data(scenes, aggregates, category, dimension, needed)
    corr = _run_splits(data, channel_sets, config.n_splits, config.seed, config.train_frac,
                       config.pca_dims, config.ridge, config.standardize, config.pca_scope, config.jobs)
    stream = _stream(config.seed, config.n_splits, config.train_frac, data, config.pca_scope)
    n_train = int(round(config.train_frac * len(data.y)))
    dists = {}
    for j, cs in enumerate(channel_sets):
        spec = ModelSpec(cs, category, dimension, config.pca_dims, config.ridge, config.standardize)
        k_eff = {ch.value: effective_dims(config.pca_dims, n_train, data.blocks[ch].shape[1]) for ch in cs}
        dists[spec.label] = SplitDistribution.from_values(spec, corr[:, j], stream, k_eff)
    best = max(dists, key=lambda lbl: (np.nanmean(dists[lbl].correlations), lbl))
    comparisons = {lbl: compare_models(d, dists[best]) for lbl, d in dists.items()}

    ceiling = None
    if ratings:
        M, subjects = rating_matrix(ratings, category, dimension, data.scene_ids, schema)
        if len(subjects) >= 2:
            ceiling = split_half_ceiling(M, config.n_resamples, config.seed, subject_ids=subjects)
    return SpecTable(category, dimension, ceiling, dists, comparisons, best, len(data.y), config)


# ----------------------------------------------------------------------------
# Nontarget weights
# ----------------------------------------------------------------------------


def nontarget_weights(model: ExpectationModel) -> np.ndarray:
    return model.feature_weights(Channel.NONTARGET)


def nontarget_weight_correlation(model_a: ExpectationModel, model_b: ExpectationModel, vocabulary=None) -> float:
    """Correlation of two models' per-label nontarget weights."""
    wa, wb = nontarget_weights(model_a), nontarget_weights(model_b)
    if vocabulary is not None and len(vocabulary) != wa.shape[0]:
        raise InvalidShape(f"vocabulary has {len(vocabulary)} labels, channel has {wa.shape[0]}")
    return pearson(wa, wb)


def nontarget_weight_report(models: dict, vocabulary: Sequence[str], top: int = 5) -> dict:
    """Per-label weights, their correlation, and extreme labels per model."""
    names = list(models)
    weights = {name: nontarget_weights(m) for name, m in models.items()}
    report = {"labels": list(vocabulary), "weights": {k: v.tolist() for k, v in weights.items()}, "top": {}}
    for name, w in weights.items():
        order = np.argsort(w, kind="stable")
        report["top"][name] = {
            "positive": [vocabulary[i] for i in order[::-1][:top]],
            "negative": [vocabulary[i] for i in order[:top]],
        }
    if len(names) == 2:
        report["r"] = pearson(weights[names[0]], weights[names[1]])
    return report
