"""Synthetic datasets with planted, fully known structure.

A :class:`SceneWorld` fixes the feature generators (factor loadings per
channel) and the planted rating functions. Rating datasets and detection
datasets drawn from the same world share those generators, so a context
model fitted on synthetic ratings transfers to synthetic detection scenes
exactly as the planted construction says it should.
"""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np
from scipy import optimize
from scipy.stats import norm

from .dataset import (
    CHANNELS,
    Box,
    Channel,
    DetectorScore,
    Frame,
    PresenceMatrix,
    RatingAggregate,
    RawRating,
    RatingDimension,
    SceneRecord,
    SchemaConfig,
    aggregate_ratings,
    parse_channels,
    write_features_csv,
    write_ground_truth_csv,
    write_presence_json,
    write_ratings_csv,
    write_scene_meta_csv,
    write_scores_csv,
)
from .exceptions import InvalidConfig
from .numerics import pca_fit, pca_project

# Nontarget labels and their counts over 650 rated scenes.
NONTARGET_COUNTS = {
    "window": 332, "tree": 327, "pole": 267, "door": 160, "fence": 149, "sign": 147,
    "roof": 147, "text": 103, "lamppost": 90, "glass": 82, "cable": 80, "stripe": 58,
    "box": 56, "bush": 47, "stair": 45, "bench": 42, "rock": 41, "dustbin": 36,
    "flower-pot": 35, "lamp": 29, "flower": 26, "chair": 26, "entrance": 23, "cycle": 22,
    "table": 20, "boat": 19, "statue": 17, "hydrant": 8, "flag": 8, "wheel": 7,
    "animal": 7, "cone": 6, "bird": 6, "manhole-cover": 5, "cloud": 5, "bag": 2,
}
NONTARGET_VOCABULARY = list(NONTARGET_COUNTS)

# centre, spread and clamp range of each latent rating dimension
DIMENSION_PRIORS = {
    RatingDimension.LIKELIHOOD: (0.5, 0.10, (0.0, 1.0)),
    RatingDimension.XPOS: (0.5, 0.08, (0.05, 0.95)),
    RatingDimension.YPOS: (0.55, 0.06, (0.05, 0.95)),
    RatingDimension.SCALE: (0.06, 0.015, (0.005, 0.5)),
    RatingDimension.ASPECT: (1.0, 0.2, (0.2, 5.0)),
}

SCENE_CATEGORIES = ("street", "park", "station", "office", "kitchen", "bedroom")
MATCHED_SCENE_CATEGORIES = ("street", "park", "station")


@dataclass(frozen=True)
class DetectorModel:
    signal: float = 1.0
    noise_sd: float = 0.524


@dataclass(frozen=True)
class ExtraCategory:
    """A detection category whose presence tracks an anchor category."""

    anchor: str | None = None
    base_rate: float = 0.3
    given_anchor: float = 0.3


@dataclass
class SynthConfig:
    n_scenes: int = 650
    channel_dims: dict = field(default_factory=lambda: {"T": 62, "N": 36, "C": 532})
    generating_channels: str = "NC"
    categories: tuple = ("car", "person")
    n_factors: int = 10
    feature_noise: float = 0.3
    signal_pcs: int = 8
    noise_sd: float = 0.6
    reliability: float | None = 0.9
    subject_noise_sd: float | None = None
    n_subjects: int = 11
    category_correlation: float = -0.3
    frame: tuple = (640.0, 480.0)
    slider: tuple = (0.0, 100.0)
    # detection data
    n_detection_scenes: int = 2000
    detectors: dict = field(default_factory=lambda: {"det_a": DetectorModel(1.0, 0.524), "det_b": DetectorModel(1.0, 0.6)})
    context_weight: float = 1.0
    extra_categories: dict = field(default_factory=dict)
    seed: int = 0

    def validate(self) -> None:
        if self.n_scenes < 10:
            raise InvalidConfig(f"n_scenes must be >= 10, got {self.n_scenes}")
        if self.n_subjects < 2:
            raise InvalidConfig("n_subjects must be >= 2")
        try:
            gen = parse_channels(self.generating_channels)
        except ValueError as exc:
            raise InvalidConfig(str(exc)) from None
        for ch in CHANNELS:
            if int(self.channel_dims.get(ch.value, 0)) < 1:
                raise InvalidConfig(f"channel {ch.value} needs a positive dimension")
        for ch in gen:
            if int(self.channel_dims[ch.value]) < self.signal_pcs:
                raise InvalidConfig(f"channel {ch.value} narrower than signal_pcs={self.signal_pcs}")
        if self.reliability is None and self.subject_noise_sd is None:
            raise InvalidConfig("set reliability or subject_noise_sd")
        if self.reliability is not None and not 0 < self.reliability <= 1:
            raise InvalidConfig(f"reliability must be in (0, 1], got {self.reliability}")
        for name in ("noise_sd", "feature_noise", "context_weight"):
            if getattr(self, name) < 0:
                raise InvalidConfig(f"{name} must be >= 0")
        if self.subject_noise_sd is not None and self.subject_noise_sd < 0:
            raise InvalidConfig("subject_noise_sd must be >= 0")
        if not -1 <= self.category_correlation <= 1:
            raise InvalidConfig("category_correlation must be in [-1, 1]")
        if self.n_detection_scenes < 0 or self.n_detection_scenes % 2:
            raise InvalidConfig("n_detection_scenes must be a non-negative even number")
        for det in self.detectors.values():
            if det.noise_sd < 0:
                raise InvalidConfig("detector noise_sd must be >= 0")

    @property
    def schema(self) -> SchemaConfig:
        return SchemaConfig(self.slider[0], self.slider[1], Frame(*self.frame))

    def to_dict(self) -> dict:
        d = asdict(self)
        d["categories"] = list(self.categories)
        d["frame"] = list(self.frame)
        d["slider"] = list(self.slider)
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "SynthConfig":
        d = dict(d)
        if "detectors" in d:
            d["detectors"] = {k: v if isinstance(v, DetectorModel) else DetectorModel(**v) for k, v in d["detectors"].items()}
        if "extra_categories" in d:
            d["extra_categories"] = {
                k: v if isinstance(v, ExtraCategory) else ExtraCategory(**v) for k, v in d["extra_categories"].items()
            }
        for key in ("categories", "frame", "slider"):
            if key in d:
                d[key] = tuple(d[key])
        known = set(cls.__dataclass_fields__)
        unknown = set(d) - known
        if unknown:
            raise InvalidConfig(f"unknown synth keys: {sorted(unknown)}")
        cfg = cls(**d)
        cfg.validate()
        return cfg


# ----------------------------------------------------------------------------
# Analytic relations
# ----------------------------------------------------------------------------


def split_half_r(latent_var: float, noise_var: float, n_subjects: int) -> float:
    """Population correlation between the means of two subject halves."""
    h1 = n_subjects // 2
    h2 = n_subjects - h1
    return latent_var / math.sqrt((latent_var + noise_var / h1) * (latent_var + noise_var / h2))


def subject_noise_for_reliability(latent_sd: float, n_subjects: int, reliability: float) -> float:
    """Per-subject noise sd giving the requested corrected split-half value."""
    if reliability >= 1:
        return 0.0
    target = reliability / (2 - reliability)
    v = latent_sd ** 2
    f = lambda s: split_half_r(v, s * s, n_subjects) - target
    hi = latent_sd
    while f(hi) > 0:
        hi *= 2
    return optimize.brentq(f, 0.0, hi, xtol=1e-14 * latent_sd)


def attenuated_correlation(noise_sd: float, latent_sd: float, subject_sd: float, n_subjects: int) -> float:
    """Correlation between the planted signal and the averaged observed rating."""
    feature_part = 1.0 / math.sqrt(1.0 + noise_sd ** 2)
    lv = latent_sd ** 2
    return feature_part * math.sqrt(lv / (lv + subject_sd ** 2 / n_subjects))


def bayes_accuracy(*separations: float) -> float:
    """Accuracy of the optimal rule for two equiprobable Gaussian classes with
    identity covariance; ``separations`` are per-feature mean gaps in sd units."""
    delta = math.sqrt(sum(s * s for s in separations))
    return float(norm.cdf(delta / 2.0))


def detector_separation(det: DetectorModel) -> float:
    return math.inf if det.noise_sd == 0 else det.signal / det.noise_sd


# ----------------------------------------------------------------------------
# World
# ----------------------------------------------------------------------------


@dataclass
class PlantedFunction:
    category: str
    dimension: RatingDimension
    weights: dict  # channel value -> feature-space weights
    intercept: float  # on the standardized signal scale
    latent_center: float
    latent_sd: float
    subject_sd: float
    attenuated_r: float

    def signal(self, blocks: dict) -> np.ndarray:
        """Standardized planted signal (unit variance on the rating scenes)."""
        s = np.full(next(iter(blocks.values())).shape[0], self.intercept)
        for ch, w in self.weights.items():
            s = s + blocks[Channel(ch)] @ w
        return s


class SceneWorld:
    """Feature generators and planted rating functions fixed by a seed."""

    def __init__(self, config: SynthConfig):
        config.validate()
        self.config = config
        self.generating = parse_channels(config.generating_channels)
        rng = np.random.default_rng([config.seed, 0])
        r = config.n_factors
        self.loadings = {}
        for ch in CHANNELS:
            d = int(config.channel_dims[ch.value])
            self.loadings[ch] = rng.normal(size=(r, d))
        nd = int(config.channel_dims["N"])
        counts = list(NONTARGET_COUNTS.values())
        rates = np.array([counts[j % len(counts)] / 650.0 for j in range(nd)])
        # thresholds on a unit-variance latent score hitting the label frequencies
        self.nontarget_thresholds = norm.ppf(1.0 - rates)
        self.nontarget_latent_scale = 1.0 / np.sqrt((self.loadings[Channel.NONTARGET] ** 2).sum(axis=0) + 0.25)

    @property
    def vocabulary(self) -> list[str]:
        nd = int(self.config.channel_dims["N"])
        base = NONTARGET_VOCABULARY
        return [base[j] if j < len(base) else f"label{j}" for j in range(nd)]

    def features(self, factors: dict, rng) -> dict:
        """Channel blocks for scenes with the given per-channel factor scores."""
        cfg = self.config
        out = {}
        for ch in CHANNELS:
            F = factors[ch]
            X = F @ self.loadings[ch]
            if ch is Channel.NONTARGET:
                latent = (X + 0.5 * rng.normal(size=X.shape)) * self.nontarget_latent_scale
                out[ch] = (latent > self.nontarget_thresholds).astype(float)
            else:
                out[ch] = X + cfg.feature_noise * rng.normal(size=X.shape)
        return out

    def draw_factors(self, n: int, rng) -> dict:
        return {ch: rng.normal(size=(n, self.config.n_factors)) for ch in CHANNELS}

    def plant(self, blocks: dict, rng) -> dict:
        """Planted functions for every (category, dimension), fit to ``blocks``."""
        cfg = self.config
        m = cfg.signal_pcs
        bases = {ch: pca_fit(blocks[ch], m) for ch in self.generating}
        scores = {ch: pca_project(bases[ch], blocks[ch]) for ch in self.generating}
        sds = {ch: scores[ch].std(axis=0, ddof=1) for ch in self.generating}
        width = m * len(self.generating)
        planted = {}
        for dim in RatingDimension:
            betas = {}
            base = rng.normal(size=width)
            for i, cat in enumerate(cfg.categories):
                if i == 0 or dim is not RatingDimension.LIKELIHOOD:
                    b = base if i == 0 else rng.normal(size=width)
                else:
                    rho = cfg.category_correlation
                    b = rho * base + math.sqrt(1 - rho * rho) * rng.normal(size=width)
                betas[cat] = b
            for cat, beta in betas.items():
                weights, s = {}, np.zeros(blocks[self.generating[0]].shape[0])
                for j, ch in enumerate(self.generating):
                    bc = beta[j * m:(j + 1) * m] / sds[ch]
                    weights[ch] = bases[ch].components.T @ bc
                    s = s + scores[ch] @ bc
                scale = s.std(ddof=1)
                weights = {ch.value: w / scale for ch, w in weights.items()}
                intercept = -sum(float(bases[Channel(c)].mean @ w) for c, w in weights.items())
                center, spread, _ = DIMENSION_PRIORS[dim]
                if cfg.subject_noise_sd is not None:
                    subj = cfg.subject_noise_sd * spread
                else:
                    subj = subject_noise_for_reliability(spread, cfg.n_subjects, cfg.reliability)
                planted[(cat, dim)] = PlantedFunction(
                    category=cat,
                    dimension=dim,
                    weights=weights,
                    intercept=intercept,
                    latent_center=center,
                    latent_sd=spread,
                    subject_sd=subj,
                    attenuated_r=attenuated_correlation(cfg.noise_sd, spread, subj, cfg.n_subjects),
                )
        return planted


# ----------------------------------------------------------------------------
# Expectation datasets
# ----------------------------------------------------------------------------


@dataclass
class ExpectationDataset:
    scenes: list
    ratings: list
    aggregates: list
    planted: dict
    world: SceneWorld
    clamped: dict
    presence: PresenceMatrix

    def planted_truth(self) -> dict:
        return {
            "config": self.world.config.to_dict(),
            "functions": [
                {
                    "category": p.category,
                    "dimension": p.dimension.value,
                    "weights": {ch: w.tolist() for ch, w in p.weights.items()},
                    "intercept": p.intercept,
                    "latent_center": p.latent_center,
                    "latent_sd": p.latent_sd,
                    "subject_sd": p.subject_sd,
                    "attenuated_r": p.attenuated_r,
                }
                for p in self.planted.values()
            ],
            "clamped_scenes": {f"{c}/{d.value}": ids for (c, d), ids in self.clamped.items()},
        }


def _box_from_geometry(xpos, ypos, scale, aspect, frame: Frame):
    """Pixel box with the requested normalized geometry, forced into the frame."""
    area = scale * frame.width * frame.height
    w = math.sqrt(area / aspect)
    h = aspect * w
    clamped = False
    if w > frame.width:
        w, clamped = frame.width, True
    if h > frame.height:
        h, clamped = frame.height, True
    cx, cy = xpos * frame.width, ypos * frame.height
    x = min(max(cx - w / 2, 0.0), frame.width - w)
    y = min(max(cy - h / 2, 0.0), frame.height - h)
    if x != cx - w / 2 or y != cy - h / 2:
        clamped = True
    return Box(x, y, w, h), clamped


def generate_expectation_dataset(config: SynthConfig, world: SceneWorld | None = None) -> ExpectationDataset:
    """Scenes, per-subject ratings, aggregates and the planted truth."""
    world = world or SceneWorld(config)
    cfg = world.config
    rng = np.random.default_rng([cfg.seed, 1])
    n = cfg.n_scenes
    blocks = world.features(world.draw_factors(n, rng), rng)
    planted = world.plant(blocks, rng)
    ids = [f"s{i:04d}" for i in range(n)]
    scenes = [
        SceneRecord(sid, {ch: blocks[ch][i].copy() for ch in CHANNELS}, scene_category="rated")
        for i, sid in enumerate(ids)
    ]
    schema = cfg.schema
    frame = schema.frame
    subjects = [f"sub{j:02d}" for j in range(cfg.n_subjects)]

    latent = {}
    clamped: dict = {}
    for key, p in planted.items():
        z = p.signal(blocks) + cfg.noise_sd * rng.normal(size=n)
        latent[key] = p.latent_center + p.latent_sd * z / math.sqrt(1 + cfg.noise_sd ** 2)
        clamped[key] = []

    ratings = []
    for cat in cfg.categories:
        per_subject = {}
        for dim in RatingDimension:
            p = planted[(cat, dim)]
            lo, hi = DIMENSION_PRIORS[dim][2]
            raw = latent[(cat, dim)][None, :] + p.subject_sd * rng.normal(size=(cfg.n_subjects, n))
            vals = np.clip(raw, lo, hi)
            for i in np.flatnonzero(np.any(vals != raw, axis=0)):
                clamped[(cat, dim)].append(ids[i])
            per_subject[dim] = vals
        for j, sub in enumerate(subjects):
            for i, sid in enumerate(ids):
                lik = float(per_subject[RatingDimension.LIKELIHOOD][j, i])
                raw_lik = schema.slider_min + lik * (schema.slider_max - schema.slider_min)
                box = None
                if lik > 0:
                    box, was_clamped = _box_from_geometry(
                        float(per_subject[RatingDimension.XPOS][j, i]),
                        float(per_subject[RatingDimension.YPOS][j, i]),
                        float(per_subject[RatingDimension.SCALE][j, i]),
                        float(per_subject[RatingDimension.ASPECT][j, i]),
                        frame,
                    )
                    if was_clamped:
                        for dim in RatingDimension:
                            if dim.is_geometry:
                                clamped[(cat, dim)].append(sid)
                ratings.append(RawRating(sub, sid, cat, raw_lik, box))
    for key in clamped:
        clamped[key] = sorted(set(clamped[key]))
    aggregates = aggregate_ratings(ratings, schema=schema)
    presence = PresenceMatrix(world.vocabulary, ids, blocks[Channel.NONTARGET].astype(bool))
    return ExpectationDataset(scenes, ratings, aggregates, planted, world, clamped, presence)


# ----------------------------------------------------------------------------
# Detection datasets
# ----------------------------------------------------------------------------


@dataclass
class DetectionDataset:
    scenes: list
    scores: list
    presence: PresenceMatrix
    scene_sets: dict  # name -> list of scene ids
    bayes: dict  # (detector, category) -> analytic optimum accuracy


def _balanced_truth(n: int, rng) -> np.ndarray:
    y = np.zeros(n, dtype=bool)
    y[rng.permutation(n)[: n // 2]] = True
    return y


def generate_detection_dataset(
    config: SynthConfig,
    world: SceneWorld | None = None,
    reference: ExpectationDataset | None = None,
) -> DetectionDataset:
    """Scenes with ground truth and detector confidences.

    Coarse features of a target-present scene are shifted along the factor
    direction of that category's planted context signal by
    ``context_weight`` signal standard deviations; detector confidence is
    ``signal * truth + noise``.
    """
    world = world or SceneWorld(config)
    cfg = world.config
    if cfg.n_detection_scenes < 2:
        raise InvalidConfig("n_detection_scenes must be >= 2")
    # the planted functions are defined on the rating scenes
    ref = reference or generate_expectation_dataset(cfg, world)
    rng = np.random.default_rng([cfg.seed, 2])
    n = cfg.n_detection_scenes
    truth = {cat: _balanced_truth(n, rng) for cat in cfg.categories}
    for name, extra in cfg.extra_categories.items():
        p = np.full(n, extra.base_rate)
        if extra.anchor is not None:
            p = np.where(truth[extra.anchor], extra.given_anchor, extra.base_rate)
        truth[name] = rng.random(n) < p

    factors = world.draw_factors(n, rng)
    C = Channel.COARSE
    ref_coarse = np.vstack([s.channel_features[C] for s in ref.scenes])
    for cat in cfg.categories:
        p = ref.planted[(cat, RatingDimension.LIKELIHOOD)]
        if C.value not in p.weights:
            continue
        w = p.weights[C.value]
        sd_context = float((ref_coarse @ w).std(ddof=1))
        v = world.loadings[C] @ w
        if sd_context == 0 or not np.any(v):
            continue
        shift = cfg.context_weight * sd_context * v / float(v @ v)
        factors[C] = factors[C] + truth[cat][:, None] * shift[None, :]
    blocks = world.features(factors, rng)

    ids = [f"d{i:05d}" for i in range(n)]
    cats = rng.choice(len(SCENE_CATEGORIES), size=n)
    scenes = [
        SceneRecord(
            sid,
            {C: blocks[C][i].copy()},
            scene_category=SCENE_CATEGORIES[cats[i]],
            ground_truth={cat: bool(truth[cat][i]) for cat in truth},
        )
        for i, sid in enumerate(ids)
    ]
    scores = []
    bayes = {}
    for det_id, det in cfg.detectors.items():
        for cat in truth:
            conf = det.signal * truth[cat] + det.noise_sd * rng.normal(size=n)
            scores.extend(DetectorScore(sid, det_id, cat, float(c)) for sid, c in zip(ids, conf))
            if cat in cfg.categories:
                bayes[(det_id, cat)] = {
                    "baseline": bayes_accuracy(detector_separation(det)),
                    "augmented": bayes_accuracy(detector_separation(det), cfg.context_weight),
                }
    vocab = list(truth)
    presence = PresenceMatrix(vocab, ids, np.column_stack([truth[c] for c in vocab]))
    matched = [sid for sid, s in zip(ids, scenes) if s.scene_category in MATCHED_SCENE_CATEGORIES]
    return DetectionDataset(scenes, scores, presence, {"all": ids, "matched": matched}, bayes)


# ----------------------------------------------------------------------------
# Files
# ----------------------------------------------------------------------------


FEATURE_FILES = {Channel.TARGET: "target.csv", Channel.NONTARGET: "nontarget.csv", Channel.COARSE: "coarse.csv"}


def write_synth_dataset(config: SynthConfig, out_dir) -> dict:
    """Write a rating dataset, a detection dataset and the planted truth.

    Returns the paths written, keyed by role.
    """
    config.validate()
    out = Path(out_dir)
    world = SceneWorld(config)
    exp = generate_expectation_dataset(config, world)
    rating_dir = out / "rating"
    rating_dir.mkdir(parents=True, exist_ok=True)
    ids = [s.scene_id for s in exp.scenes]
    paths = {}
    for ch, name in FEATURE_FILES.items():
        write_features_csv(rating_dir / name, ids, np.vstack([s.channel_features[ch] for s in exp.scenes]))
        paths[f"rating_{ch.name.lower()}"] = rating_dir / name
    write_ratings_csv(rating_dir / "ratings.csv", exp.ratings)
    write_presence_json(rating_dir / "presence.json", exp.presence)
    write_scene_meta_csv(rating_dir / "scenes.csv", {s.scene_id: s.scene_category for s in exp.scenes})
    (rating_dir / "vocabulary.json").write_text(json.dumps(exp.world.vocabulary))
    paths.update(ratings=rating_dir / "ratings.csv", rating_presence=rating_dir / "presence.json")

    if config.n_detection_scenes > 0:
        det = generate_detection_dataset(config, world, exp)
        det_dir = out / "detection"
        det_dir.mkdir(parents=True, exist_ok=True)
        det_ids = [s.scene_id for s in det.scenes]
        write_features_csv(det_dir / "coarse.csv", det_ids, np.vstack([s.channel_features[Channel.COARSE] for s in det.scenes]))
        write_scores_csv(det_dir / "scores.csv", det.scores)
        write_ground_truth_csv(det_dir / "ground_truth.csv", {s.scene_id: s.ground_truth for s in det.scenes})
        write_scene_meta_csv(det_dir / "scenes.csv", {s.scene_id: s.scene_category for s in det.scenes})
        write_presence_json(det_dir / "presence.json", det.presence)
        paths.update(
            detection_coarse=det_dir / "coarse.csv",
            scores=det_dir / "scores.csv",
            ground_truth=det_dir / "ground_truth.csv",
            detection_scenes=det_dir / "scenes.csv",
            detection_presence=det_dir / "presence.json",
        )
        bayes = {f"{d}/{c}": v for (d, c), v in det.bayes.items()}
    else:
        bayes = {}
    truth = exp.planted_truth()
    truth["bayes_accuracy"] = bayes
    truth["matched_scene_categories"] = list(MATCHED_SCENE_CATEGORIES)
    (out / "planted_truth.json").write_text(json.dumps(truth, indent=1, sort_keys=True))
    paths["planted_truth"] = out / "planted_truth.json"
    return {k: str(v) for k, v in paths.items()}
