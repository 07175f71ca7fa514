"""Domain types, CSV/JSON ingestion and rating aggregation."""

from __future__ import annotations

import csv
import json
import math
from collections import defaultdict
from dataclasses import dataclass, field
from enum import Enum
from itertools import combinations
from pathlib import Path
from typing import Iterable, Mapping, NamedTuple

import numpy as np

from .exceptions import (
    DataValidationError,
    DimensionMismatch,
    EmptyRatingSet,
    MissingColumn,
    NonFiniteValue,
    UnknownSceneReference,
)


class Channel(str, Enum):
    TARGET = "T"
    NONTARGET = "N"
    COARSE = "C"

    @classmethod
    def parse(cls, value) -> "Channel":
        if isinstance(value, Channel):
            return value
        key = str(value).strip()
        for ch in cls:
            if key.upper() == ch.value or key.lower() == ch.name.lower():
                return ch
        aliases = {"nontarget": cls.NONTARGET, "non-target": cls.NONTARGET, "context": cls.COARSE}
        if key.lower() in aliases:
            return aliases[key.lower()]
        raise ValueError(f"unknown channel {value!r}")


CHANNELS = (Channel.TARGET, Channel.NONTARGET, Channel.COARSE)


def parse_channels(value) -> tuple[Channel, ...]:
    """Parse ``"NC"``, ``["N", "C"]`` or channel members into canonical order."""
    items = list(value) if not isinstance(value, Channel) else [value]
    chans = {Channel.parse(v) for v in items}
    if not chans:
        raise ValueError("channel subset must be nonempty")
    return tuple(ch for ch in CHANNELS if ch in chans)


def channel_label(channels: Iterable[Channel]) -> str:
    return "".join(Channel.parse(c).value for c in channels)


def channel_subsets() -> list[tuple[Channel, ...]]:
    """The 7 nonempty subsets: T, N, C, TN, TC, NC, TNC."""
    out = []
    for size in (1, 2, 3):
        out.extend(combinations(CHANNELS, size))
    return out


class RatingDimension(str, Enum):
    LIKELIHOOD = "likelihood"
    XPOS = "xpos"
    YPOS = "ypos"
    SCALE = "scale"
    ASPECT = "aspect"

    @property
    def is_geometry(self) -> bool:
        return self is not RatingDimension.LIKELIHOOD

    @classmethod
    def parse(cls, value) -> "RatingDimension":
        if isinstance(value, RatingDimension):
            return value
        aliases = {"lklhd": "likelihood", "asp": "aspect", "area": "scale"}
        key = str(value).strip().lower()
        return cls(aliases.get(key, key))


DIMENSIONS = tuple(RatingDimension)


@dataclass(frozen=True)
class Frame:
    width: float = 640.0
    height: float = 480.0


@dataclass(frozen=True)
class SchemaConfig:
    slider_min: float = 0.0
    slider_max: float = 100.0
    frame: Frame = Frame()

    def rescale(self, raw: float) -> float:
        return (raw - self.slider_min) / (self.slider_max - self.slider_min)


@dataclass
class SceneRecord:
    scene_id: str
    channel_features: dict = field(default_factory=dict)
    scene_category: str = ""
    ground_truth: dict | None = None

    def features(self, channel) -> np.ndarray:
        return self.channel_features[Channel.parse(channel)]


@dataclass(frozen=True)
class Box:
    x: float
    y: float
    w: float
    h: float

    @property
    def center(self) -> tuple[float, float]:
        return self.x + self.w / 2.0, self.y + self.h / 2.0


@dataclass(frozen=True)
class RawRating:
    subject_id: str
    scene_id: str
    category: str
    likelihood_raw: float
    box: Box | None = None


@dataclass(frozen=True)
class RatingAggregate:
    scene_id: str
    category: str
    likelihood: float
    xpos: float | None = None
    ypos: float | None = None
    scale: float | None = None
    aspect: float | None = None
    n_subjects: int = 0
    n_boxes: int = 0

    def value(self, dimension) -> float | None:
        return getattr(self, RatingDimension.parse(dimension).value)


@dataclass(frozen=True)
class DetectorScore:
    scene_id: str
    detector_id: str
    category: str
    confidence: float


@dataclass
class PresenceMatrix:
    vocabulary: list[str]
    scene_ids: list[str]
    matrix: np.ndarray

    def __post_init__(self):
        self.matrix = np.asarray(self.matrix, dtype=bool)
        if len(set(self.vocabulary)) != len(self.vocabulary):
            raise DataValidationError("presence vocabulary has duplicate labels")
        if self.matrix.shape != (len(self.scene_ids), len(self.vocabulary)):
            raise DimensionMismatch(
                f"presence matrix shape {self.matrix.shape} != "
                f"({len(self.scene_ids)}, {len(self.vocabulary)})"
            )

    def column(self, label: str) -> np.ndarray:
        try:
            return self.matrix[:, self.vocabulary.index(label)]
        except ValueError:
            raise DataValidationError(f"label {label!r} not in presence vocabulary") from None

    def to_json(self) -> dict:
        return {
            "vocabulary": list(self.vocabulary),
            "rows": {sid: [int(v) for v in row] for sid, row in zip(self.scene_ids, self.matrix)},
        }

    @classmethod
    def from_json(cls, payload: dict) -> "PresenceMatrix":
        try:
            vocab = list(payload["vocabulary"])
            rows = payload["rows"]
        except (KeyError, TypeError) as exc:
            raise MissingColumn(f"presence JSON lacks {exc}") from None
        ids = list(rows)
        for sid in ids:
            if len(rows[sid]) != len(vocab):
                raise DimensionMismatch(
                    f"row has {len(rows[sid])} entries, vocabulary has {len(vocab)}", row=sid
                )
            if any(v not in (0, 1, True, False) for v in rows[sid]):
                raise DataValidationError("presence entries must be 0/1", row=sid)
        matrix = np.array([rows[s] for s in ids], dtype=bool).reshape(len(ids), len(vocab))
        return cls(vocab, ids, matrix)


class Dataset(NamedTuple):
    scenes: list[SceneRecord]
    ratings: list[RawRating]
    scores: list[DetectorScore]


# ----------------------------------------------------------------------------
# CSV ingestion
# ----------------------------------------------------------------------------


def _read_csv(path, required: Iterable[str]) -> tuple[list[str], list[dict]]:
    path = Path(path)
    if not path.exists():
        raise DataValidationError("file not found", path=path)
    with path.open(newline="") as fh:
        reader = csv.DictReader(fh)
        header = reader.fieldnames or []
        for col in required:
            if col not in header:
                raise MissingColumn(f"missing column {col!r}", path=path, field=col)
        rows = list(reader)
    return header, rows


def _float(value, *, path, row, col, allow_empty=False):
    if value is None or str(value).strip() == "":
        if allow_empty:
            return None
        raise DataValidationError("empty value", path=path, row=row, field=col)
    try:
        out = float(value)
    except ValueError:
        raise DataValidationError(f"not a number: {value!r}", path=path, row=row, field=col) from None
    if not math.isfinite(out):
        raise NonFiniteValue(f"non-finite value {value!r}", path=path, row=row, field=col)
    return out


def read_features_csv(path) -> dict[str, np.ndarray]:
    header, rows = _read_csv(path, ["scene_id"])
    cols = [c for c in header if c != "scene_id"]
    if not cols:
        raise MissingColumn("no feature columns", path=path)
    out: dict[str, np.ndarray] = {}
    for i, row in enumerate(rows, start=2):
        sid = row["scene_id"]
        if None in row or any(row.get(c) is None for c in cols):
            raise DimensionMismatch("row width differs from header", path=path, row=i)
        if sid in out:
            raise DataValidationError(f"duplicate scene_id {sid!r}", path=path, row=i)
        out[sid] = np.array(
            [_float(row[c], path=path, row=f"{i} (scene {sid})", col=c) for c in cols]
        )
    return out


def write_features_csv(path, scene_ids, matrix) -> None:
    matrix = np.asarray(matrix, dtype=float)
    with Path(path).open("w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["scene_id"] + [f"f{j}" for j in range(matrix.shape[1])])
        for sid, row in zip(scene_ids, matrix):
            w.writerow([sid] + [repr(float(v)) for v in row])


RATING_COLUMNS = ["subject_id", "scene_id", "category", "likelihood_raw", "box_x", "box_y", "box_w", "box_h"]


def validate_rating(r: RawRating, schema: SchemaConfig, *, path=None, row=None) -> None:
    lo, hi = sorted((schema.slider_min, schema.slider_max))
    if not lo <= r.likelihood_raw <= hi:
        raise DataValidationError(
            f"likelihood_raw {r.likelihood_raw} outside slider range [{lo}, {hi}]",
            path=path, row=row, field="likelihood_raw",
        )
    if r.box is None:
        return
    if schema.rescale(r.likelihood_raw) <= 0:
        raise DataValidationError("box given for a zero-likelihood rating", path=path, row=row, field="box_x")
    b, fr = r.box, schema.frame
    if not (b.w > 0 and b.h > 0):
        raise DataValidationError("box width and height must be positive", path=path, row=row, field="box_w")
    eps = 1e-9 * max(fr.width, fr.height)
    if b.x < -eps or b.y < -eps or b.x + b.w > fr.width + eps or b.y + b.h > fr.height + eps:
        raise DataValidationError(
            f"box ({b.x}, {b.y}, {b.w}, {b.h}) leaves the {fr.width}x{fr.height} frame",
            path=path, row=row, field="box_x",
        )


def read_ratings_csv(path, schema: SchemaConfig | None = None) -> list[RawRating]:
    schema = schema or SchemaConfig()
    _, rows = _read_csv(path, RATING_COLUMNS)
    out = []
    for i, row in enumerate(rows, start=2):
        lik = _float(row["likelihood_raw"], path=path, row=i, col="likelihood_raw")
        coords = [
            _float(row[c], path=path, row=i, col=c, allow_empty=True)
            for c in ("box_x", "box_y", "box_w", "box_h")
        ]
        if all(v is None for v in coords):
            box = None
        elif any(v is None for v in coords):
            raise DataValidationError("partially specified box", path=path, row=i, field="box_x")
        else:
            box = Box(*coords)
        rating = RawRating(row["subject_id"], row["scene_id"], row["category"], lik, box)
        validate_rating(rating, schema, path=path, row=i)
        out.append(rating)
    return out


def write_ratings_csv(path, ratings: Iterable[RawRating]) -> None:
    with Path(path).open("w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(RATING_COLUMNS)
        for r in ratings:
            box = ["", "", "", ""] if r.box is None else [repr(float(v)) for v in (r.box.x, r.box.y, r.box.w, r.box.h)]
            w.writerow([r.subject_id, r.scene_id, r.category, repr(float(r.likelihood_raw))] + box)


def read_scores_csv(path) -> list[DetectorScore]:
    _, rows = _read_csv(path, ["scene_id", "detector_id", "category", "confidence"])
    seen = set()
    out = []
    for i, row in enumerate(rows, start=2):
        key = (row["scene_id"], row["detector_id"], row["category"])
        if key in seen:
            raise DataValidationError(f"duplicate score for {key}", path=path, row=i)
        seen.add(key)
        conf = _float(row["confidence"], path=path, row=i, col="confidence")
        out.append(DetectorScore(*key, conf))
    return out


def write_scores_csv(path, scores: Iterable[DetectorScore]) -> None:
    with Path(path).open("w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["scene_id", "detector_id", "category", "confidence"])
        for s in scores:
            w.writerow([s.scene_id, s.detector_id, s.category, repr(float(s.confidence))])


def _parse_bool(value, *, path, row, col) -> bool:
    key = str(value).strip().lower()
    if key in ("1", "true", "yes"):
        return True
    if key in ("0", "false", "no"):
        return False
    raise DataValidationError(f"not a boolean: {value!r}", path=path, row=row, field=col)


def read_ground_truth_csv(path) -> dict[str, dict[str, bool]]:
    _, rows = _read_csv(path, ["scene_id", "category", "present"])
    out: dict[str, dict[str, bool]] = defaultdict(dict)
    for i, row in enumerate(rows, start=2):
        out[row["scene_id"]][row["category"]] = _parse_bool(row["present"], path=path, row=i, col="present")
    return dict(out)


def write_ground_truth_csv(path, truth: Mapping[str, Mapping[str, bool]]) -> None:
    with Path(path).open("w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["scene_id", "category", "present"])
        for sid, cats in truth.items():
            for cat, present in cats.items():
                w.writerow([sid, cat, int(bool(present))])


def read_scene_meta_csv(path) -> dict[str, str]:
    _, rows = _read_csv(path, ["scene_id", "scene_category"])
    return {row["scene_id"]: row["scene_category"] for row in rows}


def write_scene_meta_csv(path, meta: Mapping[str, str]) -> None:
    with Path(path).open("w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["scene_id", "scene_category"])
        for sid, cat in meta.items():
            w.writerow([sid, cat])


def read_presence_json(path) -> PresenceMatrix:
    path = Path(path)
    if not path.exists():
        raise DataValidationError("file not found", path=path)
    try:
        payload = json.loads(path.read_text())
    except json.JSONDecodeError as exc:
        raise DataValidationError(f"invalid JSON: {exc}", path=path) from None
    return PresenceMatrix.from_json(payload)


def write_presence_json(path, presence: PresenceMatrix) -> None:
    Path(path).write_text(json.dumps(presence.to_json(), indent=1))


def load_dataset(
    features_paths: Mapping,
    ratings_path=None,
    scores_path=None,
    schema_config: SchemaConfig | None = None,
    *,
    ground_truth_path=None,
    scene_meta_path=None,
) -> Dataset:
    """Load and validate one dataset.

    ``features_paths`` maps channels (``"T"``, ``"nontarget"``, ...) to
    per-channel feature CSVs. Ratings, scores, ground truth and scene
    metadata are optional; every row they contain must reference a scene
    present in at least one feature file.
    """
    schema = schema_config or SchemaConfig()
    if not features_paths:
        raise DataValidationError("at least one feature file is required")
    per_channel: dict[Channel, dict[str, np.ndarray]] = {}
    for key, path in features_paths.items():
        ch = Channel.parse(key)
        table = read_features_csv(path)
        dims = {v.shape[0] for v in table.values()}
        if len(dims) > 1:
            raise DimensionMismatch(f"{ch.name} vectors have differing lengths {sorted(dims)}", path=path)
        per_channel[ch] = table

    order: list[str] = []
    seen = set()
    for table in per_channel.values():
        for sid in table:
            if sid not in seen:
                seen.add(sid)
                order.append(sid)

    meta = read_scene_meta_csv(scene_meta_path) if scene_meta_path else {}
    truth = read_ground_truth_csv(ground_truth_path) if ground_truth_path else {}
    for sid in list(meta) + list(truth):
        if sid not in seen:
            raise UnknownSceneReference(f"unknown scene_id {sid!r}", path=scene_meta_path if sid in meta else ground_truth_path)

    scenes = [
        SceneRecord(
            scene_id=sid,
            channel_features={ch: t[sid] for ch, t in per_channel.items() if sid in t},
            scene_category=meta.get(sid, ""),
            ground_truth=truth.get(sid),
        )
        for sid in order
    ]

    ratings = read_ratings_csv(ratings_path, schema) if ratings_path else []
    for i, r in enumerate(ratings, start=2):
        if r.scene_id not in seen:
            raise UnknownSceneReference(f"unknown scene_id {r.scene_id!r}", path=ratings_path, row=i, field="scene_id")
    scores = read_scores_csv(scores_path) if scores_path else []
    for i, s in enumerate(scores, start=2):
        if s.scene_id not in seen:
            raise UnknownSceneReference(f"unknown scene_id {s.scene_id!r}", path=scores_path, row=i, field="scene_id")
    return Dataset(scenes, ratings, scores)


# ----------------------------------------------------------------------------
# Aggregation
# ----------------------------------------------------------------------------


def box_geometry(box: Box, frame: Frame) -> dict[str, float]:
    """Normalized centre, area fraction and height/width ratio of a box."""
    cx, cy = box.center
    return {
        "xpos": cx / frame.width,
        "ypos": cy / frame.height,
        "scale": (box.w * box.h) / (frame.width * frame.height),
        "aspect": box.h / box.w,
    }


def rating_value(r: RawRating, dimension, schema: SchemaConfig) -> float | None:
    """One subject's value on ``dimension`` (None when no box was drawn)."""
    dimension = RatingDimension.parse(dimension)
    if dimension is RatingDimension.LIKELIHOOD:
        return schema.rescale(r.likelihood_raw)
    if r.box is None:
        return None
    return box_geometry(r.box, schema.frame)[dimension.value]


def aggregate_ratings(
    ratings: Iterable[RawRating],
    frame: Frame | None = None,
    *,
    schema: SchemaConfig | None = None,
    expected: Iterable[tuple[str, str]] | None = None,
) -> list[RatingAggregate]:
    """Average per-subject ratings into one aggregate per (scene, category).

    Sums use ``math.fsum`` so the result does not depend on input order.
    ``expected`` lists (scene_id, category) pairs that must be covered.
    """
    schema = schema or SchemaConfig()
    if frame is not None:
        schema = SchemaConfig(schema.slider_min, schema.slider_max, frame)
    groups: dict[tuple[str, str], list[RawRating]] = defaultdict(list)
    for r in ratings:
        validate_rating(r, schema)
        groups[(r.scene_id, r.category)].append(r)
    if expected is not None:
        for key in expected:
            if not groups.get(tuple(key)):
                raise EmptyRatingSet(f"no ratings for scene {key[0]!r}, category {key[1]!r}")

    out = []
    for (sid, cat) in sorted(groups):
        rs = groups[(sid, cat)]
        lik = math.fsum(schema.rescale(r.likelihood_raw) for r in rs) / len(rs)
        geoms = [box_geometry(r.box, schema.frame) for r in rs if r.box is not None]
        geo = {
            k: (math.fsum(g[k] for g in geoms) / len(geoms) if geoms else None)
            for k in ("xpos", "ypos", "scale", "aspect")
        }
        out.append(
            RatingAggregate(
                scene_id=sid,
                category=cat,
                likelihood=min(max(lik, 0.0), 1.0),
                n_subjects=len(rs),
                n_boxes=len(geoms),
                **geo,
            )
        )
    return out


def rating_matrix(
    ratings: Iterable[RawRating],
    category: str,
    dimension,
    scene_ids: list[str],
    schema: SchemaConfig | None = None,
) -> tuple[np.ndarray, list[str]]:
    """Subjects x scenes matrix of individual ratings, NaN where absent."""
    schema = schema or SchemaConfig()
    col = {sid: j for j, sid in enumerate(scene_ids)}
    cells: dict[str, dict[int, float]] = defaultdict(dict)
    for r in ratings:
        if r.category != category or r.scene_id not in col:
            continue
        v = rating_value(r, dimension, schema)
        if v is not None:
            cells[r.subject_id][col[r.scene_id]] = v
    subjects = sorted(cells)
    M = np.full((len(subjects), len(scene_ids)), np.nan)
    for i, s in enumerate(subjects):
        for j, v in cells[s].items():
            M[i, j] = v
    return M, subjects
