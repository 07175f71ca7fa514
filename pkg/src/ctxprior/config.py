"""Run configuration: one YAML file plus command-line overrides.

Relative paths are resolved against the config file's directory. Every
referenced input path is checked before any computation starts.
"""

from __future__ import annotations

import copy
from dataclasses import dataclass, field
from pathlib import Path

import yaml

from .dataset import DIMENSIONS, Frame, RatingDimension, SchemaConfig, channel_label, channel_subsets, parse_channels
from .exceptions import ConfigError
from .expectations import EvalConfig
from .synth import SynthConfig

DEFAULTS = {
    "seed": None,
    "out": "out",
    "jobs": 1,
    "data": {
        "features": {},
        "ratings": None,
        "vocabulary": None,
        "frame": [640.0, 480.0],
        "slider": [0.0, 100.0],
    },
    "detection": {
        "features": {},
        "scores": None,
        "ground_truth": None,
        "scenes": None,
        "presence": None,
    },
    "expectations": {
        "categories": ["car", "person"],
        "dimensions": [d.value for d in DIMENSIONS],
        "specs": ["NC"],
        "evaluate_specs": "all",
        "pca_dims": 20,
        "pca_scope": "per_fold",
        "n_splits": 1000,
        "train_frac": 0.8,
        "k_folds": 5,
        "ridge": 0.0,
        "standardize": True,
        "n_resamples": 1000,
    },
    "augment": {
        "context_spec": "C",
        "rating_categories": None,
        "targets": None,
        "detectors": None,
        "scene_sets": {"all": None},
        "k_folds": 5,
        "regularization": 1.0,
        "loss": "logistic",
        "balance": True,
        "transfer_categories": [],
        "anchors": ["car", "person"],
        "n_permutations": 10000,
    },
    "synth": {},
}

# keys that change how a run executes but never what it computes
RUNTIME_KEYS = ("jobs", "out")


def _merge(base: dict, over: dict, where: str = "") -> dict:
    out = copy.deepcopy(base)
    for key, value in over.items():
        if key not in base:
            raise ConfigError(f"unknown config key {where + key!r}")
        if isinstance(base[key], dict) and key not in ("synth", "features", "scene_sets") and isinstance(value, dict):
            out[key] = _merge(base[key], value, f"{where}{key}.")
        else:
            out[key] = value
    return out


@dataclass
class RunConfig:
    raw: dict
    base_dir: Path = field(default_factory=Path.cwd)

    @classmethod
    def load(cls, path=None, overrides: dict | None = None) -> "RunConfig":
        user = {}
        base_dir = Path.cwd()
        if path is not None:
            path = Path(path)
            if not path.exists():
                raise ConfigError(f"config file not found: {path}")
            try:
                user = yaml.safe_load(path.read_text()) or {}
            except yaml.YAMLError as exc:
                raise ConfigError(f"{path}: invalid YAML: {exc}") from None
            if not isinstance(user, dict):
                raise ConfigError(f"{path}: top level must be a mapping")
            base_dir = path.resolve().parent
        raw = _merge(DEFAULTS, user)
        for key, value in (overrides or {}).items():
            if value is not None:
                raw[key] = value
        cfg = cls(raw, base_dir)
        cfg.check_basics()
        return cfg

    # -- accessors -------------------------------------------------------

    def check_basics(self) -> None:
        seed = self.raw["seed"]
        if seed is None:
            raise ConfigError("a seed is required (config 'seed' or --seed)")
        if not isinstance(seed, int) or seed < 0 or seed >= 2 ** 64:
            raise ConfigError(f"seed must be an unsigned 64-bit integer, got {seed!r}")
        if not isinstance(self.raw["jobs"], int) or self.raw["jobs"] < 1:
            raise ConfigError("jobs must be a positive integer")
        e = self.raw["expectations"]
        if e["pca_scope"] not in ("per_fold", "global"):
            raise ConfigError(f"pca_scope must be per_fold or global, got {e['pca_scope']!r}")
        try:
            [RatingDimension.parse(d) for d in e["dimensions"]]
            [parse_channels(s) for s in e["specs"]]
            self.evaluate_specs()
            parse_channels(self.raw["augment"]["context_spec"])
        except ValueError as exc:
            raise ConfigError(str(exc)) from None

    @property
    def seed(self) -> int:
        return int(self.raw["seed"])

    @property
    def jobs(self) -> int:
        return int(self.raw["jobs"])

    @property
    def out_dir(self) -> Path:
        return self.path(self.raw["out"])

    def path(self, value) -> Path | None:
        if value is None:
            return None
        p = Path(value)
        return p if p.is_absolute() else self.base_dir / p

    def resolved(self) -> dict:
        """Config embedded in reports (runtime-only keys dropped)."""
        d = copy.deepcopy(self.raw)
        for k in RUNTIME_KEYS:
            d.pop(k, None)
        return d

    @property
    def schema(self) -> SchemaConfig:
        data = self.raw["data"]
        return SchemaConfig(float(data["slider"][0]), float(data["slider"][1]), Frame(*map(float, data["frame"])))

    @property
    def categories(self) -> list[str]:
        return list(self.raw["expectations"]["categories"])

    @property
    def dimensions(self) -> list[RatingDimension]:
        return [RatingDimension.parse(d) for d in self.raw["expectations"]["dimensions"]]

    def fit_specs(self) -> list[tuple]:
        return [parse_channels(s) for s in self.raw["expectations"]["specs"]]

    def evaluate_specs(self) -> list[tuple]:
        spec = self.raw["expectations"]["evaluate_specs"]
        if spec in (None, "all"):
            return channel_subsets()
        return [parse_channels(s) for s in spec]

    def eval_config(self) -> EvalConfig:
        e = self.raw["expectations"]
        return EvalConfig(
            pca_dims=int(e["pca_dims"]),
            pca_scope=e["pca_scope"],
            n_splits=int(e["n_splits"]),
            train_frac=float(e["train_frac"]),
            k_folds=int(e["k_folds"]),
            ridge=float(e["ridge"]),
            standardize=bool(e["standardize"]),
            n_resamples=int(e["n_resamples"]),
            seed=self.seed,
            jobs=self.jobs,
            specs=tuple(channel_label(s) for s in self.evaluate_specs()),
        )

    def synth_config(self) -> SynthConfig:
        d = dict(self.raw["synth"])
        d.setdefault("seed", self.seed)
        try:
            return SynthConfig.from_dict(d)
        except TypeError as exc:
            raise ConfigError(f"synth: {exc}") from None

    # -- path validation ---------------------------------------------------

    def rating_paths(self) -> dict:
        data = self.raw["data"]
        feats = {k: self.path(v) for k, v in (data["features"] or {}).items()}
        if not feats:
            raise ConfigError("data.features must name at least one channel file")
        if data["ratings"] is None:
            raise ConfigError("data.ratings is required")
        paths = {"features": feats, "ratings": self.path(data["ratings"]), "vocabulary": self.path(data["vocabulary"])}
        self._require([*feats.values(), paths["ratings"], paths["vocabulary"]])
        return paths

    def detection_paths(self) -> dict:
        det = self.raw["detection"]
        feats = {k: self.path(v) for k, v in (det["features"] or {}).items()}
        if not feats:
            raise ConfigError("detection.features must name at least one channel file")
        for key in ("scores", "ground_truth"):
            if det[key] is None:
                raise ConfigError(f"detection.{key} is required")
        paths = {
            "features": feats,
            "scores": self.path(det["scores"]),
            "ground_truth": self.path(det["ground_truth"]),
            "scenes": self.path(det["scenes"]),
            "presence": self.path(det["presence"]),
        }
        self._require([*feats.values(), paths["scores"], paths["ground_truth"], paths["scenes"], paths["presence"]])
        return paths

    @staticmethod
    def _require(paths) -> None:
        for p in paths:
            if p is not None and not Path(p).exists():
                raise ConfigError(f"input file not found: {p}")


def write_config(path, raw: dict) -> None:
    Path(path).write_text(yaml.safe_dump(raw, sort_keys=True))
