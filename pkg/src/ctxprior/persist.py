"""Versioned JSON persistence for fitted models.

Arrays are stored with explicit shapes; floats go through ``repr`` so a
save/load round trip reproduces every bit.
"""

from __future__ import annotations

import json

import numpy as np

from .exceptions import CorruptPayload, VersionMismatch
from .expectations import ExpectationModel, ModelSpec
from .fusion import FusionClassifier
from .numerics import PcaBasis, RegressionModel

MAGIC = "ctxprior.model"
SCHEMA_VERSION = 1


def _arr(a) -> dict:
    a = np.asarray(a, dtype=float)
    return {"shape": list(a.shape), "data": [float(v) for v in a.ravel()]}


def _unarr(d) -> np.ndarray:
    try:
        shape = tuple(int(s) for s in d["shape"])
        data = np.array(d["data"], dtype=float)
        return data.reshape(shape)
    except (KeyError, TypeError, ValueError) as exc:
        raise CorruptPayload(f"bad array record: {exc}") from None


def _dump_expectation(m: ExpectationModel) -> dict:
    spec = getattr(m, "spec_", None)
    return {
        "kind": "expectation",
        "params": {
            "channels": "".join(c.value for c in m.channels_),
            "channel_dims": None if m.channel_dims is None else [int(d) for d in m.channel_dims],
            "pca_dims": int(m.pca_dims),
            "ridge": float(m.ridge),
            "standardize": bool(m.standardize),
        },
        "bases": [
            {"mean": _arr(b.mean), "components": _arr(b.components), "explained_variance": _arr(b.explained_variance)}
            for b in m.bases_
        ],
        "z_mean": _arr(m.z_mean_),
        "z_scale": _arr(m.z_scale_),
        "weights": _arr(m.regression_.weights),
        "intercept": float(m.regression_.intercept),
        "spec": None if spec is None else spec.to_dict(),
        "training_scene_ids": list(getattr(m, "training_scene_ids_", [])),
    }


def _load_expectation(d: dict) -> ExpectationModel:
    p = d["params"]
    m = ExpectationModel(
        channels=p["channels"],
        channel_dims=None if p["channel_dims"] is None else tuple(p["channel_dims"]),
        pca_dims=p["pca_dims"],
        ridge=p["ridge"],
        standardize=p["standardize"],
    )
    m.bases_ = [
        PcaBasis(_unarr(b["mean"]), _unarr(b["components"]), _unarr(b["explained_variance"])) for b in d["bases"]
    ]
    m.channels_ = tuple(ModelSpec(p["channels"]).channels)
    m.k_ = tuple(b.n_components for b in m.bases_)
    m.z_mean_ = _unarr(d["z_mean"])
    m.z_scale_ = _unarr(d["z_scale"])
    m.regression_ = RegressionModel(_unarr(d["weights"]), float(d["intercept"]))
    m.n_features_in_ = sum(b.n_features for b in m.bases_)
    if d.get("spec"):
        m.spec_ = ModelSpec.from_dict(d["spec"])
    m.training_scene_ids_ = list(d.get("training_scene_ids", []))
    return m


def _dump_fusion(c: FusionClassifier) -> dict:
    return {
        "kind": "fusion",
        "params": {k: v for k, v in c.get_params().items()},
        "mean": _arr(c.mean_),
        "scale": _arr(c.scale_),
        "coef": _arr(c.coef_),
        "intercept": float(c.intercept_),
        "threshold": float(c.threshold_),
        "columns": list(getattr(c, "columns_", [])),
    }


def _load_fusion(d: dict) -> FusionClassifier:
    c = FusionClassifier(**d["params"])
    c.mean_ = _unarr(d["mean"])
    c.scale_ = _unarr(d["scale"])
    c.coef_ = _unarr(d["coef"])
    c.intercept_ = float(d["intercept"])
    c.threshold_ = float(d["threshold"])
    c.classes_ = np.array([False, True])
    c.n_features_in_ = c.coef_.shape[0]
    if d.get("columns"):
        c.columns_ = list(d["columns"])
    return c


def save_model(model) -> bytes:
    if isinstance(model, ExpectationModel):
        body = _dump_expectation(model)
    elif isinstance(model, FusionClassifier):
        body = _dump_fusion(model)
    else:
        raise TypeError(f"cannot persist {type(model).__name__}")
    payload = {"magic": MAGIC, "schema_version": SCHEMA_VERSION, **body}
    return json.dumps(payload, sort_keys=True, indent=1).encode("utf-8")


def load_model(data: bytes):
    try:
        payload = json.loads(data.decode("utf-8") if isinstance(data, (bytes, bytearray)) else data)
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise CorruptPayload(f"payload is not valid JSON: {exc}") from None
    if not isinstance(payload, dict) or payload.get("magic") != MAGIC:
        raise CorruptPayload("missing or wrong magic marker")
    version = payload.get("schema_version")
    if not isinstance(version, int):
        raise CorruptPayload("schema_version missing")
    if version != SCHEMA_VERSION:
        raise VersionMismatch(f"payload schema {version}, this build reads {SCHEMA_VERSION}")
    try:
        if payload["kind"] == "expectation":
            return _load_expectation(payload)
        if payload["kind"] == "fusion":
            return _load_fusion(payload)
    except KeyError as exc:
        raise CorruptPayload(f"missing field {exc}") from None
    raise CorruptPayload(f"unknown model kind {payload.get('kind')!r}")
