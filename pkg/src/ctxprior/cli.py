"""Command-line entry point: ``ctxprior {synth,fit,evaluate,augment,report}``.

Exit codes: 0 success, 2 configuration error, 3 data validation error,
4 numerical error.
"""

from __future__ import annotations

import argparse
import json
import math
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .config import RunConfig, write_config
from .dataset import (
    Channel,
    RatingDimension,
    aggregate_ratings,
    channel_label,
    load_dataset,
    rating_matrix,
    read_presence_json,
)
from .exceptions import CtxPriorError, InvalidShape
from .expectations import (
    ModelSpec,
    evaluate_all_specs,
    fit_expectation_model,
    kfold_eval,
    nontarget_weight_report,
)
from .fusion import (
    FusionFeatureSet,
    association_index,
    balance_classes,
    breakdown_from_decisions,
    build_fusion_features,
    roc,
    standard_feature_sets,
    train_fusion,
    transfer_analysis,
)
from .numerics import odd_even_reliability, pearson
from .persist import save_model
from .synth import write_synth_dataset


# ----------------------------------------------------------------------------
# Output helpers
# ----------------------------------------------------------------------------


def _clean(obj):
    """JSON-safe copy: NaN/inf become None, numpy scalars become Python."""
    if isinstance(obj, dict):
        return {str(k): _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _clean(obj.tolist())
    if isinstance(obj, (np.bool_, bool)):
        return bool(obj)
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        f = float(obj)
        return f if math.isfinite(f) else None
    return obj


def _write_json(path: Path, payload) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(_clean(payload), indent=1, sort_keys=True) + "\n")


def _header(cfg: RunConfig, command: str) -> dict:
    return {"command": command, "version": __version__, "seed": cfg.seed, "config": cfg.resolved()}


def _load_ratings(cfg: RunConfig):
    paths = cfg.rating_paths()
    ds = load_dataset(paths["features"], paths["ratings"], schema_config=cfg.schema)
    aggs = aggregate_ratings(ds.ratings, schema=cfg.schema)
    vocab = None
    if paths["vocabulary"] is not None:
        vocab = json.loads(Path(paths["vocabulary"]).read_text())
    return ds, aggs, vocab


# ----------------------------------------------------------------------------
# Commands
# ----------------------------------------------------------------------------


def cmd_synth(cfg: RunConfig) -> dict:
    synth = cfg.synth_config()
    out = cfg.out_dir
    paths = write_synth_dataset(synth, out)
    rel = {k: str(Path(v).relative_to(out)) for k, v in paths.items()}
    run = cfg.resolved()
    run["seed"] = cfg.seed
    run["synth"] = synth.to_dict()
    run["out"] = "results"
    run["data"].update(
        features={"T": rel["rating_target"], "N": rel["rating_nontarget"], "C": rel["rating_coarse"]},
        ratings=rel["ratings"],
        vocabulary="rating/vocabulary.json",
        frame=list(synth.frame),
        slider=list(synth.slider),
    )
    run["expectations"]["categories"] = list(synth.categories)
    if "scores" in rel:
        run["detection"].update(
            features={"C": rel["detection_coarse"]},
            scores=rel["scores"],
            ground_truth=rel["ground_truth"],
            scenes=rel["detection_scenes"],
            presence=rel["detection_presence"],
        )
        aug = run["augment"]
        aug["scene_sets"] = {"all": None, "matched": json.loads((out / "planted_truth.json").read_text())["matched_scene_categories"]}
        if synth.extra_categories and not aug.get("transfer_categories"):
            aug["transfer_categories"] = sorted(synth.extra_categories)
    write_config(out / "config.yaml", run)
    summary = {**_header(cfg, "synth"), "files": dict(sorted(rel.items())), "run_config": "config.yaml"}
    _write_json(out / "synth_summary.json", summary)
    return summary


def cmd_fit(cfg: RunConfig) -> dict:
    ds, aggs, _ = _load_ratings(cfg)
    e = cfg.raw["expectations"]
    out = cfg.out_dir / "models"
    out.mkdir(parents=True, exist_ok=True)
    rows = []
    for cat in cfg.categories:
        for dim in cfg.dimensions:
            for chans in cfg.fit_specs():
                spec = ModelSpec(chans, cat, dim, int(e["pca_dims"]), float(e["ridge"]), bool(e["standardize"]))
                model = fit_expectation_model(spec, ds.scenes, aggs)
                name = f"{cat}_{dim.value}_{spec.label}.json"
                (out / name).write_bytes(save_model(model))
                lookup = {s.scene_id: s for s in ds.scenes}
                train_scenes = [lookup[sid] for sid in model.training_scene_ids_]
                y = np.array([a.value(dim) for a in _aggs_for(aggs, cat, model.training_scene_ids_)])
                r_in = pearson(model.predict_scenes(train_scenes), y)
                cv = kfold_eval(spec, ds.scenes, aggs, k=int(e["k_folds"]), seed=cfg.seed, pca_scope=e["pca_scope"])
                rows.append({
                    "category": cat,
                    "dimension": dim.value,
                    "spec": spec.label,
                    "file": f"models/{name}",
                    "n_scenes": len(y),
                    "input_dim": model.input_dim,
                    "r_in_sample": r_in,
                    "r_cv": cv.r_cv,
                    "k_folds": cv.fold_count,
                })
    summary = {**_header(cfg, "fit"), "models": rows}
    _write_json(cfg.out_dir / "fit_summary.json", summary)
    return summary


def _aggs_for(aggs, category, scene_ids):
    by = {a.scene_id: a for a in aggs if a.category == category}
    return [by[s] for s in scene_ids]


def cmd_evaluate(cfg: RunConfig) -> dict:
    ds, aggs, vocab = _load_ratings(cfg)
    ec = cfg.eval_config()
    out = cfg.out_dir / "evaluate"
    tables = []
    for cat in cfg.categories:
        for dim in cfg.dimensions:
            table = evaluate_all_specs(ds.scenes, aggs, cat, dim, ec, ratings=ds.ratings, schema=cfg.schema)
            stem = f"{cat}_{dim.value}"
            body = table.to_json()
            body["odd_even"] = _odd_even(ds, cat, dim, cfg)
            _write_json(out / f"{stem}.json", {**_header(cfg, "evaluate"), "table": body})
            (out / f"{stem}.csv").write_text(table.to_csv())
            (out / f"{stem}_splits.csv").write_text(table.split_matrix_csv())
            tables.append(body)
    summary = {**_header(cfg, "evaluate"), "tables": tables, "nontarget_weights": _nontarget(cfg, ds, aggs, vocab)}
    _write_json(out / "summary.json", summary)
    return summary


def _odd_even(ds, cat, dim, cfg):
    scene_ids = sorted({r.scene_id for r in ds.ratings if r.category == cat})
    M, subjects = rating_matrix(ds.ratings, cat, dim, scene_ids, cfg.schema)
    if len(subjects) < 2:
        return None
    est = odd_even_reliability(M, subjects)
    return {"split_half_r": est.split_half_r, "corrected_rc": est.corrected_rc}


def _nontarget(cfg: RunConfig, ds, aggs, vocab):
    """Compare per-label nontarget weights of the likelihood models."""
    cats = cfg.categories
    if len(cats) != 2 or not all(Channel.NONTARGET in s.channel_features for s in ds.scenes):
        return None
    chans = next((c for c in cfg.fit_specs() if Channel.NONTARGET in c), (Channel.NONTARGET, Channel.COARSE))
    if not all(ch in s.channel_features for s in ds.scenes for ch in chans):
        return None
    e = cfg.raw["expectations"]
    models = {
        cat: fit_expectation_model(
            ModelSpec(chans, cat, RatingDimension.LIKELIHOOD, int(e["pca_dims"]), float(e["ridge"]), bool(e["standardize"])),
            ds.scenes, aggs,
        )
        for cat in cats
    }
    width = models[cats[0]].feature_weights(Channel.NONTARGET).shape[0]
    labels = list(vocab) if vocab and len(vocab) == width else [f"n{i}" for i in range(width)]
    return {"spec": channel_label(chans), **nontarget_weight_report(models, labels)}


# -- augment --------------------------------------------------------------


def _context_models(cfg: RunConfig, ds, aggs, categories):
    e = cfg.raw["expectations"]
    chans = cfg.raw["augment"]["context_spec"]
    models = {}
    for cat in categories:
        for dim in RatingDimension:
            spec = ModelSpec(chans, cat, dim, int(e["pca_dims"]), float(e["ridge"]), bool(e["standardize"]))
            models[(cat, dim)] = fit_expectation_model(spec, ds.scenes, aggs)
    return models


def _run_fusion(det_scores, models, scenes, fset, det, target, a, seed):
    data = build_fusion_features(det_scores, models, scenes, fset, detector_id=det, category=target)
    keep = balance_classes(data.labels, seed) if a["balance"] else np.arange(len(data.labels))
    X, y = data.X[keep], data.labels[keep]
    res = train_fusion(X, y, int(a["k_folds"]), seed, float(a["regularization"]), a["loss"])
    res.classifier.columns_ = list(fset.columns)
    return res, y


def cmd_augment(cfg: RunConfig) -> dict:
    a = cfg.raw["augment"]
    det_paths = cfg.detection_paths()
    ds, aggs, _ = _load_ratings(cfg)
    rating_cats = list(a["rating_categories"] or cfg.categories)
    det = load_dataset(
        det_paths["features"],
        scores_path=det_paths["scores"],
        ground_truth_path=det_paths["ground_truth"],
        scene_meta_path=det_paths["scenes"],
    )
    scores = det.scores
    detectors = list(a["detectors"] or sorted({s.detector_id for s in scores}))
    targets = list(a["targets"] or [c for c in rating_cats if any(s.category == c for s in scores)])
    models = _context_models(cfg, ds, aggs, rating_cats)
    out = cfg.out_dir / "augment"
    (out / "models").mkdir(parents=True, exist_ok=True)
    (out / "roc").mkdir(parents=True, exist_ok=True)

    rows, breakdowns = [], []
    for det_id in detectors:
        det_scores = [s for s in scores if s.detector_id == det_id]
        for target in targets:
            fsets = standard_feature_sets(target, rating_cats)
            for set_name, cats in sorted(a["scene_sets"].items()):
                scenes = [s for s in det.scenes if cats is None or s.scene_category in cats]
                results = {}
                for fset in fsets:
                    res, y = _run_fusion(det_scores, models, scenes, fset, det_id, target, a, cfg.seed)
                    results[fset.name] = (res, y)
                    stem = f"{det_id}_{target}_{set_name}_{fset.name}"
                    (out / "models" / f"{stem}.json").write_bytes(save_model(res.classifier))
                    if fset.name in ("score", "score+likelihood", "score+all_ratings"):
                        (out / "roc" / f"{stem}.csv").write_text(roc(res.oof_scores, y).to_csv())
                base = results["score"][0].accuracy
                row = {
                    "detector": det_id,
                    "target": target,
                    "scene_set": set_name,
                    "n_scenes": len(results["score"][1]),
                    "accuracy": {k: r.accuracy for k, (r, _) in results.items()},
                    "fold_accuracies": {k: r.fold_accuracies for k, (r, _) in results.items()},
                    "auc": {k: roc(r.oof_scores, yy).auc for k, (r, yy) in results.items()},
                    "delta": results["score+all_ratings"][0].accuracy - base,
                }
                rows.append(row)
                b_res, b_y = results["score"]
                f_res, _ = results["score+all_ratings"]
                breakdowns.append({
                    "detector": det_id,
                    "target": target,
                    "scene_set": set_name,
                    "baseline": breakdown_from_decisions(b_res.oof_decisions, b_y).to_dict(),
                    "augmented": breakdown_from_decisions(f_res.oof_decisions, b_y).to_dict(),
                    "boundary": {
                        "columns": ["score", f"{target}:likelihood"],
                        "weights": results["score+likelihood"][0].classifier.raw_boundary()[0],
                        "intercept": results["score+likelihood"][0].classifier.raw_boundary()[1],
                    },
                })
    summary = {
        **_header(cfg, "augment"),
        "rows": rows,
        "breakdowns": breakdowns,
        "transfer": _transfer(cfg, det, scores, models, rating_cats, detectors, det_paths["presence"]),
    }
    _write_json(out / "summary.json", summary)
    (out / "table.csv").write_text(_augment_csv(rows))
    return summary


def _augment_csv(rows) -> str:
    names = list(rows[0]["accuracy"]) if rows else []
    lines = [",".join(["detector", "target", "scene_set", "n_scenes"] + names + ["delta"])]
    for r in rows:
        vals = [repr(float(r["accuracy"][n])) for n in names]
        lines.append(",".join([r["detector"], r["target"], r["scene_set"], str(r["n_scenes"])] + vals + [repr(float(r["delta"]))]))
    return "\n".join(lines) + "\n"


def _transfer(cfg, det, scores, models, rating_cats, detectors, presence_path):
    a = cfg.raw["augment"]
    cats = list(a["transfer_categories"] or [])
    if not cats or presence_path is None:
        return None
    presence = read_presence_json(presence_path)
    base_set = FusionFeatureSet("score", ("score",))
    full_set = standard_feature_sets(rating_cats[0], rating_cats)[-1]
    assoc = {c: association_index(presence, c, list(a["anchors"])).averaged_value for c in cats}
    out = {"association": assoc, "per_detector": {}}
    for det_id in detectors:
        det_scores = [s for s in scores if s.detector_id == det_id]
        base, gain = {}, {}
        for c in cats:
            b, _ = _run_fusion(det_scores, models, det.scenes, base_set, det_id, c, a, cfg.seed)
            f, _ = _run_fusion(det_scores, models, det.scenes, full_set, det_id, c, a, cfg.seed)
            base[c] = b.accuracy
            gain[c] = f.accuracy - b.accuracy
        entry = {"baseline": base, "benefit": gain}
        try:
            entry["analysis"] = transfer_analysis(gain, assoc, base, int(a["n_permutations"]), cfg.seed)
        except InvalidShape as exc:
            entry["analysis"] = {"undefined": str(exc)}
        out["per_detector"][det_id] = entry
    return out


# -- report ---------------------------------------------------------------


def _fmt(v, digits=3):
    return "n/a" if v is None else f"{v:.{digits}f}"


def cmd_report(cfg: RunConfig) -> dict:
    out = cfg.out_dir
    lines = [f"# ctxprior report (seed {cfg.seed})", ""]
    payload = _header(cfg, "report")
    ev = out / "evaluate" / "summary.json"
    if ev.exists():
        summary = json.loads(ev.read_text())
        payload["evaluate"] = summary["tables"]
        lines += ["## Expectation models", ""]
        for t in summary["tables"]:
            lines.append(f"### {t['category']} / {t['dimension']} (n={t['n_scenes']})")
            lines.append("")
            lines.append("| model | mean r | sd | p_frac | flag |")
            lines.append("|---|---|---|---|---|")
            for r in t["rows"]:
                label = r["model"] + (" (best)" if r.get("best") else "")
                lines.append(f"| {label} | {_fmt(r['mean'])} | {_fmt(r['sd'])} | {_fmt(r['p_frac'])} | {r['flag']} |")
            lines.append("")
    au = out / "augment" / "summary.json"
    if au.exists():
        summary = json.loads(au.read_text())
        payload["augment"] = summary["rows"]
        lines += ["## Detector augmentation (accuracy, %)", ""]
        for r in summary["rows"]:
            acc = r["accuracy"]
            cells = ", ".join(f"{k} {100 * v:.1f}" for k, v in acc.items())
            lines.append(f"- {r['detector']} / {r['target']} / {r['scene_set']}: {cells}; delta {100 * r['delta']:+.1f}")
        lines.append("")
    if len(lines) == 2:
        lines.append("No evaluate or augment outputs found.")
    (out / "report.md").parent.mkdir(parents=True, exist_ok=True)
    (out / "report.md").write_text("\n".join(lines) + "\n")
    _write_json(out / "report.json", payload)
    return payload


COMMANDS = {
    "synth": cmd_synth,
    "fit": cmd_fit,
    "evaluate": cmd_evaluate,
    "augment": cmd_augment,
    "report": cmd_report,
}


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="ctxprior", description="Context-derived expectation models for object detection.")
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = p.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        sp = sub.add_parser(name)
        sp.add_argument("--config", help="YAML run configuration")
        sp.add_argument("--seed", type=int, help="override the configured seed")
        sp.add_argument("--out", help="output directory")
        sp.add_argument("--jobs", type=int, help="worker processes for split evaluation")
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        overrides = {"seed": args.seed, "jobs": args.jobs}
        cfg = RunConfig.load(args.config, overrides)
        if args.out is not None:
            # --out is taken relative to the working directory, not the config file
            cfg.raw["out"] = str(Path(args.out).resolve())
        COMMANDS[args.command](cfg)
    except CtxPriorError as exc:
        print(f"ctxprior {args.command}: error: {exc}", file=sys.stderr)
        return exc.exit_code
    return 0


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
