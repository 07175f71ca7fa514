import json
from pathlib import Path

import pytest
import yaml

from ctxprior.cli import main

SMALL = {
    "seed": 5,
    "out": "data",
    "expectations": {"n_splits": 6, "n_resamples": 20, "dimensions": ["likelihood", "ypos"], "k_folds": 3},
    "augment": {"n_permutations": 50, "k_folds": 3},
    "synth": {
        "n_scenes": 120,
        "n_detection_scenes": 300,
        "extra_categories": {
            "bike": {"anchor": "car", "base_rate": 0.2, "given_anchor": 0.5},
            "cup": {"anchor": None, "base_rate": 0.3, "given_anchor": 0.3},
            "dog": {"anchor": "person", "base_rate": 0.2, "given_anchor": 0.4},
        },
    },
}


def snapshot(root: Path) -> dict:
    return {str(p.relative_to(root)): p.read_bytes() for p in sorted(root.rglob("*")) if p.is_file()}


def run_pipeline(tmp: Path, jobs: int = 1) -> Path:
    tmp.mkdir(parents=True, exist_ok=True)
    (tmp / "cfg.yaml").write_text(yaml.safe_dump(SMALL))
    assert main(["synth", "--config", str(tmp / "cfg.yaml")]) == 0
    run = str(tmp / "data" / "config.yaml")
    for cmd in ("fit", "evaluate", "augment", "report"):
        assert main([cmd, "--config", run, "--jobs", str(jobs)]) == 0, cmd
    return tmp / "data"


@pytest.fixture(scope="module")
def pipeline(tmp_path_factory):
    return run_pipeline(tmp_path_factory.mktemp("run1"))


def test_pipeline_outputs(pipeline):
    res = pipeline / "results"
    fit = json.loads((res / "fit_summary.json").read_text())
    assert len(fit["models"]) == 4  # 2 categories x 2 dimensions x spec NC
    assert all(m["r_cv"] > 0.3 for m in fit["models"])
    table = json.loads((res / "evaluate" / "car_likelihood.json").read_text())
    assert table["seed"] == 5 and table["config"]["expectations"]["n_splits"] == 6
    assert [r["model"] for r in table["table"]["rows"]] == ["Ceil", "T", "N", "C", "TN", "TC", "NC", "TNC"]
    aug = json.loads((res / "augment" / "summary.json").read_text())
    assert {r["scene_set"] for r in aug["rows"]} == {"all", "matched"}
    assert set(aug["transfer"]["association"]) == {"bike", "cup", "dog"}
    assert (res / "report.md").read_text().startswith("# ctxprior report")


def test_rerun_is_byte_identical(pipeline, tmp_path):
    again = run_pipeline(tmp_path / "run2", jobs=2)
    assert snapshot(again) == snapshot(pipeline)


def test_missing_ratings_file_names_path(tmp_path, capsys):
    cfg = {"seed": 1, "data": {"features": {"C": "c.csv"}, "ratings": "nope.csv"}}
    (tmp_path / "c.csv").write_text("scene_id,f0\ns,1\n")
    (tmp_path / "cfg.yaml").write_text(yaml.safe_dump(cfg))
    code = main(["fit", "--config", str(tmp_path / "cfg.yaml")])
    assert code == 2
    assert "nope.csv" in capsys.readouterr().err


def test_missing_seed_is_config_error(tmp_path, capsys):
    (tmp_path / "cfg.yaml").write_text("out: x\n")
    assert main(["synth", "--config", str(tmp_path / "cfg.yaml")]) == 2
    assert "seed" in capsys.readouterr().err


def test_unknown_key_is_config_error(tmp_path):
    (tmp_path / "cfg.yaml").write_text("seed: 1\nbogus: 3\n")
    assert main(["synth", "--config", str(tmp_path / "cfg.yaml")]) == 2


def test_bad_data_exits_three(tmp_path, capsys):
    (tmp_path / "c.csv").write_text("scene_id,f0\ns1,inf\n")
    (tmp_path / "r.csv").write_text("subject_id,scene_id,category,likelihood_raw,box_x,box_y,box_w,box_h\n")
    (tmp_path / "cfg.yaml").write_text(yaml.safe_dump({"seed": 1, "data": {"features": {"C": "c.csv"}, "ratings": "r.csv"}}))
    assert main(["fit", "--config", str(tmp_path / "cfg.yaml")]) == 3
    assert "s1" in capsys.readouterr().err


def test_seed_override_changes_output(tmp_path):
    (tmp_path / "cfg.yaml").write_text(yaml.safe_dump({"seed": 1, "synth": {"n_scenes": 20, "n_detection_scenes": 0}}))
    assert main(["synth", "--config", str(tmp_path / "cfg.yaml"), "--out", str(tmp_path / "a")]) == 0
    assert main(["synth", "--config", str(tmp_path / "cfg.yaml"), "--out", str(tmp_path / "b"), "--seed", "2"]) == 0
    assert (tmp_path / "a/rating/ratings.csv").read_bytes() != (tmp_path / "b/rating/ratings.csv").read_bytes()
    assert yaml.safe_load((tmp_path / "b/config.yaml").read_text())["seed"] == 2
