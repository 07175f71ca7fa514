import numpy as np
import pytest
from scipy import stats

from ctxprior.dataset import Channel, RatingDimension, aggregate_ratings, load_dataset, rating_matrix
from ctxprior.exceptions import InvalidConfig
from ctxprior.numerics import pearson, split_half_ceiling
from ctxprior.synth import (
    NONTARGET_COUNTS,
    DetectorModel,
    SceneWorld,
    SynthConfig,
    attenuated_correlation,
    bayes_accuracy,
    generate_detection_dataset,
    generate_expectation_dataset,
    split_half_r,
    subject_noise_for_reliability,
    write_synth_dataset,
)

LIK = RatingDimension.LIKELIHOOD


def test_same_seed_same_data():
    cfg = SynthConfig(n_scenes=50, n_detection_scenes=0, seed=4)
    a, b = generate_expectation_dataset(cfg), generate_expectation_dataset(cfg)
    assert a.ratings == b.ratings
    c = generate_expectation_dataset(SynthConfig(n_scenes=50, n_detection_scenes=0, seed=5))
    assert a.ratings != c.ratings


@pytest.mark.parametrize("bad", [{"n_scenes": 0}, {"reliability": 1.5}, {"generating_channels": "XYZ"},
                                 {"n_detection_scenes": 3}, {"noise_sd": -1}])
def test_invalid_configs(bad):
    with pytest.raises(InvalidConfig):
        SynthConfig(**bad).validate()


def test_from_dict_rejects_unknown_keys():
    with pytest.raises(InvalidConfig):
        SynthConfig.from_dict({"n_scene": 10})


def test_config_dict_round_trip():
    cfg = SynthConfig(detectors={"d": DetectorModel(2.0, 0.5)}, seed=9)
    assert SynthConfig.from_dict(cfg.to_dict()) == cfg


def test_noise_calibration_hits_target():
    s = subject_noise_for_reliability(0.1, 11, 0.9)
    r = split_half_r(0.01, s * s, 11)
    assert 2 * r / (1 + r) == pytest.approx(0.9, abs=1e-12)
    assert subject_noise_for_reliability(0.1, 11, 1.0) == 0.0


def test_measured_reliability_matches_setting(small_expectations):
    ds = small_expectations
    ids = [s.scene_id for s in ds.scenes]
    M, subjects = rating_matrix(ds.ratings, "car", LIK, ids)
    est = split_half_ceiling(M, n_resamples=200, seed=0, subject_ids=subjects)
    assert abs(est.mean - 0.9) < 0.04


def test_noise_free_subjects_give_unit_ceiling():
    ds = generate_expectation_dataset(SynthConfig(n_scenes=40, reliability=1.0, n_detection_scenes=0))
    M, subjects = rating_matrix(ds.ratings, "car", LIK, [s.scene_id for s in ds.scenes])
    assert split_half_ceiling(M, n_resamples=20, subject_ids=subjects).mean == pytest.approx(1.0, abs=1e-12)


def test_aggregate_tracks_analytic_attenuation():
    cfg = SynthConfig(n_scenes=2000, n_detection_scenes=0, seed=3)
    ds = generate_expectation_dataset(cfg)
    p = ds.planted[("car", LIK)]
    blocks = {ch: np.vstack([s.channel_features[ch] for s in ds.scenes]) for ch in Channel}
    obs = [a.likelihood for a in ds.aggregates if a.category == "car"]
    r = pearson(p.signal(blocks), obs)
    assert abs(r - p.attenuated_r) < 0.03
    assert p.attenuated_r == pytest.approx(attenuated_correlation(0.6, 0.1, p.subject_sd, 11))


def test_planted_signal_is_standardized(small_expectations):
    ds = small_expectations
    blocks = {ch: np.vstack([s.channel_features[ch] for s in ds.scenes]) for ch in Channel}
    s = ds.planted[("person", LIK)].signal(blocks)
    assert s.mean() == pytest.approx(0.0, abs=1e-9)
    assert s.std(ddof=1) == pytest.approx(1.0, abs=1e-9)


def test_nontarget_frequencies_follow_label_counts():
    cfg = SynthConfig(n_scenes=5000, n_detection_scenes=0, seed=1)
    ds = generate_expectation_dataset(cfg)
    freq = ds.presence.matrix.mean(axis=0)
    want = np.array(list(NONTARGET_COUNTS.values())) / 650.0
    assert np.max(np.abs(freq - want)) < 0.03


def test_ratings_distribution_is_stable_across_seeds():
    vals = []
    for seed in (21, 22):
        ds = generate_expectation_dataset(SynthConfig(n_scenes=300, n_detection_scenes=0, seed=seed))
        vals.append([a.likelihood for a in ds.aggregates])
    assert stats.ks_2samp(*vals).pvalue > 0.001


def test_bayes_accuracy_values():
    assert bayes_accuracy(0.0) == 0.5
    assert bayes_accuracy(1 / 0.524) == pytest.approx(stats.norm.cdf(1 / 0.524 / 2))
    assert bayes_accuracy(3.0, 4.0) == pytest.approx(stats.norm.cdf(2.5))


def test_detector_baseline_matches_bayes():
    cfg = SynthConfig(n_scenes=200, n_detection_scenes=6000, seed=6)
    det = generate_detection_dataset(cfg)
    truth = np.array([s.ground_truth["car"] for s in det.scenes])
    conf = np.array([s.confidence for s in det.scores if s.detector_id == "det_a" and s.category == "car"])
    acc = np.mean((conf > 0.5) == truth)
    assert abs(acc - det.bayes[("det_a", "car")]["baseline"]) < 0.015
    assert truth.sum() == 3000


def test_extra_category_follows_anchor():
    cfg = SynthConfig.from_dict({
        "n_scenes": 100, "n_detection_scenes": 4000, "seed": 2,
        "extra_categories": {"bike": {"anchor": "car", "base_rate": 0.1, "given_anchor": 0.6}},
    })
    det = generate_detection_dataset(cfg)
    car, bike = det.presence.column("car"), det.presence.column("bike")
    assert abs(bike[car].mean() - 0.6) < 0.04 and abs(bike[~car].mean() - 0.1) < 0.03


def test_written_dataset_loads(tmp_path):
    cfg = SynthConfig(n_scenes=30, n_detection_scenes=20, seed=1)
    paths = write_synth_dataset(cfg, tmp_path)
    ds = load_dataset({"T": paths["rating_target"], "N": paths["rating_nontarget"], "C": paths["rating_coarse"]},
                      paths["ratings"])
    assert len(ds.scenes) == 30
    assert len(ds.ratings) == 30 * 11 * 2
    ref = generate_expectation_dataset(cfg)
    assert aggregate_ratings(ds.ratings) == ref.aggregates
    det = load_dataset({"C": paths["detection_coarse"]}, scores_path=paths["scores"],
                       ground_truth_path=paths["ground_truth"], scene_meta_path=paths["detection_scenes"])
    assert len(det.scenes) == 20 and all(s.ground_truth for s in det.scenes)


def test_world_is_seed_determined():
    a, b = SceneWorld(SynthConfig(seed=3)), SceneWorld(SynthConfig(seed=3))
    for ch in Channel:
        np.testing.assert_array_equal(a.loadings[ch], b.loadings[ch])
    assert np.isfinite(a.nontarget_thresholds).all()
