from itertools import product

import numpy as np
import pytest

from ctxprior.dataset import Channel, DetectorScore, PresenceMatrix, RatingAggregate, RatingDimension, SceneRecord
from ctxprior.exceptions import EmptyAnchor, InvalidShape, MissingScore, SingleClassInput
from ctxprior.expectations import ModelSpec, fit_expectation_model
from ctxprior.fusion import (
    FusionClassifier,
    FusionFeatureSet,
    association_index,
    balance_classes,
    breakdown_from_decisions,
    build_fusion_features,
    error_breakdown,
    roc,
    standard_feature_sets,
    stratified_folds,
    train_fusion,
    transfer_analysis,
)


def auc_by_pairs(scores, labels):
    """Oracle: P(score_pos > score_neg) with ties counted half."""
    pos = [s for s, l in zip(scores, labels) if l]
    neg = [s for s, l in zip(scores, labels) if not l]
    total = 0.0
    for a, b in product(pos, neg):
        total += 1.0 if a > b else 0.5 if a == b else 0.0
    return total / (len(pos) * len(neg))


def test_separable_data_is_classified_perfectly():
    rng = np.random.default_rng(0)
    y = np.arange(200) % 2 == 0
    X = np.where(y, 3.0, -3.0)[:, None] + 0.1 * rng.normal(size=(200, 1))
    res = train_fusion(X, y)
    assert res.accuracy == 1.0


def test_independent_labels_sit_at_chance():
    rng = np.random.default_rng(1)
    X = rng.normal(size=(2000, 3))
    y = rng.random(2000) < 0.5
    res = train_fusion(X, y, seed=3)
    assert abs(res.accuracy - 0.5) < 0.05


def test_ties_resolve_to_absent():
    clf = FusionClassifier().fit(np.array([[-1.0], [1.0]]), [False, True])
    clf.threshold_ = float(clf.decision_function(np.array([[0.0]]))[0])
    assert not clf.predict(np.array([[0.0]]))[0]


def test_single_class_rejected():
    with pytest.raises(SingleClassInput):
        FusionClassifier().fit(np.ones((4, 1)), [True] * 4)


def test_affine_rescaling_of_inputs_leaves_decisions_unchanged():
    rng = np.random.default_rng(2)
    y = rng.random(400) < 0.5
    X = np.column_stack([y + rng.normal(size=400), rng.normal(size=400)])
    a = FusionClassifier().fit(X, y)
    X2 = X * np.array([7.0, 0.01]) + np.array([-3.0, 100.0])
    b = FusionClassifier().fit(X2, y)
    np.testing.assert_allclose(a.decision_function(X), b.decision_function(X2), atol=1e-8)


def test_squared_hinge_option():
    rng = np.random.default_rng(3)
    y = rng.random(300) < 0.5
    X = (2 * y - 1)[:, None] + 0.8 * rng.normal(size=(300, 1))
    logit = train_fusion(X, y).accuracy
    hinge = train_fusion(X, y, loss="squared_hinge").accuracy
    assert abs(logit - hinge) < 0.03


def test_boundary_slope_is_negative_when_both_features_help():
    rng = np.random.default_rng(4)
    y = rng.random(3000) < 0.5
    score = y + 0.5 * rng.normal(size=3000)
    context = y + 1.0 * rng.normal(size=3000)
    clf = FusionClassifier().fit(np.column_stack([score, context]), y)
    w, b = clf.raw_boundary()
    assert w[0] > 0 and w[1] > 0
    # boundary score = -(b + w1 * context) / w0 falls as context rises
    assert -w[1] / w[0] < 0


def test_raw_boundary_reproduces_decisions():
    rng = np.random.default_rng(5)
    X = rng.normal(size=(50, 2)) * [3, 0.2] + [1, 5]
    y = X[:, 0] + rng.normal(size=50) > 1
    clf = FusionClassifier().fit(X, y)
    w, b = clf.raw_boundary()
    np.testing.assert_allclose(X @ w + b, clf.decision_function(X), atol=1e-10)


def test_balance_classes_keeps_all_rare():
    y = np.array([True] * 10 + [False] * 30)
    idx = balance_classes(y, seed=1)
    assert y[idx].sum() == 10 and (~y[idx]).sum() == 10
    assert set(np.flatnonzero(y)) <= set(idx)


def test_stratified_folds_balance_classes():
    y = np.array([True] * 50 + [False] * 50)
    folds = stratified_folds(y, 5, seed=0)
    assert sorted(np.concatenate(folds).tolist()) == list(range(100))
    assert all(y[f].sum() == 10 for f in folds)


def test_roc_perfect_separation():
    curve = roc([0.1, 0.2, 0.8, 0.9], [False, False, True, True])
    assert curve.auc == 1.0
    assert curve.fpr[0] == 0 and curve.tpr[-1] == 1 and curve.fpr[-1] == 1
    assert np.isinf(curve.thresholds[0]) and np.isinf(curve.thresholds[-1])


def test_roc_all_tied_is_half():
    assert roc([0.5] * 6, [True, False] * 3).auc == 0.5


def test_roc_matches_pair_counting():
    rng = np.random.default_rng(6)
    s = np.round(rng.normal(size=120), 1)  # plenty of ties
    y = rng.random(120) < 0.4
    assert abs(roc(s, y).auc - auc_by_pairs(s, y)) < 1e-9


def test_roc_midpoint_thresholds():
    curve = roc([1.0, 2.0, 4.0], [False, True, True])
    np.testing.assert_array_equal(curve.thresholds[1:-1], [3.0, 1.5])


def test_breakdown_perfect_and_always_absent():
    y = np.array([True, True, False, False, False])
    perfect = breakdown_from_decisions(y, y)
    assert (perfect.misses, perfect.false_alarms) == (0, 0)
    absent = breakdown_from_decisions(np.zeros(5, bool), y)
    assert (absent.misses, absent.false_alarms, absent.correct_rejections) == (2, 0, 3)


def test_error_breakdown_counts_match_predictions():
    rng = np.random.default_rng(7)
    X = rng.normal(size=(100, 1))
    y = X[:, 0] + rng.normal(size=100) > 0
    clf = FusionClassifier().fit(X, y)
    br = error_breakdown(clf, X, y)
    wrong = int(np.sum(clf.predict(X) != y))
    assert br.misses + br.false_alarms == wrong
    assert br.hits + br.misses == y.sum()


def presence(rows, vocab=("car", "tree")):
    return PresenceMatrix(list(vocab), [f"s{i}" for i in range(len(rows))], np.array(rows, bool))


def test_association_independent_is_zero():
    pm = presence([[1, 1], [1, 0], [0, 1], [0, 0]])
    assert association_index(pm, "tree", "car").value == 0.0


def test_association_half():
    # p(tree | car) = 1, p(tree) = 0.5
    pm = presence([[1, 1], [1, 1], [0, 0], [0, 0]])
    assert association_index(pm, "tree", "car").value == 0.5


def test_association_matches_counting():
    rng = np.random.default_rng(8)
    rows = (rng.random((20, 3)) < 0.5).astype(int)
    rows[0, 0] = 1
    pm = presence(rows, ("car", "person", "tree"))
    n_car = sum(r[0] for r in rows)
    both = sum(1 for r in rows if r[0] and r[2])
    want = abs(both / n_car - sum(r[2] for r in rows) / 20)
    assert association_index(pm, "tree", "car").value == pytest.approx(want, abs=1e-15)
    avg = association_index(pm, "tree", ["car", "person"]).averaged_value
    assert avg == pytest.approx(np.mean([association_index(pm, "tree", a).value for a in ("car", "person")]))


def test_association_empty_anchor():
    with pytest.raises(EmptyAnchor):
        association_index(presence([[0, 1], [0, 0]]), "tree", "car")


def test_transfer_analysis_perfect_relation():
    assoc = {"a": 0.1, "b": 0.3, "c": 0.2, "d": 0.05}
    base = {"a": 0.8, "b": 0.7, "c": 0.9, "d": 0.85}
    out = transfer_analysis(dict(assoc), assoc, base, n_permutations=500)
    assert out["association"]["r"] == pytest.approx(1.0)
    assert 0 < out["association"]["p"] <= 1


def test_transfer_analysis_constant_benefit_is_undefined():
    cats = ("a", "b", "c")
    out = transfer_analysis({c: 0.01 for c in cats}, {"a": 0.1, "b": 0.2, "c": 0.3}, {"a": 0.7, "b": 0.8, "c": 0.9},
                            n_permutations=10)
    assert out["association"]["r"] is None


def test_transfer_analysis_needs_three_categories():
    with pytest.raises(InvalidShape):
        transfer_analysis({"a": 1, "b": 2}, {"a": 1, "b": 2}, {"a": 1, "b": 2})


@pytest.fixture(scope="module")
def fusion_setup():
    rng = np.random.default_rng(9)
    n = 60
    scenes = [
        SceneRecord(f"s{i}", {Channel.COARSE: rng.normal(size=12)}, ground_truth={"car": bool(i % 2)})
        for i in range(n)
    ]
    models = {}
    for cat in ("car", "person"):
        for dim in RatingDimension:
            aggs = [RatingAggregate(s.scene_id, cat, *(float(v) for v in rng.random(5))) for s in scenes]
            models[(cat, dim)] = fit_expectation_model(ModelSpec("C", cat, dim, pca_dims=5), scenes, aggs)
    scores = [DetectorScore(s.scene_id, "det", "car", float(rng.normal())) for s in scenes]
    return scenes, models, scores


def test_feature_arity_and_columns(fusion_setup):
    scenes, models, scores = fusion_setup
    sets = {fs.name: fs for fs in standard_feature_sets("car")}
    base = build_fusion_features(scores, models, scenes, sets["score"], detector_id="det", category="car")
    full = build_fusion_features(scores, models, scenes, sets["score+all_ratings"], detector_id="det", category="car")
    assert base.X.shape == (60, 1)
    assert full.X.shape == (60, 11)
    # oracle: column by column through per-scene predictions
    for j, (cat, dim) in enumerate(sets["score+all_ratings"].expectation_columns, start=1):
        want = [models[(cat, dim)].predict_scenes([s])[0] for s in scenes]
        np.testing.assert_allclose(full.X[:, j], want, rtol=0, atol=1e-12)
    np.testing.assert_array_equal(full.labels, [bool(i % 2) for i in range(60)])


def test_missing_score_reported(fusion_setup):
    scenes, models, scores = fusion_setup
    with pytest.raises(MissingScore):
        build_fusion_features(scores[1:], models, scenes, FusionFeatureSet("score", ("score",)),
                              detector_id="det", category="car")


def test_feature_set_normalizes_columns():
    fs = FusionFeatureSet("x", ("car:LKLHD",))
    assert fs.columns == ("score", "car:likelihood")
    with pytest.raises(InvalidShape):
        FusionFeatureSet("bad", ("score", "carlikelihood"))
