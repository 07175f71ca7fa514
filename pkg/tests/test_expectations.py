import numpy as np
import pytest

from ctxprior.dataset import Channel, RatingAggregate, RatingDimension, RawRating, SceneRecord
from ctxprior.exceptions import InsufficientScenes, MissingChannel, UnpairedDistributions
from ctxprior.expectations import (
    EvalConfig,
    ExpectationModel,
    ModelSpec,
    SplitDistribution,
    compare_models,
    evaluate_all_specs,
    fit_expectation_model,
    kfold_eval,
    kfold_indices,
    nontarget_weight_correlation,
    repeated_split_eval,
    split_indices,
)
from ctxprior.numerics import pearson
from ctxprior.synth import SynthConfig, generate_expectation_dataset

T, N, C = Channel.TARGET, Channel.NONTARGET, Channel.COARSE
LIK = RatingDimension.LIKELIHOOD


def make_scenes(blocks):
    n = next(iter(blocks.values())).shape[0]
    return [SceneRecord(f"s{i:04d}", {ch: b[i] for ch, b in blocks.items()}) for i in range(n)]


def make_aggs(y, category="car"):
    return [RatingAggregate(f"s{i:04d}", category, float(v)) for i, v in enumerate(y)]


def factor_blocks(n, rng, dims=None, r=10):
    dims = dims or {T: 62, N: 36, C: 532}
    return {ch: rng.normal(size=(n, r)) @ rng.normal(size=(r, d)) + 0.3 * rng.normal(size=(n, d)) for ch, d in dims.items()}


@pytest.fixture(scope="module")
def planted_nc():
    """Signal carried by N and C; T is independent."""
    rng = np.random.default_rng(4)
    blocks = factor_blocks(600, rng)
    s = blocks[N][:, :3].sum(axis=1) + blocks[C][:, :3].sum(axis=1)
    s = (s - s.mean()) / s.std()
    y = s + 0.2 * rng.normal(size=600)
    return make_scenes(blocks), make_aggs(y)


def test_exact_linear_target_is_recovered():
    rng = np.random.default_rng(0)
    X = rng.normal(size=(50, 8))
    y = X @ rng.normal(size=8) + 1.5
    model = ExpectationModel(channels="C", pca_dims=8).fit(X, y)
    assert np.max(np.abs(model.predict(X) - y)) < 1e-6


def test_tnc_input_dim_is_sixty():
    rng = np.random.default_rng(1)
    blocks = factor_blocks(100, rng)
    scenes = make_scenes(blocks)
    model = fit_expectation_model(ModelSpec("TNC"), scenes, make_aggs(rng.normal(size=100)))
    assert model.input_dim == 60
    assert model.n_features_in_ == 62 + 36 + 532


def test_small_training_set_caps_components():
    rng = np.random.default_rng(2)
    X = rng.normal(size=(15, 40))
    model = ExpectationModel(channels="C", pca_dims=20).fit(X, rng.normal(size=15))
    assert model.k_ == (13,)


def test_too_few_scenes_for_two_channels():
    rng = np.random.default_rng(3)
    blocks = factor_blocks(12, rng, {N: 8, C: 8})
    with pytest.raises(InsufficientScenes):
        fit_expectation_model(ModelSpec("NC", pca_dims=8), make_scenes(blocks), make_aggs(rng.normal(size=12)))


def test_missing_channel_is_reported():
    rng = np.random.default_rng(3)
    scenes = make_scenes({C: rng.normal(size=(20, 5))})
    with pytest.raises(MissingChannel):
        fit_expectation_model(ModelSpec("NC"), scenes, make_aggs(rng.normal(size=20)))


def test_get_params_round_trip():
    m = ExpectationModel(channels="TC", channel_dims=(3, 4), pca_dims=5, ridge=0.1)
    assert ExpectationModel(**m.get_params()).get_params() == m.get_params()


def test_planted_channels_dominate(planted_nc):
    scenes, aggs = planted_nc
    r_t = kfold_eval(ModelSpec("T"), scenes, aggs, seed=0).r_cv
    r_nc = kfold_eval(ModelSpec("NC"), scenes, aggs, seed=0).r_cv
    assert abs(r_t) < 0.1
    assert r_nc > 0.9


def test_noiseless_target_cross_validates_perfectly():
    rng = np.random.default_rng(5)
    blocks = factor_blocks(200, rng, {C: 30}, r=5)
    y = blocks[C] @ rng.normal(size=30)
    res = kfold_eval(ModelSpec("C", pca_dims=30), make_scenes(blocks), make_aggs(y))
    assert res.r_cv > 0.999


def test_shuffled_targets_give_no_signal(planted_nc):
    scenes, aggs = planted_nc
    rng = np.random.default_rng(6)
    ys = rng.permutation([a.likelihood for a in aggs])
    res = kfold_eval(ModelSpec("NC"), scenes, make_aggs(ys), seed=1)
    assert abs(res.r_cv) < 0.15


def test_kfold_indices_partition():
    folds = kfold_indices(11, 5, seed=3)
    assert sorted(len(f) for f in folds) == [2, 2, 2, 2, 3]
    assert sorted(np.concatenate(folds).tolist()) == list(range(11))


def test_kfold_is_deterministic(planted_nc):
    scenes, aggs = planted_nc
    a = kfold_eval(ModelSpec("C"), scenes, aggs, seed=9)
    b = kfold_eval(ModelSpec("C"), scenes, aggs, seed=9)
    np.testing.assert_array_equal(a.predictions, b.predictions)


def test_held_out_targets_never_reach_training():
    rng = np.random.default_rng(7)
    blocks = factor_blocks(100, rng, {C: 40})
    scenes = make_scenes(blocks)
    y = rng.normal(size=100)
    fold0 = kfold_indices(100, 5, seed=0)[0]
    y2 = y.copy()
    y2[fold0] += 100.0 * rng.normal(size=len(fold0))
    p1 = kfold_eval(ModelSpec("C"), scenes, make_aggs(y)).predictions
    p2 = kfold_eval(ModelSpec("C"), scenes, make_aggs(y2)).predictions
    np.testing.assert_array_equal(p1[fold0], p2[fold0])


def test_per_fold_pca_ignores_held_out_features():
    rng = np.random.default_rng(8)
    blocks = factor_blocks(100, rng, {C: 40})
    y = rng.normal(size=100)
    fold0 = kfold_indices(100, 5, seed=0)[0]
    i, k = fold0[0], fold0[1]
    moved = {C: blocks[C].copy()}
    moved[C][i] += 50.0
    for scope, should_match in (("per_fold", True), ("global", False)):
        a = kfold_eval(ModelSpec("C"), make_scenes(blocks), make_aggs(y), pca_scope=scope).predictions
        b = kfold_eval(ModelSpec("C"), make_scenes(moved), make_aggs(y), pca_scope=scope).predictions
        assert np.isclose(a[k], b[k], rtol=0, atol=1e-12) == should_match, scope


@pytest.fixture(scope="module")
def moderate_signal():
    rng = np.random.default_rng(10)
    blocks = factor_blocks(600, rng, {T: 20, C: 60})
    s = blocks[C][:, :4].sum(axis=1)
    s = (s - s.mean()) / s.std()
    # population correlation 0.6 between signal and target
    y = 0.6 * s + 0.8 * rng.normal(size=600)
    return make_scenes(blocks), make_aggs(y)


def test_repeated_splits_centre_on_population_correlation(moderate_signal):
    scenes, aggs = moderate_signal
    dist = repeated_split_eval(ModelSpec("C"), scenes, aggs, n_splits=60, seed=0)
    assert abs(dist.mean - 0.6) < 0.05
    assert dist.n_splits == 60


def test_single_split_equals_manual_holdout(moderate_signal):
    scenes, aggs = moderate_signal
    dist = repeated_split_eval(ModelSpec("C"), scenes, aggs, n_splits=1, seed=5)
    train, test = split_indices(len(scenes), 0, 5)
    X = np.vstack([s.features("C") for s in scenes])
    y = np.array([a.likelihood for a in aggs])
    model = ExpectationModel(channels="C").fit(X[train], y[train])
    assert dist.correlations[0] == pearson(model.predict(X[test]), y[test])


def test_parallel_splits_match_serial(moderate_signal):
    scenes, aggs = moderate_signal
    a = repeated_split_eval(ModelSpec("TC"), scenes, aggs, n_splits=8, seed=2, jobs=1)
    b = repeated_split_eval(ModelSpec("TC"), scenes, aggs, n_splits=8, seed=2, jobs=2)
    np.testing.assert_array_equal(a.correlations, b.correlations)


def dist(values, stream=("s",)):
    return SplitDistribution.from_values(ModelSpec("C"), np.asarray(values, float), stream)


def test_compare_with_itself_is_zero():
    d = dist([0.1, 0.5, 0.3])
    assert compare_models(d, d).p_frac == 0.0


def test_compare_dominance_and_null():
    rng = np.random.default_rng(0)
    a = rng.normal(size=1000)
    assert compare_models(dist(a + 1), dist(a)).p_frac == 1.0
    b = rng.normal(size=1000)
    assert 0.4 < compare_models(dist(a), dist(b)).p_frac < 0.6


def test_unpaired_streams_refused():
    with pytest.raises(UnpairedDistributions):
        compare_models(dist([0.1, 0.2], ("a",)), dist([0.1, 0.2], ("b",)))


def test_flags():
    d_best = SplitDistribution.from_values(ModelSpec("NC"), np.linspace(0.5, 0.9, 2000), ("s",))
    worse = dist(np.linspace(0.5, 0.9, 2000) - 1)
    same = dist(np.linspace(0.5, 0.9, 2000)[::-1])
    assert compare_models(worse, d_best).flag == "*"
    assert compare_models(same, d_best).flag == "#"


def test_table_marks_missing_ceiling_for_single_subject(planted_nc):
    scenes, aggs = planted_nc
    ratings = [RawRating("only", a.scene_id, "car", 100 * min(max(a.likelihood, 0), 1)) for a in aggs]
    cfg = EvalConfig(n_splits=3, specs=("C", "NC"))
    table = evaluate_all_specs(scenes, aggs, "car", LIK, cfg, ratings=ratings)
    ceil = table.rows()[0]
    assert ceil["model"] == "Ceil" and ceil["available"] is False
    assert table.best == "NC"


def test_table_uses_shared_bases(moderate_signal):
    scenes, aggs = moderate_signal
    cfg = EvalConfig(n_splits=5, specs=("T", "C", "TC"), seed=4)
    table = evaluate_all_specs(scenes, aggs, "car", LIK, cfg)
    for label in ("T", "C", "TC"):
        solo = repeated_split_eval(ModelSpec(label), scenes, aggs, n_splits=5, seed=4)
        np.testing.assert_array_equal(table.distributions[label].correlations, solo.correlations)


def test_nontarget_weight_correlation_signs(planted_nc):
    scenes, aggs = planted_nc
    a = fit_expectation_model(ModelSpec("NC"), scenes, aggs)
    neg = fit_expectation_model(ModelSpec("NC"), scenes, make_aggs([-g.likelihood for g in aggs]))
    assert nontarget_weight_correlation(a, a) == pytest.approx(1.0, abs=1e-12)
    assert nontarget_weight_correlation(a, neg) == pytest.approx(-1.0, abs=1e-12)


def test_noise_free_world_is_recoverable():
    cfg = SynthConfig(n_scenes=400, generating_channels="C", noise_sd=0.0, reliability=1.0, n_detection_scenes=0, seed=2)
    ds = generate_expectation_dataset(cfg)
    dim = RatingDimension.YPOS
    assert not ds.clamped[("car", dim)]
    res = kfold_eval(ModelSpec("C", "car", dim), ds.scenes, ds.aggregates, pca_scope="global")
    assert res.r_cv > 0.999
