from dataclasses import replace

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from slatelab.errors import ConfigError, DegenerateLabelsError, InputError, MissingHeadError
from slatelab.features import FeatureBatch, FeatureVector, Featurizer, feature_id
from slatelab.harness import Replicate, make_world
from slatelab.labels import LabelSpec, TrainingSample, training_arrays, validation_set
from slatelab.oracles import check_gradient, ref_auc
from slatelab.policies import RandomPolicy, oracle_slot_cvr
from slatelab.predictor import (
    Head,
    PredictorModel,
    TrainConfig,
    auc,
    loss_and_grad,
    predict,
    predict_batch,
    train,
    train_arrays,
)
from slatelab.worldsim import simulate_days

SMALL = TrainConfig(dim=64, epochs=3, batch_size=4)


def _samples(rng, n=60, objective="cvr"):
    out = []
    for i in range(n):
        ids = tuple(int(x) for x in rng.integers(1, 64, 3))
        y = int(rng.random() < 0.2 + 0.6 * (ids[0] % 2))
        out.append(TrainingSample(FeatureVector(ids, (1.0, 1.0, 1.0)), objective, y, 1.0, ((0, 0, i), 1)))
    return out


# -- features -------------------------------------------------------------------


def test_feature_ids_stable_and_in_range():
    a = feature_id("user", 12)
    assert a == feature_id("user", 12) and 1 <= a < 1 << 18
    assert feature_id("user", 12) != feature_id("item", 12)


def test_featurizer_values_finite(small_world):
    f = Featurizer(small_world)
    b = f.fstage(0, 3, [1, 2, 20], [1, 2, 3])
    assert np.isfinite(b.values).all() and (b.ids > 0).all()
    e = f.estage(0, [1, 2])
    assert (e.values[:, 5:] == 0).all()


# -- training --------------------------------------------------------------------


def test_single_sample_is_learned():
    s = TrainingSample(FeatureVector((3, 7), (1.0, 1.0)), "cvr", 1, 1.0, ((0, 0, 0), 1))
    hyper = TrainConfig(dim=16, epochs=300, learning_rate=0.5, require_both_classes=False)
    model = train([s], hyper)
    assert predict(model, s.features, ("cvr",)).cvr > 0.99


def test_zero_weight_duplicates_change_nothing():
    rng = np.random.default_rng(0)
    samples = _samples(rng)
    dupes = [replace(s, weight=0.0, label=1 - s.label) for s in samples]
    a = train(samples, SMALL, seed=4)
    b = train(samples + dupes, SMALL, seed=4)
    np.testing.assert_array_equal(a.heads["cvr"].weights, b.heads["cvr"].weights)
    assert a.heads["cvr"].bias == b.heads["cvr"].bias


def test_degenerate_head_names_objective():
    rng = np.random.default_rng(1)
    samples = [replace(s, label=1) for s in _samples(rng, 10, "sdr")]
    with pytest.raises(DegenerateLabelsError) as info:
        train(samples, SMALL)
    assert info.value.objective == "sdr"


def test_training_is_seeded():
    samples = _samples(np.random.default_rng(2))
    a, b = train(samples, SMALL, seed=1), train(samples, SMALL, seed=1)
    np.testing.assert_array_equal(a.heads["cvr"].weights, b.heads["cvr"].weights)


def test_train_config_validation():
    with pytest.raises(ConfigError):
        TrainConfig(optimizer="adam")
    with pytest.raises(ConfigError):
        TrainConfig(epochs=0)


def test_gradient_matches_finite_differences():
    result = check_gradient(instances=100, seed=3)
    assert result.passed, result.detail


def test_l2_gradient_term():
    head = Head(np.array([0.0, 2.0, -1.0]), 0.0)
    batch = FeatureBatch(np.array([[1]]), np.array([[0.0]]))
    _, g0, _ = loss_and_grad(head, batch, np.array([1.0]), np.array([1.0]), 0.0)
    _, g1, _ = loss_and_grad(head, batch, np.array([1.0]), np.array([1.0]), 0.5)
    np.testing.assert_allclose(g1 - g0, 0.5 * head.weights)


# -- prediction --------------------------------------------------------------------


def test_zero_model_predicts_half():
    model = PredictorModel.zeros(hyper=TrainConfig(dim=32))
    out = predict(model, FeatureVector((1, 2), (1.0, 1.0)))
    assert all(v == 0.5 for v in out.as_dict().values()) and len(out.as_dict()) == 6


def test_missing_head():
    model = PredictorModel.zeros(("cvr",), TrainConfig(dim=32))
    with pytest.raises(MissingHeadError) as info:
        predict(model, FeatureVector((1,), (1.0,)), ("sdr",))
    assert "sdr" in str(info.value)


@settings(max_examples=30, deadline=None)
@given(st.lists(st.floats(-50, 50), min_size=3, max_size=3), st.floats(-20, 20))
def test_outputs_are_open_probabilities(w, b):
    head = Head(np.array([0.0] + w), b)
    model = PredictorModel({"vtr": head}, TrainConfig(dim=4))
    p = predict_batch(model, FeatureBatch(np.array([[1, 2, 3]]), np.array([[1.0, 1.0, 1.0]])))["vtr"]
    assert 0.0 < p[0] < 1.0


@pytest.mark.parametrize("fmt", ["json", "binary"])
def test_model_round_trip(tmp_path, fmt):
    model = train(_samples(np.random.default_rng(5)), SMALL, seed=0)
    path = tmp_path / f"m.{fmt}"
    model.save(path, fmt)
    again = PredictorModel.load(path)
    batch = FeatureBatch(np.arange(1, 61).reshape(20, 3), np.ones((20, 3)))
    np.testing.assert_array_equal(predict_batch(model, batch)["cvr"], predict_batch(again, batch)["cvr"])
    assert again.hyper == model.hyper


# -- AUC ---------------------------------------------------------------------------


def test_auc_examples():
    assert auc([0.9, 0.1], [1, 0]) == 1.0
    assert auc([0.3] * 6, [1, 0, 1, 0, 0, 1]) == 0.5


def test_auc_degenerate():
    with pytest.raises(DegenerateLabelsError):
        auc([0.1, 0.2], [1, 1])
    with pytest.raises(InputError):
        auc([0.1, 0.2], [1])


def test_auc_matches_pairwise_oracle():
    rng = np.random.default_rng(6)
    s = np.round(rng.random(200), 2)
    y = rng.integers(0, 2, 200)
    assert abs(auc(s, y) - ref_auc(s.tolist(), y.tolist(), [1.0] * 200)) <= 1e-12


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 10_000))
def test_auc_invariant_under_increasing_transform(seed):
    rng = np.random.default_rng(seed)
    s = rng.normal(size=40)
    y = rng.integers(0, 2, 40)
    y[:2] = [0, 1]
    assert auc(s, y) == auc(np.exp(3 * s) + 1, y)


# -- trained on simulated traffic ---------------------------------------------------


@pytest.fixture(scope="module")
def replicate(calibration):
    return Replicate(calibration, 0)


@pytest.fixture(scope="module")
def large_corpus(calibration):
    """About 1e5 training F-slots from uniform logging, plus a held-out day."""
    world = make_world(calibration, 0)
    world = replace(world, config=replace(world.config, sessions_per_day=80))
    days = simulate_days(world, RandomPolicy(calibration.ranking, 1), 4, seed=1)
    train_logs = [l for d in days[:3] for l in d.logs]
    held_out = [l for l in days[3].logs if l.exposed_slots]
    f = Featurizer(world)
    data = training_arrays(train_logs, LabelSpec(), f)
    model = train_arrays({"cvr": data["cvr"]}, calibration.train, 0)
    vs = validation_set(held_out, LabelSpec(), f)
    model_auc = auc(predict_batch(model, vs.features, ("cvr",))["cvr"], vs.labels["cvr"])
    oracle = np.concatenate([oracle_slot_cvr(world, l) for l in held_out])
    return len(data["cvr"][1]), model_auc, auc(oracle, vs.labels["cvr"])


@pytest.mark.slow
def test_cvr_head_below_oracle_bound(large_corpus):
    n, model_auc, oracle_auc = large_corpus
    assert n >= 100_000
    assert 0.5 < model_auc <= oracle_auc


@pytest.mark.slow
def test_cvr_head_auc_on_large_corpus(large_corpus):
    n, model_auc, oracle_auc = large_corpus
    assert model_auc >= 0.65, f"cvr AUC {model_auc:.4f} (oracle bound {oracle_auc:.4f}, {n} slots)"


def test_conflict_filter_raises_sdr_of_converting_items(replicate):
    rep = replicate
    on = rep.model(LabelSpec(conflict_filter=True))
    off = rep.model(LabelSpec(conflict_filter=False))
    logs = [l for l in rep.validation_logs if l.exposed_slots]
    vs = validation_set(logs, LabelSpec(), rep.featurizer)
    cvr = np.concatenate([oracle_slot_cvr(rep.world, l) for l in logs])
    high = cvr >= np.quantile(cvr, 0.75)
    s_on = predict_batch(on, vs.features, ("sdr",))["sdr"][high].mean()
    s_off = predict_batch(off, vs.features, ("sdr",))["sdr"][high].mean()
    assert s_on > s_off
