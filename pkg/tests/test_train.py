import math

import numpy as np
import pytest

from drumscribe import tensor as T
from drumscribe.checkpoint import checkpoint_bytes, parse_checkpoint
from drumscribe.data import DrumClass, stack, synth_examples
from drumscribe.dsp import featurize
from drumscribe.model import Model, VitConfig
from drumscribe.tensor import Tensor
from drumscribe.train import (
    AdamState,
    DivergedTrainingError,
    EvalReport,
    TrainConfig,
    _augment,
    adam_step,
    bench,
    build_model,
    evaluate,
    format_log_csv,
    train,
)

TINY_VIT = VitConfig(image_size=128, patch_size=32, embed_dim=16, depth=1, num_heads=2)


@pytest.fixture(scope="module")
def small_set():
    return stack(synth_examples(2, seed=21, featurizer=featurize))


# ------------------------------------------------------------------ Adam


def test_adam_zero_gradient_leaves_params():
    p = {"w": Tensor(np.array([1.0, -2.0]), dtype=np.float64)}
    state = adam_step(p, {"w": np.zeros(2)}, AdamState(), TrainConfig())
    np.testing.assert_array_equal(p["w"].data, [1.0, -2.0])
    assert state.step == 1


@pytest.mark.parametrize("g", [np.array([0.5, -3.0, 1e-3]), np.array([10.0, -1e-2, 2.0])])
def test_adam_first_step_is_signed_lr(g):
    cfg = TrainConfig(lr=1e-3)
    start = np.array([0.3, 0.1, -0.7])
    p = {"w": Tensor(start.copy(), dtype=np.float64)}
    adam_step(p, {"w": g}, AdamState(), cfg)
    np.testing.assert_allclose(p["w"].data - start, -cfg.lr * np.sign(g), atol=1e-6)


def test_adam_matches_textbook_recurrence():
    cfg = TrainConfig(lr=0.01)
    rng = np.random.default_rng(0)
    w = rng.normal(size=4)
    p = {"w": Tensor(w.copy(), dtype=np.float64)}
    state = AdamState()
    m = v = np.zeros(4)
    for t in range(1, 6):
        g = rng.normal(size=4)
        adam_step(p, {"w": g}, state, cfg)
        m = 0.9 * m + 0.1 * g
        v = 0.999 * v + 0.001 * g * g
        w = w - cfg.lr * (m / (1 - 0.9**t)) / (np.sqrt(v / (1 - 0.999**t)) + 1e-8)
    np.testing.assert_allclose(p["w"].data, w, rtol=1e-12)


@pytest.mark.parametrize("kwargs", [dict(lr=0.0), dict(batch_size=0), dict(arch="svm"), dict(epochs=-1)])
def test_train_config_validation(kwargs):
    with pytest.raises(ValueError):
        TrainConfig(**kwargs)


# ------------------------------------------------------------- evaluation


class OneHotOracle(Model):
    """Reads the class code from pixel (0, 0); all-zero logits when ``constant``."""

    arch, arch_id = "oracle", 0

    def __init__(self, constant=False):
        super().__init__(VitConfig(), {"unused": Tensor(np.zeros(1))})
        self.constant = constant

    def forward(self, x):
        z = np.zeros((x.shape[0], 7), dtype=np.float32)
        if not self.constant:
            z[np.arange(x.shape[0]), x.data[:, 0, 0].astype(int)] = 1.0
        return Tensor(z)


def _labelled(per_class=3):
    y = np.repeat(np.arange(7), per_class)
    x = np.zeros((len(y), 4, 4), dtype=np.float32)
    x[:, 0, 0] = y
    return x, y


def test_perfect_predictor():
    x, y = _labelled()
    rep = evaluate(OneHotOracle(), x, y)
    assert rep.top1_accuracy == 100.0
    np.testing.assert_array_equal(rep.confusion, 3 * np.eye(7, dtype=int))


def test_constant_predictor_ties_go_to_class_zero():
    x, y = _labelled()
    rep = evaluate(OneHotOracle(constant=True), x, y)
    assert rep.top1_accuracy == pytest.approx(100 / 7)
    assert rep.confusion[:, 0].sum() == 21 and rep.confusion[:, 1:].sum() == 0


def test_report_consistency_and_permutation_invariance():
    rng = np.random.default_rng(1)
    y = rng.integers(0, 7, 50)
    y_pred = np.where(rng.random(50) < 0.6, y, rng.integers(0, 7, 50))
    rep = EvalReport.from_predictions(y, y_pred)
    assert rep.n == 50
    assert rep.top1_accuracy == 100.0 * np.trace(rep.confusion) / rep.confusion.sum()
    perm = rng.permutation(50)
    rep2 = EvalReport.from_predictions(y[perm], y_pred[perm])
    assert rep2.top1_accuracy == rep.top1_accuracy
    np.testing.assert_array_equal(rep2.confusion, rep.confusion)


def test_model_evaluation_permutation_invariant(small_set):
    x, y = small_set
    model = build_model("vit", TINY_VIT, seed=3)
    perm = np.random.default_rng(2).permutation(len(y))
    a, b = evaluate(model, x, y), evaluate(model, x[perm], y[perm])
    assert a.top1_accuracy == b.top1_accuracy
    np.testing.assert_array_equal(a.confusion, b.confusion)


def test_report_outputs():
    rep = EvalReport.from_predictions([0, 1, 1, 2], [0, 1, 2, 2])
    assert rep.top1_accuracy == 75.0
    assert rep.class_csv().splitlines()[0] == "class,precision,recall"
    assert rep.class_csv().splitlines()[2] == "Kick,1.000000,0.500000"
    assert rep.confusion_csv().splitlines()[2] == "Kick,0,1,1,0,0,0,0"
    text = rep.format()
    assert "Top-1 accuracy: 75.00% (3/4)" in text and "OpenHat" in text
    np.testing.assert_allclose(rep.recall[:3], [1.0, 0.5, 1.0])
    np.testing.assert_allclose(rep.precision[:3], [1.0, 1.0, 0.5])


# --------------------------------------------------------------- training


@pytest.mark.parametrize("arch", ["vit", "cnn", "rnn"])
def test_epoch_zero_loss_is_near_log7(small_set, arch):
    res = train(small_set, None, TrainConfig(arch=arch, epochs=0))
    assert len(res.log) == 1 and res.best_epoch == 0
    assert abs(res.log[0].train_loss - math.log(7)) <= 0.15


def test_training_is_deterministic(small_set):
    cfg = TrainConfig(arch="vit", epochs=3, batch_size=4, seed=5)
    a = train(small_set, None, cfg, model_cfg=TINY_VIT)
    b = train(small_set, None, cfg, model_cfg=TINY_VIT)
    assert a.log_csv() == b.log_csv()
    assert checkpoint_bytes(a.model) == checkpoint_bytes(b.model)
    c = train(small_set, None, TrainConfig(arch="vit", epochs=3, batch_size=4, seed=6), model_cfg=TINY_VIT)
    assert c.log_csv() != a.log_csv()


def test_best_validation_weights_are_returned(small_set):
    x, y = small_set
    res = train((x[::2], y[::2]), (x[1::2], y[1::2]), TrainConfig(epochs=6, batch_size=2, lr=3e-3), model_cfg=TINY_VIT)
    best = max(r.val_acc for r in res.log)
    assert res.log[res.best_epoch].val_acc == best
    assert all(r.val_acc < best for r in res.log[res.best_epoch + 1 :])
    assert evaluate(res.model, x[1::2], y[1::2]).top1_accuracy == best


def test_callback_stops_training(small_set):
    seen = []
    res = train(small_set, None, TrainConfig(epochs=50), model_cfg=TINY_VIT,
                callback=lambda r: seen.append(r.epoch) or r.epoch == 2)
    assert seen == [1, 2] and len(res.log) == 3


def test_log_csv_format(small_set):
    res = train(small_set, None, TrainConfig(epochs=2), model_cfg=TINY_VIT)
    lines = res.log_csv().splitlines()
    assert lines[0] == "epoch,train_loss,train_acc,val_acc"
    assert [int(l.split(",")[0]) for l in lines[1:]] == [0, 1, 2]
    assert format_log_csv(res.log) == res.log_csv()


def test_nan_loss_raises_with_location(small_set):
    x, y = small_set
    x = x.copy()
    x[:] = np.nan
    with pytest.raises(DivergedTrainingError, match="epoch 1, batch 0") as info:
        train((x, y), None, TrainConfig(epochs=2), model_cfg=TINY_VIT)
    assert (info.value.epoch, info.value.batch) == (1, 0)


def test_augment_is_seeded_and_shifts():
    x = np.zeros((3, 4, 30), dtype=np.float32)
    x[:, :, 15] = 1.0
    a = _augment(x, np.random.default_rng(0))
    b = _augment(x, np.random.default_rng(0))
    np.testing.assert_array_equal(a, b)
    assert a.shape == x.shape and a.dtype == x.dtype
    peaks = np.argmax(a[:, 0], axis=1)
    assert np.all(np.abs(peaks - 15) <= 10)


def test_augmented_training_runs(small_set):
    res = train(small_set, None, TrainConfig(epochs=1, augment=True), model_cfg=TINY_VIT)
    assert len(res.log) == 2 and math.isfinite(res.log[1].train_loss)


def test_checkpoint_round_trip_gives_identical_report(small_set):
    x, y = small_set
    res = train(small_set, None, TrainConfig(epochs=2, arch="rnn"))
    before = evaluate(res.model, x, y)
    loaded, _ = parse_checkpoint(checkpoint_bytes(res.model))
    after = evaluate(loaded, x, y)
    assert before.top1_accuracy == after.top1_accuracy
    np.testing.assert_array_equal(before.confusion, after.confusion)
    np.testing.assert_array_equal(res.model.predict_logits(x), loaded.predict_logits(x))


def test_bench_table_layout(small_set):
    x, y = small_set
    result = bench((x, y), (x, y), TrainConfig(epochs=1), {"vit": TINY_VIT})
    assert [r[1] for r in result.rows] == ["rnn", "cnn", "vit"]
    lines = result.table().splitlines()
    assert lines[1].split("|")[0].strip() == "Method" and lines[1].split("|")[1].strip() == "Accuracy(Top1%)"
    assert [l.split("|")[0].strip() for l in lines[3:6]] == ["RNN", "CNN", "Ours (ViT)"]
    for label, arch, acc in result.rows:
        assert f"| {acc:.2f}" in result.table()
        assert result.reports[arch].top1_accuracy == acc
        assert len(result.logs[arch]) == 2
    assert result.csv().splitlines()[0] == "method,arch,top1_accuracy"


def test_build_model_dispatch():
    assert build_model("cnn").arch_id == 2 and build_model("rnn").arch_id == 3 and build_model("vit").arch_id == 1
    with pytest.raises(ValueError):
        build_model("svm")
