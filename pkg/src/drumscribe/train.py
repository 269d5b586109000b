"""Adam training loop, top-1 evaluation and the three-architecture benchmark."""

from __future__ import annotations

import csv
import io
import logging
import math
from dataclasses import dataclass, field

import numpy as np

from . import tensor as T
from .baselines import CnnConfig, RnnConfig, init_cnn, init_rnn
from .data import CLASS_NAMES
from .model import Model, VitConfig, init_vit
from .tensor import Tape, Tensor, no_grad

logger = logging.getLogger(__name__)

ARCHS = ("vit", "cnn", "rnn")
ARCH_IDS = {"vit": 1, "cnn": 2, "rnn": 3}


class DivergedTrainingError(RuntimeError):
    def __init__(self, epoch: int, batch: int):
        super().__init__(f"training diverged: non-finite loss at epoch {epoch}, batch {batch}")
        self.epoch = epoch
        self.batch = batch


@dataclass(frozen=True)
class TrainConfig:
    lr: float = 3e-4
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    batch_size: int = 16
    epochs: int = 30
    seed: int = 0
    arch: str = "vit"
    augment: bool = False
    val_fraction: float = 1 / 3

    def __post_init__(self):
        if not self.lr > 0:
            raise ValueError(f"lr must be positive, got {self.lr}")
        if self.batch_size < 1:
            raise ValueError(f"batch_size must be >= 1, got {self.batch_size}")
        if self.epochs < 0:
            raise ValueError("epochs must be >= 0")
        if self.arch not in ARCHS:
            raise ValueError(f"arch must be one of {ARCHS}, got {self.arch!r}")


def build_model(arch: str, model_cfg=None, seed: int = 0, dtype=np.float32) -> Model:
    """Fresh model for ``arch`` with its default config unless one is given."""
    if arch == "vit":
        return init_vit(model_cfg or VitConfig(), seed, dtype)
    if arch == "cnn":
        return init_cnn(model_cfg or CnnConfig(), seed, dtype)
    if arch == "rnn":
        return init_rnn(model_cfg or RnnConfig(), seed, dtype)
    raise ValueError(f"unknown architecture {arch!r}")


# ------------------------------------------------------------------ Adam


@dataclass
class AdamState:
    step: int = 0
    m: dict[str, np.ndarray] = field(default_factory=dict)
    v: dict[str, np.ndarray] = field(default_factory=dict)


def adam_step(params: dict[str, Tensor], grads: dict[str, np.ndarray], state: AdamState, cfg: TrainConfig) -> AdamState:
    """One bias-corrected Adam update, applied to ``params`` in place."""
    state.step += 1
    b1, b2 = cfg.beta1, cfg.beta2
    c1 = 1.0 - b1**state.step
    c2 = 1.0 - b2**state.step
    for name, p in params.items():
        g = grads.get(name)
        if g is None:
            g = np.zeros_like(p.data)
        m = state.m.get(name)
        if m is None:
            m = state.m[name] = np.zeros_like(p.data)
            state.v[name] = np.zeros_like(p.data)
        v = state.v[name]
        m *= b1
        m += (1.0 - b1) * g
        v *= b2
        v += (1.0 - b2) * (g * g)
        p.data -= cfg.lr * (m / c1) / (np.sqrt(v / c2) + cfg.eps)
    return state


# ------------------------------------------------------------ evaluation


@dataclass
class EvalReport:
    """Top-1 accuracy (percent) and a confusion matrix with rows=true, cols=predicted."""

    top1_accuracy: float
    confusion: np.ndarray

    @property
    def n(self) -> int:
        return int(self.confusion.sum())

    @property
    def recall(self) -> np.ndarray:
        support = self.confusion.sum(axis=1)
        return np.divide(np.diag(self.confusion), support, out=np.zeros(len(support)), where=support > 0)

    @property
    def precision(self) -> np.ndarray:
        predicted = self.confusion.sum(axis=0)
        return np.divide(np.diag(self.confusion), predicted, out=np.zeros(len(predicted)), where=predicted > 0)

    @classmethod
    def from_predictions(cls, y_true, y_pred, num_classes: int = 7) -> "EvalReport":
        conf = np.zeros((num_classes, num_classes), dtype=np.int64)
        np.add.at(conf, (np.asarray(y_true), np.asarray(y_pred)), 1)
        acc = 100.0 * np.trace(conf) / conf.sum() if conf.sum() else 0.0
        return cls(float(acc), conf)

    def format(self) -> str:
        names = CLASS_NAMES[: len(self.confusion)]
        w = max(len(n) for n in names) + 2
        lines = [f"Top-1 accuracy: {self.top1_accuracy:.2f}% ({int(np.trace(self.confusion))}/{self.n})", ""]
        lines.append("true \\ pred".ljust(w) + "".join(n[:6].rjust(8) for n in names))
        for name, row in zip(names, self.confusion):
            lines.append(name.ljust(w) + "".join(str(v).rjust(8) for v in row))
        lines.append("")
        lines.append("class".ljust(w) + "precision".rjust(10) + "recall".rjust(10))
        for name, p, r in zip(names, self.precision, self.recall):
            lines.append(name.ljust(w) + f"{p:10.4f}{r:10.4f}")
        return "\n".join(lines)

    def class_csv(self) -> str:
        buf = io.StringIO()
        wr = csv.writer(buf, lineterminator="\n")
        wr.writerow(["class", "precision", "recall"])
        for name, p, r in zip(CLASS_NAMES, self.precision, self.recall):
            wr.writerow([name, f"{p:.6f}", f"{r:.6f}"])
        return buf.getvalue()

    def confusion_csv(self) -> str:
        buf = io.StringIO()
        wr = csv.writer(buf, lineterminator="\n")
        names = CLASS_NAMES[: len(self.confusion)]
        wr.writerow(["true\\pred"] + names)
        for name, row in zip(names, self.confusion):
            wr.writerow([name] + [int(v) for v in row])
        return buf.getvalue()


def predict(model: Model, x: np.ndarray, batch_size: int = 64) -> np.ndarray:
    """argmax of the logits; ties go to the lowest class code."""
    return np.argmax(model.predict_logits(x, batch_size), axis=1)


def evaluate(model: Model, x: np.ndarray, y: np.ndarray, batch_size: int = 64) -> EvalReport:
    return EvalReport.from_predictions(y, predict(model, x, batch_size), model.config.num_classes)


def mean_loss(model: Model, x: np.ndarray, y: np.ndarray, batch_size: int = 64) -> float:
    logits = model.predict_logits(x, batch_size)
    with no_grad():
        return float(T.cross_entropy_from_logits(Tensor(logits), y).data)


# -------------------------------------------------------------- training


@dataclass(frozen=True)
class EpochLog:
    epoch: int
    train_loss: float
    train_acc: float
    val_acc: float


@dataclass
class TrainResult:
    model: Model  # best-validation weights
    log: list[EpochLog]
    best_epoch: int

    def log_csv(self) -> str:
        return format_log_csv(self.log)


def format_log_csv(log: list[EpochLog]) -> str:
    lines = ["epoch,train_loss,train_acc,val_acc"]
    lines += [f"{e.epoch},{e.train_loss:.6f},{e.train_acc:.4f},{e.val_acc:.4f}" for e in log]
    return "\n".join(lines) + "\n"


def _augment(xb: np.ndarray, rng: np.random.Generator) -> np.ndarray:
    out = np.zeros_like(xb)
    for i, shift in enumerate(rng.integers(-10, 11, size=len(xb))):
        if shift >= 0:
            out[i, :, shift:] = xb[i, :, : xb.shape[2] - shift]
        else:
            out[i, :, :shift] = xb[i, :, -shift:]
    out += rng.normal(0.0, 0.01, size=out.shape).astype(out.dtype)
    return out


def train(
    train_set: tuple[np.ndarray, np.ndarray],
    val_set: tuple[np.ndarray, np.ndarray] | None,
    cfg: TrainConfig,
    model: Model | None = None,
    model_cfg=None,
    callback=None,
) -> TrainResult:
    """Minibatch Adam on mean cross-entropy.

    Epoch 0 of the log is the untrained model. Later rows report the mean
    training loss and the accuracy of each batch's pre-update predictions.
    The returned model holds the weights with the best validation accuracy
    (the latest epoch wins ties); without a validation set the training set
    stands in. ``callback(EpochLog)`` runs after every epoch and may return
    True to end training.
    """
    x_tr, y_tr = np.asarray(train_set[0]), np.asarray(train_set[1])
    x_va, y_va = (x_tr, y_tr) if val_set is None else (np.asarray(val_set[0]), np.asarray(val_set[1]))
    if len(x_tr) == 0:
        raise ValueError("empty training set")
    if model is None:
        model = build_model(cfg.arch, model_cfg, seed=cfg.seed)
    x_tr = x_tr.astype(model.dtype, copy=False)
    x_va = x_va.astype(model.dtype, copy=False)
    rng = np.random.default_rng([cfg.seed, 1])

    def val_accuracy():
        return evaluate(model, x_va, y_va).top1_accuracy

    log = [EpochLog(0, mean_loss(model, x_tr, y_tr), evaluate(model, x_tr, y_tr).top1_accuracy, val_accuracy())]
    best_acc, best_epoch, best_state = log[0].val_acc, 0, model.state_dict()
    state = AdamState()
    n = len(x_tr)
    for epoch in range(1, cfg.epochs + 1):
        order = rng.permutation(n)
        loss_sum, correct = 0.0, 0
        for b, start in enumerate(range(0, n, cfg.batch_size)):
            idx = order[start : start + cfg.batch_size]
            xb, yb = x_tr[idx], y_tr[idx]
            if cfg.augment:
                xb = _augment(xb, rng)
            model.zero_grad()
            with Tape() as tape:
                logits = model(Tensor(xb, dtype=model.dtype))
                loss = T.cross_entropy_from_logits(logits, yb)
            value = float(loss.data)
            if not math.isfinite(value):
                raise DivergedTrainingError(epoch, b)
            tape.backward(loss)
            adam_step(model.params, {k: p.grad for k, p in model.params.items()}, state, cfg)
            loss_sum += value * len(idx)
            correct += int((np.argmax(logits.data, axis=1) == yb).sum())
        rec = EpochLog(epoch, loss_sum / n, 100.0 * correct / n, val_accuracy())
        log.append(rec)
        logger.info("%s epoch %d loss %.4f train %.2f%% val %.2f%%", cfg.arch, epoch, rec.train_loss, rec.train_acc, rec.val_acc)
        if rec.val_acc >= best_acc:
            best_acc, best_epoch, best_state = rec.val_acc, epoch, model.state_dict()
        if callback is not None and callback(rec):
            break
    model.load_state_dict(best_state)
    return TrainResult(model, log, best_epoch)


# ------------------------------------------------------------------ bench

BENCH_ROWS = (("RNN", "rnn"), ("CNN", "cnn"), ("Ours (ViT)", "vit"))


@dataclass
class BenchResult:
    rows: list[tuple[str, str, float]]  # (label, arch, top-1 %)
    reports: dict[str, EvalReport]
    logs: dict[str, list[EpochLog]]

    def table(self) -> str:
        w = max(len("Method"), *(len(r[0]) for r in self.rows))
        sep = "-" * (w + 22)
        lines = [sep, f"{'Method'.ljust(w)} | Accuracy(Top1%)", sep]
        lines += [f"{label.ljust(w)} | {acc:.2f}" for label, _, acc in self.rows]
        lines.append(sep)
        return "\n".join(lines)

    def csv(self) -> str:
        return "method,arch,top1_accuracy\n" + "".join(f"{l},{a},{acc:.2f}\n" for l, a, acc in self.rows)


def bench(train_set, val_set, cfg: TrainConfig, model_cfgs: dict | None = None) -> BenchResult:
    """Train every architecture on the same split, seed and epoch budget."""
    model_cfgs = model_cfgs or {}
    rows, reports, logs = [], {}, {}
    for label, arch in BENCH_ROWS:
        arch_cfg = TrainConfig(**{**cfg.__dict__, "arch": arch})
        res = train(train_set, val_set, arch_cfg, model_cfg=model_cfgs.get(arch))
        rep = evaluate(res.model, *val_set)
        rows.append((label, arch, rep.top1_accuracy))
        reports[arch] = rep
        logs[arch] = res.log
    return BenchResult(rows, reports, logs)
