"""CNN and GRU comparators consuming the same spectrogram input as the ViT."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import tensor as T
from .model import Model, _param
from .tensor import Tensor, ShapeError


@dataclass(frozen=True)
class CnnConfig:
    channels: tuple[int, ...] = (8, 16, 32)
    kernel_size: int = 3
    num_classes: int = 7

    def __post_init__(self):
        object.__setattr__(self, "channels", tuple(int(c) for c in self.channels))
        if self.kernel_size % 2 == 0:
            raise ValueError("kernel_size must be odd for same padding")


@dataclass(frozen=True)
class RnnConfig:
    input_size: int = 128
    hidden_size: int = 64
    num_classes: int = 7


class CnnModel(Model):
    """[conv3x3 -> relu -> maxpool2x2] per channel stage, global average pool, linear head."""

    arch = "cnn"
    arch_id = 2

    def forward(self, x: Tensor) -> Tensor:
        p = self.params
        h = T.reshape(x, x.shape + (1,))  # channels-last
        for i in range(len(self.config.channels)):
            h = T.maxpool2d(T.relu(T.conv2d(h, p[f"conv{i}.w"], p[f"conv{i}.b"], channels_last=True)), channels_last=True)
        h = T.mean(h, axis=(1, 2))
        return T.linear(h, p["head.w"], p["head.b"])


def init_cnn(cfg: CnnConfig = CnnConfig(), seed: int = 0, dtype=np.float32) -> CnnModel:
    """He-normal conv weights, zero biases, N(0, 1/fan_in) head."""
    rng = np.random.default_rng(seed)
    params = {}
    c_in, k = 1, cfg.kernel_size
    for i, c_out in enumerate(cfg.channels):
        fan_in = c_in * k * k
        params[f"conv{i}.w"] = _param(rng.standard_normal((c_out, c_in, k, k)) * np.sqrt(2.0 / fan_in), dtype, f"conv{i}.w")
        params[f"conv{i}.b"] = _param(np.zeros(c_out), dtype, f"conv{i}.b")
        c_in = c_out
    params["head.w"] = _param(rng.standard_normal((c_in, cfg.num_classes)) / np.sqrt(c_in), dtype, "head.w")
    params["head.b"] = _param(np.zeros(cfg.num_classes), dtype, "head.b")
    return CnnModel(cfg, params)


class RnnModel(Model):
    """Single-layer GRU over spectrogram columns; the last hidden state feeds a linear head.

    Gates follow the usual convention::

        r = sigmoid(x W_ir + h W_hr + b_r)
        z = sigmoid(x W_iz + h W_hz + b_z)
        n = tanh(x W_in + b_in + r * (h W_hn + b_hn))
        h' = (1 - z) * n + z * h
    """

    arch = "rnn"
    arch_id = 3

    def forward(self, x: Tensor) -> Tensor:
        p, cfg = self.params, self.config
        bsz, feats, steps = x.shape
        if feats != cfg.input_size:
            raise ShapeError(f"GRU expects {cfg.input_size} rows per column, got {feats}")
        seq = T.transpose(x, (2, 0, 1))  # (steps, B, feats)
        xr = T.linear(seq, p["gru.w_ir"], p["gru.b_r"])
        xz = T.linear(seq, p["gru.w_iz"], p["gru.b_z"])
        xn = T.linear(seq, p["gru.w_in"], p["gru.b_in"])
        h = None
        for t in range(steps):
            if h is None:
                r = T.sigmoid(xr[t])
                z = T.sigmoid(xz[t])
                n = T.tanh(T.add(xn[t], T.mul(r, p["gru.b_hn"])))
                h = T.sub(n, T.mul(z, n))
                continue
            r = T.sigmoid(T.add(xr[t], T.matmul(h, p["gru.w_hr"])))
            z = T.sigmoid(T.add(xz[t], T.matmul(h, p["gru.w_hz"])))
            n = T.tanh(T.add(xn[t], T.mul(r, T.linear(h, p["gru.w_hn"], p["gru.b_hn"]))))
            h = T.add(n, T.mul(z, T.sub(h, n)))
        return T.linear(h, p["head.w"], p["head.b"])


def init_rnn(cfg: RnnConfig = RnnConfig(), seed: int = 0, dtype=np.float32) -> RnnModel:
    """Uniform(-1/sqrt(hidden), 1/sqrt(hidden)) for every GRU tensor and the head."""
    rng = np.random.default_rng(seed)
    f, hdim = cfg.input_size, cfg.hidden_size
    bound = 1.0 / np.sqrt(hdim)
    shapes = {
        "gru.w_ir": (f, hdim), "gru.w_iz": (f, hdim), "gru.w_in": (f, hdim),
        "gru.w_hr": (hdim, hdim), "gru.w_hz": (hdim, hdim), "gru.w_hn": (hdim, hdim),
        "gru.b_r": (hdim,), "gru.b_z": (hdim,), "gru.b_in": (hdim,), "gru.b_hn": (hdim,),
        "head.w": (hdim, cfg.num_classes), "head.b": (cfg.num_classes,),
    }
    params = {k: _param(rng.uniform(-bound, bound, s), dtype, k) for k, s in shapes.items()}
    return RnnModel(cfg, params)


def cnn_forward(x, model: CnnModel) -> Tensor:
    return T.reshape(model(x), (model.config.num_classes,))


def rnn_forward(x, model: RnnModel) -> Tensor:
    return T.reshape(model(x), (model.config.num_classes,))
