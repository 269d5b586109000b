"""Small vision transformer over spectrogram patches.

Tokens are a learned class token followed by linearly projected
non-overlapping patches, plus learned absolute positional embeddings.
Each encoder block is pre-norm: ``x += MHA(LN(x)); x += MLP(LN(x))``.
The classifier reads the final-normalized class token.
"""

from __future__ import annotations

from dataclasses import asdict, dataclass

import numpy as np

from . import tensor as T
from .tensor import Tensor, ShapeError, no_grad


@dataclass(frozen=True)
class VitConfig:
    image_size: int = 128
    patch_size: int = 16
    embed_dim: int = 64
    depth: int = 4
    num_heads: int = 4
    mlp_ratio: int = 4
    num_classes: int = 7
    dropout: float = 0.0

    def __post_init__(self):
        if self.image_size % self.patch_size:
            raise ValueError(f"image_size {self.image_size} not divisible by patch_size {self.patch_size}")
        if self.embed_dim % self.num_heads:
            raise ValueError(f"embed_dim {self.embed_dim} not divisible by num_heads {self.num_heads}")
        if self.dropout != 0.0:
            raise NotImplementedError("dropout is not implemented; keep it at 0")

    @property
    def num_patches(self) -> int:
        return (self.image_size // self.patch_size) ** 2

    @property
    def num_tokens(self) -> int:
        return self.num_patches + 1


class Model:
    """Named parameter collection with a batched forward pass.

    Subclasses set ``arch``/``arch_id`` and implement ``forward`` mapping a
    (B, rows, cols) Tensor to (B, num_classes) logits.
    """

    arch = ""
    arch_id = 0

    def __init__(self, config, params: dict[str, Tensor]):
        self.config = config
        self.params = params

    def forward(self, x: Tensor) -> Tensor:
        raise NotImplementedError

    def __call__(self, x) -> Tensor:
        if not isinstance(x, Tensor):
            x = Tensor(np.asarray(x), dtype=self.dtype)
        if x.data.ndim == 2:
            x = T.reshape(x, (1,) + x.shape)
        return self.forward(x)

    @property
    def dtype(self):
        return next(iter(self.params.values())).dtype

    def parameters(self) -> list[Tensor]:
        return list(self.params.values())

    def num_parameters(self) -> int:
        return sum(p.size for p in self.params.values())

    def zero_grad(self) -> None:
        for p in self.params.values():
            p.grad = None

    def predict_logits(self, x: np.ndarray, batch_size: int = 64) -> np.ndarray:
        """Inference over (N, rows, cols) inputs without recording."""
        x = np.asarray(x)
        if x.ndim == 2:
            x = x[None]
        out = []
        with no_grad():
            for i in range(0, len(x), batch_size):
                out.append(self(Tensor(x[i : i + batch_size], dtype=self.dtype)).data)
        return np.concatenate(out)

    def state_dict(self) -> dict[str, np.ndarray]:
        return {k: p.data.copy() for k, p in self.params.items()}

    def load_state_dict(self, state: dict[str, np.ndarray]) -> None:
        missing = set(self.params) ^ set(state)
        if missing:
            raise KeyError(f"parameter names differ: {sorted(missing)}")
        for k, p in self.params.items():
            v = np.asarray(state[k])
            if v.shape != p.shape:
                raise ShapeError(f"{k}: expected {p.shape}, got {v.shape}")
            p.data = np.ascontiguousarray(v, dtype=p.dtype)

    def astype(self, dtype) -> "Model":
        params = {k: Tensor(p.data.astype(dtype), requires_grad=p.requires_grad, name=k) for k, p in self.params.items()}
        return type(self)(self.config, params)

    def config_dict(self) -> dict:
        return asdict(self.config)


def truncated_normal(rng: np.random.Generator, shape, std: float = 0.02, bound: float = 2.0) -> np.ndarray:
    """Normal(0, std) samples redrawn until they lie within +-bound*std."""
    x = rng.standard_normal(shape)
    bad = np.abs(x) > bound
    while bad.any():
        x[bad] = rng.standard_normal(int(bad.sum()))
        bad = np.abs(x) > bound
    return x * std


def _param(data, dtype, name) -> Tensor:
    return Tensor(np.asarray(data, dtype=dtype), requires_grad=True, name=name)


def init_vit(cfg: VitConfig = VitConfig(), seed: int = 0, dtype=np.float32) -> "VitModel":
    """Deterministic initialization: weights ~ N(0, 0.02) truncated at 2 sigma."""
    rng = np.random.default_rng(seed)
    d, hidden = cfg.embed_dim, cfg.mlp_ratio * cfg.embed_dim
    pdim = cfg.patch_size**2
    shapes: list[tuple[str, tuple, str]] = [
        ("patch_proj.w", (pdim, d), "w"),
        ("patch_proj.b", (d,), "0"),
        ("cls_token", (d,), "0"),
        ("pos_embed", (cfg.num_tokens, d), "w"),
    ]
    for i in range(cfg.depth):
        b = f"blocks.{i}."
        shapes += [
            (b + "ln1.gamma", (d,), "1"),
            (b + "ln1.beta", (d,), "0"),
            (b + "attn.wq", (d, d), "w"),
            (b + "attn.wk", (d, d), "w"),
            (b + "attn.wv", (d, d), "w"),
            (b + "attn.wo", (d, d), "w"),
            (b + "attn.bo", (d,), "0"),
            (b + "ln2.gamma", (d,), "1"),
            (b + "ln2.beta", (d,), "0"),
            (b + "mlp.w1", (d, hidden), "w"),
            (b + "mlp.b1", (hidden,), "0"),
            (b + "mlp.w2", (hidden, d), "w"),
            (b + "mlp.b2", (d,), "0"),
        ]
    shapes += [
        ("norm.gamma", (d,), "1"),
        ("norm.beta", (d,), "0"),
        ("head.w", (d, cfg.num_classes), "w"),
        ("head.b", (cfg.num_classes,), "0"),
    ]
    params = {}
    for name, shape, kind in shapes:
        if kind == "w":
            v = truncated_normal(rng, shape)
        elif kind == "1":
            v = np.ones(shape)
        else:
            v = np.zeros(shape)
        params[name] = _param(v, dtype, name)
    return VitModel(cfg, params)


def patchify(x, cfg: VitConfig) -> np.ndarray:
    """(..., S, S) image(s) to (..., P, p*p) row-major patches in row-major patch order."""
    x = np.asarray(x)
    s, p = cfg.image_size, cfg.patch_size
    if x.shape[-2:] != (s, s):
        raise ShapeError(f"expected a {s}x{s} input, got {x.shape[-2:]}")
    g = s // p
    lead = x.shape[:-2]
    y = x.reshape(lead + (g, p, g, p))
    y = np.swapaxes(y, -3, -2)
    return np.ascontiguousarray(y.reshape(lead + (g * g, p * p)))


def unpatchify(patches, cfg: VitConfig) -> np.ndarray:
    patches = np.asarray(patches)
    s, p = cfg.image_size, cfg.patch_size
    g = s // p
    lead = patches.shape[:-2]
    y = patches.reshape(lead + (g, g, p, p))
    y = np.swapaxes(y, -3, -2)
    return np.ascontiguousarray(y.reshape(lead + (s, s)))


def multi_head_attention(x: Tensor, wq, wk, wv, wo, bo, num_heads: int, weights_out: list | None = None) -> Tensor:
    """Scaled dot-product attention over (B, T, d) tokens.

    When ``weights_out`` is a list, the (B, heads, T, T) attention
    probabilities are appended to it.
    """
    bsz, t, d = x.shape
    dh = d // num_heads

    def heads(z):
        return T.transpose(T.reshape(z, (bsz, t, num_heads, dh)), (0, 2, 1, 3))

    q, k, v = heads(T.matmul(x, wq)), heads(T.matmul(x, wk)), heads(T.matmul(x, wv))
    scores = T.scale(T.matmul(q, T.transpose(k)), 1.0 / np.sqrt(dh))
    attn = T.softmax(scores, axis=-1)
    if weights_out is not None:
        weights_out.append(attn.data)
    ctx = T.matmul(attn, v)
    ctx = T.reshape(T.transpose(ctx, (0, 2, 1, 3)), (bsz, t, d))
    return T.linear(ctx, wo, bo)


class VitModel(Model):
    arch = "vit"
    arch_id = 1

    def forward(self, x: Tensor, attention_out: list | None = None) -> Tensor:
        cfg, p = self.config, self.params
        patches = Tensor(patchify(x.data, cfg), dtype=self.dtype)
        bsz = patches.shape[0]
        tok = T.linear(patches, p["patch_proj.w"], p["patch_proj.b"])
        cls = T.add(T.reshape(p["cls_token"], (1, 1, cfg.embed_dim)), np.zeros((bsz, 1, cfg.embed_dim), self.dtype))
        h = T.add(T.concat([cls, tok], axis=1), p["pos_embed"])
        for i in range(cfg.depth):
            b = f"blocks.{i}."
            a = T.layer_norm(h, p[b + "ln1.gamma"], p[b + "ln1.beta"])
            a = multi_head_attention(
                a, p[b + "attn.wq"], p[b + "attn.wk"], p[b + "attn.wv"], p[b + "attn.wo"], p[b + "attn.bo"],
                cfg.num_heads, attention_out,
            )
            h = T.add(h, a)
            m = T.layer_norm(h, p[b + "ln2.gamma"], p[b + "ln2.beta"])
            m = T.gelu(T.linear(m, p[b + "mlp.w1"], p[b + "mlp.b1"]))
            h = T.add(h, T.linear(m, p[b + "mlp.w2"], p[b + "mlp.b2"]))
        cls_out = T.layer_norm(T.getitem(h, (slice(None), 0)), p["norm.gamma"], p["norm.beta"])
        return T.linear(cls_out, p["head.w"], p["head.b"])


def vit_forward(x, model: VitModel) -> Tensor:
    """Logits of shape (num_classes,) for a single (S, S) input."""
    x = x if isinstance(x, Tensor) else Tensor(np.asarray(x), dtype=model.dtype)
    if x.data.ndim != 2:
        raise ShapeError(f"vit_forward takes one 2-D input, got {x.shape}")
    return T.reshape(model(x), (model.config.num_classes,))
