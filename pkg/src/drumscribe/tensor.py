"""Dense tensors with an eager reverse-mode tape.

Operations always compute their forward value. When a :class:`Tape` is
active and at least one input requires a gradient, the operation appends a
record to the tape; :meth:`Tape.backward` later walks those records in
exact reverse order and accumulates gradients.

    >>> w = Tensor(np.ones((2, 2)), requires_grad=True)
    >>> with Tape() as tape:
    ...     loss = sum_all(matmul(w, w))
    >>> tape.backward(loss)
    >>> w.grad.shape
    (2, 2)

Storage is a C-contiguous numpy array. Element precision follows the input
data; float32 is the production default and float64 is used for gradient
verification.
"""

from __future__ import annotations

import math
from typing import Callable, Sequence

import numpy as np

DEFAULT_DTYPE = np.float32

_active_tapes: list["Tape"] = []


class ShapeError(ValueError):
    """Raised when operand shapes are incompatible."""


class Tensor:
    __slots__ = ("data", "requires_grad", "grad", "name")

    def __init__(self, data, requires_grad: bool = False, dtype=None, name: str | None = None):
        if dtype is None:
            dtype = data.dtype if isinstance(data, np.ndarray) and data.dtype.kind == "f" else DEFAULT_DTYPE
        arr = np.asarray(data, dtype=dtype)
        self.data = arr if arr.flags.c_contiguous else arr.copy(order="C")
        self.requires_grad = requires_grad
        self.grad: np.ndarray | None = None
        self.name = name

    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    @property
    def dtype(self):
        return self.data.dtype

    @property
    def size(self) -> int:
        return self.data.size

    def numpy(self) -> np.ndarray:
        return self.data

    def zero_grad(self) -> None:
        self.grad = None

    def __repr__(self) -> str:
        flag = ", requires_grad=True" if self.requires_grad else ""
        return f"Tensor(shape={self.shape}, dtype={self.dtype}{flag})"

    def __add__(self, other):
        return add(self, other)

    __radd__ = __add__

    def __sub__(self, other):
        return sub(self, other)

    def __rsub__(self, other):
        return sub(_as_tensor(other, self.dtype), self)

    def __mul__(self, other):
        if isinstance(other, (int, float)):
            return scale(self, other)
        return mul(self, other)

    __rmul__ = __mul__

    def __neg__(self):
        return scale(self, -1.0)

    def __matmul__(self, other):
        return matmul(self, other)

    def __getitem__(self, index):
        return getitem(self, index)

    @property
    def T(self):
        return transpose(self)


def _as_tensor(x, dtype=None) -> Tensor:
    if isinstance(x, Tensor):
        return x
    return Tensor(np.asarray(x), dtype=dtype or DEFAULT_DTYPE)


class _Record:
    __slots__ = ("out", "inputs", "backward")

    def __init__(self, out, inputs, backward):
        self.out = out
        self.inputs = inputs
        self.backward = backward


class Tape:
    """Ordered log of differentiable operations.

    Use as a context manager; nested tapes are allowed and only the
    innermost one records.
    """

    def __init__(self):
        self.records: list[_Record] = []

    def __enter__(self) -> "Tape":
        _active_tapes.append(self)
        return self

    def __exit__(self, *exc) -> None:
        _active_tapes.remove(self)

    def __len__(self) -> int:
        return len(self.records)

    def backward(self, loss: Tensor, grad: np.ndarray | None = None) -> None:
        """Propagate d(loss)/d(.) to every requires_grad tensor on the tape.

        Gradients are accumulated into ``.grad`` (callers zero them between
        steps). The tape is cleared afterwards.
        """
        if grad is None:
            if loss.size != 1:
                raise ShapeError(f"backward needs a scalar loss, got shape {loss.shape}")
            grad = np.ones_like(loss.data)
        pending: dict[int, np.ndarray] = {id(loss): np.asarray(grad, dtype=loss.dtype)}
        for rec in reversed(self.records):
            g_out = pending.pop(id(rec.out), None)
            if g_out is None:
                continue
            rec.out.grad = g_out
            for inp, g in zip(rec.inputs, rec.backward(g_out)):
                if g is None or not inp.requires_grad:
                    continue
                key = id(inp)
                if key in pending:
                    pending[key] = pending[key] + g
                else:
                    pending[key] = g
        # whatever is left belongs to leaves (tensors not produced on this tape)
        leaves = {}
        for rec in self.records:
            for inp in rec.inputs:
                leaves[id(inp)] = inp
        leaves[id(loss)] = loss
        for key, g in pending.items():
            if key in leaves:
                _accumulate(leaves[key], g)
        self.records.clear()


def _accumulate(t: Tensor, g: np.ndarray) -> None:
    g = np.asarray(g, dtype=t.dtype).reshape(t.shape)
    t.grad = g.copy() if t.grad is None else t.grad + g


class no_grad:
    """Suspend recording on all active tapes."""

    def __enter__(self):
        self._saved = list(_active_tapes)
        _active_tapes.clear()

    def __exit__(self, *exc):
        _active_tapes.extend(self._saved)


def _record(out_data: np.ndarray, inputs: Sequence[Tensor], backward: Callable) -> Tensor:
    needs = any(t.requires_grad for t in inputs)
    out = Tensor(out_data, requires_grad=needs and bool(_active_tapes))
    if out.requires_grad:
        _active_tapes[-1].records.append(_Record(out, tuple(inputs), backward))
    return out


def _unbroadcast(g: np.ndarray, shape: tuple[int, ...]) -> np.ndarray:
    if g.shape == shape:
        return g
    ndiff = g.ndim - len(shape)
    if ndiff > 0:
        g = g.sum(axis=tuple(range(ndiff)))
    axes = tuple(i for i, n in enumerate(shape) if n == 1 and g.shape[i] != 1)
    if axes:
        g = g.sum(axis=axes, keepdims=True)
    return g


# ---------------------------------------------------------------- elementwise


def add(a, b) -> Tensor:
    a, b = _as_tensor(a), _as_tensor(b)
    sa, sb = a.shape, b.shape
    return _record(a.data + b.data, (a, b), lambda g: (_unbroadcast(g, sa), _unbroadcast(g, sb)))


def sub(a, b) -> Tensor:
    a, b = _as_tensor(a), _as_tensor(b)
    sa, sb = a.shape, b.shape
    return _record(a.data - b.data, (a, b), lambda g: (_unbroadcast(g, sa), _unbroadcast(-g, sb)))


def mul(a, b) -> Tensor:
    a, b = _as_tensor(a), _as_tensor(b)
    ad, bd = a.data, b.data
    return _record(
        ad * bd,
        (a, b),
        lambda g: (_unbroadcast(g * bd, ad.shape), _unbroadcast(g * ad, bd.shape)),
    )


def scale(a: Tensor, c: float) -> Tensor:
    """Multiply by a constant scalar."""
    c = float(c)
    return _record(a.data * c, (a,), lambda g: (g * c,))


def relu(a: Tensor) -> Tensor:
    mask = a.data > 0
    return _record(a.data * mask, (a,), lambda g: (g * mask,))


def sigmoid(a: Tensor) -> Tensor:
    x = a.data
    # split by sign so exp never overflows
    e = np.exp(-np.abs(x))
    y = np.where(x >= 0, 1.0 / (1.0 + e), e / (1.0 + e)).astype(x.dtype, copy=False)
    return _record(y, (a,), lambda g: (g * y * (1.0 - y),))


def tanh(a: Tensor) -> Tensor:
    y = np.tanh(a.data)
    return _record(y, (a,), lambda g: (g * (1.0 - y * y),))


_GELU_C = math.sqrt(2.0 / math.pi)


def gelu(a: Tensor) -> Tensor:
    """GELU, tanh approximation."""
    x = a.data
    inner = _GELU_C * (x + 0.044715 * (x * x * x))
    t = np.tanh(inner)
    y = 0.5 * x * (1.0 + t)

    def backward(g):
        dinner = _GELU_C * (1.0 + 3 * 0.044715 * x * x)
        return (g * (0.5 * (1.0 + t) + 0.5 * x * (1.0 - t * t) * dinner),)

    return _record(y, (a,), backward)


# ------------------------------------------------------------------- shapes


def reshape(a: Tensor, shape) -> Tensor:
    shape = tuple(shape)
    src = a.shape
    try:
        out = a.data.reshape(shape)
    except ValueError:
        raise ShapeError(f"cannot reshape {src} into {shape}") from None
    return _record(out, (a,), lambda g: (g.reshape(src),))


def transpose(a: Tensor, axes=None) -> Tensor:
    """Permute axes; default swaps the last two."""
    if axes is None:
        axes = list(range(a.data.ndim))
        axes[-2], axes[-1] = axes[-1], axes[-2]
    axes = tuple(axes)
    inv = tuple(np.argsort(axes))
    return _record(a.data.transpose(axes), (a,), lambda g: (g.transpose(inv),))


def getitem(a: Tensor, index) -> Tensor:
    src_shape, dtype = a.shape, a.dtype

    def backward(g):
        full = np.zeros(src_shape, dtype=dtype)
        np.add.at(full, index, g) if _has_fancy(index) else full.__setitem__(index, g)
        return (full,)

    return _record(a.data[index], (a,), backward)


def _has_fancy(index) -> bool:
    items = index if isinstance(index, tuple) else (index,)
    return any(isinstance(i, (list, np.ndarray)) for i in items)


def concat(tensors: Sequence[Tensor], axis: int = 0) -> Tensor:
    tensors = [_as_tensor(t) for t in tensors]
    sizes = [t.shape[axis] for t in tensors]
    splits = np.cumsum(sizes)[:-1]

    def backward(g):
        return tuple(np.split(g, splits, axis=axis))

    return _record(np.concatenate([t.data for t in tensors], axis=axis), tensors, backward)


def gather_rows(table: Tensor, idx) -> Tensor:
    """Embedding lookup: rows of a 2-D table selected by integer indices."""
    idx = np.asarray(idx, dtype=np.intp)
    shape, dtype = table.shape, table.dtype

    def backward(g):
        full = np.zeros(shape, dtype=dtype)
        np.add.at(full, idx.reshape(-1), g.reshape(-1, shape[1]))
        return (full,)

    return _record(table.data[idx], (table,), backward)


# -------------------------------------------------------------- reductions


def sum_all(a: Tensor) -> Tensor:
    shape = a.shape
    return _record(np.asarray(a.data.sum(), dtype=a.dtype), (a,), lambda g: (np.broadcast_to(g, shape),))


def mean(a: Tensor, axis=None, keepdims: bool = False) -> Tensor:
    shape = a.shape
    if axis is None:
        count = a.size
    else:
        axes = (axis,) if isinstance(axis, int) else tuple(axis)
        count = int(np.prod([shape[i] for i in axes]))
    out = a.data.mean(axis=axis, keepdims=keepdims)

    def backward(g):
        if axis is not None and not keepdims:
            g = np.expand_dims(g, axis)
        return (np.broadcast_to(g / count, shape),)

    return _record(np.asarray(out, dtype=a.dtype), (a,), backward)


# ------------------------------------------------------------------ linear


def matmul(a: Tensor, b: Tensor) -> Tensor:
    """Matrix product over the last two axes, with numpy batch broadcasting.

    A 2-D right operand is applied to every row of ``a`` as a single GEMM.
    """
    a, b = _as_tensor(a), _as_tensor(b)
    ad, bd = a.data, b.data
    if ad.ndim < 2 or bd.ndim < 2 or ad.shape[-1] != bd.shape[-2]:
        raise ShapeError(f"matmul dimension mismatch: {a.shape} @ {b.shape}")
    if bd.ndim == 2:
        k = ad.shape[-1]
        a2 = ad.reshape(-1, k)
        out = (a2 @ bd).reshape(ad.shape[:-1] + (bd.shape[1],))

        def backward(g):
            g2 = g.reshape(-1, bd.shape[1])
            return ((g2 @ bd.T).reshape(ad.shape), a2.T @ g2)

        return _record(out, (a, b), backward)

    out = np.matmul(ad, bd)

    def backward(g):
        ga = np.matmul(g, np.swapaxes(bd, -1, -2))
        gb = np.matmul(np.swapaxes(ad, -1, -2), g)
        return (_unbroadcast(ga, ad.shape), _unbroadcast(gb, bd.shape))

    return _record(out, (a, b), backward)


def linear(x: Tensor, w: Tensor, b: Tensor | None = None) -> Tensor:
    y = matmul(x, w)
    return y if b is None else add(y, b)


# ------------------------------------------------------------- normalizers


def softmax(a: Tensor, axis: int = -1) -> Tensor:
    x = a.data
    e = np.exp(x - x.max(axis=axis, keepdims=True))
    y = e / e.sum(axis=axis, keepdims=True)

    def backward(g):
        return (y * (g - (g * y).sum(axis=axis, keepdims=True)),)

    return _record(y, (a,), backward)


def layer_norm(x: Tensor, gamma: Tensor, beta: Tensor, eps: float = 1e-5) -> Tensor:
    """Normalize over the last axis with biased variance, then scale/shift."""
    xd = x.data
    d = xd.shape[-1]
    mu = xd.mean(axis=-1, keepdims=True)
    xc = xd - mu
    var = (xc * xc).mean(axis=-1, keepdims=True)
    inv = 1.0 / np.sqrt(var + eps)
    xhat = xc * inv
    out = xhat * gamma.data + beta.data

    def backward(g):
        gx_hat = g * gamma.data
        gx = inv / d * (d * gx_hat - gx_hat.sum(-1, keepdims=True) - xhat * (gx_hat * xhat).sum(-1, keepdims=True))
        lead = tuple(range(g.ndim - 1))
        return gx, (g * xhat).sum(axis=lead), g.sum(axis=lead)

    return _record(out, (x, gamma, beta), backward)


def cross_entropy_from_logits(logits: Tensor, labels) -> Tensor:
    """Mean negative log-likelihood of integer labels under softmax(logits)."""
    z = logits.data
    labels = np.asarray(labels, dtype=np.intp)
    if z.ndim != 2 or labels.shape != (z.shape[0],):
        raise ShapeError(f"logits {z.shape} and labels {labels.shape} disagree")
    n = z.shape[0]
    shifted = z - z.max(axis=1, keepdims=True)
    logsum = np.log(np.exp(shifted).sum(axis=1, keepdims=True))
    logp = shifted - logsum
    loss = -logp[np.arange(n), labels].mean()

    def backward(g):
        p = np.exp(logp)
        p[np.arange(n), labels] -= 1.0
        return (p * (g / n),)

    return _record(np.asarray(loss, dtype=z.dtype), (logits,), backward)


# ---------------------------------------------------------------- spatial


def _im2col(xp: np.ndarray, kh: int, kw: int) -> np.ndarray:
    # xp: padded (N, H+kh-1, W+kw-1, C) -> (N*H*W, kh*kw*C)
    win = np.lib.stride_tricks.sliding_window_view(xp, (kh, kw), axis=(1, 2))  # N,H,W,C,kh,kw
    n, h, w, c = win.shape[:4]
    return np.ascontiguousarray(win.transpose(0, 1, 2, 4, 5, 3)).reshape(n * h * w, kh * kw * c)


def _conv_nhwc(x: np.ndarray, w_hwio: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    kh, kw, c, o = w_hwio.shape
    n, h, wid, _ = x.shape
    xp = np.pad(x, ((0, 0), (kh // 2, kh // 2), (kw // 2, kw // 2), (0, 0)))
    cols = _im2col(xp, kh, kw)
    return (cols @ w_hwio.reshape(-1, o)).reshape(n, h, wid, o), cols


def conv2d(x: Tensor, w: Tensor, b: Tensor | None = None, channels_last: bool = False) -> Tensor:
    """Stride-1 convolution with zero 'same' padding (odd kernels).

    x: (N, C, H, W), or (N, H, W, C) with ``channels_last``;
    w: (O, C, kh, kw); b: (O,). The output uses the input's layout.
    """
    xd, wd = x.data, w.data
    c_axis = 3 if channels_last else 1
    if xd.ndim != 4 or wd.ndim != 4 or xd.shape[c_axis] != wd.shape[1]:
        raise ShapeError(f"conv2d shape mismatch: input {x.shape}, weight {w.shape}")
    if wd.shape[2] % 2 == 0 or wd.shape[3] % 2 == 0:
        raise ShapeError(f"conv2d needs odd kernel sizes, got {wd.shape[2:]}")
    o, c, kh, kw = wd.shape
    xh = xd if channels_last else xd.transpose(0, 2, 3, 1)
    w_hwio = wd.transpose(2, 3, 1, 0)
    out, cols = _conv_nhwc(xh, w_hwio)
    if b is not None:
        out += b.data
    x_needs = x.requires_grad

    def backward(g):
        gh = g if channels_last else g.transpose(0, 2, 3, 1)
        g2 = gh.reshape(-1, o)
        gw = (cols.T @ g2).reshape(kh, kw, c, o).transpose(3, 2, 0, 1)
        gx = None
        if x_needs:
            # correlation with the spatially flipped, channel-swapped kernel
            gx, _ = _conv_nhwc(np.ascontiguousarray(gh), np.ascontiguousarray(w_hwio[::-1, ::-1].transpose(0, 1, 3, 2)))
            if not channels_last:
                gx = gx.transpose(0, 3, 1, 2)
        if b is None:
            return gx, gw
        return gx, gw, g2.sum(axis=0)

    if not channels_last:
        out = out.transpose(0, 3, 1, 2)
    inputs = (x, w, b) if b is not None else (x, w)
    return _record(np.ascontiguousarray(out), inputs, backward)


def maxpool2d(x: Tensor, channels_last: bool = False) -> Tensor:
    """2x2 max pooling, stride 2; odd trailing rows/columns are dropped.

    Ties route the gradient to the first maximal element in row-major order.
    """
    xd = x.data
    if channels_last:
        n, h, w, c = xd.shape
    else:
        n, c, h, w = xd.shape
    h2, w2 = h // 2, w // 2
    if channels_last:
        xv = xd[:, : h2 * 2, : w2 * 2].reshape(n, h2, 2, w2, 2, c)
        ax_a, ax_b = 2, 4
    else:
        xv = xd[:, :, : h2 * 2, : w2 * 2].reshape(n, c, h2, 2, w2, 2)
        ax_a, ax_b = 3, 5
    out = xv.max(axis=(ax_a, ax_b))

    def pick(arr, a, b):
        idx = [slice(None)] * 6
        idx[ax_a], idx[ax_b] = a, b
        return arr[tuple(idx)]

    def backward(g):
        gv = np.zeros(xv.shape, dtype=xd.dtype)
        taken = np.zeros(out.shape, dtype=bool)
        for a in (0, 1):
            for b in (0, 1):
                m = (pick(xv, a, b) == out) & ~taken
                pick(gv, a, b)[...] = g * m
                taken |= m
        gx = np.zeros_like(xd)
        if channels_last:
            gx[:, : h2 * 2, : w2 * 2] = gv.reshape(n, h2 * 2, w2 * 2, c)
        else:
            gx[:, :, : h2 * 2, : w2 * 2] = gv.reshape(n, c, h2 * 2, w2 * 2)
        return (gx,)

    return _record(out, (x,), backward)


# ------------------------------------------------------- gradient checking


def numerical_gradient(fn: Callable[[], float], t: Tensor, step: float = 1e-5) -> np.ndarray:
    """Central finite differences of a scalar function w.r.t. ``t.data``."""
    flat = t.data.reshape(-1)
    grad = np.zeros(flat.shape, dtype=np.float64)
    for i in range(flat.size):
        orig = flat[i]
        flat[i] = orig + step
        f_plus = float(fn())
        flat[i] = orig - step
        f_minus = float(fn())
        flat[i] = orig
        grad[i] = (f_plus - f_minus) / (2 * step)
    return grad.reshape(t.shape)


def relative_error(analytic: np.ndarray, numeric: np.ndarray) -> float:
    """||a - n|| / max(||a||, ||n||), zero when both vanish."""
    diff = np.linalg.norm(np.asarray(analytic, np.float64) - numeric)
    denom = max(np.linalg.norm(analytic), np.linalg.norm(numeric))
    return 0.0 if denom == 0 else float(diff / denom)


def gradient_check(fn: Callable[[], Tensor], tensors: Sequence[Tensor], step: float = 1e-5) -> dict[str, float]:
    """Compare tape gradients of scalar ``fn()`` with finite differences.

    Returns a relative error per tensor (keyed by name or position).
    """
    for t in tensors:
        t.grad = None
        t.requires_grad = True
    with Tape() as tape:
        loss = fn()
    tape.backward(loss)
    analytic = [t.grad if t.grad is not None else np.zeros_like(t.data) for t in tensors]

    def value():
        with no_grad():
            return float(fn().data)

    errors = {}
    for i, (t, g) in enumerate(zip(tensors, analytic)):
        errors[t.name or str(i)] = relative_error(g, numerical_gradient(value, t, step))
    return errors
