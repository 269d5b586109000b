"""DRTR1 model checkpoints.

Layout (little-endian)::

    b"DRTR" | u8 version=1 | u8 arch id (1=vit, 2=cnn, 3=rnn)
    u32 config length | UTF-8 "section.key=value" lines
    u32 tensor count
    per tensor: u16 name length | UTF-8 name | u8 rank | rank x u32 dims | float32 data
"""

from __future__ import annotations

import struct
from pathlib import Path

import numpy as np

from .config import ConfigError, PipelineConfig, parse_pairs
from .model import Model
from .train import ARCH_IDS, build_model

MAGIC = b"DRTR"
VERSION = 1
ARCH_BY_ID = {v: k for k, v in ARCH_IDS.items()}


class CheckpointError(ValueError):
    pass


def checkpoint_bytes(model: Model, config: PipelineConfig | None = None) -> bytes:
    config = config or PipelineConfig()
    config = config.with_overrides({f"{model.arch}.{k}": _cfg_value(v) for k, v in model.config_dict().items()})
    blob = ("\n".join(config.to_lines()) + "\n").encode("utf-8")
    out = [MAGIC, struct.pack("<BB", VERSION, model.arch_id), struct.pack("<I", len(blob)), blob]
    out.append(struct.pack("<I", len(model.params)))
    for name, p in model.params.items():
        enc = name.encode("utf-8")
        out.append(struct.pack("<H", len(enc)) + enc)
        out.append(struct.pack("<B", p.data.ndim) + struct.pack(f"<{p.data.ndim}I", *p.shape))
        out.append(np.ascontiguousarray(p.data, dtype="<f4").tobytes())
    return b"".join(out)


def _cfg_value(v) -> str:
    if isinstance(v, (tuple, list)):
        return ",".join(str(x) for x in v)
    return str(v)


def save_checkpoint(model: Model, path, config: PipelineConfig | None = None) -> None:
    """Write ``model`` plus the pipeline config it was trained with."""
    Path(path).write_bytes(checkpoint_bytes(model, config))


def load_checkpoint(path, dtype=np.float32) -> tuple[Model, PipelineConfig]:
    raw = Path(path).read_bytes()
    return parse_checkpoint(raw, dtype, source=str(path))


def parse_checkpoint(raw: bytes, dtype=np.float32, source: str = "<bytes>") -> tuple[Model, PipelineConfig]:
    try:
        return _parse(raw, dtype, source)
    except struct.error as e:
        raise CheckpointError(f"{source}: truncated checkpoint ({e})") from None


def _parse(raw: bytes, dtype, source: str) -> tuple[Model, PipelineConfig]:
    if raw[:4] != MAGIC:
        raise CheckpointError(f"{source}: not a DRTR checkpoint")
    version, arch_id = struct.unpack_from("<BB", raw, 4)
    if version != VERSION:
        raise CheckpointError(f"{source}: unsupported checkpoint version {version}")
    if arch_id not in ARCH_BY_ID:
        raise CheckpointError(f"{source}: unknown architecture id {arch_id}")
    arch = ARCH_BY_ID[arch_id]
    (blob_len,) = struct.unpack_from("<I", raw, 6)
    pos = 10
    blob = raw[pos : pos + blob_len].decode("utf-8")
    pos += blob_len
    try:
        config = PipelineConfig().with_overrides(parse_pairs(blob, source))
    except ConfigError as e:
        raise CheckpointError(f"{source}: bad embedded config: {e}") from None

    (count,) = struct.unpack_from("<I", raw, pos)
    pos += 4
    state = {}
    for _ in range(count):
        (nlen,) = struct.unpack_from("<H", raw, pos)
        pos += 2
        name = raw[pos : pos + nlen].decode("utf-8")
        pos += nlen
        (rank,) = struct.unpack_from("<B", raw, pos)
        pos += 1
        dims = struct.unpack_from(f"<{rank}I", raw, pos)
        pos += 4 * rank
        n = int(np.prod(dims)) if rank else 1
        if pos + 4 * n > len(raw):
            raise CheckpointError(f"{source}: tensor '{name}' runs past end of file")
        state[name] = np.frombuffer(raw, dtype="<f4", count=n, offset=pos).reshape(dims)
        pos += 4 * n
    if pos != len(raw):
        raise CheckpointError(f"{source}: {len(raw) - pos} trailing bytes")

    model = build_model(arch, config.model_config(arch), seed=0, dtype=dtype)
    try:
        model.load_state_dict(state)
    except (KeyError, ValueError) as e:
        raise CheckpointError(f"{source}: parameters do not match config: {e}") from None
    return model, config
