"""WAV reading/writing and linear-interpolation resampling."""

from __future__ import annotations

import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

CANONICAL_RATE = 44100

WAVE_FORMAT_PCM = 0x0001
WAVE_FORMAT_IEEE_FLOAT = 0x0003
WAVE_FORMAT_EXTENSIBLE = 0xFFFE


class WavFormatError(ValueError):
    """The file is not a well-formed RIFF/WAVE file."""


class UnsupportedCodecError(WavFormatError):
    def __init__(self, tag: int, bits: int | None = None):
        detail = f"format tag 0x{tag:04X}" + (f" with {bits} bits/sample" if bits else "")
        super().__init__(f"unsupported WAV codec: {detail}")
        self.tag = tag


@dataclass(frozen=True, eq=False)
class AudioClip:
    """Mono float32 samples at an integer sample rate."""

    samples: np.ndarray
    sample_rate_hz: int

    def __post_init__(self):
        s = np.ascontiguousarray(self.samples, dtype=np.float32).reshape(-1)
        if s.size == 0:
            raise ValueError("AudioClip must contain at least one sample")
        if not np.all(np.isfinite(s)):
            raise ValueError("AudioClip samples must be finite")
        if int(self.sample_rate_hz) <= 0:
            raise ValueError(f"sample rate must be positive, got {self.sample_rate_hz}")
        object.__setattr__(self, "samples", s)
        object.__setattr__(self, "sample_rate_hz", int(self.sample_rate_hz))

    @property
    def duration_s(self) -> float:
        return self.samples.size / self.sample_rate_hz

    def __len__(self) -> int:
        return self.samples.size

    def __eq__(self, other) -> bool:
        if not isinstance(other, AudioClip):
            return NotImplemented
        return self.sample_rate_hz == other.sample_rate_hz and np.array_equal(self.samples, other.samples)


def read_wav(path) -> AudioClip:
    """Decode a PCM16 or float32 WAV file, averaging stereo down to mono."""
    path = Path(path)
    raw = path.read_bytes()
    if len(raw) < 12 or raw[:4] != b"RIFF" or raw[8:12] != b"WAVE":
        raise WavFormatError(f"{path}: not a RIFF/WAVE file")

    fmt = None
    data = None
    pos = 12
    while pos + 8 <= len(raw):
        cid, size = struct.unpack_from("<4sI", raw, pos)
        body = raw[pos + 8 : pos + 8 + size]
        if cid == b"fmt ":
            if size < 16:
                raise WavFormatError(f"{path}: fmt chunk too short ({size} bytes)")
            fmt = body
        elif cid == b"data":
            data = body
        pos += 8 + size + (size & 1)
    if fmt is None or data is None:
        raise WavFormatError(f"{path}: missing {'fmt' if fmt is None else 'data'} chunk")

    tag, channels, rate, _, block_align, bits = struct.unpack_from("<HHIIHH", fmt)
    if tag == WAVE_FORMAT_EXTENSIBLE and len(fmt) >= 26:
        tag = struct.unpack_from("<H", fmt, 24)[0]
    if channels not in (1, 2):
        raise WavFormatError(f"{path}: {channels} channels (only mono/stereo supported)")
    if rate <= 0:
        raise WavFormatError(f"{path}: invalid sample rate {rate}")

    if tag == WAVE_FORMAT_PCM and bits == 16:
        n = len(data) // 2
        x = np.frombuffer(data[: n * 2], dtype="<i2").astype(np.float32) / np.float32(32768.0)
    elif tag == WAVE_FORMAT_IEEE_FLOAT and bits == 32:
        n = len(data) // 4
        x = np.frombuffer(data[: n * 4], dtype="<f4").astype(np.float32)
    else:
        raise UnsupportedCodecError(tag, bits)

    x = x[: (x.size // channels) * channels].reshape(-1, channels)
    mono = x[:, 0] if channels == 1 else (x[:, 0] + x[:, 1]) * np.float32(0.5)
    if mono.size == 0:
        raise WavFormatError(f"{path}: no audio frames")
    return AudioClip(mono, rate)


def write_wav(clip: AudioClip, path) -> None:
    """Write ``clip`` as a mono IEEE float32 little-endian WAV."""
    path = Path(path)
    payload = clip.samples.astype("<f4").tobytes()
    rate = clip.sample_rate_hz
    fmt = struct.pack("<HHIIHHH", WAVE_FORMAT_IEEE_FLOAT, 1, rate, rate * 4, 4, 32, 0)
    fact = struct.pack("<I", clip.samples.size)
    body = b"WAVE" + _chunk(b"fmt ", fmt) + _chunk(b"fact", fact) + _chunk(b"data", payload)
    try:
        path.write_bytes(b"RIFF" + struct.pack("<I", len(body)) + body)
    except OSError as e:
        raise OSError(f"failed to write WAV to {path}: {e}") from e


def _chunk(cid: bytes, body: bytes) -> bytes:
    pad = b"\x00" if len(body) & 1 else b""
    return cid + struct.pack("<I", len(body)) + body + pad


def resample_linear(clip: AudioClip, target_hz: int) -> AudioClip:
    """Linear interpolation at positions ``i * src/target``, holding the last sample."""
    if target_hz <= 0:
        raise ValueError(f"target rate must be positive, got {target_hz}")
    src = clip.sample_rate_hz
    if target_hz == src:
        return AudioClip(clip.samples.copy(), src)
    n_out = -(-len(clip) * int(target_hz) // src)
    pos = np.arange(n_out, dtype=np.float64) * src / target_hz
    y = np.interp(pos, np.arange(len(clip), dtype=np.float64), clip.samples.astype(np.float64))
    return AudioClip(y, int(target_hz))
