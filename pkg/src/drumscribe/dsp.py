"""Spectral front end: radix-2 FFT, Hann-windowed STFT and Mel power spectrograms.

The defaults reproduce the usual drum-transcription preprocessing:
2048-sample Hann frames with a 512-sample hop, projected onto 128 Slaney
Mel bands between 20 Hz and 20 kHz at 44.1 kHz.
"""

from __future__ import annotations

import functools
import math
import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .audio_io import AudioClip, resample_linear


class DspConfigError(ValueError):
    pass


@dataclass(frozen=True)
class DspConfig:
    n_fft: int = 2048
    hop: int = 512
    n_mels: int = 128
    f_min: float = 20.0
    f_max: float = 20000.0
    sample_rate: int = 44100
    top_db: float = 80.0

    def __post_init__(self):
        if self.n_fft < 2 or self.n_fft & (self.n_fft - 1):
            raise DspConfigError(f"n_fft must be a power of two, got {self.n_fft}")
        if not 0 < self.hop <= self.n_fft:
            raise DspConfigError(f"hop must be in (0, n_fft], got {self.hop}")
        if self.n_mels < 1:
            raise DspConfigError("n_mels must be positive")
        if not 0 <= self.f_min < self.f_max:
            raise DspConfigError(f"need 0 <= f_min < f_max, got {self.f_min}, {self.f_max}")
        if self.f_max > self.sample_rate / 2:
            raise DspConfigError(f"f_max {self.f_max} Hz exceeds Nyquist {self.sample_rate / 2} Hz")
        if self.top_db <= 0:
            raise DspConfigError("top_db must be positive")


# ---------------------------------------------------------------------- FFT


@functools.lru_cache(maxsize=32)
def _fft_plan(n: int) -> tuple[np.ndarray, np.ndarray]:
    bits = n.bit_length() - 1
    idx = np.arange(n)
    rev = np.zeros(n, dtype=np.intp)
    for b in range(bits):
        rev |= ((idx >> b) & 1) << (bits - 1 - b)
    twiddle = np.exp(-2j * np.pi * np.arange(n // 2) / n)
    return rev, twiddle


def dft_radix2(x, inverse: bool = False) -> np.ndarray:
    """Iterative decimation-in-time FFT along the last axis.

    The inverse transform is scaled by 1/N so that it undoes the forward one.
    Leading axes are treated as a batch.
    """
    x = np.asarray(x, dtype=np.complex128)
    n = x.shape[-1]
    if n < 1 or n & (n - 1):
        raise ValueError(f"radix-2 transform needs a power-of-two length, got {n}")
    if inverse:
        x = np.conj(x)
    rev, twiddle = _fft_plan(n)
    y = x[..., rev]  # fresh array; butterflies below run in place
    batch = y.shape[:-1]
    m = 2
    while m <= n:
        half = m // 2
        blocks = y.reshape(batch + (n // m, m))
        odd = blocks[..., half:] * twiddle[:: n // m]
        blocks[..., half:] = blocks[..., :half]
        blocks[..., half:] -= odd
        blocks[..., :half] += odd
        m *= 2
    if inverse:
        y = np.conj(y) / n
    return y


def hann_window(n: int) -> np.ndarray:
    """Periodic Hann window: 0.5 * (1 - cos(2 pi i / n))."""
    if n < 2:
        raise ValueError(f"window length must be >= 2, got {n}")
    return 0.5 * (1.0 - np.cos(2.0 * np.pi * np.arange(n) / n))


def stft_power(clip: AudioClip, cfg: DspConfig = DspConfig()) -> np.ndarray:
    """Centered STFT power, shape ``(n_fft // 2 + 1, 1 + len // hop)``."""
    if len(clip) < 1:
        raise ValueError("cannot transform an empty clip")
    if clip.sample_rate_hz != cfg.sample_rate:
        raise ValueError(f"clip is at {clip.sample_rate_hz} Hz, config expects {cfg.sample_rate} Hz; resample first")
    x = clip.samples.astype(np.float64)
    pad = cfg.n_fft // 2
    padded = np.pad(x, pad, mode="reflect") if x.size > 1 else np.pad(x, pad, mode="edge")
    n_frames = 1 + x.size // cfg.hop
    frames = np.lib.stride_tricks.sliding_window_view(padded, cfg.n_fft)[:: cfg.hop][:n_frames]
    spec = dft_radix2(frames * hann_window(cfg.n_fft))[:, : cfg.n_fft // 2 + 1]
    return np.ascontiguousarray((spec.real**2 + spec.imag**2).T)


# ---------------------------------------------------------------------- Mel

_F_SP = 200.0 / 3
_MIN_LOG_HZ = 1000.0
_MIN_LOG_MEL = _MIN_LOG_HZ / _F_SP
_LOGSTEP = math.log(6.4) / 27.0


def hz_to_mel(f):
    """Slaney Mel scale: linear below 1 kHz, logarithmic above."""
    f = np.asarray(f, dtype=np.float64)
    lin = f / _F_SP
    log = _MIN_LOG_MEL + np.log(np.maximum(f, _MIN_LOG_HZ) / _MIN_LOG_HZ) / _LOGSTEP
    return np.where(f >= _MIN_LOG_HZ, log, lin)


def mel_to_hz(m):
    m = np.asarray(m, dtype=np.float64)
    lin = _F_SP * m
    log = _MIN_LOG_HZ * np.exp(_LOGSTEP * (np.maximum(m, _MIN_LOG_MEL) - _MIN_LOG_MEL))
    return np.where(m >= _MIN_LOG_MEL, log, lin)


@dataclass(frozen=True, eq=False)
class MelFilterbank:
    weights: np.ndarray  # (n_mels, n_fft // 2 + 1)
    edges_hz: np.ndarray  # (n_mels + 2,) breakpoints


@functools.lru_cache(maxsize=8)
def mel_filterbank(cfg: DspConfig = DspConfig()) -> MelFilterbank:
    """Area-normalized triangular filters on Slaney Mel breakpoints."""
    if cfg.f_max > cfg.sample_rate / 2:
        raise DspConfigError(f"f_max {cfg.f_max} Hz exceeds Nyquist")
    bins = np.arange(cfg.n_fft // 2 + 1) * cfg.sample_rate / cfg.n_fft
    edges = mel_to_hz(np.linspace(hz_to_mel(cfg.f_min), hz_to_mel(cfg.f_max), cfg.n_mels + 2))
    lo, mid, hi = edges[:-2, None], edges[1:-1, None], edges[2:, None]
    rising = (bins - lo) / (mid - lo)
    falling = (hi - bins) / (hi - mid)
    w = np.maximum(0.0, np.minimum(rising, falling)) * (2.0 / (hi - lo))
    w.setflags(write=False)
    return MelFilterbank(w, edges)


@dataclass(frozen=True, eq=False)
class MelSpectrogram:
    values: np.ndarray  # (n_mels, n_frames), nonnegative power
    config: DspConfig = field(default_factory=DspConfig)

    @property
    def n_frames(self) -> int:
        return self.values.shape[1]


def mel_spectrogram(clip: AudioClip, cfg: DspConfig = DspConfig()) -> MelSpectrogram:
    power = stft_power(clip, cfg)
    return MelSpectrogram(mel_filterbank(cfg).weights @ power, cfg)


AMIN = 1e-10


def normalized_db(m: MelSpectrogram) -> np.ndarray:
    """dB relative to the clip maximum, floored at -top_db, mapped to [0, 1].

    A silent spectrogram (max power at or below the dB floor) maps to zeros.
    """
    v = m.values
    top_db = m.config.top_db
    if v.size == 0 or v.max() <= AMIN:
        return np.zeros(v.shape)
    s = 10.0 * np.log10(np.maximum(v, AMIN))
    s = np.maximum(s - s.max(), -top_db)
    return (s + top_db) / top_db


def fit_width(x: np.ndarray, width: int) -> np.ndarray:
    """Center-crop or right-pad with zeros along the frame axis."""
    n = x.shape[1]
    if n >= width:
        start = (n - width) // 2
        return x[:, start : start + width]
    out = np.zeros((x.shape[0], width), dtype=x.dtype)
    out[:, :n] = x
    return out


def to_network_input(m: MelSpectrogram, width: int = 128) -> np.ndarray:
    """The fixed-size ``(n_mels, width)`` float32 matrix fed to every classifier."""
    return np.ascontiguousarray(fit_width(normalized_db(m), width), dtype=np.float32)


def featurize(clip: AudioClip, cfg: DspConfig = DspConfig(), width: int = 128) -> np.ndarray:
    """Resample to the configured rate, then compute the network input."""
    if clip.sample_rate_hz != cfg.sample_rate:
        clip = resample_linear(clip, cfg.sample_rate)
    return to_network_input(mel_spectrogram(clip, cfg), width)


# ----------------------------------------------------------- MSPC1 files

MSPC_MAGIC = b"MSPC"
MSPC_VERSION = 1


class SpectrogramFileError(ValueError):
    pass


def write_mspc(matrix: np.ndarray, path) -> None:
    """Store a 2-D matrix as MSPC1 (float32 little-endian, row-major)."""
    a = np.asarray(matrix)
    if a.ndim != 2:
        raise ValueError(f"MSPC1 stores 2-D matrices, got shape {a.shape}")
    header = MSPC_MAGIC + struct.pack("<BII", MSPC_VERSION, a.shape[0], a.shape[1])
    Path(path).write_bytes(header + np.ascontiguousarray(a, dtype="<f4").tobytes())


def read_mspc(path) -> np.ndarray:
    raw = Path(path).read_bytes()
    if len(raw) < 13 or raw[:4] != MSPC_MAGIC:
        raise SpectrogramFileError(f"{path}: bad MSPC magic")
    version, rows, cols = struct.unpack_from("<BII", raw, 4)
    if version != MSPC_VERSION:
        raise SpectrogramFileError(f"{path}: unsupported MSPC version {version}")
    expected = 13 + rows * cols * 4
    if len(raw) != expected:
        raise SpectrogramFileError(f"{path}: expected {expected} bytes, found {len(raw)}")
    return np.frombuffer(raw, dtype="<f4", offset=13).reshape(rows, cols).astype(np.float32)


def write_pgm(m: MelSpectrogram, path) -> None:
    """8-bit binary PGM of the normalized spectrogram; row 0 is the highest band."""
    img = np.round(255.0 * normalized_db(m)[::-1]).astype(np.uint8)
    h, w = img.shape
    Path(path).write_bytes(f"P5\n{w} {h}\n255\n".encode("ascii") + img.tobytes())
