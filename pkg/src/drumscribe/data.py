"""Drum class taxonomy, a deterministic drum-hit synthesizer, and dataset I/O."""

from __future__ import annotations

import enum
import logging
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .audio_io import CANONICAL_RATE, AudioClip, read_wav, write_wav
from .dsp import dft_radix2

logger = logging.getLogger(__name__)

CLIP_SECONDS = 1.5


class DatasetError(ValueError):
    pass


class DrumClass(enum.IntEnum):
    Tom = 0
    Kick = 1
    Snare = 2
    ClosedHat = 3
    Ride = 4
    Crash = 5
    OpenHat = 6

    @property
    def dirname(self) -> str:
        return _DIRNAMES[self]

    @classmethod
    def from_dirname(cls, name: str) -> "DrumClass":
        for c, d in _DIRNAMES.items():
            if d == name:
                return c
        raise KeyError(name)


_DIRNAMES = {
    DrumClass.Tom: "tom",
    DrumClass.Kick: "kick",
    DrumClass.Snare: "snare",
    DrumClass.ClosedHat: "closed_hat",
    DrumClass.Ride: "ride",
    DrumClass.Crash: "crash",
    DrumClass.OpenHat: "open_hat",
}

CLASS_NAMES = [c.name for c in DrumClass]


@dataclass(frozen=True)
class LabeledExample:
    input: np.ndarray
    label: DrumClass
    source: str = ""


# ------------------------------------------------------------- synthesis


@dataclass(frozen=True)
class SynthParams:
    """Nominal recipe for one class plus the jitter applied per hit.

    ``tone_hz`` is (start, end) of an exponential pitch glide with time
    constant ``sweep_tau``; a None entry disables that component.
    """

    tone_hz: tuple[float, float] | None = None
    sweep_tau: float = 0.03
    tone_tau: float = 0.1
    noise_band_hz: tuple[float, float] | None = None
    noise_tau: float = 0.1
    tone_mix: float = 1.0
    noise_mix: float = 1.0
    gain_jitter_db: float = 3.0
    pitch_jitter: float = 0.10
    decay_jitter: float = 0.20

    def __post_init__(self):
        if self.tone_hz is None and self.noise_band_hz is None:
            raise ValueError("a recipe needs a tone, a noise band, or both")
        if self.tone_tau <= 0 or self.noise_tau <= 0 or self.sweep_tau <= 0:
            raise ValueError("decay constants must be positive")
        if self.noise_band_hz is not None:
            lo, hi = self.noise_band_hz
            if not 0 < lo < hi < CANONICAL_RATE / 2:
                raise ValueError(f"noise band {self.noise_band_hz} outside (0, {CANONICAL_RATE / 2})")


RECIPES: dict[DrumClass, SynthParams] = {
    DrumClass.Kick: SynthParams(tone_hz=(120.0, 50.0), sweep_tau=0.03, tone_tau=0.15),
    DrumClass.Tom: SynthParams(tone_hz=(160.0, 120.0), sweep_tau=0.1, tone_tau=0.2),
    DrumClass.Snare: SynthParams(
        tone_hz=(180.0, 180.0), tone_tau=0.08, noise_band_hz=(1000.0, 8000.0), noise_tau=0.12, tone_mix=0.8
    ),
    DrumClass.ClosedHat: SynthParams(noise_band_hz=(6000.0, 20000.0), noise_tau=0.04),
    DrumClass.OpenHat: SynthParams(noise_band_hz=(6000.0, 20000.0), noise_tau=0.3),
    DrumClass.Ride: SynthParams(
        tone_hz=(5000.0, 5000.0), tone_tau=0.8, noise_band_hz=(4000.0, 20000.0), noise_tau=0.8, tone_mix=0.5
    ),
    DrumClass.Crash: SynthParams(noise_band_hz=(2000.0, 16000.0), noise_tau=1.0),
}


def band_noise(n: int, lo_hz: float, hi_hz: float, rng: np.random.Generator, rate: int = CANONICAL_RATE) -> np.ndarray:
    """White noise with every FFT bin outside [lo, hi] zeroed; unit RMS."""
    size = 1 << (n - 1).bit_length()
    spec = dft_radix2(rng.standard_normal(size))
    freqs = np.abs(np.fft.fftfreq(size, d=1.0 / rate))
    spec[(freqs < lo_hz) | (freqs > hi_hz)] = 0.0
    x = dft_radix2(spec, inverse=True).real[:n]
    return x / np.sqrt(np.mean(x * x))


def synth_hit(cls: DrumClass, seed: int, seconds: float = CLIP_SECONDS, rate: int = CANONICAL_RATE) -> AudioClip:
    """Render one jittered hit of ``cls``; identical (cls, seed) gives identical audio."""
    cls = DrumClass(cls)
    p = RECIPES[cls]
    rng = np.random.default_rng([int(seed), int(cls)])
    pitch = 1.0 + rng.uniform(-p.pitch_jitter, p.pitch_jitter)
    decay = 1.0 + rng.uniform(-p.decay_jitter, p.decay_jitter)
    gains = 10.0 ** (rng.uniform(-p.gain_jitter_db, p.gain_jitter_db, size=2) / 20.0)

    n = int(round(seconds * rate))
    t = np.arange(n) / rate
    y = np.zeros(n)
    if p.tone_hz is not None:
        f0, f1 = p.tone_hz[0] * pitch, p.tone_hz[1] * pitch
        freq = f1 + (f0 - f1) * np.exp(-t / p.sweep_tau)
        phase = 2.0 * np.pi * np.cumsum(freq) / rate
        y += p.tone_mix * gains[0] * np.sin(phase) * np.exp(-t / (p.tone_tau * decay))
    if p.noise_band_hz is not None:
        lo = p.noise_band_hz[0] * pitch
        hi = min(p.noise_band_hz[1] * pitch, 0.499 * rate)
        noise = band_noise(n, lo, hi, rng, rate)
        y += p.noise_mix * gains[1] * noise * np.exp(-t / (p.noise_tau * decay))
    y *= 0.9 / np.max(np.abs(y))
    return AudioClip(y, rate)


def file_seed(master_seed: int, cls: DrumClass, index: int) -> int:
    """Per-file seed derived only from (master seed, class, index)."""
    return int(np.random.SeedSequence([int(master_seed), int(cls), int(index)]).generate_state(1)[0])


def generate_dataset(per_class: int, seed: int, out_dir) -> dict[DrumClass, int]:
    """Write ``out_dir/<class>/<index>.wav`` for every class; returns counts."""
    out = Path(out_dir)
    counts = {}
    for cls in DrumClass:
        d = out / cls.dirname
        d.mkdir(parents=True, exist_ok=True)
        for i in range(per_class):
            write_wav(synth_hit(cls, file_seed(seed, cls, i)), d / f"{i:04d}.wav")
        counts[cls] = per_class
    return counts


def synth_examples(per_class: int, seed: int, featurizer) -> list[LabeledExample]:
    """In-memory equivalent of generate_dataset followed by featurization."""
    out = []
    for cls in DrumClass:
        for i in range(per_class):
            clip = synth_hit(cls, file_seed(seed, cls, i))
            out.append(LabeledExample(featurizer(clip), cls, f"{cls.dirname}/{i:04d}"))
    return out


# ---------------------------------------------------------------- loading


def _class_dirs(root: Path) -> list[tuple[DrumClass, Path]]:
    if not root.is_dir():
        raise DatasetError(f"{root} is not a directory")
    found = []
    for d in sorted(p for p in root.iterdir() if p.is_dir()):
        try:
            found.append((DrumClass.from_dirname(d.name), d))
        except KeyError:
            logger.warning("skipping unrecognized class directory %s", d)
    return sorted(found, key=lambda cd: cd[0].dirname)


def load_dataset(root) -> list[tuple[AudioClip, DrumClass]]:
    """Read every WAV under the class subdirectories, ordered by class then filename."""
    out = []
    for cls, d in _class_dirs(Path(root)):
        files = sorted(d.glob("*.wav"))
        if not files:
            raise DatasetError(f"class directory '{cls.dirname}' contains no WAV files")
        out.extend((read_wav(f), cls) for f in files)
    return out


def load_examples(root, featurizer=None) -> list[LabeledExample]:
    """Load a class-directory tree of MSPC1 spectrograms or WAV files.

    MSPC1 files (``*.mspc``) are used as-is; otherwise WAVs are passed
    through ``featurizer``.
    """
    from .dsp import read_mspc

    root = Path(root)
    out = []
    for cls, d in _class_dirs(root):
        spc = sorted(d.glob("*.mspc"))
        if spc:
            out.extend(LabeledExample(read_mspc(f), cls, f"{cls.dirname}/{f.name}") for f in spc)
            continue
        wavs = sorted(d.glob("*.wav"))
        if not wavs:
            raise DatasetError(f"class directory '{cls.dirname}' contains no WAV or MSPC files")
        if featurizer is None:
            raise DatasetError("WAV input needs a featurizer")
        out.extend(LabeledExample(featurizer(read_wav(f)), cls, f"{cls.dirname}/{f.name}") for f in wavs)
    if not out:
        raise DatasetError(f"no class directories found under {root}")
    return out


def split(examples: list, val_fraction: float = 1 / 3, seed: int = 0) -> tuple[list, list]:
    """Stratified seeded split into (train, val).

    Each class contributes ``round(count * val_fraction)`` items to val.
    Works on LabeledExample lists or (clip, class) pairs.
    """
    if not 0 <= val_fraction < 1:
        raise ValueError(f"val_fraction must be in [0, 1), got {val_fraction}")
    rng = np.random.default_rng(seed)
    by_class: dict[int, list[int]] = {}
    for i, ex in enumerate(examples):
        by_class.setdefault(int(_label(ex)), []).append(i)
    train_idx, val_idx = [], []
    for c in sorted(by_class):
        idx = np.array(by_class[c])
        rng.shuffle(idx)
        k = int(round(len(idx) * val_fraction))
        val_idx.extend(idx[:k].tolist())
        train_idx.extend(idx[k:].tolist())
    return [examples[i] for i in sorted(train_idx)], [examples[i] for i in sorted(val_idx)]


def _label(ex) -> DrumClass:
    return ex.label if isinstance(ex, LabeledExample) else ex[1]


def stack(examples: list[LabeledExample]) -> tuple[np.ndarray, np.ndarray]:
    """(N, rows, cols) float32 inputs and (N,) int labels."""
    x = np.stack([e.input for e in examples]).astype(np.float32)
    y = np.array([int(e.label) for e in examples], dtype=np.int64)
    return x, y
