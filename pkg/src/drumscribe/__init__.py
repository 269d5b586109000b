"""Drum-hit classification from Mel power spectrograms with a small vision transformer,
plus CNN and GRU baselines, all built on a numpy reverse-mode tensor library."""

from .audio_io import AudioClip, read_wav, resample_linear, write_wav
from .data import DrumClass
from .dsp import DspConfig, MelSpectrogram, featurize, mel_spectrogram, to_network_input
from .estimators import DrumClassifier, MelFeaturizer
from .model import VitConfig, VitModel, init_vit
from .train import EvalReport, TrainConfig, evaluate, train

__version__ = "0.1.0"
