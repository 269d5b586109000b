"""scikit-learn compatible wrappers.

``MelFeaturizer`` turns audio into fixed-size spectrogram inputs and
``DrumClassifier`` trains any of the three architectures on them, so the
pair composes in a ``Pipeline``::

    pipe = make_pipeline(MelFeaturizer(), DrumClassifier(arch="vit", epochs=20))
    pipe.fit(clips, labels)
"""

from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator, ClassifierMixin, TransformerMixin
from sklearn.utils.validation import check_array, check_is_fitted, check_X_y

from .audio_io import AudioClip
from .dsp import DspConfig, featurize
from .train import TrainConfig, build_model, train


class MelFeaturizer(TransformerMixin, BaseEstimator):
    """Audio clips -> (n_mels, width) normalized Mel inputs.

    ``X`` is a sequence of :class:`AudioClip` objects or 1-D sample arrays
    at ``sample_rate``. Stateless; ``fit`` only validates parameters.
    """

    def __init__(self, sample_rate: int = 44100, n_fft: int = 2048, hop: int = 512, n_mels: int = 128,
                 f_min: float = 20.0, f_max: float = 20000.0, top_db: float = 80.0, width: int = 128):
        self.sample_rate = sample_rate
        self.n_fft = n_fft
        self.hop = hop
        self.n_mels = n_mels
        self.f_min = f_min
        self.f_max = f_max
        self.top_db = top_db
        self.width = width

    def _config(self) -> DspConfig:
        return DspConfig(self.n_fft, self.hop, self.n_mels, self.f_min, self.f_max, self.sample_rate, self.top_db)

    def fit(self, X, y=None):
        self.config_ = self._config()
        return self

    def transform(self, X) -> np.ndarray:
        cfg = getattr(self, "config_", None) or self._config()
        out = []
        for item in X:
            clip = item if isinstance(item, AudioClip) else AudioClip(np.asarray(item, dtype=np.float32), self.sample_rate)
            out.append(featurize(clip, cfg, self.width))
        return np.stack(out)


class DrumClassifier(ClassifierMixin, BaseEstimator):
    """Spectrogram classifier backed by the ViT, CNN or GRU networks.

    ``X`` has shape (N, rows, cols) or (N, rows * cols) with ``input_shape``
    given. Labels are integer class codes.
    """

    def __init__(self, arch: str = "vit", lr: float = 3e-4, batch_size: int = 16, epochs: int = 30,
                 seed: int = 0, augment: bool = False, model_config=None, input_shape=(128, 128)):
        self.arch = arch
        self.lr = lr
        self.batch_size = batch_size
        self.epochs = epochs
        self.seed = seed
        self.augment = augment
        self.model_config = model_config
        self.input_shape = input_shape

    def _as_images(self, X) -> np.ndarray:
        X = check_array(X, allow_nd=True, dtype=np.float32)
        if X.ndim == 2:
            X = X.reshape((len(X),) + tuple(self.input_shape))
        if X.ndim != 3:
            raise ValueError(f"expected (N, rows, cols) inputs, got shape {X.shape}")
        return X

    def _train_config(self) -> TrainConfig:
        return TrainConfig(lr=self.lr, batch_size=self.batch_size, epochs=self.epochs, seed=self.seed,
                           arch=self.arch, augment=self.augment)

    def fit(self, X, y, X_val=None, y_val=None):
        X, y = check_X_y(X, y, allow_nd=True, dtype=np.float32)
        X = self._as_images(X)
        y = np.asarray(y, dtype=np.int64)
        val = None if X_val is None else (self._as_images(X_val), np.asarray(y_val, dtype=np.int64))
        model = build_model(self.arch, self.model_config, seed=self.seed)
        self.classes_ = np.arange(model.config.num_classes)
        result = train((X, y), val, self._train_config(), model=model)
        self.model_ = result.model
        self.training_log_ = result.log
        self.best_epoch_ = result.best_epoch
        return self

    def decision_function(self, X) -> np.ndarray:
        check_is_fitted(self, "model_")
        return self.model_.predict_logits(self._as_images(X))

    def predict_proba(self, X) -> np.ndarray:
        z = self.decision_function(X).astype(np.float64)
        z -= z.max(axis=1, keepdims=True)
        p = np.exp(z)
        return p / p.sum(axis=1, keepdims=True)

    def predict(self, X) -> np.ndarray:
        z = self.decision_function(X)
        return self.classes_[np.argmax(z, axis=1)]
