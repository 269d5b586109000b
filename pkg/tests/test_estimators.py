import numpy as np
import pytest
from sklearn.base import clone
from sklearn.exceptions import NotFittedError
from sklearn.pipeline import make_pipeline

from drumscribe.data import DrumClass, file_seed, synth_hit
from drumscribe.dsp import featurize
from drumscribe.estimators import DrumClassifier, MelFeaturizer
from drumscribe.model import VitConfig

TINY = VitConfig(patch_size=32, embed_dim=16, depth=1, num_heads=2)


@pytest.fixture(scope="module")
def clips():
    clips = [synth_hit(c, file_seed(9, c, i)) for c in DrumClass for i in range(2)]
    return clips, np.repeat(np.arange(7), 2)


def test_params_and_clone():
    clf = DrumClassifier(arch="cnn", epochs=3, lr=1e-3)
    params = clf.get_params()
    assert params["arch"] == "cnn" and params["epochs"] == 3 and params["lr"] == 1e-3
    c = clone(clf)
    assert c.get_params() == params and c is not clf
    assert MelFeaturizer(width=64).get_params()["width"] == 64


def test_featurizer_matches_function(clips):
    x = MelFeaturizer().fit_transform(clips[0][:3])
    assert x.shape == (3, 128, 128)
    np.testing.assert_array_equal(x[1], featurize(clips[0][1]))
    raw = MelFeaturizer().transform([clips[0][0].samples])
    np.testing.assert_array_equal(raw[0], x[0])


def test_unfitted_classifier_raises():
    with pytest.raises(NotFittedError):
        DrumClassifier().predict(np.zeros((1, 128, 128)))


def test_pipeline_fit_predict(clips):
    pipe = make_pipeline(MelFeaturizer(), DrumClassifier(arch="vit", epochs=40, lr=1e-3, model_config=TINY))
    pipe.fit(*clips)
    clf = pipe[-1]
    assert list(clf.classes_) == list(range(7))
    assert len(clf.training_log_) == 41 and 0 <= clf.best_epoch_ <= 40
    proba = pipe.predict_proba(clips[0])
    assert proba.shape == (14, 7)
    np.testing.assert_allclose(proba.sum(axis=1), 1.0, atol=1e-9)
    assert pipe.score(*clips) == 1.0


def test_flat_inputs_are_reshaped(clips):
    x = MelFeaturizer().transform(clips[0])
    clf = DrumClassifier(arch="rnn", epochs=1).fit(x.reshape(14, -1), clips[1])
    np.testing.assert_array_equal(clf.decision_function(x.reshape(14, -1)), clf.decision_function(x))
