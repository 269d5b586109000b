import contextlib
from dataclasses import dataclass

import numpy as np
import pytest

from drumscribe.data import DrumClass, LabeledExample, file_seed, split, stack, synth_hit
from drumscribe.dsp import featurize

from oracles import rule_classify

CORPUS_SEED = 7
CORPUS_PER_CLASS = 90  # 60 train + 30 val after the default 1/3 split

_acceptance_key = pytest.StashKey[dict]()


@dataclass
class Corpus:
    examples: list
    rule_pred: np.ndarray
    train: tuple
    val: tuple


@pytest.fixture(scope="session")
def corpus():
    """The seeded synthetic corpus used by the heavy tests, featurized once."""
    examples, rule = [], []
    for cls in DrumClass:
        for i in range(CORPUS_PER_CLASS):
            clip = synth_hit(cls, file_seed(CORPUS_SEED, cls, i))
            examples.append(LabeledExample(featurize(clip), cls, f"{cls.dirname}/{i:04d}"))
            rule.append(rule_classify(clip.samples, clip.sample_rate_hz))
    tr, va = split(examples, 1 / 3, seed=CORPUS_SEED)
    return Corpus(examples, np.array(rule), stack(tr), stack(va))


@pytest.fixture
def criterion(request):
    """``with criterion(n, title) as note:`` records PASS/FAIL for the summary.

    ``note`` is a list; strings appended to it are shown next to the result.
    """

    @contextlib.contextmanager
    def run(number, title):
        note = []
        passed = False
        try:
            yield note
            passed = True
        finally:
            request.config.stash.setdefault(_acceptance_key, {})[number] = (title, passed, "; ".join(note))

    return run


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    results = config.stash.get(_acceptance_key, None)
    if not results:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(results):
        title, passed, detail = results[number]
        status = "PASS" if passed else "FAIL"
        terminalreporter.write_line(f"[{status}] {number}. {title}" + (f" ({detail})" if detail else ""))
