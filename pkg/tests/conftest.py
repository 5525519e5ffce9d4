import os
import sys

import numpy as np
import pytest
from hypothesis import settings

sys.path.insert(0, os.path.dirname(__file__))

from musepers.synth import SynthSpec, generate_synthetic_corpus  # noqa: E402

settings.register_profile("default", max_examples=60, deadline=None)
settings.load_profile("default")


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture(scope="session")
def tiny_corpus():
    """6 short subjects with two small modalities and no ECG."""
    spec = SynthSpec(n_train=3, n_dev=1, n_test=2, duration_s=150.0,
                     modality_dims=(("audio", 4), ("video", 3)), with_ecg=False)
    return generate_synthetic_corpus(spec, seed=3)


def pytest_terminal_summary(terminalreporter):
    mod = sys.modules.get("test_acceptance")
    results = getattr(mod, "RESULTS", None)
    if not results:
        return
    terminalreporter.section("acceptance criteria")
    order = sorted(results, key=lambda k: (not k.isdigit(), int(k) if k.isdigit() else 0, k))
    for key in order:
        terminalreporter.write_line(results[key])
