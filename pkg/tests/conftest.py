import numpy as np
import pytest

from config.settings import reset_config
from hmm.params import HmmParams
from hmm.filtering import reset_zero_probability_events
from hmm.sampling import sample_sequences
from tests.oracles import random_hmm


@pytest.fixture(autouse=True)
def quiet_runtime(monkeypatch):
    """No progress bars; fresh config and zero-probability counter per test."""
    monkeypatch.setenv("HMMFORGE_PROGRESS", "false")
    monkeypatch.delenv("HMMFORGE_SEED", raising=False)
    monkeypatch.delenv("HMMFORGE_JOBS", raising=False)
    reset_config()
    reset_zero_probability_events()
    yield
    reset_config()


@pytest.fixture
def make_hmm():
    return random_hmm


@pytest.fixture
def two_state_hmm() -> HmmParams:
    """Sticky, well-separated 2-state, 3-symbol chain."""
    return HmmParams(
        pi=np.array([0.6, 0.4]),
        A=np.array([[0.9, 0.1], [0.2, 0.8]]),
        C=np.array([[0.7, 0.2, 0.1], [0.1, 0.3, 0.6]]),
    )


@pytest.fixture
def small_dataset(two_state_hmm):
    return sample_sequences(two_state_hmm, 40, 20, seed=3)
