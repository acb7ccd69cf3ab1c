import numpy as np
import pytest

from emobranch.audio import AudioSignal

SR = 16000


@pytest.fixture
def tone_200hz():
    t = np.arange(2 * SR) / SR
    return AudioSignal(0.7 * np.sin(2 * np.pi * 200.0 * t), SR)


@pytest.fixture
def tone_1khz_1s():
    t = np.arange(SR) / SR
    return AudioSignal(0.5 * np.sin(2 * np.pi * 1000.0 * t), SR)


@pytest.fixture
def white_noise_2s():
    rng = np.random.default_rng(1234)
    return AudioSignal(0.3 * rng.standard_normal(2 * SR), SR)
