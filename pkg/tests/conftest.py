import numpy as np
import pytest
import soundfile as sf

from src.config import TrainConfig
from src.data import make_toy_corpora
from src.features import SAMPLE_RATE

# Smallest geometry the networks accept; keeps a training step in the millisecond range.
TINY = {"width_mult": 1 / 64, "patch_frames": 16, "iterations": 3, "checkpoint_every": 2, "log_every": 1}


@pytest.fixture
def tiny_config():
    def make(**overrides) -> TrainConfig:
        return TrainConfig(**{**TINY, **overrides})

    return make


@pytest.fixture(scope="session")
def toy_corpora():
    return make_toy_corpora(0, patches=6, frames=24)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture
def write_tone(tmp_path):
    """Write a short voiced-like PCM16 WAV (harmonic comb) and return its path."""

    def make(name: str = "tone.wav", seconds: float = 0.5, f0: float = 140.0, **kwargs):
        t = np.arange(int(seconds * SAMPLE_RATE)) / SAMPLE_RATE
        samples = sum(0.3 / k * np.sin(2 * np.pi * k * f0 * t) for k in range(1, 12))
        path = tmp_path / name
        path.parent.mkdir(parents=True, exist_ok=True)
        sf.write(str(path), samples, kwargs.get("samplerate", SAMPLE_RATE), subtype=kwargs.get("subtype", "PCM_16"))
        return path

    return make
