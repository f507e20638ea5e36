"""Shared fixtures and signal generators for the test suite."""

import numpy as np
import pytest
from scipy.signal import lfilter

from fxstyle.audio_io import AudioBuffer


def speechlike(duration_s: float, fs: int = 24000, seed: int = 0,
               peak: float = 0.5) -> AudioBuffer:
    """Pink-ish noise with slow amplitude modulation.

    A stand-in for recorded speech/music: broadband, non-stationary level,
    no silence long enough to trip loudness gating.
    """
    rng = np.random.default_rng(seed)
    n = int(round(duration_s * fs))
    t = np.arange(n) / fs
    carrier = lfilter([1.0], [1.0, -0.95], rng.standard_normal(n))
    env = 0.5 + 0.5 * np.abs(np.sin(2 * np.pi * 1.3 * t)
                             * np.sin(2 * np.pi * 0.37 * t + 1.0))
    x = carrier * env
    x *= peak / np.max(np.abs(x))
    return AudioBuffer(x, fs)


def sine(freq_hz: float, duration_s: float, fs: int = 24000,
         amplitude: float = 0.5, phase: float = 0.0) -> AudioBuffer:
    n = int(round(duration_s * fs))
    t = np.arange(n) / fs
    return AudioBuffer(amplitude * np.sin(2 * np.pi * freq_hz * t + phase), fs)


@pytest.fixture
def rng():
    return np.random.default_rng(0)
