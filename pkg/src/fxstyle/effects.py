"""The 6-band parametric equalizer and dynamic range compressor.

Each effect exists in two forms: a time-domain reference (cascaded biquad
recursions, branching compressor ballistics) and a frequency-sampled form
whose every step is smooth in the control parameters. A downward expander
reusing the compressor parameters supports the data generator.
"""

from __future__ import annotations

import math

import numpy as np
from scipy import fft as sfft

from .audio_io import AudioBuffer
from .biquad import BiquadCoeffs, apply_biquad_td, biquad_response, design_biquad
from .params import SHELF_Q, CompParams, EffectParams, EqParams

LEVEL_EPS = 1e-8  # floor before the log-domain level detector


def eq_biquads(eq: EqParams, fs: float) -> list[BiquadCoeffs]:
    sections = [design_biquad("low_shelf", eq.low_shelf.gain_db, eq.low_shelf.cutoff_hz, SHELF_Q, fs)]
    for band in eq.peaks:
        sections.append(design_biquad("peaking", band.gain_db, band.center_hz, band.q, fs))
    sections.append(design_biquad("high_shelf", eq.high_shelf.gain_db, eq.high_shelf.cutoff_hz, SHELF_Q, fs))
    return sections


def eq_response(eq: EqParams, n_bins: int, fs: float) -> np.ndarray:
    """Complex equalizer response on n_bins linearly spaced frequencies in
    [0, pi]: the product of the per-band numerator/denominator DFT ratios."""
    if n_bins < 2:
        raise ValueError("n_bins must be at least 2")
    w = np.linspace(0.0, np.pi, n_bins)
    h = np.ones(n_bins, dtype=np.complex128)
    for c in eq_biquads(eq, fs):
        h *= biquad_response(c, w)
    return h


def apply_eq_td(x: np.ndarray, eq: EqParams, fs: float) -> np.ndarray:
    for c in eq_biquads(eq, fs):
        x = apply_biquad_td(x, c)
    return x


def fft_size(n: int) -> int:
    """Zero-padded transform length: next power of two at or above 2N-1."""
    m = max(2, 2 * n - 1)
    return 1 << (m - 1).bit_length()


def fir_filter_freq(x: np.ndarray, response_fn) -> np.ndarray:
    """Filter by spectral multiplication: zero-pad to F = 2^ceil(log2(2N-1)),
    multiply the one-sided transform by H over F/2+1 bins, invert, truncate.

    ``response_fn(n_bins)`` returns the complex response on n_bins linearly
    spaced frequencies in [0, pi].
    """
    n = len(x)
    F = fft_size(n)
    X = sfft.rfft(x, F)
    H = response_fn(F // 2 + 1)
    return sfft.irfft(X * H, F)[:n]


def static_compress(x_db: np.ndarray, threshold_db: float, ratio: float, knee_db: float) -> np.ndarray:
    """Three-segment soft-knee compression curve in the dB domain."""
    x_db = np.asarray(x_db, dtype=np.float64)
    T, R, W = threshold_db, ratio, knee_db
    d = x_db - T
    if W <= 0.0:
        return np.where(2.0 * d > 0.0, T + d / R, x_db)
    below = 2.0 * d < -W
    above = 2.0 * d > W
    k = d + W / 2.0
    knee = x_db + (1.0 / R - 1.0) * k * k / (2.0 * W)
    return np.where(below, x_db, np.where(above, T + d / R, knee))


def gain_computer(x_db: np.ndarray, comp: CompParams, mode: str = "compress") -> np.ndarray:
    """Static dB-domain curve mapping input level to target output level.

    Compression uses the three-segment soft-knee curve; expansion applies a
    hard-knee downward slope of ``ratio`` below the threshold.
    """
    x_db = np.asarray(x_db, dtype=np.float64)
    if mode == "expand":
        T, R = comp.threshold_db, comp.ratio
        return np.where(x_db < T, T + (x_db - T) * R, x_db)
    if mode != "compress":
        raise ValueError(f"unknown mode {mode!r}")
    return static_compress(x_db, comp.threshold_db, comp.ratio, comp.knee_db)


try:
    from numba import njit as _njit
except ImportError:  # pragma: no cover
    _njit = None


def _smooth_branching_py(x_l: np.ndarray, alpha_a: float, alpha_r: float) -> np.ndarray:
    y = np.empty_like(x_l)
    prev = 0.0
    for n in range(len(x_l)):
        a = alpha_a if x_l[n] > prev else alpha_r
        prev = a * prev + (1.0 - a) * x_l[n]
        y[n] = prev
    return y


if _njit is not None:
    _smooth_branching = _njit(cache=True)(_smooth_branching_py)
else:  # pragma: no cover
    _smooth_branching = _smooth_branching_py


def time_constant(tau_s: float, fs: float) -> float:
    """One-pole smoothing coefficient for a time constant in seconds."""
    return math.exp(-1.0 / (tau_s * fs))


def combined_time_constant(comp: CompParams, fs: float) -> float:
    """Single attack/release coefficient: geometric mean of the two times."""
    return time_constant(math.sqrt(comp.attack_s * comp.release_s), fs)


def level_db(x: np.ndarray) -> np.ndarray:
    return 20.0 * np.log10(np.abs(x) + LEVEL_EPS)


def compressor_reference(x: AudioBuffer, comp: CompParams, mode: str = "compress") -> AudioBuffer:
    """Feedforward compressor with branching attack/release ballistics."""
    x_db = level_db(x.samples)
    y_g = gain_computer(x_db, comp, mode=mode)
    x_l = x_db - y_g
    alpha_a = time_constant(comp.attack_s, x.sample_rate)
    alpha_r = time_constant(comp.release_s, x.sample_rate)
    y_l = _smooth_branching(x_l, alpha_a, alpha_r)
    gain = 10.0 ** ((comp.makeup_db - y_l) / 20.0)
    return AudioBuffer(x.samples * gain, x.sample_rate)


def one_pole_response(alpha: float, n_bins: int) -> np.ndarray:
    w = np.linspace(0.0, np.pi, n_bins)
    return (1.0 - alpha) / (1.0 - alpha * np.exp(-1j * w))


def compressor_diff(x: AudioBuffer, comp: CompParams) -> AudioBuffer:
    """Compressor with a single combined time constant, smoothed by spectral
    multiplication; every step is smooth in the parameters."""
    x_db = level_db(x.samples)
    y_g = gain_computer(x_db, comp, mode="compress")
    x_l = x_db - y_g
    alpha = combined_time_constant(comp, x.sample_rate)
    y_l = fir_filter_freq(x_l, lambda n: one_pole_response(alpha, n))
    gain = 10.0 ** ((comp.makeup_db - y_l) / 20.0)
    return AudioBuffer(x.samples * gain, x.sample_rate)


def process_chain(x: AudioBuffer, p: EffectParams, path: str = "reference") -> AudioBuffer:
    """EQ then compressor, on the time-domain reference path or the
    frequency-sampled differentiable path."""
    if path == "reference":
        y = apply_eq_td(x.samples, p.eq, x.sample_rate)
        return compressor_reference(AudioBuffer(y, x.sample_rate), p.comp)
    if path == "differentiable":
        y = fir_filter_freq(
            x.samples, lambda n: eq_response(p.eq, n, x.sample_rate)
        )
        return compressor_diff(AudioBuffer(y, x.sample_rate), p.comp)
    raise ValueError(f"unknown path {path!r}")


def expander_reference(x: AudioBuffer, comp: CompParams) -> AudioBuffer:
    """Downward expander (data generation): slope ``ratio`` below threshold."""
    return compressor_reference(x, comp, mode="expand")
