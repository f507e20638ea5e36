"""Rule-based style transfer: spectrum-matching FIR plus loudness-matching
compressor threshold descent.

Stage one designs a 63-tap linear-phase FIR whose response is the ratio of
the smoothed average spectra (reference over input). Stage two lowers a
fixed-settings compressor threshold in 0.5 dB steps until the rendered
loudness is within 0.5 LU of the reference, or the threshold floor of
-80 dB is reached.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass

import numpy as np
from scipy import fft as sfft
from scipy.signal import firwin2, savgol_filter

from .audio_io import AudioBuffer, frame_signal, hann_window
from .effects import compressor_reference
from .objective import lufs_integrated
from .params import CompParams

SPECTRUM_WINDOW = 65536
SPECTRUM_HOP = 16384
SMOOTH_WINDOW = 1025
SMOOTH_ORDER = 2
SPECTRUM_FLOOR = 1e-8
N_TAPS = 63
GAIN_CLAMP_DB = 24.0
THRESHOLD_STEP_DB = 0.5
THRESHOLD_FLOOR_DB = -80.0
LUFS_TOLERANCE = 0.5

# During the descent every compressor setting except the threshold is fixed;
# makeup is chosen at run time to equalize loudness at threshold 0.
DESCENT_RATIO = 3.0
DESCENT_ATTACK_S = 0.005
DESCENT_RELEASE_S = 0.050
DESCENT_KNEE_DB = 6.0


@dataclass(frozen=True)
class BaselineReport:
    fir_taps: np.ndarray
    final_threshold_db: float
    iterations: int
    final_lufs_gap: float
    halted_on: str  # tolerance | floor

    def __post_init__(self):
        taps = np.asarray(self.fir_taps, dtype=np.float64)
        if taps.shape != (N_TAPS,):
            raise ValueError(f"expected {N_TAPS} FIR taps")
        if self.iterations < 0:
            raise ValueError("iterations must be nonnegative")
        if not THRESHOLD_FLOOR_DB <= self.final_threshold_db <= 0.0:
            raise ValueError("final threshold out of range")
        if self.halted_on not in ("tolerance", "floor"):
            raise ValueError(f"unknown halt reason {self.halted_on!r}")
        object.__setattr__(self, "fir_taps", taps)

    def to_json(self) -> str:
        return json.dumps(
            {
                "fir_taps": self.fir_taps.tolist(),
                "final_threshold_db": self.final_threshold_db,
                "iterations": self.iterations,
                "final_lufs_gap": self.final_lufs_gap,
                "halted_on": self.halted_on,
            },
            indent=2,
        )


def average_spectrum(x: AudioBuffer) -> np.ndarray:
    """Frame-averaged STFT magnitude (window 65536, hop 16384, Hann)."""
    frames = frame_signal(x.samples, SPECTRUM_WINDOW, SPECTRUM_HOP)
    mags = np.abs(sfft.rfft(frames * hann_window(SPECTRUM_WINDOW), axis=1))
    return np.mean(mags, axis=0)


def savgol_smooth(spec: np.ndarray) -> np.ndarray:
    """Savitzky-Golay smoothing (window 1025 bins, order 2), floored at 1e-8."""
    spec = np.asarray(spec, dtype=np.float64)
    if len(spec) <= SMOOTH_WINDOW:
        raise ValueError(f"spectrum must be longer than {SMOOTH_WINDOW} bins")
    smooth = savgol_filter(spec, SMOOTH_WINDOW, SMOOTH_ORDER, mode="interp")
    return np.maximum(smooth, SPECTRUM_FLOOR)


def design_match_fir(input_spec: np.ndarray, ref_spec: np.ndarray,
                     n_taps: int = N_TAPS) -> np.ndarray:
    """Linear-phase window-method FIR whose magnitude approximates
    ref_spec/input_spec, clamped to +-24 dB, sampled on an n_taps grid."""
    input_spec = np.asarray(input_spec, dtype=np.float64)
    ref_spec = np.asarray(ref_spec, dtype=np.float64)
    if input_spec.shape != ref_spec.shape:
        raise ValueError("spectra must have matching shapes")
    if np.any(input_spec <= 0.0) or np.any(ref_spec <= 0.0):
        raise ValueError("spectra must be strictly positive")
    clamp = 10.0 ** (GAIN_CLAMP_DB / 20.0)
    desired = np.clip(ref_spec / input_spec, 1.0 / clamp, clamp)
    grid = np.linspace(0.0, 1.0, n_taps)
    src = np.linspace(0.0, 1.0, len(desired))
    gains = np.interp(grid, src, desired)
    return firwin2(n_taps, grid, gains, window="hann")


def _apply_fir(x: AudioBuffer, taps: np.ndarray) -> AudioBuffer:
    """Filter and compensate the linear-phase group delay, keeping length."""
    delay = (len(taps) - 1) // 2
    y = np.convolve(x.samples, taps, mode="full")
    return AudioBuffer(y[delay : delay + len(x)], x.sample_rate)


def _descent_comp(threshold_db: float, makeup_db: float) -> CompParams:
    return CompParams(
        threshold_db=threshold_db,
        ratio=DESCENT_RATIO,
        attack_s=DESCENT_ATTACK_S,
        release_s=DESCENT_RELEASE_S,
        knee_db=DESCENT_KNEE_DB,
        makeup_db=makeup_db,
    )


def threshold_descent(
    x: AudioBuffer, ref: AudioBuffer, fir_taps: np.ndarray | None = None
) -> tuple[AudioBuffer, BaselineReport]:
    """Lower the compressor threshold from 0 dB in 0.5 dB steps until the
    rendered loudness is within 0.5 LU of the reference or -80 dB is hit."""
    ref_lufs = lufs_integrated(ref)
    if not math.isfinite(ref_lufs):
        raise ValueError("reference loudness unmeasurable")
    if fir_taps is None:
        taps = np.zeros(N_TAPS)
        taps[(N_TAPS - 1) // 2] = 1.0
        fir_taps = taps

    # Makeup equalizing loudness at threshold 0, so the descent starts from
    # the input's own level and only ever turns loudness down.
    base = compressor_reference(x, _descent_comp(0.0, 0.0))
    x_lufs = lufs_integrated(x)
    base_lufs = lufs_integrated(base)
    if not (math.isfinite(x_lufs) and math.isfinite(base_lufs)):
        raise ValueError("input loudness unmeasurable")
    makeup = min(max(x_lufs - base_lufs, 0.0), 12.0)

    threshold = 0.0
    iterations = 0
    while True:
        out = compressor_reference(x, _descent_comp(threshold, makeup))
        gap = abs(lufs_integrated(out) - ref_lufs)
        if gap < LUFS_TOLERANCE:
            halted = "tolerance"
            break
        if threshold <= THRESHOLD_FLOOR_DB:
            halted = "floor"
            break
        threshold -= THRESHOLD_STEP_DB
        iterations += 1
    report = BaselineReport(
        fir_taps=np.asarray(fir_taps, dtype=np.float64),
        final_threshold_db=threshold,
        iterations=iterations,
        final_lufs_gap=float(gap),
        halted_on=halted,
    )
    return out, report


def rb_style_transfer(x: AudioBuffer, ref: AudioBuffer) -> tuple[AudioBuffer, BaselineReport]:
    """Two-stage transfer: spectrum-matching FIR, then threshold descent."""
    in_spec = savgol_smooth(average_spectrum(x))
    ref_spec = savgol_smooth(average_spectrum(ref))
    taps = design_match_fir(in_spec, ref_spec)
    matched = _apply_fir(x, taps)
    out, report = threshold_descent(matched, ref, fir_taps=taps)
    return out, report
