"""Audio-domain training loss and the evaluation metric suite.

The training objective is a multi-resolution spectral loss plus a weighted
time-domain mean absolute error. Metrics: MR-STFT, log-mel distance,
spectral centroid error, framewise RMS error and integrated-loudness error
(K-weighted, gated).
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy import fft as sfft

from .audio_io import AudioBuffer, frame_signal, hann_window
from scipy.signal import lfilter

MRSTFT_WINDOWS = (32, 128, 512, 2048, 8192, 32768)
TIME_WEIGHT = 100.0
LOG_MAG_FLOOR = 1e-7
RMS_FRAME = 1024
RMS_EPS = 1e-8
SCE_WINDOW = 4096
SCE_HOP = 2048
MSD_WINDOW = 65536
MSD_HOP = 32768
MSD_BANDS = 128

UNMEASURABLE = -math.inf  # loudness sentinel when every block is gated


@dataclass(frozen=True)
class LossBreakdown:
    freq: float
    time: float

    @property
    def overall(self) -> float:
        return self.freq + TIME_WEIGHT * self.time


@dataclass(frozen=True)
class MetricReport:
    mrstft: float
    msd: float
    sce: float
    rms_err: float
    lufs_err: float

    def as_dict(self) -> dict:
        return {
            "mrstft": self.mrstft,
            "msd": self.msd,
            "sce": self.sce,
            "rms_err": self.rms_err,
            "lufs_err": self.lufs_err,
        }


def _check_equal_length(a: AudioBuffer, b: AudioBuffer) -> None:
    if len(a) != len(b):
        raise ValueError(f"length mismatch: {len(a)} vs {len(b)}")


def mae_time(a: AudioBuffer, b: AudioBuffer) -> float:
    _check_equal_length(a, b)
    return float(np.mean(np.abs(a.samples - b.samples)))


def _stft_mags(x: np.ndarray, window: int) -> np.ndarray:
    frames = frame_signal(x, window, window // 2) * hann_window(window)
    return np.abs(sfft.rfft(frames, axis=1))


def mrstft(a: AudioBuffer, b: AudioBuffer) -> float:
    """Sum over six resolutions of mean |.|A|-|B|.| plus mean log-magnitude
    distance (Hann windows, hop = window/2, log floor 1e-7)."""
    _check_equal_length(a, b)
    if len(a) < MRSTFT_WINDOWS[0]:
        raise ValueError("signals shorter than the smallest analysis window")
    total = 0.0
    for w in MRSTFT_WINDOWS:
        ma = _stft_mags(a.samples, w)
        mb = _stft_mags(b.samples, w)
        total += float(np.mean(np.abs(ma - mb)))
        total += float(
            np.mean(np.abs(np.log(np.maximum(ma, LOG_MAG_FLOOR))
                           - np.log(np.maximum(mb, LOG_MAG_FLOOR))))
        )
    return total


def overall_loss(a: AudioBuffer, b: AudioBuffer) -> LossBreakdown:
    return LossBreakdown(freq=mrstft(a, b), time=mae_time(a, b))


def loss_precomputed(
    a_samples: np.ndarray, b_samples: np.ndarray, ref_mags: list[np.ndarray]
) -> LossBreakdown:
    """Forward-only loss against a reference whose spectrogram magnitudes
    were computed once with :func:`ref_stft_mags`."""
    time = float(np.mean(np.abs(a_samples - b_samples)))
    freq = 0.0
    for w, mb in zip(MRSTFT_WINDOWS, ref_mags):
        ma = _stft_mags(a_samples, w)
        freq += float(np.mean(np.abs(ma - mb)))
        freq += float(
            np.mean(np.abs(np.log(np.maximum(ma, LOG_MAG_FLOOR))
                           - np.log(np.maximum(mb, LOG_MAG_FLOOR))))
        )
    return LossBreakdown(freq=freq, time=time)


# -- gradient of the loss with respect to the first argument ---------------

def _rfft_adjoint(g: np.ndarray, n: int) -> np.ndarray:
    """Adjoint of x -> rfft(x, n) as a real-linear map, for real loss
    gradients g given per one-sided bin (dL/dRe + i dL/dIm)."""
    gh = g.copy()
    gh[1:-1] *= 0.5
    if n % 2 == 1:
        gh[-1] *= 0.5
    return sfft.irfft(gh, n) * n


def ref_stft_mags(b: AudioBuffer) -> list[np.ndarray]:
    """Per-resolution magnitude spectrograms of a fixed reference, for reuse
    across many loss evaluations against the same target."""
    return [_stft_mags(b.samples, w) for w in MRSTFT_WINDOWS]


def loss_grad_wrt_first(
    a_samples: np.ndarray, b: AudioBuffer, ref_mags: list[np.ndarray] | None = None
) -> tuple[LossBreakdown, np.ndarray]:
    """Loss breakdown plus d(overall)/d(a) for fixed reference b."""
    n = len(a_samples)
    if n != len(b):
        raise ValueError("length mismatch")
    grad = np.zeros(n)

    diff = a_samples - b.samples
    time = float(np.mean(np.abs(diff)))
    grad += TIME_WEIGHT * np.sign(diff) / n

    freq = 0.0
    for iw, w in enumerate(MRSTFT_WINDOWS):
        win = hann_window(w)
        fa = frame_signal(a_samples, w, w // 2) * win
        A = sfft.rfft(fa, axis=1)
        ma = np.abs(A)
        mb = ref_mags[iw] if ref_mags is not None else _stft_mags(b.samples, w)
        m = ma.size
        dmag = np.abs(ma - mb)
        freq += float(np.mean(dmag))
        la = np.log(np.maximum(ma, LOG_MAG_FLOOR))
        lb = np.log(np.maximum(mb, LOG_MAG_FLOOR))
        freq += float(np.mean(np.abs(la - lb)))
        # d loss / d|A|
        g_mag = np.sign(ma - mb) / m
        g_mag += np.where(ma > LOG_MAG_FLOOR, np.sign(la - lb) / (np.maximum(ma, LOG_MAG_FLOOR) * m), 0.0)
        # d|A|/dA, then adjoint of the windowed framed rfft
        safe = np.where(ma > 0.0, ma, 1.0)
        g_frames = _rfft_adjoint_frames(g_mag * A / safe * (ma > 0.0), w) * win
        _overlap_add(grad, g_frames, w // 2, n)
    return LossBreakdown(freq=freq, time=time), grad


def _rfft_adjoint_frames(g: np.ndarray, n: int) -> np.ndarray:
    gh = g.copy()
    gh[:, 1:-1] *= 0.5
    if n % 2 == 1:
        gh[:, -1] *= 0.5
    return sfft.irfft(gh, n, axis=1) * n


def _overlap_add(dest: np.ndarray, frames: np.ndarray, hop: int, n: int) -> None:
    w = frames.shape[1]
    for t in range(frames.shape[0]):
        start = t * hop
        stop = min(start + w, n)
        dest[start:stop] += frames[t, : stop - start]


# -- metrics ----------------------------------------------------------------

def metric_msd(a: AudioBuffer, b: AudioBuffer) -> float:
    """Mean absolute log-mel distance (128 bands, window 65536, hop 32768)."""
    _check_equal_length(a, b)
    if a.sample_rate != b.sample_rate:
        raise ValueError("sample rates differ")
    fb = _mel_filterbank(a.sample_rate)
    la = _log_mel(a.samples, fb)
    lb = _log_mel(b.samples, fb)
    return float(np.mean(np.abs(la - lb)))


def _log_mel(x: np.ndarray, fb: np.ndarray) -> np.ndarray:
    mags = _stft_mags(x, MSD_WINDOW)
    return np.log(np.maximum(mags @ fb.T, LOG_MAG_FLOOR))


def _hz_to_mel(f):
    return 2595.0 * np.log10(1.0 + np.asarray(f) / 700.0)


def _mel_to_hz(m):
    return 700.0 * (10.0 ** (np.asarray(m) / 2595.0) - 1.0)


def _mel_filterbank(fs: float, n_bands: int = MSD_BANDS, fmin: float = 20.0,
                    fmax_frac: float = 0.45, window: int = MSD_WINDOW) -> np.ndarray:
    """Triangular filterbank, area-normalized per band."""
    fmax = fmax_frac * fs
    n_bins = window // 2 + 1
    bin_hz = np.arange(n_bins) * fs / window
    edges = _mel_to_hz(np.linspace(_hz_to_mel(fmin), _hz_to_mel(fmax), n_bands + 2))
    fb = np.zeros((n_bands, n_bins))
    for i in range(n_bands):
        lo, mid, hi = edges[i], edges[i + 1], edges[i + 2]
        up = (bin_hz - lo) / (mid - lo)
        down = (hi - bin_hz) / (hi - mid)
        tri = np.maximum(0.0, np.minimum(up, down))
        area = tri.sum()
        if area > 0:
            fb[i] = tri / area
    return fb


def spectral_centroid(a: AudioBuffer) -> float:
    """Magnitude-weighted mean frequency averaged over frames; 0 for silence."""
    mags = _stft_mags(a.samples, SCE_WINDOW)[:, : SCE_WINDOW // 2 + 1]
    freqs = np.arange(mags.shape[1]) * a.sample_rate / SCE_WINDOW
    sums = mags.sum(axis=1)
    cents = np.where(sums > 0.0, (mags * freqs).sum(axis=1) / np.where(sums > 0, sums, 1.0), 0.0)
    return float(np.mean(cents))


def metric_sce(a: AudioBuffer, b: AudioBuffer) -> float:
    _check_equal_length(a, b)
    return abs(spectral_centroid(a) - spectral_centroid(b))


def _frame_rms_db(x: np.ndarray) -> np.ndarray:
    n_frames = max(1, len(x) // RMS_FRAME)
    head = x[: n_frames * RMS_FRAME].reshape(n_frames, RMS_FRAME)
    rms = np.sqrt(np.mean(head**2, axis=1))
    return 20.0 * np.log10(rms + RMS_EPS)


def metric_rms(a: AudioBuffer, b: AudioBuffer) -> float:
    """Mean framewise absolute RMS-level difference in dB (1024-sample frames)."""
    _check_equal_length(a, b)
    return float(np.mean(np.abs(_frame_rms_db(a.samples) - _frame_rms_db(b.samples))))


def rms_level_db(a: AudioBuffer) -> float:
    """Mean framewise RMS level in dB; the non-intrusive dynamics feature."""
    return float(np.mean(_frame_rms_db(a.samples)))


# -- integrated loudness (K-weighted, gated) --------------------------------

# Analog prototypes of the two K-weighting stages; digital coefficients at
# any sample rate come from a bilinear transform with tan() pre-warping. At
# 48 kHz these reproduce the tabulated reference coefficients exactly.
_KW_SHELF_FREQ = 1681.9744509555319
_KW_SHELF_GAIN_DB = 3.999843853973347
_KW_SHELF_Q = 0.7071752369554196
_KW_SHELF_VB_EXP = 0.4996667741545416
_KW_HIGHPASS_FREQ = 38.13547087602444
_KW_HIGHPASS_Q = 0.5003270373238773
_LOUDNESS_OFFSET = -0.691
_ABS_GATE_LUFS = -70.0
_REL_GATE_LU = -10.0
_BLOCK_S = 0.400
_BLOCK_OVERLAP = 0.75


def _k_weighting_sections(fs: float):
    k = math.tan(math.pi * _KW_SHELF_FREQ / fs)
    q = _KW_SHELF_Q
    vh = 10.0 ** (_KW_SHELF_GAIN_DB / 20.0)
    vb = vh**_KW_SHELF_VB_EXP
    a0 = 1.0 + k / q + k * k
    shelf_b = np.array([vh + vb * k / q + k * k, 2.0 * (k * k - vh), vh - vb * k / q + k * k]) / a0
    shelf_a = np.array([1.0, 2.0 * (k * k - 1.0) / a0, (1.0 - k / q + k * k) / a0])

    k = math.tan(math.pi * _KW_HIGHPASS_FREQ / fs)
    q = _KW_HIGHPASS_Q
    a0 = 1.0 + k / q + k * k
    hp_b = np.array([1.0, -2.0, 1.0])
    hp_a = np.array([1.0, 2.0 * (k * k - 1.0) / a0, (1.0 - k / q + k * k) / a0])
    return [(shelf_b, shelf_a), (hp_b, hp_a)]


def lufs_integrated(a: AudioBuffer) -> float:
    """Integrated loudness: K-weighting, 400 ms blocks with 75% overlap,
    -70 LUFS absolute gate then -10 LU relative gate. Returns ``-inf``
    when every block is gated."""
    block = int(round(_BLOCK_S * a.sample_rate))
    if len(a) < block:
        raise ValueError("need at least 400 ms of audio to measure loudness")
    y = a.samples
    for b, acoef in _k_weighting_sections(a.sample_rate):
        y = lfilter(b, acoef, y)
    hop = int(round(block * (1.0 - _BLOCK_OVERLAP)))
    n_blocks = (len(y) - block) // hop + 1
    idx = hop * np.arange(n_blocks)[:, None] + np.arange(block)[None, :]
    z = np.mean(y[idx] ** 2, axis=1)
    with np.errstate(divide="ignore"):
        block_lufs = _LOUDNESS_OFFSET + 10.0 * np.log10(z)
    keep = block_lufs > _ABS_GATE_LUFS
    if not np.any(keep):
        return UNMEASURABLE
    rel_threshold = _LOUDNESS_OFFSET + 10.0 * np.log10(np.mean(z[keep])) + _REL_GATE_LU
    keep &= block_lufs > rel_threshold
    if not np.any(keep):
        return UNMEASURABLE
    return _LOUDNESS_OFFSET + 10.0 * np.log10(np.mean(z[keep]))


def metric_lufs(a: AudioBuffer, b: AudioBuffer) -> float:
    la, lb = lufs_integrated(a), lufs_integrated(b)
    if not math.isfinite(la) or not math.isfinite(lb):
        raise ValueError("loudness unmeasurable (all blocks gated)")
    return abs(la - lb)


def metric_report(a: AudioBuffer, b: AudioBuffer) -> MetricReport:
    """Full-reference suite for equal-length signals at the same rate."""
    return MetricReport(
        mrstft=mrstft(a, b),
        msd=metric_msd(a, b),
        sce=metric_sce(a, b),
        rms_err=metric_rms(a, b),
        lufs_err=metric_lufs(a, b),
    )
