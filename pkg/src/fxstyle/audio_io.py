"""Signal containers, WAV persistence, resampling and windowed spectral analysis.

Samples are kept as float64 internally; 32-bit floats appear only at file
boundaries. All functions are pure and thread-safe.
"""

from __future__ import annotations

import math
import struct
from dataclasses import dataclass, field
from fractions import Fraction
from pathlib import Path

import numpy as np
from scipy.signal import upfirdn


class WavFormatError(ValueError):
    """Raised for malformed or unsupported WAV files."""


@dataclass(frozen=True)
class AudioBuffer:
    """Mono audio signal. Full scale is +-1.0, sample_rate in Hz."""

    samples: np.ndarray
    sample_rate: int

    def __post_init__(self):
        samples = np.asarray(self.samples, dtype=np.float64)
        if samples.ndim != 1:
            raise ValueError("AudioBuffer holds a single channel")
        if not np.all(np.isfinite(samples)):
            raise ValueError("samples must be finite")
        if int(self.sample_rate) <= 0:
            raise ValueError("sample_rate must be positive")
        object.__setattr__(self, "samples", samples)
        object.__setattr__(self, "sample_rate", int(self.sample_rate))

    def __len__(self) -> int:
        return len(self.samples)

    @property
    def duration(self) -> float:
        return len(self.samples) / self.sample_rate


@dataclass(frozen=True)
class Spectrogram:
    """Complex one-sided STFT frames, frame-major: shape (n_frames, window/2+1)."""

    frames: np.ndarray
    window_size: int
    hop_size: int
    sample_rate: int

    def __post_init__(self):
        if self.frames.ndim != 2 or self.frames.shape[1] != self.window_size // 2 + 1:
            raise ValueError("frames must have window_size/2 + 1 bins")
        if self.hop_size > self.window_size:
            raise ValueError("hop_size must not exceed window_size")

    @property
    def magnitudes(self) -> np.ndarray:
        return np.abs(self.frames)


_RIFF_PCM = 1
_RIFF_FLOAT = 3
_RIFF_EXTENSIBLE = 0xFFFE


def read_wav(path) -> AudioBuffer:
    """Read a PCM16/PCM24/float32 RIFF WAV file, downmixing to mono by
    channel averaging. Integer samples are scaled to [-1, 1)."""
    raw = Path(path).read_bytes()
    if len(raw) < 12 or raw[:4] != b"RIFF" or raw[8:12] != b"WAVE":
        raise WavFormatError(f"{path}: not a RIFF/WAVE file")

    fmt = None
    data = None
    pos = 12
    while pos + 8 <= len(raw):
        chunk_id = raw[pos : pos + 4]
        (chunk_size,) = struct.unpack_from("<I", raw, pos + 4)
        body = raw[pos + 8 : pos + 8 + chunk_size]
        if chunk_id == b"fmt ":
            fmt = body
        elif chunk_id == b"data":
            data = body
        pos += 8 + chunk_size + (chunk_size & 1)

    if fmt is None or len(fmt) < 16:
        raise WavFormatError(f"{path}: missing fmt chunk")
    if data is None or len(data) == 0:
        raise WavFormatError(f"{path}: empty or missing data chunk")

    audio_format, n_channels, sample_rate, _, _, bits = struct.unpack_from(
        "<HHIIHH", fmt, 0
    )
    if audio_format == _RIFF_EXTENSIBLE and len(fmt) >= 26:
        (audio_format,) = struct.unpack_from("<H", fmt, 24)
    if n_channels < 1:
        raise WavFormatError(f"{path}: invalid channel count")

    if audio_format == _RIFF_PCM and bits == 16:
        x = np.frombuffer(data, dtype="<i2").astype(np.float64) / 32768.0
    elif audio_format == _RIFF_PCM and bits == 24:
        b = np.frombuffer(data, dtype=np.uint8)
        b = b[: len(b) - len(b) % 3].reshape(-1, 3)
        ints = (
            b[:, 0].astype(np.int32)
            | (b[:, 1].astype(np.int32) << 8)
            | (b[:, 2].astype(np.int32) << 16)
        )
        ints = np.where(ints >= 1 << 23, ints - (1 << 24), ints)
        x = ints.astype(np.float64) / float(1 << 23)
    elif audio_format == _RIFF_FLOAT and bits == 32:
        x = np.frombuffer(data, dtype="<f4").astype(np.float64)
    else:
        raise WavFormatError(f"{path}: unsupported encoding (format {audio_format}, {bits}-bit)")

    n_frames = len(x) // n_channels
    x = x[: n_frames * n_channels].reshape(n_frames, n_channels).mean(axis=1)
    return AudioBuffer(x, sample_rate)


def write_wav(buf: AudioBuffer, path, format: str = "float32") -> None:
    """Write a mono WAV file. ``format`` is ``pcm16`` or ``float32``.

    pcm16 clamps to [-1, 1 - 2**-15]; float32 round-trips bit-exactly
    through :func:`read_wav`.
    """
    if len(buf) == 0:
        raise ValueError("cannot write an empty buffer")
    if format == "pcm16":
        clipped = np.clip(buf.samples, -1.0, 1.0 - 2.0**-15)
        payload = np.round(clipped * 32768.0).astype("<i2").tobytes()
        audio_format, bits = _RIFF_PCM, 16
    elif format == "float32":
        payload = buf.samples.astype("<f4").tobytes()
        audio_format, bits = _RIFF_FLOAT, 32
    else:
        raise ValueError(f"unknown format {format!r}")

    byte_rate = buf.sample_rate * bits // 8
    header = struct.pack(
        "<4sI4s4sIHHIIHH4sI",
        b"RIFF",
        36 + len(payload),
        b"WAVE",
        b"fmt ",
        16,
        audio_format,
        1,
        buf.sample_rate,
        byte_rate,
        bits // 8,
        bits,
        b"data",
        len(payload),
    )
    Path(path).write_bytes(header + payload)


def _kaiser_sinc_filter(up: int, down: int, taps_per_phase: int = 64, beta: float = 8.6):
    """Low-pass prototype for polyphase resampling by up/down."""
    cutoff = 1.0 / max(up, down)  # relative to Nyquist of the upsampled rate
    half = taps_per_phase * up // 2
    n = np.arange(-half, half + 1)
    h = cutoff * np.sinc(cutoff * n) * np.kaiser(2 * half + 1, beta)
    # Per-phase normalization makes DC pass through exactly.
    for p in range(up):
        h[p::up] /= h[p::up].sum()
    return h


def resample(buf: AudioBuffer, target_rate: int) -> AudioBuffer:
    """Band-limited resampling (polyphase windowed-sinc, Kaiser beta=8.6,
    64 taps per phase). Output length = round(len * target / source)."""
    if target_rate <= 0:
        raise ValueError("target_rate must be positive")
    if target_rate == buf.sample_rate:
        return AudioBuffer(buf.samples.copy(), target_rate)

    ratio = Fraction(target_rate, buf.sample_rate)
    up, down = ratio.numerator, ratio.denominator
    h = _kaiser_sinc_filter(up, down)
    delay = (len(h) - 1) // 2
    y = upfirdn(h, buf.samples, up=up, down=down)
    start = delay // down
    n_out = int(round(len(buf) * target_rate / buf.sample_rate))
    y = y[start : start + n_out]
    if len(y) < n_out:
        y = np.pad(y, (0, n_out - len(y)))
    return AudioBuffer(y, target_rate)


def hann_window(size: int) -> np.ndarray:
    """Periodic Hann window."""
    return 0.5 - 0.5 * np.cos(2.0 * np.pi * np.arange(size) / size)


def frame_signal(x: np.ndarray, window_size: int, hop_size: int) -> np.ndarray:
    """Frame ``x`` into rows of length ``window_size`` at ``hop_size`` steps.

    Frame count is floor((N - window)/hop) + 1; a buffer shorter than one
    window yields a single zero-padded frame.
    """
    n = len(x)
    if n < window_size:
        frame = np.zeros(window_size)
        frame[:n] = x
        return frame[None, :]
    n_frames = (n - window_size) // hop_size + 1
    idx = hop_size * np.arange(n_frames)[:, None] + np.arange(window_size)[None, :]
    return x[idx]


def stft(
    buf: AudioBuffer, window_size: int, hop_size: int, window: str = "hann"
) -> Spectrogram:
    """Hann-windowed one-sided STFT. ``window`` may be set to ``rect`` for
    verification purposes only."""
    if window_size & (window_size - 1) != 0 or window_size < 2:
        raise ValueError("window_size must be a power of two")
    if hop_size > window_size or hop_size < 1:
        raise ValueError("hop_size must be in [1, window_size]")
    frames = frame_signal(buf.samples, window_size, hop_size)
    if window == "hann":
        frames = frames * hann_window(window_size)
    elif window != "rect":
        raise ValueError(f"unknown window {window!r}")
    spec = np.fft.rfft(frames, axis=1)
    return Spectrogram(spec, window_size, hop_size, buf.sample_rate)
