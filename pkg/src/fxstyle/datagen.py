"""Self-supervised paired-example generation and the five style presets.

A pair is built from one recording: augment (pitch shift + time stretch),
peak-normalize, split in half; one half is corrupted by a random EQ +
downward expander to form the input, the other half is processed by a
random EQ + compressor to form the style reference, and the input's half
processed by that same reference chain is the ground-truth target.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
import numpy as np

from .audio_io import AudioBuffer, hann_window, read_wav, resample
from .effects import apply_eq_td, expander_reference, process_chain
from .params import (
    PARAM_INDEX,
    PARAM_SPECS,
    CompParams,
    EffectParams,
    EqParams,
    PeakBand,
    ShelfBand,
)

ENERGY_THRESHOLD = 0.001
SEGMENT_LENGTH = 262144
PEAK_TARGET_DBFS = -12.0
FILE_RETRIES = 100
TOTAL_RETRIES = 1000
PITCH_RANGE_SEMITONES = 2.0
STRETCH_RANGE = (0.9, 1.1)
GRAIN_S = 0.050

INPUT_EQ_MAX_GAIN_DB = 12.0
EXPANDER_THRESHOLD_RANGE = (-40.0, -10.0)
EXPANDER_RATIO_RANGE = (1.0, 2.0)

DEFAULT_KNEE_DB = 6.0
DEFAULT_Q = 0.707


@dataclass(frozen=True)
class StylePair:
    input: AudioBuffer
    reference: AudioBuffer
    target: AudioBuffer
    truth_params: EffectParams
    seed: int

    def __post_init__(self):
        if len(self.input) != len(self.target):
            raise ValueError("input and target must have equal length")


@dataclass(frozen=True)
class StylePreset:
    """Uniform sampling ranges, keyed by canonical parameter name. Only the
    listed parameters vary; the rest take neutral defaults."""

    name: str
    ranges: dict[str, tuple[float, float]]

    def __post_init__(self):
        for name, (lo, hi) in self.ranges.items():
            if lo > hi:
                raise ValueError(f"{self.name}: empty range for {name}")
            _, plo, phi, _ = PARAM_SPECS[PARAM_INDEX[name]]
            if lo < plo or hi > phi:
                raise ValueError(f"{self.name}: {name} range outside [{plo}, {phi}]")


def _preset(name: str, ls_gain, ls_freq, pk_gain, pk_freq, hs_gain, hs_freq,
            threshold, ratio, attack, release) -> StylePreset:
    def pair(v):
        return (v, v) if isinstance(v, (int, float)) else tuple(v)

    return StylePreset(
        name=name,
        ranges={
            "ls_gain_db": pair(ls_gain),
            "ls_cutoff_hz": pair(ls_freq),
            "p2_gain_db": pair(pk_gain),
            "p2_center_hz": pair(pk_freq),
            "hs_gain_db": pair(hs_gain),
            "hs_cutoff_hz": pair(hs_freq),
            "threshold_db": pair(threshold),
            "ratio": pair(ratio),
            "attack_s": pair(attack),
            "release_s": pair(release),
        },
    )


STYLE_PRESETS: dict[str, StylePreset] = {
    p.name: p
    for p in (
        _preset("Telephone", (-26, -20), (200, 400), (12, 16), (1000, 2000),
                (-26, -20), (4000, 6000), (-30, -10), (1.5, 3.0),
                (0.001, 0.006), (0.010, 0.020)),
        _preset("Warm", (20, 26), (200, 400), 0, 1000,
                (-26, -20), (8000, 10000), 0, 1.0, 0.050, 0.100),
        _preset("Bright", (-26, -20), (200, 400), 0, 1000,
                (20, 26), (8000, 10000), 0, 1.0, 0.050, 0.100),
        _preset("Neutral", (1, 3), (80, 200), 0, 1000,
                (1, 3), (6000, 8000), (-30, -20), (1.5, 2.0),
                (0.005, 0.025), (0.020, 0.025)),
        _preset("Broadcast", (2, 6), (80, 200), 0, 1000,
                (2, 6), (6000, 8000), (-50, -40), (4.0, 6.0),
                (0.001, 0.005), (0.020, 0.025)),
    )
}


def sample_segment(corpus: list, length: int = SEGMENT_LENGTH,
                   seed: int = 0) -> AudioBuffer:
    """Draw a random non-silent segment: uniform file and offset, re-drawing
    from the same file up to 100 times when the mean energy is at or below
    0.001, then moving to a fresh file; at most 1000 draws in total."""
    if not corpus:
        raise ValueError("corpus is empty")
    rng = np.random.default_rng(seed)
    total = 0
    while total < TOTAL_RETRIES:
        path = corpus[int(rng.integers(0, len(corpus)))]
        buf = read_wav(path)
        x = buf.samples
        if len(x) < length:
            x = np.pad(x, (0, length - len(x)))
        for _ in range(FILE_RETRIES):
            if total >= TOTAL_RETRIES:
                break
            total += 1
            offset = int(rng.integers(0, len(x) - length + 1))
            seg = x[offset : offset + length]
            if float(np.mean(seg**2)) > ENERGY_THRESHOLD:
                return AudioBuffer(seg, buf.sample_rate)
    raise ValueError(f"no segment above the energy threshold in {TOTAL_RETRIES} draws")


def peak_normalize(x: AudioBuffer, target_dbfs: float = PEAK_TARGET_DBFS) -> AudioBuffer:
    peak = float(np.max(np.abs(x.samples)))
    if peak == 0.0:
        raise ValueError("cannot peak-normalize silence")
    return AudioBuffer(x.samples * (10.0 ** (target_dbfs / 20.0) / peak), x.sample_rate)


def _granular_stretch(x: np.ndarray, fs: int, ratio: float) -> np.ndarray:
    """Time stretch by overlap-adding 50 ms Hann grains; the window-sum
    normalization makes ratio == 1 the identity."""
    grain = int(round(GRAIN_S * fs))
    grain += grain % 2
    hop = grain // 2
    win = hann_window(grain)
    n_out = int(round(len(x) * ratio))
    out = np.zeros(n_out + grain)
    wsum = np.zeros(n_out + grain)
    pos = 0
    while pos < n_out:
        src = int(round(pos / ratio))
        src = min(src, max(len(x) - grain, 0))
        g = x[src : src + grain]
        if len(g) < grain:
            g = np.pad(g, (0, grain - len(g)))
        out[pos : pos + grain] += g * win
        wsum[pos : pos + grain] += win
        pos += hop
    out = out[:n_out] / np.maximum(wsum[:n_out], 1e-12)
    return out


def _pitch_shift(x: AudioBuffer, semitones: float) -> AudioBuffer:
    """Resample-based shift: the result plays the resampled signal back at
    the original rate, multiplying every frequency by 2^(semitones/12)."""
    if semitones == 0.0:
        return x
    factor = 2.0 ** (semitones / 12.0)
    inter = resample(x, max(int(round(x.sample_rate / factor)), 1))
    return AudioBuffer(inter.samples, x.sample_rate)


def _fit_length(x: np.ndarray, n: int) -> np.ndarray:
    if len(x) >= n:
        return x[:n]
    return np.pad(x, (0, n - len(x)))


def augment(x: AudioBuffer, seed: int = 0, *, semitones: float | None = None,
            stretch: float | None = None) -> AudioBuffer:
    """Random pitch shift (+-2 semitones) and time stretch ([0.9, 1.1]);
    output trimmed or zero-padded back to the input length. The keyword
    overrides pin the draws for testing."""
    rng = np.random.default_rng(seed)
    drawn_semi = float(rng.uniform(-PITCH_RANGE_SEMITONES, PITCH_RANGE_SEMITONES))
    drawn_stretch = float(rng.uniform(*STRETCH_RANGE))
    if semitones is None:
        semitones = drawn_semi
    if stretch is None:
        stretch = drawn_stretch
    y = _pitch_shift(x, semitones)
    if stretch != 1.0:
        z = _granular_stretch(y.samples, y.sample_rate, stretch)
    else:
        z = y.samples
    return AudioBuffer(_fit_length(z, len(x)), x.sample_rate)


def _uniform(rng: np.random.Generator, lo: float, hi: float) -> float:
    return float(rng.uniform(lo, hi)) if hi > lo else float(lo)


def _random_eq(rng: np.random.Generator, max_gain_db: float) -> EqParams:
    """EQ with gains limited to +-max_gain_db and frequencies/Q drawn
    log-uniformly over each band's full range."""

    def log_uniform(lo, hi):
        return float(lo * math.exp(rng.uniform(0.0, 1.0) * math.log(hi / lo)))

    def gain():
        return _uniform(rng, -max_gain_db, max_gain_db)

    return EqParams(
        low_shelf=ShelfBand(gain(), log_uniform(30.0, 1000.0)),
        peaks=tuple(
            PeakBand(gain(), log_uniform(100.0, 10000.0), log_uniform(0.3, 6.0))
            for _ in range(4)
        ),
        high_shelf=ShelfBand(gain(), log_uniform(2000.0, 11000.0)),
    )


def _random_comp(rng: np.random.Generator) -> CompParams:
    """Compressor drawn uniformly over the full denormalization ranges
    (log-uniform for the time constants)."""

    def rng_of(name):
        _, lo, hi, scale = PARAM_SPECS[PARAM_INDEX[name]]
        if scale == "log":
            return float(lo * math.exp(rng.uniform(0.0, 1.0) * math.log(hi / lo)))
        return _uniform(rng, lo, hi)

    return CompParams(
        threshold_db=rng_of("threshold_db"),
        ratio=rng_of("ratio"),
        attack_s=rng_of("attack_s"),
        release_s=rng_of("release_s"),
        knee_db=rng_of("knee_db"),
        makeup_db=rng_of("makeup_db"),
    )


def make_pair(x: AudioBuffer, seed: int = 0) -> StylePair:
    """Build a training pair from one recording (see module docstring)."""
    if len(x) % 2 != 0:
        raise ValueError("recording length must be even")
    if len(x) < 2 * x.sample_rate:
        raise ValueError("recording must be at least 2 s long")
    rng = np.random.default_rng(seed)
    y = peak_normalize(augment(x, seed=int(rng.integers(0, 2**31))))
    half = len(y) // 2
    halves = (
        AudioBuffer(y.samples[:half], y.sample_rate),
        AudioBuffer(y.samples[half:], y.sample_rate),
    )
    swap = bool(rng.integers(0, 2))
    input_half, ref_half = (halves[1], halves[0]) if swap else halves

    # Input corruption: mild EQ then a downward expander.
    in_eq = _random_eq(rng, INPUT_EQ_MAX_GAIN_DB)
    in_comp = CompParams(
        threshold_db=_uniform(rng, *EXPANDER_THRESHOLD_RANGE),
        ratio=_uniform(rng, *EXPANDER_RATIO_RANGE),
        attack_s=0.005,
        release_s=0.050,
        knee_db=0.0,
        makeup_db=0.0,
    )
    corrupted = expander_reference(
        AudioBuffer(apply_eq_td(input_half.samples, in_eq, y.sample_rate), y.sample_rate),
        in_comp,
    )

    truth = EffectParams(eq=_random_eq(rng, 32.0), comp=_random_comp(rng))
    reference = process_chain(ref_half, truth, "reference")
    target = process_chain(input_half, truth, "reference")
    return StylePair(
        input=corrupted,
        reference=reference,
        target=target,
        truth_params=truth,
        seed=seed,
    )


def render_style(x: AudioBuffer, preset: StylePreset, seed: int = 0) -> tuple[AudioBuffer, EffectParams]:
    """Draw preset parameters uniformly in their ranges and render the
    reference-path chain; unlisted parameters take the neutral defaults."""
    rng = np.random.default_rng(seed)
    draws = {name: _uniform(rng, lo, hi) for name, (lo, hi) in preset.ranges.items()}
    peaks = []
    for i in range(1, 5):
        gain = draws.get(f"p{i}_gain_db", 0.0)
        center = draws.get(f"p{i}_center_hz", 1000.0)
        peaks.append(PeakBand(gain, center, DEFAULT_Q))
    params = EffectParams(
        eq=EqParams(
            low_shelf=ShelfBand(draws["ls_gain_db"], draws["ls_cutoff_hz"]),
            peaks=tuple(peaks),
            high_shelf=ShelfBand(draws["hs_gain_db"], draws["hs_cutoff_hz"]),
        ),
        comp=CompParams(
            threshold_db=draws["threshold_db"],
            ratio=draws["ratio"],
            attack_s=draws["attack_s"],
            release_s=draws["release_s"],
            knee_db=DEFAULT_KNEE_DB,
            makeup_db=0.0,
        ),
    )
    return process_chain(x, params, "reference"), params
