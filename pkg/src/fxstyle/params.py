"""Control-parameter model for the 6-band EQ + compressor chain.

22 parameters total: 16 for the equalizer (low shelf, four peaking bands,
high shelf) and 6 for the compressor. A normalized view maps every
parameter into [0, 1]; gains, threshold, knee, makeup and ratio map
linearly while frequencies, Q and time constants map log-linearly.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, asdict
from typing import Iterator

import numpy as np

N_PARAMS = 22

# (name, lo, hi, scale); index order is the canonical parameter layout.
PARAM_SPECS: tuple[tuple[str, float, float, str], ...] = (
    ("ls_gain_db", -32.0, 32.0, "lin"),
    ("ls_cutoff_hz", 30.0, 1000.0, "log"),
    ("p1_gain_db", -32.0, 32.0, "lin"),
    ("p1_center_hz", 100.0, 10000.0, "log"),
    ("p1_q", 0.3, 6.0, "log"),
    ("p2_gain_db", -32.0, 32.0, "lin"),
    ("p2_center_hz", 100.0, 10000.0, "log"),
    ("p2_q", 0.3, 6.0, "log"),
    ("p3_gain_db", -32.0, 32.0, "lin"),
    ("p3_center_hz", 100.0, 10000.0, "log"),
    ("p3_q", 0.3, 6.0, "log"),
    ("p4_gain_db", -32.0, 32.0, "lin"),
    ("p4_center_hz", 100.0, 10000.0, "log"),
    ("p4_q", 0.3, 6.0, "log"),
    ("hs_gain_db", -32.0, 32.0, "lin"),
    ("hs_cutoff_hz", 2000.0, 11000.0, "log"),
    ("threshold_db", -60.0, 0.0, "lin"),
    ("ratio", 1.0, 10.0, "lin"),
    ("attack_s", 0.0005, 0.1, "log"),
    ("release_s", 0.005, 0.5, "log"),
    ("knee_db", 0.0, 12.0, "lin"),
    ("makeup_db", 0.0, 12.0, "lin"),
)

PARAM_NAMES = tuple(s[0] for s in PARAM_SPECS)
PARAM_INDEX = {name: i for i, name in enumerate(PARAM_NAMES)}

SHELF_Q = 0.707  # shelves expose gain and cutoff only

# Frequencies are clamped here at denormalization so the same normalized
# parameters remain valid at low sample rates.
MAX_FREQ_FRACTION = 0.49


@dataclass(frozen=True)
class ShelfBand:
    gain_db: float
    cutoff_hz: float


@dataclass(frozen=True)
class PeakBand:
    gain_db: float
    center_hz: float
    q: float


@dataclass(frozen=True)
class EqParams:
    low_shelf: ShelfBand
    peaks: tuple[PeakBand, PeakBand, PeakBand, PeakBand]
    high_shelf: ShelfBand

    def __post_init__(self):
        for band in self.peaks:
            if band.q <= 0:
                raise ValueError("peaking Q must be positive")


@dataclass(frozen=True)
class CompParams:
    threshold_db: float
    ratio: float
    attack_s: float
    release_s: float
    knee_db: float
    makeup_db: float

    def __post_init__(self):
        if self.ratio < 1.0:
            raise ValueError("ratio must be >= 1")
        if self.attack_s <= 0 or self.release_s <= 0:
            raise ValueError("attack and release must be positive")
        if self.knee_db < 0:
            raise ValueError("knee width must be nonnegative")


@dataclass(frozen=True)
class EffectParams:
    eq: EqParams
    comp: CompParams

    @staticmethod
    def neutral() -> "EffectParams":
        """All gains 0 dB, ratio 1, makeup 0: the chain is (near) identity."""
        eq = EqParams(
            low_shelf=ShelfBand(0.0, 100.0),
            peaks=(
                PeakBand(0.0, 300.0, 1.0),
                PeakBand(0.0, 1000.0, 1.0),
                PeakBand(0.0, 3000.0, 1.0),
                PeakBand(0.0, 8000.0, 1.0),
            ),
            high_shelf=ShelfBand(0.0, 8000.0),
        )
        comp = CompParams(
            threshold_db=0.0,
            ratio=1.0,
            attack_s=0.01,
            release_s=0.05,
            knee_db=0.0,
            makeup_db=0.0,
        )
        return EffectParams(eq=eq, comp=comp)

    def to_vector(self) -> np.ndarray:
        """Denormalized parameters in canonical index order."""
        e, c = self.eq, self.comp
        vals = [e.low_shelf.gain_db, e.low_shelf.cutoff_hz]
        for band in e.peaks:
            vals += [band.gain_db, band.center_hz, band.q]
        vals += [e.high_shelf.gain_db, e.high_shelf.cutoff_hz]
        vals += [c.threshold_db, c.ratio, c.attack_s, c.release_s, c.knee_db, c.makeup_db]
        return np.array(vals, dtype=np.float64)

    @staticmethod
    def from_vector(vals) -> "EffectParams":
        vals = np.asarray(vals, dtype=np.float64)
        if vals.shape != (N_PARAMS,):
            raise ValueError(f"expected {N_PARAMS} parameters")
        eq = EqParams(
            low_shelf=ShelfBand(vals[0], vals[1]),
            peaks=tuple(
                PeakBand(vals[2 + 3 * i], vals[3 + 3 * i], vals[4 + 3 * i])
                for i in range(4)
            ),
            high_shelf=ShelfBand(vals[14], vals[15]),
        )
        comp = CompParams(*vals[16:22])
        return EffectParams(eq=eq, comp=comp)

    def to_json(self) -> str:
        doc = {
            "eq": {
                "low_shelf": asdict(self.eq.low_shelf),
                "peaks": [asdict(b) for b in self.eq.peaks],
                "high_shelf": asdict(self.eq.high_shelf),
            },
            "comp": asdict(self.comp),
        }
        return json.dumps(doc, indent=2)

    @staticmethod
    def from_json(text: str) -> "EffectParams":
        doc = json.loads(text)
        eq = EqParams(
            low_shelf=ShelfBand(**doc["eq"]["low_shelf"]),
            peaks=tuple(PeakBand(**b) for b in doc["eq"]["peaks"]),
            high_shelf=ShelfBand(**doc["eq"]["high_shelf"]),
        )
        return EffectParams(eq=eq, comp=CompParams(**doc["comp"]))


@dataclass(frozen=True)
class NormalizedParams:
    """The optimizer's search space: a 22-vector with entries in [0, 1]."""

    v: np.ndarray

    def __post_init__(self):
        v = np.asarray(self.v, dtype=np.float64)
        if v.shape != (N_PARAMS,):
            raise ValueError(f"expected a {N_PARAMS}-vector")
        if np.any(v < 0.0) or np.any(v > 1.0):
            raise ValueError("normalized parameters must lie in [0, 1]")
        object.__setattr__(self, "v", v)

    def __iter__(self) -> Iterator[float]:
        return iter(self.v)


def denormalize_value(i: int, u: float):
    """Map one normalized coordinate to its denormalized parameter.

    Works for plain floats and dual scalars (anything with * and exp via
    math-compatible semantics handled by the caller for duals).
    """
    _, lo, hi, scale = PARAM_SPECS[i]
    if scale == "lin":
        return lo + u * (hi - lo)
    return lo * math.exp(u * math.log(hi / lo))


def normalize_value(i: int, p: float) -> float:
    _, lo, hi, scale = PARAM_SPECS[i]
    if scale == "lin":
        return (p - lo) / (hi - lo)
    return math.log(p / lo) / math.log(hi / lo)


def denormalize_vector(v: np.ndarray, fs: float | None = None) -> np.ndarray:
    """Vectorized normalized -> denormalized mapping (no range validation;
    useful for finite-difference probes that step slightly past [0, 1])."""
    v = np.asarray(v, dtype=np.float64)
    out = np.empty(N_PARAMS)
    for i in range(N_PARAMS):
        out[i] = denormalize_value(i, v[i])
    if fs is not None:
        fmax = MAX_FREQ_FRACTION * fs
        for name in ("ls_cutoff_hz", "p1_center_hz", "p2_center_hz",
                     "p3_center_hz", "p4_center_hz", "hs_cutoff_hz"):
            i = PARAM_INDEX[name]
            out[i] = min(out[i], fmax)
    return out


def denormalize(v: NormalizedParams, fs: float | None = None) -> EffectParams:
    return EffectParams.from_vector(denormalize_vector(v.v, fs=fs))


def normalize(p: EffectParams) -> NormalizedParams:
    vals = p.to_vector()
    u = np.empty(N_PARAMS)
    for i, (name, lo, hi, _) in enumerate(PARAM_SPECS):
        if not (lo <= vals[i] <= hi):
            raise ValueError(f"{name}={vals[i]} outside [{lo}, {hi}]")
        u[i] = normalize_value(i, vals[i])
    return NormalizedParams(np.clip(u, 0.0, 1.0))
