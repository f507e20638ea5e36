"""Second-order filter sections (cookbook shelving and peaking designs)."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.signal import lfilter


@dataclass(frozen=True)
class BiquadCoeffs:
    """Normalized biquad coefficients (a[0] == 1, poles inside unit circle)."""

    b: np.ndarray
    a: np.ndarray

    def __post_init__(self):
        b = np.asarray(self.b, dtype=np.float64)
        a = np.asarray(self.a, dtype=np.float64)
        if b.shape != (3,) or a.shape != (3,):
            raise ValueError("biquad needs 3 feedforward and 3 feedback coefficients")
        if a[0] != 1.0:
            b = b / a[0]
            a = a / a[0]
        object.__setattr__(self, "b", b)
        object.__setattr__(self, "a", a)

    def pole_radius(self) -> float:
        return float(np.max(np.abs(np.roots(self.a))))


def _low_shelf_coeffs(gain_db: float, w0: float, q: float) -> tuple[list, list]:
    A = 10.0 ** (gain_db / 40.0)
    cosw = math.cos(w0)
    alpha = math.sin(w0) / (2.0 * q)
    two_rA = 2.0 * math.sqrt(A) * alpha
    b = [
        A * ((A + 1) - (A - 1) * cosw + two_rA),
        2.0 * A * ((A - 1) - (A + 1) * cosw),
        A * ((A + 1) - (A - 1) * cosw - two_rA),
    ]
    a = [
        (A + 1) + (A - 1) * cosw + two_rA,
        -2.0 * ((A - 1) + (A + 1) * cosw),
        (A + 1) + (A - 1) * cosw - two_rA,
    ]
    return b, a


def _high_shelf_coeffs(gain_db: float, w0: float, q: float) -> tuple[list, list]:
    A = 10.0 ** (gain_db / 40.0)
    cosw = math.cos(w0)
    alpha = math.sin(w0) / (2.0 * q)
    two_rA = 2.0 * math.sqrt(A) * alpha
    b = [
        A * ((A + 1) + (A - 1) * cosw + two_rA),
        -2.0 * A * ((A - 1) + (A + 1) * cosw),
        A * ((A + 1) + (A - 1) * cosw - two_rA),
    ]
    a = [
        (A + 1) - (A - 1) * cosw + two_rA,
        2.0 * ((A - 1) - (A + 1) * cosw),
        (A + 1) - (A - 1) * cosw - two_rA,
    ]
    return b, a


def design_biquad(kind: str, gain_db: float, freq_hz: float, q: float, fs: float) -> BiquadCoeffs:
    """Cookbook coefficients for low_shelf, peaking or high_shelf sections."""
    if not 0.0 < freq_hz < fs / 2.0:
        raise ValueError(f"frequency {freq_hz} Hz out of range for fs={fs}")
    if q <= 0:
        raise ValueError("Q must be positive")
    w0 = 2.0 * math.pi * freq_hz / fs
    if kind == "peaking":
        A = 10.0 ** (gain_db / 40.0)
        cosw = math.cos(w0)
        alpha = math.sin(w0) / (2.0 * q)
        b = [1.0 + alpha * A, -2.0 * cosw, 1.0 - alpha * A]
        a = [1.0 + alpha / A, -2.0 * cosw, 1.0 - alpha / A]
    elif kind == "low_shelf":
        b, a = _low_shelf_coeffs(gain_db, w0, q)
    elif kind == "high_shelf":
        b, a = _high_shelf_coeffs(gain_db, w0, q)
    else:
        raise ValueError(f"unknown biquad kind {kind!r}")
    return BiquadCoeffs(np.array(b), np.array(a))


def apply_biquad_td(x: np.ndarray, c: BiquadCoeffs) -> np.ndarray:
    """Direct-form recursion with zero initial state."""
    return lfilter(c.b, c.a, x)


def biquad_response(c: BiquadCoeffs, w: np.ndarray) -> np.ndarray:
    """Complex response at digital frequencies ``w`` (rad/sample): the ratio
    of the numerator and denominator transforms."""
    z1 = np.exp(-1j * w)
    z2 = z1 * z1
    num = c.b[0] + c.b[1] * z1 + c.b[2] * z2
    den = c.a[0] + c.a[1] * z1 + c.a[2] * z2
    return num / den
