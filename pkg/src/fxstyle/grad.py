"""Gradient estimation and optimization over the normalized control space.

Three estimators share one objective (the style loss of the rendered chain
against a fixed reference):

* exact — reverse-mode differentiation through the rendered signal combined
  with forward-mode dual scalars through the parameter-to-coefficient
  mappings; one objective evaluation per gradient.
* fd — central finite differences, two evaluations per coordinate.
* spsa — simultaneous perturbation with Rademacher directions, two
  evaluations per averaging draw.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy import fft as sfft

from . import dual
from .audio_io import AudioBuffer
from .dual import Dual
from .effects import LEVEL_EPS, fft_size, static_compress
from .objective import LossBreakdown, loss_grad_wrt_first, loss_precomputed, ref_stft_mags
from .params import (
    MAX_FREQ_FRACTION,
    N_PARAMS,
    PARAM_INDEX,
    PARAM_SPECS,
    SHELF_Q,
    EffectParams,
    normalize,
)

LN10 = math.log(10.0)

_FREQ_PARAM_IDX = tuple(
    PARAM_INDEX[name]
    for name in ("ls_cutoff_hz", "p1_center_hz", "p2_center_hz",
                 "p3_center_hz", "p4_center_hz", "hs_cutoff_hz")
)

# (kind, gain index, frequency index, q index or None) per equalizer band
_BAND_LAYOUT = (
    ("low_shelf", 0, 1, None),
    ("peaking", 2, 3, 4),
    ("peaking", 5, 6, 7),
    ("peaking", 8, 9, 10),
    ("peaking", 11, 12, 13),
    ("high_shelf", 14, 15, None),
)


@dataclass(frozen=True)
class GradResult:
    loss: LossBreakdown
    grad: np.ndarray
    evals: int  # objective evaluations consumed by the estimator


def _denorm_scalars(v: np.ndarray, fs: float, with_tangents: bool) -> list:
    """Denormalized parameters, as floats or as seeded dual scalars. A
    frequency clamped at the sample-rate ceiling carries zero tangent."""
    out = []
    for i, (_, lo, hi, scale) in enumerate(PARAM_SPECS):
        u = Dual.seed(v[i], i, N_PARAMS) if with_tangents else float(v[i])
        if scale == "lin":
            out.append(lo + u * (hi - lo))
        else:
            out.append(lo * dual.exp(u * math.log(hi / lo)))
    fmax = MAX_FREQ_FRACTION * fs
    for i in _FREQ_PARAM_IDX:
        if _val(out[i]) > fmax:
            out[i] = Dual.const(fmax, N_PARAMS) if with_tangents else fmax
    return out


def _val(x) -> float:
    return x.val if isinstance(x, Dual) else x


def _tan(x) -> np.ndarray:
    return x.tan if isinstance(x, Dual) else np.zeros(N_PARAMS)


def _band_coeffs(kind: str, gain_db, freq_hz, q, fs: float):
    """Unnormalized cookbook coefficients; accepts floats or dual scalars."""
    A = dual.exp(gain_db * (LN10 / 40.0))
    w0 = freq_hz * (2.0 * math.pi / fs)
    cosw = dual.cos(w0)
    alpha = dual.sin(w0) / (2.0 * q)
    if kind == "peaking":
        b = [1.0 + alpha * A, -2.0 * cosw, 1.0 - alpha * A]
        a = [1.0 + alpha / A, -2.0 * cosw, 1.0 - alpha / A]
        return b, a
    two_ra = 2.0 * dual.sqrt(A) * alpha
    if kind == "low_shelf":
        b = [
            A * ((A + 1.0) - (A - 1.0) * cosw + two_ra),
            2.0 * A * ((A - 1.0) - (A + 1.0) * cosw),
            A * ((A + 1.0) - (A - 1.0) * cosw - two_ra),
        ]
        a = [
            (A + 1.0) + (A - 1.0) * cosw + two_ra,
            -2.0 * ((A - 1.0) + (A + 1.0) * cosw),
            (A + 1.0) + (A - 1.0) * cosw - two_ra,
        ]
        return b, a
    if kind == "high_shelf":
        b = [
            A * ((A + 1.0) + (A - 1.0) * cosw + two_ra),
            -2.0 * A * ((A - 1.0) + (A + 1.0) * cosw),
            A * ((A + 1.0) + (A - 1.0) * cosw - two_ra),
        ]
        a = [
            (A + 1.0) - (A - 1.0) * cosw + two_ra,
            2.0 * ((A - 1.0) - (A + 1.0) * cosw),
            (A + 1.0) - (A - 1.0) * cosw - two_ra,
        ]
        return b, a
    raise ValueError(f"unknown band kind {kind!r}")


def _smoothing_coeff(attack_s, release_s, fs: float):
    return dual.exp(-1.0 / (dual.sqrt(attack_s * release_s) * fs))


def _static_partials(x_db: np.ndarray, T: float, R: float, W: float):
    """Elementwise partials of the soft-knee curve with respect to input
    level, threshold, ratio and knee width."""
    d = x_db - T
    inv_r = 1.0 / R
    if W <= 0.0:
        above = 2.0 * d > 0.0
        dyx = np.where(above, inv_r, 1.0)
        dyt = np.where(above, 1.0 - inv_r, 0.0)
        dyr = np.where(above, -d / (R * R), 0.0)
        dyw = np.zeros_like(d)
        return dyx, dyt, dyr, dyw
    below = 2.0 * d < -W
    above = 2.0 * d > W
    knee = ~(below | above)
    k = d + W / 2.0
    dyx = np.where(below, 1.0, np.where(above, inv_r, 1.0 + (inv_r - 1.0) * k / W))
    dyt = np.where(above, 1.0 - inv_r, np.where(knee, -(inv_r - 1.0) * k / W, 0.0))
    dyr = np.where(above, -d / (R * R), np.where(knee, -k * k / (2.0 * W * R * R), 0.0))
    dyw = np.where(knee, (inv_r - 1.0) * k * (W - k) / (2.0 * W * W), 0.0)
    return dyx, dyt, dyr, dyw


def _irfft_adjoint(ybar: np.ndarray, F: int) -> np.ndarray:
    """Gradient with respect to the one-sided spectrum V of y = irfft(V, F),
    given the gradient with respect to y (zero beyond len(ybar))."""
    g = sfft.rfft(ybar, F) / F
    g[1:-1] *= 2.0
    return g


def _rfft_adjoint(g: np.ndarray, F: int) -> np.ndarray:
    """Gradient with respect to the real input x of X = rfft(x, F), given
    the per-bin gradient with respect to X."""
    gh = g.copy()
    gh[1:-1] *= 0.5
    gh[0] = gh[0].real
    gh[-1] = gh[-1].real
    return sfft.irfft(gh, F) * F


class ChainLossEvaluator:
    """Objective for one input/reference pair: renders the differentiable
    chain at normalized parameters and scores it against the reference,
    reusing the input transform and reference spectrograms across calls."""

    def __init__(self, x: AudioBuffer, ref: AudioBuffer):
        if len(x) != len(ref):
            raise ValueError("input and reference must have equal length")
        if x.sample_rate != ref.sample_rate:
            raise ValueError("input and reference sample rates differ")
        self.fs = x.sample_rate
        self.x = x.samples
        self.ref = ref
        self.n = len(x)
        self.F = fft_size(self.n)
        self.X = sfft.rfft(self.x, self.F)
        w = np.linspace(0.0, np.pi, self.F // 2 + 1)
        self.z1 = np.exp(-1j * w)
        self.z2 = self.z1 * self.z1
        self.ref_mags = ref_stft_mags(ref)
        self.evals = 0

    def _forward(self, params: list) -> dict:
        """Render the chain, keeping every intermediate the reverse pass
        needs. ``params`` holds 22 denormalized floats or dual scalars."""
        bands = []
        H = np.ones(len(self.z1), dtype=np.complex128)
        for kind, gi, fi, qi in _BAND_LAYOUT:
            q = params[qi] if qi is not None else SHELF_Q
            cb, ca = _band_coeffs(kind, params[gi], params[fi], q, self.fs)
            num = _val(cb[0]) + _val(cb[1]) * self.z1 + _val(cb[2]) * self.z2
            den = _val(ca[0]) + _val(ca[1]) * self.z1 + _val(ca[2]) * self.z2
            hb = num / den
            H *= hb
            bands.append((cb, ca, den, hb))
        y_eq = sfft.irfft(self.X * H, self.F)[: self.n]

        T, R = params[PARAM_INDEX["threshold_db"]], params[PARAM_INDEX["ratio"]]
        W, makeup = params[PARAM_INDEX["knee_db"]], params[PARAM_INDEX["makeup_db"]]
        alpha = _smoothing_coeff(params[PARAM_INDEX["attack_s"]],
                                 params[PARAM_INDEX["release_s"]], self.fs)
        x_db = 20.0 * np.log10(np.abs(y_eq) + LEVEL_EPS)
        y_g = static_compress(x_db, _val(T), _val(R), _val(W))
        x_l = x_db - y_g
        xl_spec = sfft.rfft(x_l, self.F)
        hs = (1.0 - _val(alpha)) / (1.0 - _val(alpha) * self.z1)
        y_l = sfft.irfft(xl_spec * hs, self.F)[: self.n]
        c = 10.0 ** ((_val(makeup) - y_l) / 20.0)
        return {
            "bands": bands, "H": H, "y_eq": y_eq, "x_db": x_db,
            "T": T, "R": R, "W": W, "makeup": makeup, "alpha": alpha,
            "xl_spec": xl_spec, "hs": hs, "c": c, "out": y_eq * c,
        }

    def render(self, v: np.ndarray) -> AudioBuffer:
        state = self._forward(_denorm_scalars(np.asarray(v, float), self.fs, False))
        return AudioBuffer(state["out"], self.fs)

    def loss(self, v: np.ndarray) -> LossBreakdown:
        self.evals += 1
        state = self._forward(_denorm_scalars(np.asarray(v, float), self.fs, False))
        return loss_precomputed(state["out"], self.ref.samples, self.ref_mags)

    def overall(self, v: np.ndarray) -> float:
        return self.loss(v).overall

    def loss_and_grad(self, v: np.ndarray) -> GradResult:
        self.evals += 1
        s = self._forward(_denorm_scalars(np.asarray(v, float), self.fs, True))
        breakdown, g_out = loss_grad_wrt_first(s["out"], self.ref, self.ref_mags)
        grad = np.zeros(N_PARAMS)

        y_eq, c = s["y_eq"], s["c"]
        ybar_eq = g_out * c
        cbar = g_out * y_eq

        # c = 10 ** ((makeup - y_l) / 20)
        scale = c * (LN10 / 20.0)
        grad += _tan(s["makeup"]) * float(np.sum(cbar * scale))
        ylbar = -(cbar * scale)

        # smoothing: y_l = irfft(rfft(x_l) * hs)[:n]
        gv = _irfft_adjoint(ylbar, self.F)
        g_hs = np.conj(s["xl_spec"]) * gv
        g_xl_spec = np.conj(s["hs"]) * gv
        alpha = s["alpha"]
        dhs = (self.z1 - 1.0) / (1.0 - _val(alpha) * self.z1) ** 2
        grad += _tan(alpha) * float(np.sum(np.real(np.conj(g_hs) * dhs)))
        xlbar = _rfft_adjoint(g_xl_spec, self.F)[: self.n]

        # x_l = x_db - static_compress(x_db, T, R, W)
        dyx, dyt, dyr, dyw = _static_partials(
            s["x_db"], _val(s["T"]), _val(s["R"]), _val(s["W"])
        )
        grad += _tan(s["T"]) * float(np.sum(xlbar * -dyt))
        grad += _tan(s["R"]) * float(np.sum(xlbar * -dyr))
        grad += _tan(s["W"]) * float(np.sum(xlbar * -dyw))
        xdbbar = xlbar * (1.0 - dyx)

        # x_db = 20 log10(|y_eq| + eps)
        ybar_eq = ybar_eq + xdbbar * (20.0 / LN10) * np.sign(y_eq) / (np.abs(y_eq) + LEVEL_EPS)

        # y_eq = irfft(X * H)[:n]; H is the product of band responses
        gv = _irfft_adjoint(ybar_eq, self.F)
        g_h = np.conj(self.X) * gv
        powers = (1.0, self.z1, self.z2)
        for cb, ca, den, hb in s["bands"]:
            g_hb = g_h * np.conj(s["H"] / hb)
            inv_den = 1.0 / den
            for m in range(3):
                bbar = float(np.sum(np.real(np.conj(g_hb) * (powers[m] * inv_den))))
                abar = -float(np.sum(np.real(np.conj(g_hb) * (hb * inv_den * powers[m]))))
                grad += _tan(cb[m]) * bbar + _tan(ca[m]) * abar

        return GradResult(loss=breakdown, grad=grad, evals=1)


def fd_gradient(fn, v: np.ndarray, step: float = 1e-4) -> np.ndarray:
    """Central finite differences of a scalar function of the normalized
    vector; 2 * len(v) evaluations."""
    v = np.asarray(v, dtype=np.float64)
    grad = np.empty(len(v))
    for i in range(len(v)):
        hi = v.copy()
        lo = v.copy()
        hi[i] += step
        lo[i] -= step
        grad[i] = (fn(hi) - fn(lo)) / (2.0 * step)
    return grad


def spsa_gradient(fn, v: np.ndarray, eps: float = 5e-4, n_avg: int = 1,
                  rng: np.random.Generator | None = None) -> np.ndarray:
    """Simultaneous-perturbation estimate: each draw perturbs every
    coordinate at once along a random sign vector; 2 * n_avg evaluations."""
    if rng is None:
        rng = np.random.default_rng(0)
    v = np.asarray(v, dtype=np.float64)
    grad = np.zeros(len(v))
    for _ in range(n_avg):
        delta = rng.integers(0, 2, size=len(v)) * 2.0 - 1.0
        diff = fn(v + eps * delta) - fn(v - eps * delta)
        grad += diff / (2.0 * eps * delta)
    return grad / n_avg


def loss_grad_exact(x: AudioBuffer, ref: AudioBuffer, v: np.ndarray) -> GradResult:
    return ChainLossEvaluator(x, ref).loss_and_grad(v)


def loss_grad_fd(x: AudioBuffer, ref: AudioBuffer, v: np.ndarray,
                 step: float = 1e-4) -> GradResult:
    ev = ChainLossEvaluator(x, ref)
    grad = fd_gradient(ev.overall, v, step=step)
    return GradResult(loss=ev.loss(v), grad=grad, evals=2 * N_PARAMS)


def loss_grad_spsa(x: AudioBuffer, ref: AudioBuffer, v: np.ndarray,
                   eps: float = 5e-4, n_avg: int = 1,
                   seed: int = 0) -> GradResult:
    ev = ChainLossEvaluator(x, ref)
    rng = np.random.default_rng(seed)
    grad = spsa_gradient(ev.overall, v, eps=eps, n_avg=n_avg, rng=rng)
    return GradResult(loss=ev.loss(v), grad=grad, evals=2 * n_avg)


@dataclass(frozen=True)
class OptimizerConfig:
    method: str = "exact"  # exact | fd | spsa
    steps: int = 500
    lr: float | None = None  # default 1e-2; 1e-3 for spsa
    beta1: float = 0.9
    beta2: float = 0.999
    adam_eps: float = 1e-8
    grad_clip: float = 4.0
    decay_points: tuple[float, float] = (0.8, 0.95)
    decay_factor: float = 0.1
    fd_step: float = 1e-4
    spsa_eps: float = 5e-4
    spsa_avg: int = 1
    seed: int = 0

    def learning_rate(self) -> float:
        if self.lr is not None:
            return self.lr
        return 1e-3 if self.method == "spsa" else 1e-2


@dataclass
class OptimizeResult:
    best_v: np.ndarray
    best_loss: LossBreakdown
    best_step: int
    history: list = field(default_factory=list)  # LossBreakdown per step
    trajectory: np.ndarray | None = None  # (steps + 1, N_PARAMS)
    evals: int = 0

    @property
    def best_params(self) -> EffectParams:
        from .params import NormalizedParams, denormalize

        return denormalize(NormalizedParams(self.best_v))


def optimize_style(x: AudioBuffer, ref: AudioBuffer,
                   config: OptimizerConfig = OptimizerConfig(),
                   v0: np.ndarray | None = None) -> OptimizeResult:
    """Fit the 22 normalized controls so the rendered chain matches the
    reference: Adam on the chosen gradient estimator, parameters clamped to
    [0, 1], stepped learning-rate decay, best iterate kept."""
    if config.method not in ("exact", "fd", "spsa"):
        raise ValueError(f"unknown method {config.method!r}")
    ev = ChainLossEvaluator(x, ref)
    rng = np.random.default_rng(config.seed)
    v = normalize(EffectParams.neutral()).v.copy() if v0 is None else np.asarray(v0, float).copy()

    m = np.zeros(N_PARAMS)
    s = np.zeros(N_PARAMS)
    lr0 = config.learning_rate()
    cut1 = int(config.decay_points[0] * config.steps)
    cut2 = int(config.decay_points[1] * config.steps)

    result = OptimizeResult(best_v=v.copy(), best_loss=None, best_step=-1)
    traj = [v.copy()]
    for t in range(config.steps):
        if config.method == "exact":
            gr = ev.loss_and_grad(v)
            loss = gr.loss
            grad = gr.grad
            result.evals += 1
        elif config.method == "fd":
            grad = fd_gradient(ev.overall, v, step=config.fd_step)
            result.evals += 2 * N_PARAMS
            loss = ev.loss(v)
        else:
            grad = spsa_gradient(ev.overall, v, eps=config.spsa_eps,
                                 n_avg=config.spsa_avg, rng=rng)
            result.evals += 2 * config.spsa_avg
            loss = ev.loss(v)
        result.history.append(loss)
        if result.best_loss is None or loss.overall < result.best_loss.overall:
            result.best_loss = loss
            result.best_v = v.copy()
            result.best_step = t

        norm = float(np.linalg.norm(grad))
        if norm > config.grad_clip:
            grad = grad * (config.grad_clip / norm)
        lr = lr0
        if t >= cut2:
            lr = lr0 * config.decay_factor * config.decay_factor
        elif t >= cut1:
            lr = lr0 * config.decay_factor
        m = config.beta1 * m + (1.0 - config.beta1) * grad
        s = config.beta2 * s + (1.0 - config.beta2) * grad * grad
        mhat = m / (1.0 - config.beta1 ** (t + 1))
        shat = s / (1.0 - config.beta2 ** (t + 1))
        v = np.clip(v - lr * mhat / (np.sqrt(shat) + config.adam_eps), 0.0, 1.0)
        traj.append(v.copy())

    final = ev.loss(v)
    result.history.append(final)
    if final.overall < result.best_loss.overall:
        result.best_loss = final
        result.best_v = v.copy()
        result.best_step = config.steps
    result.trajectory = np.array(traj)
    return result
