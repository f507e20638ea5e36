"""Hand-derived gradient engine: adjoints, estimators, and the optimizer."""

import numpy as np
import pytest
from scipy.fft import irfft, rfft

from fxstyle.audio_io import AudioBuffer
from fxstyle.effects import SHELF_Q, eq_biquads, process_chain, static_compress
from fxstyle.grad import (
    ChainLossEvaluator,
    OptimizerConfig,
    _band_coeffs,
    _irfft_adjoint,
    _rfft_adjoint,
    _static_partials,
    fd_gradient,
    loss_grad_exact,
    loss_grad_fd,
    loss_grad_spsa,
    optimize_style,
    spsa_gradient,
)
from fxstyle.params import (
    EffectParams,
    EqParams,
    PeakBand,
    ShelfBand,
    denormalize_vector,
    normalize,
)

FS = 24000


def smooth_case(seed=0, n=12000, lo=0.4, hi=0.6):
    """A test case where the loss is differentiable.

    Strictly positive signals keep the level detector away from its
    nonsmooth point at zero, and interior parameters keep denormalization
    clamps and knee boundaries inactive.
    """
    rng = np.random.default_rng(seed)
    x = AudioBuffer(0.5 + 0.05 * rng.uniform(-1, 1, n), FS)
    ref = AudioBuffer(0.5 + 0.05 * rng.uniform(-1, 1, n), FS)
    v = rng.uniform(lo, hi, 22)
    return x, ref, v


# ---------------------------------------------------------------------------
# Transform adjoints (checked as exact transposes)
# ---------------------------------------------------------------------------

def test_irfft_adjoint_is_transpose(rng):
    # <irfft(S), y> == <S, adjoint(y)> for all S, y (real inner product on
    # the packed complex vector).
    F = 64
    S = rng.standard_normal(F // 2 + 1) + 1j * rng.standard_normal(F // 2 + 1)
    S[0] = S[0].real
    S[-1] = S[-1].real
    y = rng.standard_normal(F)
    lhs = float(np.dot(irfft(S, F), y))
    adj = _irfft_adjoint(y, F)
    rhs = float(np.sum(S.real * adj.real + S.imag * adj.imag))
    assert lhs == pytest.approx(rhs, rel=1e-12)


def test_rfft_adjoint_is_transpose(rng):
    F = 64
    x = rng.standard_normal(F)
    G = rng.standard_normal(F // 2 + 1) + 1j * rng.standard_normal(F // 2 + 1)
    X = rfft(x, F)
    lhs = float(np.sum(X.real * G.real + X.imag * G.imag))
    rhs = float(np.dot(x, _rfft_adjoint(G, F)))
    assert lhs == pytest.approx(rhs, rel=1e-12)


def test_band_coeffs_agree_with_biquad_designs():
    eq = EqParams(
        ShelfBand(5.0, 150.0),
        (PeakBand(-7.0, 800.0, 1.3),) + tuple(PeakBand(0.0, 1000.0, 1.0)
                                              for _ in range(3)),
        ShelfBand(-4.0, 7000.0),
    )
    designed = eq_biquads(eq, FS)
    ls = _band_coeffs("low_shelf", 5.0, 150.0, SHELF_Q, FS)
    pk = _band_coeffs("peaking", -7.0, 800.0, 1.3, FS)
    hs = _band_coeffs("high_shelf", -4.0, 7000.0, SHELF_Q, FS)
    z = np.exp(-1j * np.linspace(0.1, 3.0, 7))
    for got, want in [(ls, designed[0]), (pk, designed[1]), (hs, designed[5])]:
        b, a = got
        h_got = (b[0] + b[1] * z + b[2] * z * z) / (a[0] + a[1] * z + a[2] * z * z)
        h_want = (want.b[0] + want.b[1] * z + want.b[2] * z * z) / (
            want.a[0] + want.a[1] * z + want.a[2] * z * z)
        np.testing.assert_allclose(h_got, h_want, rtol=1e-12)


def test_static_partials_match_finite_differences(rng):
    x_db = rng.uniform(-40, -5, 50)
    t, r, w = -22.0, 3.5, 8.0
    dyx, dyt, dyr, dyw = _static_partials(x_db, t, r, w)
    h = 1e-6

    def f(t_, r_, w_, x_=x_db):
        return static_compress(np.asarray(x_), t_, r_, w_)

    np.testing.assert_allclose(dyt, (f(t + h, r, w) - f(t - h, r, w)) / (2 * h),
                               atol=1e-6)
    np.testing.assert_allclose(dyr, (f(t, r + h, w) - f(t, r - h, w)) / (2 * h),
                               atol=1e-6)
    np.testing.assert_allclose(dyw, (f(t, r, w + h) - f(t, r, w - h)) / (2 * h),
                               atol=1e-6)
    np.testing.assert_allclose(dyx, (f(t, r, w, x_db + h) - f(t, r, w, x_db - h))
                               / (2 * h), atol=1e-6)


# ---------------------------------------------------------------------------
# The full chain: render parity and exact-vs-FD
# ---------------------------------------------------------------------------

def test_evaluator_render_matches_process_chain():
    x, ref, v = smooth_case(3)
    ev = ChainLossEvaluator(x, ref)
    out = ev.render(v)
    p = EffectParams.from_vector(denormalize_vector(v, FS))
    expect = process_chain(x, p, "differentiable")
    np.testing.assert_allclose(out.samples, expect.samples, rtol=1e-9, atol=1e-12)


def test_loss_zero_at_identity():
    rng = np.random.default_rng(1)
    x = AudioBuffer(0.3 * rng.standard_normal(8000), FS)
    ev = ChainLossEvaluator(x, x)
    v0 = normalize(EffectParams.neutral()).v
    assert ev.overall(v0) == pytest.approx(0.0, abs=1e-6)


@pytest.mark.parametrize("seed", [0, 7])
def test_exact_gradient_matches_central_differences(seed):
    # Example contract: max relative error below 1e-3 at step 1e-4 on a
    # differentiable test point.
    x, ref, v = smooth_case(seed)
    ev = ChainLossEvaluator(x, ref)
    exact = ev.loss_and_grad(v).grad
    fd = fd_gradient(ev.overall, v, step=1e-4)
    mask = np.abs(fd) > 1e-6
    rel = np.abs(exact[mask] - fd[mask]) / np.abs(fd[mask])
    assert np.max(rel) < 1e-3


def test_exact_gradient_converges_as_fd_step_shrinks():
    x, ref, v = smooth_case(1)
    ev = ChainLossEvaluator(x, ref)
    exact = ev.loss_and_grad(v).grad
    errs = []
    for h in (1e-3, 1e-5):
        fd = fd_gradient(ev.overall, v, step=h)
        errs.append(np.max(np.abs(exact - fd) / np.maximum(np.abs(fd), 1e-9)))
    assert errs[1] < errs[0]
    assert errs[1] < 1e-3


def test_wrapper_api_and_eval_counts():
    x, ref, v = smooth_case(2, n=4000)
    r_exact = loss_grad_exact(x, ref, v)
    r_fd = loss_grad_fd(x, ref, v, step=1e-6)
    assert r_exact.evals == 1
    assert r_fd.evals == 44  # two chain renders per coordinate
    assert r_exact.loss.overall == pytest.approx(r_fd.loss.overall, rel=1e-9)
    mask = np.abs(r_fd.grad) > 1e-6
    np.testing.assert_allclose(r_exact.grad[mask], r_fd.grad[mask], rtol=1e-3)
    r_spsa = loss_grad_spsa(x, ref, v, n_avg=3, seed=0)
    assert r_spsa.evals == 6


# ---------------------------------------------------------------------------
# Estimators on a known quadratic
# ---------------------------------------------------------------------------

def quad_and_grad():
    rng = np.random.default_rng(42)
    A = rng.standard_normal((22, 22))
    A = A @ A.T / 22 + np.eye(22)
    b = rng.standard_normal(22)

    def f(v):
        return float(0.5 * v @ A @ v + b @ v)

    def g(v):
        return A @ v + b

    return f, g


def test_fd_gradient_exact_on_quadratic():
    f, g = quad_and_grad()
    v = np.random.default_rng(0).uniform(0, 1, 22)
    np.testing.assert_allclose(fd_gradient(f, v, step=1e-4), g(v), atol=1e-8)


def test_spsa_is_deterministic_given_seed():
    f, _ = quad_and_grad()
    v = np.random.default_rng(1).uniform(0, 1, 22)
    g1 = spsa_gradient(f, v, n_avg=8, rng=np.random.default_rng(123))
    g2 = spsa_gradient(f, v, n_avg=8, rng=np.random.default_rng(123))
    np.testing.assert_array_equal(g1, g2)


def test_spsa_converges_to_gradient_with_averaging():
    f, g = quad_and_grad()
    v = np.random.default_rng(2).uniform(0, 1, 22)
    truth = g(v)

    def cosine(est):
        return float(est @ truth / (np.linalg.norm(est) * np.linalg.norm(truth)))

    rng = np.random.default_rng(7)
    c_small = cosine(spsa_gradient(f, v, n_avg=1, rng=rng))
    est = spsa_gradient(f, v, n_avg=2000, rng=np.random.default_rng(8))
    c_large = cosine(est)
    assert c_large > 0.98
    assert c_large > c_small - 0.02
    # Averaged estimate approaches the true gradient, not just its direction.
    assert np.linalg.norm(est - truth) / np.linalg.norm(truth) < 0.15


# ---------------------------------------------------------------------------
# Optimizer behavior
# ---------------------------------------------------------------------------

def test_optimizer_config_learning_rates():
    assert OptimizerConfig(method="exact").learning_rate() == pytest.approx(1e-2)
    assert OptimizerConfig(method="fd").learning_rate() == pytest.approx(1e-2)
    assert OptimizerConfig(method="spsa").learning_rate() == pytest.approx(1e-3)
    assert OptimizerConfig(method="exact", lr=0.5).learning_rate() == 0.5


def test_optimize_reduces_loss_from_random_starts():
    x, ref, _ = smooth_case(5, n=6000)
    for seed in range(3):
        v0 = np.random.default_rng(seed).uniform(0.3, 0.7, 22)
        res = optimize_style(x, ref, OptimizerConfig(method="exact", steps=10),
                             v0=v0)
        assert res.history[-1].overall <= res.history[0].overall
        assert res.best_loss.overall <= min(h.overall for h in res.history)


def test_optimize_identity_stays_near_neutral():
    rng = np.random.default_rng(9)
    x = AudioBuffer(0.3 * rng.standard_normal(6000), FS)
    res = optimize_style(x, x, OptimizerConfig(method="exact", steps=20))
    v_neutral = normalize(EffectParams.neutral()).v
    assert np.max(np.abs(res.best_v - v_neutral)) < 0.05


def test_optimize_result_shapes_and_counters():
    x, ref, _ = smooth_case(6, n=4000)
    steps = 5
    res = optimize_style(x, ref, OptimizerConfig(method="fd", steps=steps,
                                                 fd_step=1e-6))
    assert res.trajectory.shape == (steps + 1, 22)
    assert len(res.history) == steps + 1
    assert res.evals == steps * 44
    assert np.all((res.trajectory >= 0) & (res.trajectory <= 1))


def test_optimize_spsa_runs_and_is_deterministic():
    x, ref, _ = smooth_case(8, n=4000)
    cfg = OptimizerConfig(method="spsa", steps=5, spsa_avg=2, seed=11)
    r1 = optimize_style(x, ref, cfg)
    r2 = optimize_style(x, ref, cfg)
    np.testing.assert_array_equal(r1.best_v, r2.best_v)
    assert r1.evals == 5 * 4
