"""Command-line surface: style transfer, gradient diagnostics, benchmarks,
data generation, evaluation, and figure emission.

Every command writes a RunManifest JSON next to its outputs; re-running a
command with the manifest's arguments reproduces byte-identical CSV and
float32-WAV outputs. All files are written atomically (temp + rename).
"""

from __future__ import annotations

import argparse
import io
import json
import math
import sys
import time
import xml.sax.saxutils as saxutils
from pathlib import Path

import numpy as np

from . import __version__
from .audio_io import AudioBuffer, read_wav, resample, write_wav
from .baseline import rb_style_transfer
from .datagen import STYLE_PRESETS, make_pair, render_style, sample_segment
from .effects import eq_response, process_chain, static_compress
from .grad import (
    ChainLossEvaluator,
    OptimizerConfig,
    fd_gradient,
    optimize_style,
    spsa_gradient,
)
from .objective import (
    lufs_integrated,
    metric_msd,
    metric_rms,
    metric_sce,
    mrstft,
    rms_level_db,
    spectral_centroid,
)
from .params import (
    N_PARAMS,
    PARAM_NAMES,
    EffectParams,
    NormalizedParams,
    denormalize,
)


# -- output plumbing --------------------------------------------------------

def _atomic_write_bytes(path: Path, data: bytes) -> None:
    tmp = path.parent / (path.name + ".tmp")
    tmp.write_bytes(data)
    tmp.replace(path)


def _atomic_write_text(path: Path, text: str) -> None:
    _atomic_write_bytes(path, text.encode("utf-8"))


def _write_wav_atomic(buf: AudioBuffer, path: Path, format: str = "float32") -> None:
    tmp = path.parent / (path.name + ".tmp")
    write_wav(buf, tmp, format=format)
    tmp.replace(path)


def _write_csv(path: Path, header: list[str], rows: list[list]) -> None:
    out = io.StringIO()
    out.write(",".join(header) + "\n")
    for row in rows:
        out.write(",".join(_csv_cell(v) for v in row) + "\n")
    _atomic_write_text(path, out.getvalue())


def _csv_cell(v) -> str:
    if isinstance(v, float):
        return repr(float(v))
    return str(v)


def _write_manifest(out_dir: Path, command: str, args: dict, seed: int,
                    started: float) -> None:
    doc = {
        "command": command,
        "arguments": {
            k: (str(v) if isinstance(v, Path) else v)
            for k, v in args.items()
            if k not in ("fn",)
        },
        "tool_version": __version__,
        "seed": seed,
        "timestamps": {"start": started, "end": time.time()},
    }
    _atomic_write_text(out_dir / f"{command}_manifest.json", json.dumps(doc, indent=2))


# -- SVG emission (dependency-free polylines) --------------------------------

_SVG_W, _SVG_H, _SVG_PAD = 640, 400, 50


def _svg_plot(xs: np.ndarray, ys: np.ndarray, title: str, xlabel: str,
              ylabel: str, logx: bool = False) -> str:
    px = np.log10(xs) if logx else np.asarray(xs, float)
    py = np.asarray(ys, float)
    x0, x1 = float(px.min()), float(px.max())
    y0, y1 = float(py.min()), float(py.max())
    if y1 - y0 < 1e-9:
        y0, y1 = y0 - 1.0, y1 + 1.0
    w = _SVG_W - 2 * _SVG_PAD
    h = _SVG_H - 2 * _SVG_PAD
    sx = _SVG_PAD + (px - x0) / (x1 - x0) * w
    sy = _SVG_H - _SVG_PAD - (py - y0) / (y1 - y0) * h
    pts = " ".join(f"{a:.2f},{b:.2f}" for a, b in zip(sx, sy))
    esc = saxutils.escape
    return (
        '<?xml version="1.0" encoding="UTF-8"?>\n'
        f'<svg xmlns="http://www.w3.org/2000/svg" version="1.1" '
        f'width="{_SVG_W}" height="{_SVG_H}" viewBox="0 0 {_SVG_W} {_SVG_H}">\n'
        f'<rect width="{_SVG_W}" height="{_SVG_H}" fill="white"/>\n'
        f'<rect x="{_SVG_PAD}" y="{_SVG_PAD}" width="{w}" height="{h}" '
        'fill="none" stroke="black"/>\n'
        f'<polyline points="{pts}" fill="none" stroke="steelblue" stroke-width="1.5"/>\n'
        f'<text x="{_SVG_W / 2:.0f}" y="20" text-anchor="middle">{esc(title)}</text>\n'
        f'<text x="{_SVG_W / 2:.0f}" y="{_SVG_H - 10}" text-anchor="middle">{esc(xlabel)}</text>\n'
        f'<text x="15" y="{_SVG_H / 2:.0f}" text-anchor="middle" '
        f'transform="rotate(-90 15 {_SVG_H / 2:.0f})">{esc(ylabel)}</text>\n'
        f'<text x="{_SVG_PAD}" y="{_SVG_H - _SVG_PAD + 15}" font-size="10">{x0:.3g}</text>\n'
        f'<text x="{_SVG_W - _SVG_PAD}" y="{_SVG_H - _SVG_PAD + 15}" font-size="10" '
        f'text-anchor="end">{x1:.3g}</text>\n'
        f'<text x="{_SVG_PAD - 4}" y="{_SVG_H - _SVG_PAD}" font-size="10" '
        f'text-anchor="end">{y0:.3g}</text>\n'
        f'<text x="{_SVG_PAD - 4}" y="{_SVG_PAD + 4}" font-size="10" '
        f'text-anchor="end">{y1:.3g}</text>\n'
        "</svg>\n"
    )


# -- commands ----------------------------------------------------------------

def _load_pair(input_path: str, reference_path: str, sample_rate: int | None):
    x = read_wav(input_path)
    ref = read_wav(reference_path)
    rate = sample_rate or x.sample_rate
    if x.sample_rate != rate:
        x = resample(x, rate)
    if ref.sample_rate != rate:
        ref = resample(ref, rate)
    return x, ref


def cmd_transfer(args) -> int:
    started = time.time()
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    x, ref = _load_pair(args.input, args.reference, args.sample_rate)

    if args.method == "rb-dsp":
        out, report = rb_style_transfer(x, ref)
        _atomic_write_text(out_dir / "baseline_report.json", report.to_json())
    else:
        n = min(len(x), len(ref))
        cfg = OptimizerConfig(
            method=args.method,
            steps=args.steps,
            lr=args.lr,
            spsa_eps=args.spsa_eps,
            spsa_avg=args.spsa_avg,
            seed=args.seed,
        )
        result = optimize_style(
            AudioBuffer(x.samples[:n], x.sample_rate),
            AudioBuffer(ref.samples[:n], ref.sample_rate),
            cfg,
        )
        params = result.best_params
        _atomic_write_text(out_dir / "params.json", params.to_json())
        rows = [
            [t, result.history[t].overall, *result.trajectory[t]]
            for t in range(len(result.trajectory))
        ]
        _write_csv(out_dir / "trajectory.csv",
                   ["step", "loss", *PARAM_NAMES], rows)
        out = process_chain(x, params, "differentiable")

    _write_wav_atomic(out, out_dir / "output.wav", format=args.format)

    # Non-intrusive comparison against the (differently sized) reference.
    report = {
        "sce": abs(spectral_centroid(out) - spectral_centroid(ref)),
        "rms_err": abs(rms_level_db(out) - rms_level_db(ref)),
        "lufs_err": abs(lufs_integrated(out) - lufs_integrated(ref)),
    }
    if not all(math.isfinite(v) for v in report.values()):
        print("error: loudness unmeasurable on output or reference", file=sys.stderr)
        return 1
    _atomic_write_text(out_dir / "metrics.json", json.dumps(report, indent=2))
    _write_manifest(out_dir, "transfer", vars(args), args.seed, started)
    return 0


def cmd_gradcheck(args) -> int:
    started = time.time()
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    rng = np.random.default_rng(args.seed)
    fs = 24000
    n = fs // 2
    rows = []
    failed = []
    for case in range(args.n_cases):
        # A strictly positive excitation keeps the finite-difference oracle
        # away from the level detector's nonsmooth point at zero.
        x = AudioBuffer(0.25 + 0.1 * rng.uniform(-1, 1, n), fs)
        vref = rng.uniform(0.35, 0.65, N_PARAMS)
        ref = process_chain(x, denormalize(NormalizedParams(vref), fs), "differentiable")
        v = rng.uniform(0.35, 0.65, N_PARAMS)
        ev = ChainLossEvaluator(x, ref)
        exact = ev.loss_and_grad(v).grad
        if args.corrupt_gradient:
            exact = exact * 1.5 + 1.0
        fd = fd_gradient(ev.overall, v, step=args.fd_step)
        spsa = spsa_gradient(ev.overall, v, eps=args.spsa_eps,
                             n_avg=args.spsa_avg, rng=np.random.default_rng(args.seed + case))
        cos = float(np.dot(spsa, fd) / (np.linalg.norm(spsa) * np.linalg.norm(fd) + 1e-30))
        for i in range(N_PARAMS):
            rel = abs(exact[i] - fd[i]) / max(abs(fd[i]), 1e-30)
            rows.append([case, PARAM_NAMES[i], exact[i], fd[i], rel, cos])
            if abs(fd[i]) > 1e-6 and rel > 1e-3:
                failed.append((case, PARAM_NAMES[i], rel))
        if args.spsa_avg >= 1000 and cos <= 0.9:
            failed.append((case, "spsa_cosine", 1.0 - cos))
    _write_csv(out_dir / "gradcheck.csv",
               ["case", "param", "exact", "fd", "rel_err", "spsa_fd_cosine"], rows)
    _write_manifest(out_dir, "gradcheck", vars(args), args.seed, started)
    if failed:
        for case, name, rel in failed:
            print(f"FAIL case {case} {name}: relative error {rel:.3e}", file=sys.stderr)
        return 1
    return 0


def cmd_bench(args) -> int:
    started = time.time()
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    rng = np.random.default_rng(args.seed)
    fs = 24000
    n = fs
    x = AudioBuffer(0.1 * rng.standard_normal(n), fs)
    ref = AudioBuffer(0.1 * rng.standard_normal(n), fs)
    ev = ChainLossEvaluator(x, ref)
    v = rng.uniform(0.2, 0.8, N_PARAMS)

    def timed(fn):
        t0 = time.perf_counter()
        for _ in range(args.n_iters):
            fn()
        return (time.perf_counter() - t0) / args.n_iters

    render_s = timed(lambda: ev.render(v))
    rows = [["render", 0, render_s, 1.0 / render_s, (n / fs) / render_s]]
    methods = {
        "exact": (1, lambda: ev.loss_and_grad(v)),
        "fd": (2 * N_PARAMS, lambda: fd_gradient(ev.overall, v)),
        "spsa": (2 * args.spsa_avg,
                 lambda: spsa_gradient(ev.overall, v, eps=args.spsa_eps,
                                       n_avg=args.spsa_avg,
                                       rng=np.random.default_rng(args.seed))),
    }
    selected = methods if args.method == "all" else {args.method: methods[args.method]}
    for name, (evals, fn) in selected.items():
        per_grad = timed(fn)
        rows.append([name, evals, per_grad, evals / per_grad, (n / fs) / per_grad])
    _write_csv(out_dir / "bench.csv",
               ["method", "evals_per_gradient", "seconds_per_gradient",
                "evals_per_second", "realtime_factor"], rows)
    _write_manifest(out_dir, "bench", vars(args), args.seed, started)
    return 0


def cmd_datagen(args) -> int:
    started = time.time()
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    corpus = sorted(str(p) for p in Path(args.corpus).glob("*.wav"))
    if not corpus:
        print(f"error: no WAV files in {args.corpus}", file=sys.stderr)
        return 1
    lines = []
    for i in range(args.n_pairs):
        seed = args.seed + i
        seg = sample_segment(corpus, length=args.segment_length, seed=seed)
        pair = make_pair(seg, seed=seed)
        names = {}
        for role in ("input", "reference", "target"):
            name = f"pair{i:04d}_{role}.wav"
            _write_wav_atomic(getattr(pair, role), out_dir / name, format=args.format)
            names[role] = name
        lines.append(json.dumps({
            "pair": i,
            "seed": seed,
            "files": names,
            "truth_params": json.loads(pair.truth_params.to_json()),
        }, sort_keys=True))
    _atomic_write_text(out_dir / "manifest.jsonl", "\n".join(lines) + "\n")
    _write_manifest(out_dir, "datagen", vars(args), args.seed, started)
    return 0


def cmd_styles(args) -> int:
    started = time.time()
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    x = read_wav(args.input)
    for name, preset in STYLE_PRESETS.items():
        out, params = render_style(x, preset, seed=args.seed)
        _write_wav_atomic(out, out_dir / f"{name.lower()}.wav", format=args.format)
        _atomic_write_text(out_dir / f"{name.lower()}_params.json", params.to_json())
    _write_manifest(out_dir, "styles", vars(args), args.seed, started)
    return 0


def cmd_eval(args) -> int:
    started = time.time()
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    manifest_path = Path(args.manifest)
    base = manifest_path.parent
    header = ["pair", "condition", "mrstft", "msd", "sce", "rms_err", "lufs_err"]
    rows = []
    sums = {}
    counts = {}
    for line in manifest_path.read_text().splitlines():
        if not line.strip():
            continue
        rec = json.loads(line)
        target = read_wav(base / rec["files"]["target"])
        conditions = {"input": read_wav(base / rec["files"]["input"])}
        out_name = rec["files"].get("output")
        if out_name:
            conditions["output"] = read_wav(base / out_name)
        for cond, buf in conditions.items():
            n = min(len(buf), len(target))
            a = AudioBuffer(buf.samples[:n], buf.sample_rate)
            b = AudioBuffer(target.samples[:n], target.sample_rate)
            la, lb = lufs_integrated(a), lufs_integrated(b)
            vals = [
                mrstft(a, b),
                metric_msd(a, b),
                metric_sce(a, b),
                metric_rms(a, b),
                abs(la - lb) if math.isfinite(la) and math.isfinite(lb) else float("nan"),
            ]
            rows.append([rec["pair"], cond, *vals])
            acc = sums.setdefault(cond, np.zeros(5))
            acc += np.array(vals)
            counts[cond] = counts.get(cond, 0) + 1
    _write_csv(out_dir / "metrics.csv", header, rows)
    summary = {
        cond: dict(zip(header[2:], (sums[cond] / counts[cond]).tolist()))
        for cond in sums
    }
    _atomic_write_text(out_dir / "summary.json", json.dumps(summary, indent=2))
    _write_manifest(out_dir, "eval", vars(args), args.seed, started)
    return 0


def cmd_plot(args) -> int:
    started = time.time()
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    try:
        params = EffectParams.from_json(Path(args.params).read_text())
    except (ValueError, KeyError, TypeError) as exc:
        print(f"error: malformed parameter file: {exc}", file=sys.stderr)
        return 1
    fs = float(args.sample_rate or 44100)

    n_pts = 512
    freqs = np.geomspace(20.0, 0.49 * fs, n_pts)
    h = eq_response(params.eq, 4097, fs)
    grid = np.linspace(0.0, fs / 2.0, 4097)
    mags = 20.0 * np.log10(np.abs(np.interp(freqs, grid, np.abs(h))) + 1e-12)
    _write_csv(out_dir / "eq_response.csv", ["frequency_hz", "magnitude_db"],
               [[f, m] for f, m in zip(freqs, mags)])
    _atomic_write_text(out_dir / "eq_response.svg",
                       _svg_plot(freqs, mags, "Equalizer response",
                                 "frequency (Hz, log)", "magnitude (dB)", logx=True))

    x_db = np.linspace(-80.0, 0.0, 321)
    y_db = static_compress(x_db, params.comp.threshold_db, params.comp.ratio,
                           params.comp.knee_db) + params.comp.makeup_db
    _write_csv(out_dir / "comp_curve.csv", ["input_db", "output_db"],
               [[a, b] for a, b in zip(x_db, y_db)])
    _atomic_write_text(out_dir / "comp_curve.svg",
                       _svg_plot(x_db, y_db, "Compressor static curve",
                                 "input level (dB)", "output level (dB)"))
    _write_manifest(out_dir, "plot", vars(args), args.seed, started)
    return 0


# -- argument parsing ---------------------------------------------------------

def _add_common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--sample-rate", type=int, default=None,
                   help="analysis sample rate (default: file rate)")
    p.add_argument("--format", choices=("float32", "pcm16"), default="float32")
    p.add_argument("--steps", type=int, default=500)
    p.add_argument("--lr", type=float, default=None)
    p.add_argument("--spsa-eps", type=float, default=5e-4)
    p.add_argument("--spsa-avg", type=int, default=1)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="fxstyle",
                                     description="Audio-effect style transfer toolkit")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("transfer", help="match an input to a style reference")
    p.add_argument("input")
    p.add_argument("reference")
    p.add_argument("--method", choices=("exact", "fd", "spsa", "rb-dsp"), default="exact")
    p.add_argument("--out", required=True)
    _add_common(p)
    p.set_defaults(fn=cmd_transfer)

    p = sub.add_parser("gradcheck", help="compare gradient estimators")
    p.add_argument("--n-cases", type=int, default=5)
    p.add_argument("--fd-step", type=float, default=1e-6,
                   help="finite-difference step for the oracle comparison")
    p.add_argument("--out", required=True)
    p.add_argument("--corrupt-gradient", action="store_true", help=argparse.SUPPRESS)
    _add_common(p)
    p.set_defaults(fn=cmd_gradcheck)

    p = sub.add_parser("bench", help="time gradient evaluations")
    p.add_argument("--method", choices=("exact", "fd", "spsa", "all"), default="all")
    p.add_argument("--n-iters", type=int, default=3)
    p.add_argument("--out", required=True)
    _add_common(p)
    p.set_defaults(fn=cmd_bench)

    p = sub.add_parser("datagen", help="generate self-supervised pairs")
    p.add_argument("--corpus", required=True)
    p.add_argument("--n-pairs", type=int, default=1)
    p.add_argument("--segment-length", type=int, default=262144)
    p.add_argument("--out", required=True)
    _add_common(p)
    p.set_defaults(fn=cmd_datagen)

    p = sub.add_parser("styles", help="render the five style presets")
    p.add_argument("input")
    p.add_argument("--out", required=True)
    _add_common(p)
    p.set_defaults(fn=cmd_styles)

    p = sub.add_parser("eval", help="score pairs against their targets")
    p.add_argument("--manifest", required=True)
    p.add_argument("--out", required=True)
    _add_common(p)
    p.set_defaults(fn=cmd_eval)

    p = sub.add_parser("plot", help="emit EQ/compressor figures")
    p.add_argument("--params", required=True)
    p.add_argument("--out", required=True)
    _add_common(p)
    p.set_defaults(fn=cmd_plot)
    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.fn(args)
    except (OSError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
