"""CLI subcommands: schemas, determinism, and exit codes."""

import csv
import json
import xml.etree.ElementTree as ET

import numpy as np
import pytest

from fxstyle.audio_io import AudioBuffer, read_wav, write_wav
from fxstyle.cli import main
from fxstyle.params import EffectParams, PARAM_NAMES

from conftest import speechlike

FS = 24000


def run(argv):
    try:
        rc = main(argv)
    except SystemExit as exc:  # argparse errors
        return int(exc.code or 0)
    return 0 if rc is None else int(rc)


@pytest.fixture
def pair_wavs(tmp_path):
    x = speechlike(3.0, seed=0)
    ref = speechlike(3.0, seed=1, peak=0.3)
    xp = tmp_path / "input.wav"
    rp = tmp_path / "ref.wav"
    write_wav(x, xp)
    write_wav(ref, rp)
    return xp, rp


def read_csv(path):
    with open(path, newline="") as fh:
        return list(csv.reader(fh))


# ---------------------------------------------------------------------------
# transfer
# ---------------------------------------------------------------------------

def test_transfer_exact_outputs_and_manifest(pair_wavs, tmp_path):
    out = tmp_path / "out"
    rc = run(["transfer", str(pair_wavs[0]), str(pair_wavs[1]),
              "--method", "exact", "--steps", "8", "--out", str(out)])
    assert rc == 0
    assert (out / "output.wav").exists()
    params = json.loads((out / "params.json").read_text())
    traj = read_csv(out / "trajectory.csv")
    assert traj[0] == ["step", "loss", *PARAM_NAMES]
    assert len(traj) == 1 + 8 + 1  # header + per-step rows + final point
    metrics = json.loads((out / "metrics.json").read_text())
    assert set(metrics) >= {"sce", "rms_err", "lufs_err"}
    manifest = json.loads((out / "transfer_manifest.json").read_text())
    assert manifest["command"] == "transfer"
    assert manifest["arguments"]["steps"] == 8
    rendered = read_wav(out / "output.wav")
    assert rendered.sample_rate == FS
    assert np.all(np.isfinite(rendered.samples))
    EffectParams.from_json(json.dumps(params))  # parses as a parameter set


def test_transfer_rb_dsp_writes_baseline_report(pair_wavs, tmp_path):
    out = tmp_path / "rb"
    rc = run(["transfer", str(pair_wavs[0]), str(pair_wavs[1]),
              "--method", "rb-dsp", "--out", str(out)])
    assert rc == 0
    report = json.loads((out / "baseline_report.json").read_text())
    assert report["halted_on"] in ("tolerance", "floor")
    assert (out / "output.wav").exists()


def test_transfer_identity_reference_stays_near_neutral(tmp_path):
    x = speechlike(3.0, seed=2)
    p = tmp_path / "x.wav"
    write_wav(x, p)
    out = tmp_path / "id"
    rc = run(["transfer", str(p), str(p), "--method", "exact",
              "--steps", "10", "--out", str(out)])
    assert rc == 0
    got = EffectParams.from_json((out / "params.json").read_text())
    neutral = EffectParams.neutral()
    assert abs(got.eq.low_shelf.gain_db - neutral.eq.low_shelf.gain_db) < 3.0
    assert got.comp.ratio < 2.0


def test_transfer_missing_input_fails(tmp_path):
    rc = run(["transfer", str(tmp_path / "nope.wav"), str(tmp_path / "nope.wav"),
              "--out", str(tmp_path / "o")])
    assert rc != 0


def test_transfer_rerun_is_byte_identical(pair_wavs, tmp_path):
    outs = []
    for name in ("a", "b"):
        out = tmp_path / name
        rc = run(["transfer", str(pair_wavs[0]), str(pair_wavs[1]),
                  "--method", "exact", "--steps", "5", "--seed", "3",
                  "--out", str(out)])
        assert rc == 0
        outs.append(out)
    assert (outs[0] / "output.wav").read_bytes() == (outs[1] / "output.wav").read_bytes()
    assert (outs[0] / "trajectory.csv").read_bytes() == (outs[1] / "trajectory.csv").read_bytes()
    assert (outs[0] / "params.json").read_bytes() == (outs[1] / "params.json").read_bytes()


# ---------------------------------------------------------------------------
# gradcheck
# ---------------------------------------------------------------------------

def test_gradcheck_passes_and_writes_csv(tmp_path):
    out = tmp_path / "gc"
    rc = run(["gradcheck", "--n-cases", "2", "--spsa-avg", "1",
              "--out", str(out)])
    assert rc == 0
    rows = read_csv(out / "gradcheck.csv")
    assert rows[0] == ["case", "param", "exact", "fd", "rel_err",
                       "spsa_fd_cosine"]
    assert len(rows) == 1 + 2 * 22


def test_gradcheck_zero_cases_is_vacuously_ok(tmp_path):
    out = tmp_path / "gc0"
    rc = run(["gradcheck", "--n-cases", "0", "--out", str(out)])
    assert rc == 0
    assert len(read_csv(out / "gradcheck.csv")) == 1


def test_gradcheck_detects_a_corrupted_gradient(tmp_path):
    out = tmp_path / "bad"
    rc = run(["gradcheck", "--n-cases", "1", "--corrupt-gradient",
              "--out", str(out)])
    assert rc == 1


# ---------------------------------------------------------------------------
# bench
# ---------------------------------------------------------------------------

def test_bench_reports_all_methods(tmp_path):
    out = tmp_path / "bench"
    rc = run(["bench", "--method", "all", "--n-iters", "1", "--out", str(out)])
    assert rc == 0
    rows = read_csv(out / "bench.csv")
    assert rows[0] == ["method", "evals_per_gradient", "seconds_per_gradient",
                       "evals_per_second", "realtime_factor"]
    methods = [r[0] for r in rows[1:]]
    assert {"exact", "fd", "spsa"} <= set(methods)
    by = {r[0]: r for r in rows[1:]}
    assert int(by["exact"][1]) == 1
    assert int(by["fd"][1]) == 44


# ---------------------------------------------------------------------------
# datagen + eval
# ---------------------------------------------------------------------------

@pytest.fixture
def corpus_dir(tmp_path):
    d = tmp_path / "corpus"
    d.mkdir()
    for i in range(2):
        write_wav(speechlike(6.0, seed=10 + i), d / f"take{i}.wav")
    return d


def test_datagen_writes_pairs_and_manifest(corpus_dir, tmp_path):
    out = tmp_path / "pairs"
    rc = run(["datagen", "--corpus", str(corpus_dir), "--n-pairs", "2",
              "--segment-length", "65536", "--out", str(out)])
    assert rc == 0
    lines = (out / "manifest.jsonl").read_text().splitlines()
    assert len(lines) == 2
    for i, line in enumerate(lines):
        rec = json.loads(line)
        for role in ("input", "reference", "target"):
            path = out / f"pair{i:04d}_{role}.wav"
            assert path.exists()
            assert len(read_wav(path).samples) == 65536 // 2
        assert "truth_params" in rec and "seed" in rec


def test_datagen_is_deterministic(corpus_dir, tmp_path):
    blobs = []
    for name in ("p1", "p2"):
        out = tmp_path / name
        rc = run(["datagen", "--corpus", str(corpus_dir), "--n-pairs", "1",
                  "--segment-length", "65536", "--seed", "5", "--out", str(out)])
        assert rc == 0
        blobs.append((out / "pair0000_target.wav").read_bytes()
                     + (out / "manifest.jsonl").read_bytes())
    assert blobs[0] == blobs[1]


def test_eval_scores_pairs_and_identity_row_is_zero(corpus_dir, tmp_path):
    pairs = tmp_path / "pairs"
    rc = run(["datagen", "--corpus", str(corpus_dir), "--n-pairs", "2",
              "--segment-length", "65536", "--out", str(pairs)])
    assert rc == 0
    # Score a "system output" equal to the target itself: every error metric
    # for the output column must vanish.
    lines = [json.loads(l) for l in (pairs / "manifest.jsonl").read_text().splitlines()]
    for i, rec in enumerate(lines):
        rec["files"]["output"] = rec["files"]["target"]
    amended = pairs / "amended.jsonl"
    amended.write_text("\n".join(json.dumps(r) for r in lines) + "\n")
    out = tmp_path / "scores"
    rc = run(["eval", "--manifest", str(amended), "--out", str(out)])
    assert rc == 0
    rows = read_csv(out / "metrics.csv")
    header = rows[0]
    assert header == ["pair", "condition", "mrstft", "msd", "sce", "rms_err",
                      "lufs_err"]
    out_rows = [r for r in rows[1:] if r[1] == "output"]
    in_rows = [r for r in rows[1:] if r[1] == "input"]
    assert len(out_rows) == 2 and len(in_rows) == 2
    for row in out_rows:
        for cell in row[2:]:
            assert float(cell) == pytest.approx(0.0, abs=1e-9)
    summary = json.loads((out / "summary.json").read_text())
    # Summary holds per-condition means of the CSV columns.
    for cond, group in (("input", in_rows), ("output", out_rows)):
        for j, name in enumerate(header[2:], start=2):
            vals = [float(r[j]) for r in group]
            assert summary[cond][name] == pytest.approx(np.mean(vals), abs=1e-12)


# ---------------------------------------------------------------------------
# styles + plot
# ---------------------------------------------------------------------------

def test_styles_renders_all_five(pair_wavs, tmp_path):
    out = tmp_path / "styles"
    rc = run(["styles", str(pair_wavs[0]), "--out", str(out)])
    assert rc == 0
    for name in ("telephone", "warm", "bright", "neutral", "broadcast"):
        assert (out / f"{name}.wav").exists()
        payload = json.loads((out / f"{name}_params.json").read_text())
        EffectParams.from_json(json.dumps(payload))


def test_plot_emits_parsable_svg_and_csv(tmp_path):
    params = tmp_path / "p.json"
    params.write_text(EffectParams.neutral().to_json())
    out = tmp_path / "figs"
    rc = run(["plot", "--params", str(params), "--out", str(out)])
    assert rc == 0
    for stem in ("eq_response", "comp_curve"):
        rows = read_csv(out / f"{stem}.csv")
        assert len(rows) > 10
        ET.fromstring((out / f"{stem}.svg").read_text())  # well-formed XML
    # Neutral parameters: flat EQ, identity curve.
    eq_rows = read_csv(out / "eq_response.csv")[1:]
    gains = [float(r[1]) for r in eq_rows]
    assert max(abs(g) for g in gains) < 0.01
    comp_rows = read_csv(out / "comp_curve.csv")[1:]
    for r in comp_rows:
        assert float(r[1]) == pytest.approx(float(r[0]), abs=1e-9)
