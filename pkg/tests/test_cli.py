import json

import numpy as np
import pytest

from snaphdr import hdrio, selftest
from snaphdr.autonet import load_checkpoint
from snaphdr.cli import load_config, main

TINY_INI = """
[sim]
pattern = default
exposure_scales = 1, 4, 16
bit_depth = 8

[train]
iterations = 2
batch_size = 2
patch_size = 16
depth = 3
base_channels = 2
adapt_channels = 2
augment = false
"""


def _err(capsys):
    line = capsys.readouterr().err.strip().splitlines()[-1]
    return json.loads(line)


@pytest.fixture
def scenes(tmp_path):
    assert main(["synth", "--out", str(tmp_path / "data"), "--count", "2", "--size", "16"]) == 0
    (tmp_path / "cfg.ini").write_text(TINY_INI)
    return tmp_path


def test_simulate_outputs_and_overwrite_guard(scenes, capsys):
    src = scenes / "data" / "scene_000.hdr"
    out = scenes / "sim"
    assert main(["simulate", "--in", str(src), "--pattern", "default", "--out", str(out)]) == 0
    names = {p.name for p in out.iterdir()}
    assert {"raw.pfm", "gt.hdr", "ldr_0.ppm", "ldr_0.pfm", "ldr_1.ppm", "ldr_2.pfm"} <= names
    raw = hdrio.read_pfm(out / "raw.pfm")
    assert raw.shape == (16, 16)
    assert np.array_equal(np.round(raw * 255), raw * 255)
    before = (out / "raw.pfm").read_bytes()
    assert main(["simulate", "--in", str(src), "--out", str(out)]) == 2
    err = _err(capsys)
    assert err["error"] == "usage" and "--force" in err["message"]
    assert main(["simulate", "--in", str(src), "--out", str(out), "--force"]) == 0
    assert (out / "raw.pfm").read_bytes() == before


def test_evaluate_identical_files(scenes, capsys):
    gt = scenes / "data" / "scene_001.hdr"
    assert main(["evaluate", "--pred", str(gt), "--truth", str(gt), "--out", str(scenes / "rep")]) == 0
    rows = dict(line.split(",") for line in (scenes / "rep" / "report.csv").read_text().splitlines()[1:])
    assert float(rows["cpsnr_db"]) == 99.0 and float(rows["ln_mse"]) == 0.0
    assert (scenes / "rep" / "curve.csv").exists() and (scenes / "rep" / "report.txt").exists()


def test_full_toy_loop(scenes, capsys, monkeypatch):
    d = str(scenes)
    cfg = ["--config", f"{d}/cfg.ini"]
    assert main(["simulate", "--in", f"{d}/data/scene_000.hdr", "--out", f"{d}/sim"]) == 0
    assert main(["train-ldr", "--data", f"{d}/data", *cfg, "--out", f"{d}/ldr.ckpt"]) == 0
    assert main(["train-ln", "--data", f"{d}/data", *cfg, "--ldr", f"{d}/ldr.ckpt",
                 "--out", f"{d}/ln.ckpt"]) == 0
    assert (scenes / "ldr_loss.csv").read_text().startswith("iteration,loss\n")
    assert "config " in (scenes / "ln_manifest.txt").read_text()
    assert main(["reconstruct", "--raw", f"{d}/sim/raw.pfm", "--ldr", f"{d}/ldr.ckpt",
                 "--ln", f"{d}/ln.ckpt", "--out", f"{d}/pred.hdr"]) == 0
    assert main(["evaluate", "--pred", f"{d}/pred.hdr", "--truth", f"{d}/sim/gt.hdr",
                 "--out", f"{d}/rep"]) == 0
    _, config = load_checkpoint(scenes / "ln.ckpt")
    assert config["role"] == "ln" and config["train"]["depth"] == 3
    # Checkpoints swapped: rejected as a usage error.
    assert main(["reconstruct", "--raw", f"{d}/sim/raw.pfm", "--ldr", f"{d}/ln.ckpt",
                 "--ln", f"{d}/ldr.ckpt", "--out", f"{d}/p2.hdr"]) == 2
    # Same seed again: identical checkpoint bytes.
    assert main(["train-ldr", "--data", f"{d}/data", *cfg, "--out", f"{d}/ldr2.ckpt"]) == 0
    assert (scenes / "ldr.ckpt").read_bytes() == (scenes / "ldr2.ckpt").read_bytes()
    monkeypatch.setenv("SNAPHDR_SEED", "5")
    assert main(["train-ldr", "--data", f"{d}/data", *cfg, "--out", f"{d}/ldr3.ckpt"]) == 0
    assert load_checkpoint(scenes / "ldr3.ckpt")[1]["train"]["seed"] == 5


def test_usage_errors(tmp_path, capsys):
    assert main([]) == 2
    assert main(["no-such-command"]) == 2
    assert main(["simulate", "--in", str(tmp_path / "missing.hdr"), "--out", str(tmp_path)]) == 2
    assert _err(capsys)["exit_code"] == 2
    (tmp_path / "bad.ini").write_text("[train]\nwidth = 3\n")
    with pytest.raises(Exception):
        load_config(str(tmp_path / "bad.ini"))
    assert main(["train-ldr", "--data", str(tmp_path), "--config", str(tmp_path / "bad.ini"),
                 "--out", str(tmp_path / "x.ckpt")]) == 2


def test_runtime_failure_exit_code(tmp_path, capsys):
    (tmp_path / "broken.hdr").write_bytes(b"#?RADIANCE\n\n-Y 4 +X 4\n\x01")
    assert main(["simulate", "--in", str(tmp_path / "broken.hdr"), "--out", str(tmp_path / "o")]) == 1
    err = _err(capsys)
    assert err["error"] == "ValueError" and "truncated" in err["message"]


def test_selftest_exit_codes(monkeypatch, capsys):
    assert main(["selftest"]) == 0
    assert "FAIL" not in capsys.readouterr().out
    monkeypatch.setattr(selftest, "radiometric_errors", lambda: {"forced": 1.0})
    assert main(["selftest"]) == 3


def test_config_types(tmp_path):
    (tmp_path / "c.ini").write_text(TINY_INI + "betas = 0.8, 0.99\nlr = 0.01\n")
    sim, train = load_config(str(tmp_path / "c.ini"))
    assert train.betas == (0.8, 0.99) and train.lr == 0.01 and train.augment is False
    assert sim.exposure_scales == (1.0, 4.0, 16.0)


def test_config_inline_comments(tmp_path):
    (tmp_path / "c.ini").write_text("[train]\ndepth = 3   ; shallow\nupsample = transposed # learned\n")
    _, train = load_config(str(tmp_path / "c.ini"))
    assert train.depth == 3 and train.upsample == "transposed"
