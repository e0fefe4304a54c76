import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from snaphdr.metrics import (
    EvalReport,
    capped,
    cpsnr,
    error_pixel_ratio,
    evaluate,
    gcpsnr,
    gtonemap,
    ln_mse,
)

unit = st.floats(0.0, 1.0, allow_nan=False)


def test_cpsnr_examples():
    truth = np.full((4, 4, 3), 0.5)
    assert cpsnr(truth + 0.1, truth) == pytest.approx(20.0, abs=1e-9)
    pred = truth.copy()
    pred.reshape(-1)[::2] += math.sqrt(0.02)   # half the values off by sqrt(0.02): MSE 0.01
    assert cpsnr(pred, truth) == pytest.approx(20.0, abs=1e-9)
    assert cpsnr(truth, truth) == math.inf
    assert capped(cpsnr(truth, truth)) == 99.0
    with pytest.raises(ValueError):
        cpsnr(truth, truth[:2])


def test_cpsnr_decreases_with_noise():
    truth = np.random.default_rng(0).random((16, 16, 3))
    for seed in range(5):
        rng = np.random.default_rng(seed)
        noise = rng.normal(size=truth.shape)
        vals = [cpsnr(truth + a * noise, truth) for a in (0.001, 0.01, 0.1)]
        assert vals[0] > vals[1] > vals[2]


def test_gtonemap_examples():
    assert gtonemap(0.0) == 0.0
    assert gtonemap(1.0) == pytest.approx(1.0, abs=1e-15)
    assert gtonemap(1 / 5000) == pytest.approx(math.log(2) / math.log(5001), abs=1e-15)
    assert gtonemap(1.0, mu=10.0) == pytest.approx(1.0)


@given(unit, unit)
def test_gtonemap_monotone(a, b):
    if a < b:
        assert gtonemap(a) < gtonemap(b)


def test_gcpsnr_definition_and_dark_sensitivity():
    rng = np.random.default_rng(1)
    p, t = rng.random((2, 8, 8, 3))
    assert gcpsnr(p, t) == cpsnr(gtonemap(p), gtonemap(t))
    assert gcpsnr(t, t) == math.inf
    truth = np.full((1, 2, 3), 0.8)
    truth[0, 0] = 0.001
    dark, bright = truth.copy(), truth.copy()
    dark[0, 0, 0] += 0.001
    bright[0, 1, 0] += 0.001
    assert gcpsnr(dark, truth) < gcpsnr(bright, truth)


def test_gcpsnr_clips_prediction():
    t = np.full((2, 2, 3), 0.5)
    p = t.copy()
    p[0, 0, 0] = 1.7
    q = t.copy()
    q[0, 0, 0] = 1.0
    assert gcpsnr(p, t) == gcpsnr(q, t)


def test_ln_mse_examples():
    rng = np.random.default_rng(2)
    t = rng.random((5, 5, 3)) + 0.1
    assert ln_mse(t, t) == 0.0
    gray = np.repeat(rng.random((5, 5, 1)) + 0.1, 3, axis=2)
    r = 0.03
    assert ln_mse(gray * (1 + r), gray) == pytest.approx(r * r, rel=1e-12)
    ones = np.ones((4, 4, 3))
    p = rng.random((4, 4, 3))
    assert ln_mse(p, ones) == pytest.approx(np.mean((p - ones) ** 2), rel=1e-15)


def test_ln_mse_weighting_ratio():
    truth = np.array([[[0.01] * 3, [1.0] * 3]])
    e = 1e-3
    dark, bright = truth.copy(), truth.copy()
    dark[0, 0, 0] += e
    bright[0, 1, 0] += e
    assert ln_mse(dark, truth) / ln_mse(bright, truth) == pytest.approx((1.0 / 0.01) ** 2, rel=1e-9)


def test_error_pixel_ratio_examples():
    t = np.zeros((2, 5, 3))
    assert all(r == 0 for _, r in error_pixel_ratio(t, t, [0.0, 0.1]))
    p = t.copy()
    p[0, 0] = [0.5, 0.0, 0.0]       # mean squared RGB error 1/12
    p[1, 2] = [0.125] * 3           # 1/64
    curve = error_pixel_ratio(p, t, [0.0, 0.005, 1 / 64, 0.05, 1 / 12, 0.1])
    assert [r for _, r in curve] == [0.2, 0.2, 0.1, 0.1, 0.0, 0.0]
    with pytest.raises(ValueError):
        error_pixel_ratio(p, t, [0.1, 0.01])


@settings(max_examples=30)
@given(arrays(np.float64, (4, 4, 3), elements=unit), arrays(np.float64, (4, 4, 3), elements=unit))
def test_error_curve_monotone_and_bounded(p, t):
    ratios = [r for _, r in error_pixel_ratio(p, t, np.logspace(-6, 0, 13))]
    assert all(0 <= r <= 1 for r in ratios)
    assert all(b <= a for a, b in zip(ratios, ratios[1:]))


def test_report_outputs(tmp_path):
    t = np.full((4, 4, 3), 0.5)
    rep = evaluate(t, t)
    assert isinstance(rep, EvalReport)
    rep.write_csv(tmp_path / "r.csv")
    rep.write_curve_csv(tmp_path / "c.csv")
    lines = (tmp_path / "r.csv").read_text().splitlines()
    assert lines[0] == "metric,value" and lines[1] == "cpsnr_db,99.0" and lines[3] == "ln_mse,0.0"
    assert (tmp_path / "c.csv").read_text().startswith("threshold,ratio\n")
    assert "cpsnr_db" in rep.table()
