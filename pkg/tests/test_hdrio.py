from pathlib import Path

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from snaphdr import hdrio

DATA = Path(__file__).parent / "data"


def rgbe_rel_error(got, ref):
    """Per-component error relative to the pixel's largest component."""
    scale = np.maximum(ref.max(axis=-1, keepdims=True), 1e-300)
    return np.abs(got - ref) / scale


@settings(max_examples=40, deadline=None)
@given(arrays(np.float64, (3, 9, 3), elements=st.floats(1e-20, 1e20)), st.booleans())
def test_rgbe_roundtrip_precision(tmp_path_factory, plane, rle):
    path = tmp_path_factory.mktemp("rgbe") / "x.hdr"
    hdrio.write_hdr(plane, path, rle=rle)
    back = hdrio.read_hdr(path)
    assert back.shape == plane.shape
    assert rgbe_rel_error(back, plane).max() <= 1 / 256


def test_zero_pixel_encodes_to_zero_exponent(tmp_path):
    plane = np.zeros((2, 10, 3))
    plane[1, 3] = [1.0, 2.0, 3.0]
    enc = hdrio.rgbe_encode(plane)
    assert np.all(enc[0] == 0) and enc[1, 0, 3] == 0
    hdrio.write_hdr(plane, tmp_path / "z.hdr")
    back = hdrio.read_hdr(tmp_path / "z.hdr")
    assert np.all(back[0] == 0.0)


def test_encoding_known_value():
    # 1.0 -> mantissa 0.5 * 2^1: bytes (128, 128, 128, 129).
    assert hdrio.rgbe_encode(np.ones((1, 1, 3)))[0, 0].tolist() == [128, 128, 128, 129]
    assert hdrio.rgbe_decode(np.array([128, 64, 0, 129], np.uint8)).tolist() == \
        [128.5 / 128, 64.5 / 128, 0.5 / 128]


def test_rle_used_for_wide_images_only(tmp_path):
    wide, narrow = np.ones((2, 20, 3)), np.ones((2, 5, 3))
    hdrio.write_hdr(wide, tmp_path / "w.hdr")
    hdrio.write_hdr(narrow, tmp_path / "n.hdr")
    wbytes = (tmp_path / "w.hdr").read_bytes()
    body = wbytes[wbytes.index(b"+X 20\n") + 6:]
    assert body[:4] == bytes((2, 2, 0, 20))
    assert len(body) < 2 * 20 * 4            # constant rows compress
    nbytes = (tmp_path / "n.hdr").read_bytes()
    assert len(nbytes[nbytes.index(b"+X 5\n") + 5:]) == 2 * 5 * 4


def test_writer_is_deterministic(tmp_path):
    plane = np.random.default_rng(0).random((7, 33, 3)) * 100
    hdrio.write_hdr(plane, tmp_path / "a.hdr")
    hdrio.write_hdr(plane, tmp_path / "b.hdr")
    assert (tmp_path / "a.hdr").read_bytes() == (tmp_path / "b.hdr").read_bytes()


@pytest.mark.parametrize("name", ["opencv_rle", "opencv_flat"])
def test_decodes_third_party_files(name):
    src = np.load(DATA / f"{name}_source.npy")
    got = hdrio.read_hdr(DATA / f"{name}.hdr")
    assert got.shape == src.shape
    assert rgbe_rel_error(got, src).max() <= 1 / 256


def test_third_party_decode_matches_opencv():
    cv2 = pytest.importorskip("cv2")
    ref = cv2.imread(str(DATA / "opencv_rle.hdr"), cv2.IMREAD_UNCHANGED)[:, :, ::-1]
    got = hdrio.read_hdr(DATA / "opencv_rle.hdr")
    assert rgbe_rel_error(got, ref.astype(np.float64)).max() <= 1 / 256


def _header(order=b"-Y 2 +X 3"):
    return b"#?RADIANCE\nFORMAT=32-bit_rle_rgbe\n\n" + order + b"\n"


def test_pixel_orders(tmp_path):
    px = np.arange(6 * 4, dtype=np.uint8).reshape(2, 3, 4) + 1
    px[..., 3] = 128
    expect = hdrio.rgbe_decode(px)
    for order, fix in [(b"-Y 2 +X 3", lambda a: a), (b"+Y 2 +X 3", lambda a: a[::-1]),
                       (b"-Y 2 -X 3", lambda a: a[:, ::-1]), (b"+Y 2 -X 3", lambda a: a[::-1, ::-1])]:
        (tmp_path / "o.hdr").write_bytes(_header(order) + fix(px).tobytes())
        assert np.array_equal(hdrio.read_hdr(tmp_path / "o.hdr"), expect)


def test_old_style_run_lengths(tmp_path):
    first = bytes((10, 20, 30, 130))
    data = first + bytes((1, 1, 1, 2)) + first * 2 + bytes((5, 5, 5, 130))
    (tmp_path / "old.hdr").write_bytes(_header(b"-Y 2 +X 3") + data)
    got = hdrio.read_hdr(tmp_path / "old.hdr")
    assert np.all(got[0] == got[0, 0]) and np.all(got[1, :2] == got[0, 0])
    assert got[1, 2, 0] == 5.5 * 2.0 ** (130 - 136)


@pytest.mark.parametrize("blob, message", [
    (b"P6\n1 1\n255\n", "bad magic"),
    (_header(b"+X 3 -Y 2"), "pixel order"),
    (_header() + b"\x00" * 10, "truncated"),
    (b"#?RADIANCE\nFORMAT=32-bit_rle_xyze\n\n-Y 1 +X 1\n", "unsupported format"),
    (b"#?RADIANCE\n", "truncated header"),
])
def test_rgbe_errors(tmp_path, blob, message):
    (tmp_path / "bad.hdr").write_bytes(blob)
    with pytest.raises(ValueError, match=message):
        hdrio.read_hdr(tmp_path / "bad.hdr")


def test_truncated_rle_file(tmp_path):
    hdrio.write_hdr(np.random.default_rng(1).random((4, 16, 3)), tmp_path / "t.hdr")
    blob = (tmp_path / "t.hdr").read_bytes()
    (tmp_path / "t.hdr").write_bytes(blob[:-5])
    with pytest.raises(ValueError, match="truncated|corrupt"):
        hdrio.read_hdr(tmp_path / "t.hdr")


def test_write_hdr_rejects_negative(tmp_path):
    with pytest.raises(ValueError):
        hdrio.write_hdr(-np.ones((2, 2, 3)), tmp_path / "n.hdr")


@pytest.mark.parametrize("shape", [(4, 5, 3), (3, 7)])
def test_pfm_bit_exact(tmp_path, shape):
    a = np.random.default_rng(2).normal(size=shape).astype(np.float32)
    a.flat[0] = np.float32(np.inf)
    hdrio.write_pfm(a, tmp_path / "a.pfm")
    back = hdrio.read_pfm(tmp_path / "a.pfm")
    assert back.tobytes() == a.tobytes()
    hdrio.write_pfm(back, tmp_path / "b.pfm")
    assert (tmp_path / "a.pfm").read_bytes() == (tmp_path / "b.pfm").read_bytes()


def test_pfm_layout_and_big_endian(tmp_path):
    a = np.array([[1.0, 2.0], [3.0, 4.0]], np.float32)
    hdrio.write_pfm(a, tmp_path / "a.pfm")
    blob = (tmp_path / "a.pfm").read_bytes()
    assert blob.startswith(b"Pf\n2 2\n-1.0\n")
    assert np.frombuffer(blob[-16:], "<f4").tolist() == [3.0, 4.0, 1.0, 2.0]  # bottom row first
    big = b"Pf\n2 2\n1.0\n" + np.array([3, 4, 1, 2], ">f4").tobytes()
    (tmp_path / "be.pfm").write_bytes(big)
    assert hdrio.read_pfm(tmp_path / "be.pfm").tolist() == a.tolist()


@pytest.mark.parametrize("blob, message", [
    (b"PX\n1 1\n-1.0\n" + bytes(4), "bad magic"),
    (b"Pf\n1 x\n-1.0\n" + bytes(4), "bad dimensions"),
    (b"Pf\n99999999 1\n-1.0\n" + bytes(4), "overflow"),
    (b"Pf\n2 2\n-1.0\n" + bytes(4), "truncated"),
    (b"Pf\n1 1\n0\n" + bytes(4), "zero scale"),
])
def test_pfm_errors(tmp_path, blob, message):
    (tmp_path / "bad.pfm").write_bytes(blob)
    with pytest.raises(ValueError, match=message):
        hdrio.read_pfm(tmp_path / "bad.pfm")


def test_ppm_preview(tmp_path):
    img = np.zeros((2, 3, 3))
    img[0, 0] = 1.0
    img[0, 1] = 2.0          # clipped
    img[1, 0] = 0.5
    hdrio.write_ppm(img, tmp_path / "p.ppm")
    px = hdrio.read_ppm(tmp_path / "p.ppm")
    assert px.dtype == np.uint8 and px.shape == (2, 3, 3)
    assert px[0, 0, 0] == 255 and px[0, 1, 0] == 255 and px[0, 2, 0] == 0
    assert px[1, 0, 0] == round(0.5 ** (1 / 2.2) * 255)
    assert (tmp_path / "p.ppm").read_bytes().startswith(b"P6\n3 2\n255\n")


def test_ppm_comments_and_errors(tmp_path):
    (tmp_path / "c.ppm").write_bytes(b"P6\n# note\n1 1\n255\n" + bytes((1, 2, 3)))
    assert hdrio.read_ppm(tmp_path / "c.ppm").tolist() == [[[1, 2, 3]]]
    (tmp_path / "t.ppm").write_bytes(b"P6\n2 1\n255\n" + bytes(3))
    with pytest.raises(ValueError, match="truncated"):
        hdrio.read_ppm(tmp_path / "t.ppm")
    with pytest.raises(ValueError, match="bad magic"):
        hdrio.read_ppm(DATA / "opencv_flat.hdr")


def test_pgm_codes(tmp_path):
    raw = np.array([[0.0, 1.0], [128 / 255, 0.5]])
    hdrio.write_pgm(raw, tmp_path / "r.pgm", 255)
    codes, maxval = hdrio.read_pgm(tmp_path / "r.pgm")
    assert maxval == 255 and codes.tolist() == [[0, 255], [128, 128]]
    hdrio.write_pgm(raw, tmp_path / "r16.pgm", 4095)
    codes, maxval = hdrio.read_pgm(tmp_path / "r16.pgm")
    assert maxval == 4095 and codes[0, 1] == 4095
