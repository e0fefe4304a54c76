"""Readers and writers for Radiance RGBE (.hdr), PFM and PPM images."""

from __future__ import annotations

import re
from pathlib import Path

import numpy as np

RLE_MIN_WIDTH = 8
RLE_MAX_WIDTH = 32767
MAX_DIM = 1 << 20
PREVIEW_GAMMA = 2.2


# -- RGBE ---------------------------------------------------------------------

def rgbe_encode(plane) -> np.ndarray:
    """Float RGB ``(H, W, 3)`` to RGBE bytes ``(H, W, 4)``; mantissas are floored."""
    plane = np.asarray(plane, dtype=np.float64)
    if plane.ndim != 3 or plane.shape[2] != 3:
        raise ValueError("expected an (H, W, 3) plane")
    if not np.all(np.isfinite(plane)) or np.any(plane < 0):
        raise ValueError("RGBE needs finite nonnegative values")
    v = plane.max(axis=2)
    mant, exp = np.frexp(v)
    live = v >= 1e-32
    scale = np.where(live, mant * 256.0 / np.where(live, v, 1.0), 0.0)
    out = np.zeros(plane.shape[:2] + (4,), dtype=np.uint8)
    out[..., :3] = np.clip(np.floor(plane * scale[..., None]), 0, 255)
    out[..., 3] = np.where(live, np.clip(exp + 128, 0, 255), 0)
    return out


def rgbe_decode(rgbe) -> np.ndarray:
    """RGBE bytes to float RGB, reconstructing at mantissa bucket centers."""
    rgbe = np.asarray(rgbe, dtype=np.uint8)
    e = rgbe[..., 3].astype(np.int64)
    f = np.where(e > 0, np.ldexp(1.0, e - 136), 0.0)
    return (rgbe[..., :3] + 0.5) * f[..., None]


def _rle_channel(row: np.ndarray) -> bytes:
    out = bytearray()
    n, i = len(row), 0
    while i < n:
        # Longest run starting at i (capped at 127).
        j = i + 1
        while j < n and j - i < 127 and row[j] == row[i]:
            j += 1
        if j - i >= 4:
            out += bytes((128 + j - i, row[i]))
            i = j
            continue
        # Literal block up to the next run of 4 or 128 bytes.
        start = i
        while i < n and i - start < 128:
            if i + 3 < n and row[i] == row[i + 1] == row[i + 2] == row[i + 3]:
                break
            i += 1
        out.append(i - start)
        out += row[start:i].tobytes()
    return bytes(out)


def write_hdr(plane, path, rle: bool | None = None) -> None:
    """Write ``-Y H +X W`` scanlines; RLE for widths in [8, 32767] unless told otherwise."""
    data = rgbe_encode(plane)
    h, w, _ = data.shape
    if rle is None:
        rle = RLE_MIN_WIDTH <= w <= RLE_MAX_WIDTH
    chunks = [b"#?RADIANCE\nFORMAT=32-bit_rle_rgbe\n\n", f"-Y {h} +X {w}\n".encode()]
    if rle:
        head = bytes((2, 2, w >> 8, w & 255))
        for y in range(h):
            chunks.append(head)
            chunks.extend(_rle_channel(data[y, :, c]) for c in range(4))
    else:
        chunks.append(data.tobytes())
    Path(path).write_bytes(b"".join(chunks))


_RES = re.compile(rb"^([-+])Y (\d+) ([-+])X (\d+)$")


def _parse_header(buf: bytes):
    if not (buf.startswith(b"#?RADIANCE") or buf.startswith(b"#?RGBE")):
        raise ValueError("not a Radiance file (bad magic)")
    pos = 0
    while True:
        end = buf.find(b"\n", pos)
        if end < 0:
            raise ValueError("truncated header")
        line = buf[pos:end].strip()
        pos = end + 1
        if not line:
            break
        if line.startswith(b"FORMAT=") and line != b"FORMAT=32-bit_rle_rgbe":
            raise ValueError(f"unsupported format {line[7:].decode(errors='replace')}")
    end = buf.find(b"\n", pos)
    if end < 0:
        raise ValueError("truncated header: missing resolution line")
    res = buf[pos:end].strip()
    m = _RES.match(res)
    if not m:
        raise ValueError(f"unsupported pixel order {res.decode(errors='replace')!r}")
    h, w = int(m.group(2)), int(m.group(4))
    if not (0 < h <= MAX_DIM and 0 < w <= MAX_DIM):
        raise ValueError("image dimensions out of range")
    return m.group(1) == b"+", h, m.group(3) == b"-", w, end + 1


def _read_rle_line(buf, pos, w):
    line = np.empty((4, w), dtype=np.uint8)
    for c in range(4):
        x = 0
        while x < w:
            if pos >= len(buf):
                raise ValueError("truncated scanline")
            code = buf[pos]
            pos += 1
            if code > 128:
                n = code - 128
                if x + n > w or pos >= len(buf):
                    raise ValueError("corrupt or truncated run")
                line[c, x:x + n] = buf[pos]
                pos += 1
            else:
                n = code
                if n == 0 or x + n > w or pos + n > len(buf):
                    raise ValueError("corrupt or truncated literal")
                line[c, x:x + n] = np.frombuffer(buf, np.uint8, n, pos)
                pos += n
            x += n
    return line.T, pos


def _read_flat_line(buf, pos, w):
    """Uncompressed pixels with the original (1, 1, 1, count) repeat codes."""
    line = np.empty((w, 4), dtype=np.uint8)
    x, shift = 0, 0
    while x < w:
        if pos + 4 > len(buf):
            raise ValueError("truncated scanline")
        px = buf[pos:pos + 4]
        pos += 4
        if px[0] == 1 and px[1] == 1 and px[2] == 1:
            if x == 0:
                raise ValueError("repeat code at scanline start")
            n = px[3] << shift
            if x + n > w:
                raise ValueError("corrupt repeat run")
            line[x:x + n] = line[x - 1]
            x += n
            shift += 8
        else:
            line[x] = np.frombuffer(px, np.uint8)
            x += 1
            shift = 0
    return line, pos


def read_hdr(path) -> np.ndarray:
    """Decode a Radiance file to a float64 ``(H, W, 3)`` plane, top row first."""
    buf = Path(path).read_bytes()
    bottom_up, h, w_flip, w, pos = _parse_header(buf)
    data = np.empty((h, w, 4), dtype=np.uint8)
    for y in range(h):
        new_rle = (RLE_MIN_WIDTH <= w <= RLE_MAX_WIDTH and pos + 4 <= len(buf)
                   and buf[pos] == 2 and buf[pos + 1] == 2 and not buf[pos + 2] & 128)
        if new_rle:
            if (buf[pos + 2] << 8 | buf[pos + 3]) != w:
                raise ValueError("scanline width mismatch")
            data[y], pos = _read_rle_line(buf, pos + 4, w)
        else:
            data[y], pos = _read_flat_line(buf, pos, w)
    if bottom_up:
        data = data[::-1]
    if w_flip:
        data = data[:, ::-1]
    return rgbe_decode(data)


# -- PFM ----------------------------------------------------------------------

def write_pfm(plane, path) -> None:
    """float32 little-endian, rows stored bottom to top."""
    a = np.asarray(plane, dtype=np.float32)
    if a.ndim == 3 and a.shape[2] == 1:
        a = a[:, :, 0]
    if a.ndim == 2:
        tag = b"Pf"
    elif a.ndim == 3 and a.shape[2] == 3:
        tag = b"PF"
    else:
        raise ValueError("PFM holds 1 or 3 channels")
    h, w = a.shape[:2]
    head = tag + f"\n{w} {h}\n-1.0\n".encode()
    Path(path).write_bytes(head + np.ascontiguousarray(a[::-1], dtype="<f4").tobytes())


def _tokens(buf, count, pos=0):
    """Whitespace-separated header tokens, skipping ``#`` comments."""
    out = []
    while len(out) < count:
        while pos < len(buf) and buf[pos:pos + 1].isspace():
            pos += 1
        if pos < len(buf) and buf[pos:pos + 1] == b"#":
            nl = buf.find(b"\n", pos)
            pos = len(buf) if nl < 0 else nl + 1
            continue
        start = pos
        while pos < len(buf) and not buf[pos:pos + 1].isspace():
            pos += 1
        if start == pos:
            raise ValueError("malformed header: unexpected end of file")
        out.append(buf[start:pos])
    if pos >= len(buf):
        raise ValueError("malformed header: missing data")
    return out, pos + 1  # one whitespace byte ends the header


def _dims(wtok, htok):
    try:
        w, h = int(wtok), int(htok)
    except ValueError:
        raise ValueError("malformed header: bad dimensions") from None
    if not (0 < w <= MAX_DIM and 0 < h <= MAX_DIM):
        raise ValueError("dimension overflow")
    return w, h


def read_pfm(path) -> np.ndarray:
    """Decode to float32 ``(H, W, 3)`` or ``(H, W)``, top row first."""
    buf = Path(path).read_bytes()
    (tag, wt, ht, st), pos = _tokens(buf, 4)
    if tag not in (b"PF", b"Pf"):
        raise ValueError("not a PFM file (bad magic)")
    w, h = _dims(wt, ht)
    try:
        scale = float(st)
    except ValueError:
        raise ValueError("malformed header: bad scale") from None
    if scale == 0:
        raise ValueError("malformed header: zero scale")
    ch = 3 if tag == b"PF" else 1
    n = w * h * ch
    if len(buf) - pos < 4 * n:
        raise ValueError("truncated pixel data")
    dt = "<f4" if scale < 0 else ">f4"
    a = np.frombuffer(buf, dt, n, pos).astype(np.float32).reshape((h, w, ch) if ch == 3 else (h, w))
    return a[::-1].copy()


# -- PPM / PGM ----------------------------------------------------------------

def to_preview(plane, gamma: float = PREVIEW_GAMMA) -> np.ndarray:
    """Linear [0, 1] to 8-bit with a plain power-law gamma."""
    x = np.clip(np.asarray(plane, dtype=np.float64), 0.0, 1.0)
    return np.floor(x ** (1.0 / gamma) * 255.0 + 0.5).astype(np.uint8)


def write_ppm(plane, path, gamma: float = PREVIEW_GAMMA) -> None:
    """8-bit P6 preview of a linear RGB plane."""
    plane = np.asarray(plane)
    if plane.ndim != 3 or plane.shape[2] != 3:
        raise ValueError("expected an (H, W, 3) plane")
    h, w, _ = plane.shape
    Path(path).write_bytes(f"P6\n{w} {h}\n255\n".encode() + to_preview(plane, gamma).tobytes())


def read_ppm(path) -> np.ndarray:
    """P6 pixels as ``uint8`` (or ``uint16`` for maxval > 255) ``(H, W, 3)``."""
    return _read_pnm(path, b"P6", 3)


def write_pgm(plane, path, maxval: int = 255) -> None:
    """P5 with integer codes ``round(x * maxval)``; 16-bit big-endian above 255."""
    if not 0 < maxval < 65536:
        raise ValueError("maxval must lie in [1, 65535]")
    x = np.asarray(plane, dtype=np.float64)
    if x.ndim != 2:
        raise ValueError("expected a single-channel plane")
    codes = np.floor(np.clip(x, 0.0, 1.0) * maxval + 0.5)
    dt = ">u2" if maxval > 255 else "u1"
    h, w = x.shape
    Path(path).write_bytes(f"P5\n{w} {h}\n{maxval}\n".encode() + codes.astype(dt).tobytes())


def read_pgm(path) -> tuple[np.ndarray, int]:
    """Return ``(codes, maxval)``."""
    return _read_pnm(path, b"P5", 1, with_maxval=True)


def _read_pnm(path, magic, ch, with_maxval=False):
    buf = Path(path).read_bytes()
    (tag, wt, ht, mt), pos = _tokens(buf, 4)
    if tag != magic:
        raise ValueError(f"expected {magic.decode()} (bad magic)")
    w, h = _dims(wt, ht)
    maxval = int(mt)
    if not 0 < maxval < 65536:
        raise ValueError("malformed header: bad maxval")
    dt = np.dtype(">u2") if maxval > 255 else np.dtype("u1")
    n = w * h * ch
    if len(buf) - pos < n * dt.itemsize:
        raise ValueError("truncated pixel data")
    a = np.frombuffer(buf, dt, n, pos).astype(np.uint16 if maxval > 255 else np.uint8)
    a = a.reshape((h, w, ch) if ch == 3 else (h, w))
    return (a, maxval) if with_maxval else a
