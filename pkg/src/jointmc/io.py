"""Binary field formats and 8-bit PGM export.

Every float file starts with two little-endian uint32 values, width then
height, followed by row-major little-endian float64 data:

* scalar field: one plane
* displacement field: two planes, x component then y component
* k-space: one plane of interleaved (real, imag) pairs
"""

from __future__ import annotations

from pathlib import Path

import numpy as np

_HEADER = np.dtype("<u4")
_FLOAT = np.dtype("<f8")


def _write(path, arr, width, height):
    path = Path(path)
    with open(path, "wb") as fh:
        fh.write(np.array([width, height], dtype=_HEADER).tobytes())
        fh.write(np.ascontiguousarray(arr, dtype=_FLOAT).tobytes())
    return path


def _read(path, planes):
    raw = Path(path).read_bytes()
    if len(raw) < 8:
        raise ValueError(f"{path}: file too short for a field header")
    width, height = (int(v) for v in np.frombuffer(raw[:8], dtype=_HEADER))
    data = np.frombuffer(raw[8:], dtype=_FLOAT)
    if data.size != planes * width * height:
        raise ValueError(f"{path}: expected {planes * width * height} values for a "
                         f"{width}x{height} field, found {data.size}")
    return data.reshape(planes, height, width).copy()


def write_scalar(path, f):
    f = np.asarray(f, dtype=float)
    return _write(path, f, f.shape[1], f.shape[0])


def read_scalar(path):
    return _read(path, 1)[0]


def write_displacement(path, z):
    z = np.asarray(z, dtype=float)
    return _write(path, z, z.shape[2], z.shape[1])


def read_displacement(path):
    return _read(path, 2)


def write_kspace(path, x):
    x = np.asarray(x, dtype=complex)
    inter = np.stack([x.real, x.imag], axis=-1)
    return _write(path, inter, x.shape[1], x.shape[0])


def read_kspace(path):
    data = _read(path, 2)
    H, W = data.shape[1:]
    inter = data.reshape(H, W, 2)
    return inter[..., 0] + 1j * inter[..., 1]


# -- 8-bit visualization ------------------------------------------------------

def to_uint8(f, lo=None, hi=None):
    """Linear map of ``[lo, hi]`` (default: min/max of ``f``) onto 0..255."""
    f = np.asarray(f, dtype=float)
    lo = float(f.min()) if lo is None else lo
    hi = float(f.max()) if hi is None else hi
    if hi <= lo:
        return np.zeros(f.shape, dtype=np.uint8)
    return np.round(np.clip((f - lo) / (hi - lo), 0.0, 1.0) * 255).astype(np.uint8)


def to_uint8_symmetric(d):
    """Signed map: 0 maps to 128, +-max|d| to the ends of the range."""
    m = float(np.max(np.abs(d)))
    return to_uint8(d, -m, m) if m > 0 else np.full(np.shape(d), 128, dtype=np.uint8)


def write_pgm(path, img):
    """Binary (P5) PGM; float input is min-max normalized first."""
    img = np.asarray(img)
    if img.dtype != np.uint8:
        img = to_uint8(img)
    path = Path(path)
    with open(path, "wb") as fh:
        fh.write(f"P5\n{img.shape[1]} {img.shape[0]}\n255\n".encode("ascii"))
        fh.write(np.ascontiguousarray(img).tobytes())
    return path


def read_pgm(path):
    raw = Path(path).read_bytes()
    tokens = []
    pos = 0
    while len(tokens) < 4:
        while raw[pos:pos + 1].isspace():
            pos += 1
        if raw[pos:pos + 1] == b"#":
            pos = raw.index(b"\n", pos) + 1
            continue
        end = pos
        while not raw[end:end + 1].isspace():
            end += 1
        tokens.append(raw[pos:end])
        pos = end
    if tokens[0] != b"P5" or int(tokens[3]) != 255:
        raise ValueError(f"{path}: only 8-bit binary PGM is supported")
    width, height = int(tokens[1]), int(tokens[2])
    pos += 1
    return np.frombuffer(raw[pos:pos + width * height], dtype=np.uint8).reshape(height, width).copy()
