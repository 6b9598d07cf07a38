"""PGM and cost-volume files, data terms, synthetic instances, run reports."""
from __future__ import annotations

import csv
import struct
from pathlib import Path

import numpy as np

from .potentials import MAX_LABELS

MPCV_MAGIC = b"MPCV1"
_MPCV_HEADER = struct.Struct("<5sIII")


# -- PGM ---------------------------------------------------------------------

def _pgm_tokens(data: bytes, count: int, pos: int):
    """Read ``count`` whitespace-separated header tokens, skipping comments."""
    tokens = []
    n = len(data)
    while len(tokens) < count:
        while pos < n and data[pos:pos + 1].isspace():
            pos += 1
        if pos < n and data[pos:pos + 1] == b"#":
            while pos < n and data[pos:pos + 1] not in (b"\n", b"\r"):
                pos += 1
            continue
        start = pos
        while pos < n and not data[pos:pos + 1].isspace() and data[pos:pos + 1] != b"#":
            pos += 1
        if start == pos:
            raise ValueError("malformed PGM header")
        tokens.append(data[start:pos])
    return tokens, pos


def load_pgm(path) -> np.ndarray:
    data = Path(path).read_bytes()
    magic = data[:2]
    if magic not in (b"P2", b"P5"):
        raise ValueError(f"{path}: not a P2/P5 PGM")
    try:
        (w, h, maxval), pos = _pgm_tokens(data, 3, 2)
        width, height, maxval = int(w), int(h), int(maxval)
    except ValueError as exc:
        raise ValueError(f"{path}: malformed PGM header") from exc
    if width < 1 or height < 1 or not 0 < maxval <= 65535:
        raise ValueError(f"{path}: bad PGM dimensions or maxval")
    count = width * height

    if magic == b"P5":
        pos += 1  # single whitespace byte before the raster
        dtype = np.dtype(">u2") if maxval > 255 else np.dtype("u1")
        need = count * dtype.itemsize
        raw = data[pos:pos + need]
        if len(raw) < need:
            raise ValueError(f"{path}: truncated PGM payload")
        img = np.frombuffer(raw, dtype=dtype).astype(np.uint16 if maxval > 255 else np.uint8)
    else:
        fields = data[pos:].split()
        if len(fields) < count:
            raise ValueError(f"{path}: truncated PGM payload")
        try:
            img = np.array([int(v) for v in fields[:count]], dtype=np.int64)
        except ValueError as exc:
            raise ValueError(f"{path}: non-integer PGM sample") from exc
        img = img.astype(np.uint16 if maxval > 255 else np.uint8)
    if img.max(initial=0) > maxval:
        raise ValueError(f"{path}: sample exceeds maxval")
    return img.reshape(height, width)


def write_pgm(path, image: np.ndarray, binary: bool = True, maxval: int | None = None):
    img = np.asarray(image)
    if img.ndim != 2:
        raise ValueError("PGM images are 2-D")
    if img.size and (img.min() < 0 or img.max() > 65535):
        raise ValueError("PGM samples must lie in 0..65535")
    img = img.astype(np.int64)
    if maxval is None:
        maxval = max(1, int(img.max(initial=0)))
    h, w = img.shape
    head = f"{'P5' if binary else 'P2'}\n{w} {h}\n{maxval}\n".encode()
    if binary:
        body = img.astype(">u2" if maxval > 255 else "u1").tobytes()
    else:
        body = "\n".join(" ".join(str(v) for v in row) for row in img).encode() + b"\n"
    Path(path).write_bytes(head + body)


def write_label_map(path, labels: np.ndarray):
    """Label maps are always 16-bit binary PGM."""
    write_pgm(path, labels, binary=True, maxval=65535)


# -- cost volumes ------------------------------------------------------------

def write_cost_volume(path, volume: np.ndarray):
    vol = np.asarray(volume)
    if vol.ndim != 3:
        raise ValueError("cost volume must be (H, W, L)")
    if not np.all(np.isfinite(vol)):
        raise ValueError("cost volume contains non-finite values")
    H, W, L = vol.shape
    with open(path, "wb") as fh:
        fh.write(_MPCV_HEADER.pack(MPCV_MAGIC, H, W, L))
        fh.write(np.ascontiguousarray(vol, dtype="<f4").tobytes())


def read_cost_volume(path) -> np.ndarray:
    data = Path(path).read_bytes()
    if len(data) < _MPCV_HEADER.size:
        raise ValueError(f"{path}: truncated cost-volume header")
    magic, H, W, L = _MPCV_HEADER.unpack_from(data)
    if magic != MPCV_MAGIC:
        raise ValueError(f"{path}: bad cost-volume magic {magic!r}")
    if H == 0 or W == 0 or L == 0:
        raise ValueError(f"{path}: empty cost volume")
    if L > MAX_LABELS:
        raise ValueError(f"{path}: {L} labels exceed the {MAX_LABELS}-label limit")
    payload = data[_MPCV_HEADER.size:]
    if len(payload) != 4 * H * W * L:
        raise ValueError(f"{path}: payload length {len(payload)} does not match header {H}x{W}x{L}")
    vol = np.frombuffer(payload, dtype="<f4").astype(np.float32).reshape(H, W, L)
    if not np.all(np.isfinite(vol)):
        raise ValueError(f"{path}: cost volume contains non-finite values")
    return vol


# -- data terms --------------------------------------------------------------

def stereo_unaries(left: np.ndarray, right: np.ndarray, max_disp: int, dtype=np.float32) -> np.ndarray:
    """Absolute-difference matching cost; column x - lam is clamped at the left border."""
    left = np.asarray(left, dtype=np.float64)
    right = np.asarray(right, dtype=np.float64)
    if left.shape != right.shape or left.ndim != 2:
        raise ValueError("left and right images must be 2-D and the same size")
    L = int(max_disp)
    if not 1 <= L <= MAX_LABELS:
        raise ValueError(f"label count must be in 1..{MAX_LABELS}")
    W = left.shape[1]
    cols = np.clip(np.arange(W)[:, None] - np.arange(L)[None, :], 0, W - 1)
    return np.abs(left[:, :, None] - right[:, cols]).astype(dtype)


def denoise_unaries(noisy: np.ndarray, num_labels: int, kind: str = "tl", tau: float = np.inf,
                    dtype=np.float32) -> np.ndarray:
    """Truncated linear (tl) or quadratic (tq) distance of each label to the observed intensity."""
    img = np.asarray(noisy, dtype=np.float64)
    L = int(num_labels)
    if not 1 <= L <= MAX_LABELS:
        raise ValueError(f"label count must be in 1..{MAX_LABELS}")
    if np.any(img < 0) or np.any(img >= L):
        raise ValueError("intensities must lie in [0, num_labels)")
    if not tau > 0:
        raise ValueError("tau must be positive")
    power = {"tl": 1, "tq": 2}.get(kind)
    if power is None:
        raise ValueError(f"unknown data term {kind!r}")
    d = np.abs(img[..., None] - np.arange(L)) ** power
    return np.minimum(d, tau).astype(dtype)


def synthetic_stereo(height: int, width: int, num_labels: int, seed: int = 0, texture: float = 40.0,
                     noise: float = 6.0):
    """Piecewise-constant disparity scene over a low-contrast textured background.

    The right image is a smooth ramp plus ``texture``-amplitude random
    texture, with one flat patch where matching is ambiguous.  The left image
    is the right one shifted by the disparity, plus Gaussian noise of std
    ``noise``.  Returns ``(left, right, disparity)``.
    """
    rng = np.random.default_rng(seed)
    disp = np.full((height, width), rng.integers(0, max(1, num_labels // 3)), dtype=np.int64)
    for _ in range(3):
        h0, w0 = rng.integers(0, height), rng.integers(0, width)
        h1 = min(height, h0 + rng.integers(height // 4 + 1, height // 2 + 2))
        w1 = min(width, w0 + rng.integers(width // 4 + 1, width // 2 + 2))
        disp[h0:h1, w0:w1] = rng.integers(0, num_labels)
    padded = width + num_labels
    ramp = np.linspace(80, 170, padded)[None, :] + np.linspace(-20, 20, height)[:, None]
    tex = rng.uniform(-texture / 2, texture / 2, size=(height, padded))
    # a flat patch with no texture at all
    fh, fw = rng.integers(0, height // 2 + 1), rng.integers(0, padded // 2 + 1)
    tex[fh:fh + height // 3, fw:fw + padded // 3] = 0.0
    right = ramp + tex
    cols = np.arange(width)[None, :] - disp + num_labels
    left = right[np.arange(height)[:, None], cols] + rng.normal(0, noise, size=(height, width))
    return np.clip(left, 0, 255), np.clip(right[:, num_labels:], 0, 255), disp


# -- reports -----------------------------------------------------------------

def write_energy_csv(path, rows):
    with open(path, "w", newline="") as fh:
        out = csv.writer(fh)
        out.writerow(["iteration", "energy", "forward_ms"])
        for k, e, ms in rows:
            out.writerow([int(k), repr(float(e)), f"{float(ms):.3f}"])


def read_energy_csv(path):
    with open(path, newline="") as fh:
        return [(int(r["iteration"]), float(r["energy"]), float(r["forward_ms"]))
                for r in csv.DictReader(fh)]
