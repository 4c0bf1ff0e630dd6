"""Pixel grids: perturbation application, cropping, embedding and file I/O.

Frames and perturbations are ``float64`` arrays shaped ``(H, W, C)`` on the
0-255 scale. Two on-disk formats are supported:

* binary PPM (``P6``, or ``P5`` for single-channel grids), maxval 255, for
  integer-valued frames;
* ``.grid``: a raw little-endian float64 container for real-valued grids.
  The file starts with eight float64 header values
  ``(magic, version, H, W, C, scale, 0, 0)`` followed by the ``H*W*C``
  values in row-major ``(H, W, C)`` order, each multiplied by ``1/scale``.
"""

from __future__ import annotations

import math
import os

import numpy as np

from .errors import BadDimensions, BadMagic, EmptyRegion, ShapeMismatch
from .geometry import BBox

GRID_MAGIC = float(0x47524944)  # "GRID"
GRID_VERSION = 1.0
_HEADER = np.dtype("<f8")


def as_frame(data) -> np.ndarray:
    arr = np.asarray(data, dtype=np.float64)
    if arr.ndim == 2:
        arr = arr[:, :, None]
    if arr.ndim != 3 or arr.shape[2] not in (1, 3) or arr.shape[0] < 1 or arr.shape[1] < 1:
        raise BadDimensions(f"expected an HxWx(1|3) grid, got shape {arr.shape}")
    return arr


def apply(frame: np.ndarray, pert: np.ndarray) -> np.ndarray:
    """Return the adversarial frame ``clip(frame + pert, 0, 255)``."""
    if frame.shape != pert.shape:
        raise ShapeMismatch(f"frame {frame.shape} vs perturbation {pert.shape}")
    return np.clip(frame + pert, 0.0, 255.0)


def clip_linf(pert: np.ndarray, eps_max: float) -> np.ndarray:
    if math.isinf(eps_max):
        return pert
    return np.clip(pert, -eps_max, eps_max)


def _round_half_up(v: float) -> int:
    return int(math.floor(v + 0.5))


def region_bounds(region: BBox) -> tuple[int, int, int, int]:
    """Integer ``(x0, y0, width, height)`` of a box after rounding."""
    x0 = _round_half_up(region.cx - region.w / 2)
    y0 = _round_half_up(region.cy - region.h / 2)
    return x0, y0, _round_half_up(region.w), _round_half_up(region.h)


def _overlap(x0, y0, w, h, W, H):
    fx0, fy0 = max(x0, 0), max(y0, 0)
    fx1, fy1 = min(x0 + w, W), min(y0 + h, H)
    return fx0, fy0, fx1, fy1


def crop(frame: np.ndarray, region: BBox) -> np.ndarray:
    """Cut ``region`` out of ``frame``; out-of-frame pixels take the channel mean."""
    x0, y0, w, h = region_bounds(region)
    if w < 1 or h < 1:
        raise EmptyRegion(f"region {region} rounds to {w}x{h}")
    H, W, C = frame.shape
    fx0, fy0, fx1, fy1 = _overlap(x0, y0, w, h, W, H)
    if fx0 == x0 and fy0 == y0 and fx1 == x0 + w and fy1 == y0 + h:
        return frame[y0:y0 + h, x0:x0 + w].copy()
    out = np.empty((h, w, C))
    out[:] = frame.mean(axis=(0, 1))
    if fx1 > fx0 and fy1 > fy0:
        out[fy0 - y0:fy1 - y0, fx0 - x0:fx1 - x0] = frame[fy0:fy1, fx0:fx1]
    return out


def inside_mask(frame_shape, region: BBox) -> np.ndarray:
    """Boolean ``(h, w)`` mask of region pixels that lie inside the frame."""
    x0, y0, w, h = region_bounds(region)
    H, W = frame_shape[:2]
    mask = np.zeros((h, w), dtype=bool)
    fx0, fy0, fx1, fy1 = _overlap(x0, y0, w, h, W, H)
    if fx1 > fx0 and fy1 > fy0:
        mask[fy0 - y0:fy1 - y0, fx0 - x0:fx1 - x0] = True
    return mask


def embed(dst_shape, region: BBox, patch: np.ndarray) -> np.ndarray:
    """Scatter a region-shaped grid into a zero grid of ``dst_shape``.

    Patch pixels falling outside the destination are dropped.
    """
    x0, y0, w, h = region_bounds(region)
    if patch.shape[:2] != (h, w) or patch.shape[2:] != tuple(dst_shape[2:]):
        raise ShapeMismatch(f"patch {patch.shape} does not match region {w}x{h} in {dst_shape}")
    out = np.zeros(dst_shape)
    H, W = dst_shape[:2]
    fx0, fy0, fx1, fy1 = _overlap(x0, y0, w, h, W, H)
    if fx1 > fx0 and fy1 > fy0:
        out[fy0:fy1, fx0:fx1] = patch[fy0 - y0:fy1 - y0, fx0 - x0:fx1 - x0]
    return out


def visualize_perturbation(pert: np.ndarray, gain: float = 255.0) -> np.ndarray:
    return np.clip(np.abs(pert) * gain, 0.0, 255.0)


# --- file I/O -------------------------------------------------------------

def save_ppm(path, frame: np.ndarray) -> None:
    frame = as_frame(frame)
    H, W, C = frame.shape
    data = np.clip(np.floor(frame + 0.5), 0, 255).astype(np.uint8)
    magic = b"P6" if C == 3 else b"P5"
    with open(path, "wb") as fh:
        fh.write(magic + b"\n%d %d\n255\n" % (W, H))
        fh.write(data.tobytes())


def _ppm_tokens(buf: bytes, count: int):
    tokens, pos = [], 0
    while len(tokens) < count:
        while pos < len(buf) and buf[pos:pos + 1].isspace():
            pos += 1
        if buf[pos:pos + 1] == b"#":
            while pos < len(buf) and buf[pos:pos + 1] not in (b"\n", b"\r"):
                pos += 1
            continue
        start = pos
        while pos < len(buf) and not buf[pos:pos + 1].isspace():
            pos += 1
        if start == pos:
            raise BadDimensions("truncated PPM header")
        tokens.append(buf[start:pos])
    return tokens, pos + 1


def load_ppm(path) -> np.ndarray:
    with open(path, "rb") as fh:
        buf = fh.read()
    if buf[:2] not in (b"P6", b"P5"):
        raise BadMagic(f"{path}: not a binary PPM/PGM file")
    C = 3 if buf[:2] == b"P6" else 1
    (w, h, maxval), pos = _ppm_tokens(buf[2:], 3)
    W, H, maxval = int(w), int(h), int(maxval)
    if maxval != 255 or W < 1 or H < 1:
        raise BadDimensions(f"{path}: unsupported dimensions {W}x{H} maxval {maxval}")
    raw = buf[2 + pos:2 + pos + W * H * C]
    if len(raw) != W * H * C:
        raise BadDimensions(f"{path}: expected {W * H * C} data bytes, found {len(raw)}")
    return np.frombuffer(raw, dtype=np.uint8).reshape(H, W, C).astype(np.float64)


def save_grid(path, grid: np.ndarray, scale: float = 1.0) -> None:
    grid = np.asarray(grid, dtype=np.float64)
    if grid.ndim == 2:
        grid = grid[:, :, None]
    if grid.ndim != 3:
        raise BadDimensions(f"expected a 3-d grid, got shape {grid.shape}")
    H, W, C = grid.shape
    header = np.array([GRID_MAGIC, GRID_VERSION, H, W, C, scale, 0.0, 0.0], dtype=_HEADER)
    with open(path, "wb") as fh:
        fh.write(header.tobytes())
        fh.write(np.ascontiguousarray(grid / scale if scale != 1.0 else grid, dtype="<f8").tobytes())


def read_grid_header(path) -> dict:
    with open(path, "rb") as fh:
        raw = fh.read(8 * 8)
    if len(raw) < 64:
        raise BadDimensions(f"{path}: truncated header")
    hdr = np.frombuffer(raw, dtype=_HEADER)
    if hdr[0] != GRID_MAGIC:
        raise BadMagic(f"{path}: bad magic {hdr[0]!r}")
    return {"version": hdr[1], "H": int(hdr[2]), "W": int(hdr[3]), "C": int(hdr[4]), "scale": float(hdr[5])}


def load_grid(path) -> np.ndarray:
    hdr = read_grid_header(path)
    H, W, C = hdr["H"], hdr["W"], hdr["C"]
    if H < 1 or W < 1 or C < 1:
        raise BadDimensions(f"{path}: bad dimensions {H}x{W}x{C}")
    expected = 64 + 8 * H * W * C
    if os.path.getsize(path) != expected:
        raise BadDimensions(f"{path}: size {os.path.getsize(path)} != {expected}")
    with open(path, "rb") as fh:
        fh.seek(64)
        data = np.frombuffer(fh.read(), dtype="<f8").reshape(H, W, C).astype(np.float64)
    if hdr["scale"] != 1.0:
        data = data * hdr["scale"]
    return data
