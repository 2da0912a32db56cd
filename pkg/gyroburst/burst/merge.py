"""Warping, translational fallback alignment, frame selection and tile-based Wiener merging."""
from __future__ import annotations

import logging
from dataclasses import dataclass, replace
from typing import Any, List, Sequence, Tuple

import cv2
import numpy as np
from numpy.lib.stride_tricks import sliding_window_view
from pydantic import BaseModel, ConfigDict, Field, model_validator
from scipy import ndimage

from ..core.errors import DimensionMismatch, PreconditionError
from ..core.geometry import Homography
from ..core.image import Image
from .features import CorrespondenceSet, reprojection_errors

logger = logging.getLogger(__name__)

MAD_TO_SIGMA = 0.6745
# noise power of the shrinkage term per frequency bin, in units of tile^2 * sigma^2
# (a pure-noise difference spectrum averages 2); merged noise stays within
# 1.3 sigma^2/N up to 16 frames
NOISE_POWER_SCALE = 5.0
MAX_INVALID_TILE_FRACTION = 0.25
MIN_OVERLAP_FRACTION = 0.25


class MergeConfig(BaseModel):
    model_config = ConfigDict(frozen=True)

    tile: int = 16
    overlap: int = 8
    noise_variance: float = Field(0.0, ge=0.0)
    max_frames: int = Field(18, ge=1)
    steady_error_threshold: float = Field(5.0, gt=0.0)
    shrinkage: float = Field(8.0, gt=0.0)

    @model_validator(mode="before")
    @classmethod
    def _default_overlap(cls, data: Any) -> Any:
        if isinstance(data, dict) and data.get("overlap") is None:
            data = {**data, "overlap": int(data.get("tile", 16)) // 2}
        return data

    @model_validator(mode="after")
    def _check_tiling(self) -> "MergeConfig":
        if self.tile not in (8, 16, 32, 64):
            raise ValueError(f"tile must be one of 8, 16, 32, 64 (got {self.tile})")
        if not 0 < self.overlap < self.tile:
            raise ValueError(f"overlap must be in (0, tile), got {self.overlap}")
        return self

    @property
    def stride(self) -> int:
        return self.tile - int(self.overlap)


@dataclass(frozen=True, eq=False)
class AlignedFrame:
    image: Image
    homography: Homography
    steady_error: float = 0.0
    valid: bool = True

    def __post_init__(self) -> None:
        if not float(self.steady_error) >= 0.0:
            raise PreconditionError(f"steady error must be >= 0, got {self.steady_error}")


# ---------------------------------------------------------------------------
# Warping and fallback alignment
# ---------------------------------------------------------------------------

def warp_frame(img: Image, h: Homography) -> Image:
    """Resample ``img`` into reference geometry: out(x) = img(h x), bilinear.

    Pixels whose source falls outside the frame (or outside the source mask)
    are marked invalid in the returned mask and filled with zero.
    """
    if h.h[2, 2] != 0 and np.array_equal(h.h / h.h[2, 2], np.eye(3)):
        return Image(img.data, img.valid_mask)

    rows, cols = img.shape
    yy, xx = np.mgrid[0:rows, 0:cols].astype(np.float64)
    m = h.h
    den = m[2, 0] * xx + m[2, 1] * yy + m[2, 2]
    ok = np.abs(den) > 1e-12
    safe = np.where(ok, den, 1.0)
    sx = (m[0, 0] * xx + m[0, 1] * yy + m[0, 2]) / safe
    sy = (m[1, 0] * xx + m[1, 1] * yy + m[1, 2]) / safe

    eps = 1e-9
    inside = ok & (sx >= -eps) & (sx <= cols - 1 + eps) & (sy >= -eps) & (sy <= rows - 1 + eps)
    sx = np.clip(sx, 0.0, cols - 1)
    sy = np.clip(sy, 0.0, rows - 1)
    coords = np.array([sy, sx])

    src = np.where(img.valid_mask, img.data, 0.0)
    out = ndimage.map_coordinates(src, coords, order=1, mode="nearest")
    if img.mask is not None:
        support = ndimage.map_coordinates(img.valid_mask.astype(np.float64), coords, order=1, mode="nearest")
        inside &= support >= 1.0 - 1e-9
    out = np.where(inside, out, 0.0)
    return Image(out, inside)


def _pyramid(data: np.ndarray, mask: np.ndarray, levels: int) -> List[Tuple[np.ndarray, np.ndarray]]:
    out = [(data, mask)]
    for _ in range(levels - 1):
        d, m = out[-1]
        if min(d.shape) < 8:
            break
        d_next = cv2.pyrDown(d)
        m_next = cv2.pyrDown(m.astype(np.float64)) >= 1.0 - 1e-6
        out.append((d_next, m_next))
    return out


def _shift_cost(ref: np.ndarray, ref_mask: np.ndarray, cur: np.ndarray, cur_mask: np.ndarray,
                ox: int, oy: int) -> float:
    """Mean squared difference of ref(x) and cur(x + o) over their common valid pixels."""
    rows, cols = ref.shape
    y0, y1 = max(0, -oy), min(rows, rows - oy)
    x0, x1 = max(0, -ox), min(cols, cols - ox)
    if y1 <= y0 or x1 <= x0:
        return np.inf
    r = ref[y0:y1, x0:x1]
    c = cur[y0 + oy:y1 + oy, x0 + ox:x1 + ox]
    valid = ref_mask[y0:y1, x0:x1] & cur_mask[y0 + oy:y1 + oy, x0 + ox:x1 + ox]
    count = int(valid.sum())
    if count < MIN_OVERLAP_FRACTION * rows * cols:
        return np.inf
    diff = (r - c)[valid]
    return float(np.dot(diff, diff) / count)


def pyramid_align(reference: Image, current: Image, levels: int = 3, search: int = 4) -> np.ndarray:
    """Coarse-to-fine integer translation ``d`` with current(x + d) ~ reference(x).

    At every level the offsets within ``search`` of the upsampled coarser
    estimate are scanned nearest-first, and only a strictly lower mean SSD
    replaces the incumbent, so flat images stay at (0, 0).
    """
    if levels < 1:
        raise PreconditionError("levels must be >= 1")
    if reference.shape != current.shape:
        raise DimensionMismatch(f"{reference.shape} != {current.shape}")

    ref_pyr = _pyramid(np.where(reference.valid_mask, reference.data, 0.0), reference.valid_mask, levels)
    cur_pyr = _pyramid(np.where(current.valid_mask, current.data, 0.0), current.valid_mask, levels)
    n_levels = min(len(ref_pyr), len(cur_pyr))

    offsets = [(ox, oy) for oy in range(-search, search + 1) for ox in range(-search, search + 1)]
    offsets.sort(key=lambda o: o[0] * o[0] + o[1] * o[1])

    dx, dy = 0, 0
    for level in range(n_levels - 1, -1, -1):
        ref, ref_mask = ref_pyr[level]
        cur, cur_mask = cur_pyr[level]
        cx, cy = dx, dy
        best = _shift_cost(ref, ref_mask, cur, cur_mask, cx, cy)
        for ox, oy in offsets:
            if ox == 0 and oy == 0:
                continue
            cost = _shift_cost(ref, ref_mask, cur, cur_mask, cx + ox, cy + oy)
            if cost < best:
                best, dx, dy = cost, cx + ox, cy + oy
        if level > 0:
            dx, dy = 2 * dx, 2 * dy
    return np.array([float(dx), float(dy)])


def steady_error(h: Homography, corr: CorrespondenceSet) -> float:
    """Mean distance between h(x) and x' over the set."""
    if len(corr) < 1:
        raise PreconditionError("steady error needs at least one correspondence")
    return float(np.mean(reprojection_errors(h.h, corr.x, corr.x_prime)))


# ---------------------------------------------------------------------------
# Selection and merging
# ---------------------------------------------------------------------------

def selection_mask(frames: Sequence[AlignedFrame], cfg: MergeConfig) -> List[bool]:
    """Per-frame keep flags; frame 0 is always kept."""
    mask = [False] * len(frames)
    if not frames:
        return mask
    mask[0] = True
    count = 1
    for i, frame in enumerate(frames[1:], start=1):
        if count >= cfg.max_frames:
            break
        if np.isfinite(frame.steady_error) and frame.steady_error <= cfg.steady_error_threshold:
            mask[i] = True
            count += 1
    return mask


def select_frames(frames: Sequence[AlignedFrame], cfg: MergeConfig) -> List[AlignedFrame]:
    """Reference plus every alternative with steady error <= threshold, capped at ``max_frames``."""
    kept = [
        frame if frame.valid else replace(frame, valid=True)
        for frame, keep in zip(frames, selection_mask(frames, cfg))
        if keep
    ]
    logger.debug(f"Selected {len(kept)}/{len(frames)} frames")
    return kept


def raised_cosine_window(size: int) -> np.ndarray:
    x = np.arange(size, dtype=np.float64)
    w = 0.5 - 0.5 * np.cos(2.0 * np.pi * (x + 0.5) / size)
    return np.outer(w, w)


def _tiles(data: np.ndarray, tile: int, stride: int) -> np.ndarray:
    return sliding_window_view(data, (tile, tile))[::stride, ::stride]


def merge_wiener(frames: Sequence[AlignedFrame], cfg: MergeConfig) -> Image:
    """Pairwise temporal Wiener merge of valid frames onto ``frames[0]``.

    For every tile the difference D = alt - ref is shrunk per frequency by
    A = |D|^2 / (|D|^2 + c * s2) with s2 = NOISE_POWER_SCALE * tile^2 *
    noise_variance, and the merged tile is ref + mean_z IDFT((1 - A) D).
    Tiles are blended with a raised-cosine window. An alternative tile more
    than MAX_INVALID_TILE_FRACTION invalid contributes the reference tile;
    in the others its invalid pixels take the reference value.
    """
    if not frames:
        raise PreconditionError("merge needs at least the reference frame")
    ref = frames[0].image
    alts = [f for f in frames[1:] if f.valid]
    for f in alts:
        if f.image.shape != ref.shape:
            raise DimensionMismatch(f"frame shape {f.image.shape} != reference shape {ref.shape}")
    if not alts:
        return Image(ref.data)

    tile, stride = cfg.tile, cfg.stride
    n = len(alts) + 1
    rows, cols = ref.shape
    pad_y = tile + (-(rows + tile) % stride)
    pad_x = tile + (-(cols + tile) % stride)
    pad = ((tile, pad_y), (tile, pad_x))

    ref_data = np.where(ref.valid_mask, ref.data, 0.0)
    ref_padded = np.pad(ref_data, pad, mode="reflect")
    ref_tiles = _tiles(ref_padded, tile, stride)
    noise_power = cfg.shrinkage * NOISE_POWER_SCALE * tile * tile * cfg.noise_variance

    acc = np.zeros(ref_tiles.shape)
    for frame in alts:
        mask = frame.image.valid_mask
        filled = np.where(mask, frame.image.data, ref_data)
        diff = _tiles(np.pad(filled, pad, mode="reflect"), tile, stride) - ref_tiles
        invalid = _tiles(np.pad(~mask, pad, mode="reflect"), tile, stride).mean(axis=(2, 3))
        diff[invalid > MAX_INVALID_TILE_FRACTION] = 0.0
        spectrum = np.fft.fft2(diff, axes=(2, 3))
        power = np.abs(spectrum) ** 2
        denom = power + noise_power
        shrink = np.divide(power, denom, out=np.zeros_like(power), where=denom > 0)
        acc += np.fft.ifft2((1.0 - shrink) * spectrum, axes=(2, 3)).real
    correction_tiles = acc / n

    window = raised_cosine_window(tile)
    out = np.zeros(ref_padded.shape)
    weight = np.zeros(ref_padded.shape)
    ny, nx = correction_tiles.shape[:2]
    for iy in range(ny):
        y = iy * stride
        for ix in range(nx):
            x = ix * stride
            out[y:y + tile, x:x + tile] += window * correction_tiles[iy, ix]
            weight[y:y + tile, x:x + tile] += window
    correction = out[tile:tile + rows, tile:tile + cols] / weight[tile:tile + rows, tile:tile + cols]
    logger.debug(f"Merged {n} frames with {ny * nx} tiles of {tile}px")
    return Image(ref_data + correction)


def estimate_noise_sigma(img: Image) -> float:
    """Noise std from the median absolute finest-scale Haar diagonal coefficient."""
    if img.width < 64 or img.height < 64:
        raise PreconditionError("noise estimation needs at least a 64x64 image")
    d = img.data[: img.height // 2 * 2, : img.width // 2 * 2]
    hh = (d[0::2, 0::2] - d[0::2, 1::2] - d[1::2, 0::2] + d[1::2, 1::2]) / 2.0
    if img.mask is not None:
        m = img.mask[: img.height // 2 * 2, : img.width // 2 * 2]
        ok = m[0::2, 0::2] & m[0::2, 1::2] & m[1::2, 0::2] & m[1::2, 1::2]
        hh = hh[ok]
        if hh.size == 0:
            return 0.0
    return float(np.median(np.abs(hh)) / MAD_TO_SIGMA)
