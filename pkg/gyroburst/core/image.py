from __future__ import annotations

import logging
from dataclasses import dataclass
from pathlib import Path
from typing import Optional, Tuple, Union

import cv2
import numpy as np

from .errors import DimensionMismatch, InputFormatError, NonFiniteResult, PreconditionError

logger = logging.getLogger(__name__)

PathLike = Union[str, Path]


@dataclass(frozen=True, eq=False)
class Image:
    """Single-channel linear-intensity image, row-major (height, width).

    ``mask`` marks valid pixels; ``None`` means every pixel is valid. Pixels
    outside the mask are never read by the merge, so only valid pixels are
    required to be finite.
    """
    data: np.ndarray
    mask: Optional[np.ndarray] = None

    def __post_init__(self) -> None:
        data = np.array(self.data, dtype=np.float64, copy=True)
        if data.ndim != 2 or data.size == 0:
            raise PreconditionError(f"image data must be a non-empty 2-D array, got shape {data.shape}")
        mask = None
        if self.mask is not None:
            mask = np.array(self.mask, dtype=bool, copy=True)
            if mask.shape != data.shape:
                raise DimensionMismatch(f"mask shape {mask.shape} != image shape {data.shape}")
        valid = data if mask is None else data[mask]
        if not np.all(np.isfinite(valid)):
            raise NonFiniteResult("image has non-finite valid pixels")
        data.setflags(write=False)
        if mask is not None:
            mask.setflags(write=False)
        object.__setattr__(self, "data", data)
        object.__setattr__(self, "mask", mask)

    @property
    def height(self) -> int:
        return int(self.data.shape[0])

    @property
    def width(self) -> int:
        return int(self.data.shape[1])

    @property
    def shape(self) -> Tuple[int, int]:
        return self.height, self.width

    @property
    def valid_mask(self) -> np.ndarray:
        if self.mask is None:
            return np.ones(self.shape, dtype=bool)
        return self.mask

    def with_mask(self, mask: Optional[np.ndarray]) -> "Image":
        return Image(self.data, mask)

    @classmethod
    def constant(cls, height: int, width: int, value: float = 0.0) -> "Image":
        return cls(np.full((height, width), float(value)))


def _to_unit(raw: np.ndarray, path: Path) -> np.ndarray:
    if raw.ndim == 3:
        raw = cv2.cvtColor(raw, cv2.COLOR_BGR2GRAY)
    if raw.dtype == np.uint16:
        return raw.astype(np.float64) / 65535.0
    if raw.dtype == np.uint8:
        return raw.astype(np.float64) / 255.0
    raise InputFormatError(path, f"unsupported pixel type {raw.dtype}")


def read_image(path: PathLike) -> Image:
    """Read a 16-bit PNG or binary PGM as linear intensities in [0, 1]."""
    path = Path(path)
    if not path.exists():
        raise InputFormatError(path, "file not found")
    raw = cv2.imread(str(path), cv2.IMREAD_UNCHANGED)
    if raw is None:
        raise InputFormatError(path, "not a readable PNG/PGM image")
    return Image(_to_unit(raw, path))


def write_image(img: Image, path: PathLike) -> Path:
    """Write ``img`` as 16-bit grayscale; format follows the suffix (.png or .pgm)."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    data = np.where(img.valid_mask, img.data, 0.0)
    raw = np.round(np.clip(data, 0.0, 1.0) * 65535.0).astype(np.uint16)
    if not cv2.imwrite(str(path), raw):
        raise OSError(f"could not write image to {path}")
    logger.debug(f"Wrote {img.width}x{img.height} image to {path}")
    return path


def read_mask(path: PathLike) -> np.ndarray:
    """Read an 8-bit PGM validity mask (255 = valid)."""
    path = Path(path)
    raw = cv2.imread(str(path), cv2.IMREAD_UNCHANGED)
    if raw is None:
        raise InputFormatError(path, "not a readable mask")
    if raw.ndim != 2:
        raise InputFormatError(path, "mask must be single-channel")
    return raw >= 128


def write_mask(mask: np.ndarray, path: PathLike) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    raw = np.where(np.asarray(mask, dtype=bool), 255, 0).astype(np.uint8)
    if not cv2.imwrite(str(path), raw):
        raise OSError(f"could not write mask to {path}")
    return path
