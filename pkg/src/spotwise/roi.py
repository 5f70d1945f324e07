"""Raster ROI masks. Dark pixels mark the parking area."""

from __future__ import annotations

import io
import logging
import math
import os
from dataclasses import dataclass

import numpy as np
from PIL import Image, UnidentifiedImageError

from .errors import DegenerateMaskError, DomainError, FormatError

log = logging.getLogger(__name__)

DEFAULT_THRESHOLD = 128


@dataclass(frozen=True, eq=False)
class RoiMask:
    """Boolean raster, ``inside[row, col]``; ``True`` means inside the ROI."""

    inside: np.ndarray

    def __post_init__(self):
        arr = np.asarray(self.inside, dtype=bool)
        if arr.ndim != 2 or arr.size == 0:
            raise FormatError(f"mask must be a non-empty 2-D raster, got shape {arr.shape}")
        arr = arr.copy()
        arr.setflags(write=False)
        object.__setattr__(self, "inside", arr)

    @property
    def width(self) -> int:
        return self.inside.shape[1]

    @property
    def height(self) -> int:
        return self.inside.shape[0]

    @property
    def inside_count(self) -> int:
        return int(self.inside.sum())

    def __eq__(self, other):
        if not isinstance(other, RoiMask):
            return NotImplemented
        return np.array_equal(self.inside, other.inside)

    __hash__ = None

    @classmethod
    def from_luminance(cls, pixels, threshold: int = DEFAULT_THRESHOLD) -> "RoiMask":
        """Threshold a 2-D luminance array: ``inside = value < threshold``."""
        arr = np.asarray(pixels)
        if arr.ndim != 2:
            raise FormatError(f"expected a single-channel raster, got shape {arr.shape}")
        inside = arr < threshold
        n_in = int(inside.sum())
        if n_in == 0 or n_in == inside.size:
            kind = "no inside" if n_in == 0 else "no outside"
            log.warning("rejecting degenerate ROI mask (%s pixel)", kind)
            raise DegenerateMaskError(f"degenerate ROI mask: {kind} pixel")
        return cls(inside)

    def to_image(self) -> Image.Image:
        """Render as an 8-bit image: inside black, outside white."""
        return Image.fromarray(np.where(self.inside, 0, 255).astype(np.uint8), mode="L")


def load_roi_mask(raster, threshold: int = DEFAULT_THRESHOLD) -> RoiMask:
    """Decode a PNG/PGM (or any Pillow-readable) raster into a :class:`RoiMask`.

    ``raster`` is encoded bytes or a path. Colour images are reduced to
    luminance first.
    """
    if isinstance(raster, (str, os.PathLike)):
        with open(raster, "rb") as fh:
            raster = fh.read()
    try:
        with Image.open(io.BytesIO(raster)) as img:
            img.load()
            gray = img.convert("L") if img.mode not in ("L", "I", "I;16", "1") else img
            pixels = np.asarray(gray)
    except (UnidentifiedImageError, OSError, ValueError) as exc:
        raise FormatError(f"cannot decode ROI raster: {exc}") from None
    if pixels.dtype == bool:
        pixels = np.where(pixels, 255, 0)
    return RoiMask.from_luminance(pixels, threshold)


def point_in_roi(x: float, y: float, mask: RoiMask) -> bool:
    """Whether normalized point ``(x, y)`` falls on an inside pixel.

    The pixel is ``(floor(x * width), floor(y * height))``, clamped to the
    last column/row so that ``x == 1`` and ``y == 1`` stay on the raster.
    """
    if not (0.0 <= x <= 1.0 and 0.0 <= y <= 1.0):
        raise DomainError(f"point ({x}, {y}) outside [0, 1]^2")
    col = min(math.floor(x * mask.width), mask.width - 1)
    row = min(math.floor(y * mask.height), mask.height - 1)
    return bool(mask.inside[row, col])
