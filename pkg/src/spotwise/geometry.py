"""Normalized boxes, detections, and the geometric primitives over them."""

from __future__ import annotations

import math
from dataclasses import dataclass

from .errors import ConfigError, RangeError


@dataclass(frozen=True)
class NormBox:
    """Center/size box in normalized image coordinates.

    Centers lie in ``[0, 1]`` and sizes in ``(0, 1]``. The box extent may
    still reach past the unit square near the edges; clipping is left to
    consumers.
    """

    x_c: float
    y_c: float
    w: float
    h: float

    def __post_init__(self):
        for name in ("x_c", "y_c", "w", "h"):
            v = getattr(self, name)
            if not math.isfinite(v):
                raise RangeError(f"{name} must be finite, got {v}")
        if not (0.0 <= self.x_c <= 1.0 and 0.0 <= self.y_c <= 1.0):
            raise RangeError(f"box center ({self.x_c}, {self.y_c}) outside [0, 1]")
        if not (0.0 < self.w <= 1.0 and 0.0 < self.h <= 1.0):
            raise RangeError(f"box size ({self.w}, {self.h}) outside (0, 1]")

    @property
    def corners(self) -> tuple[float, float, float, float]:
        """``(x1, y1, x2, y2)``, unclipped."""
        hw, hh = self.w / 2, self.h / 2
        return (self.x_c - hw, self.y_c - hh, self.x_c + hw, self.y_c + hh)

    @property
    def area(self) -> float:
        return self.w * self.h


@dataclass(frozen=True)
class Detection:
    box: NormBox
    confidence: float = 1.0
    source_index: int = 0

    def __post_init__(self):
        if not (0.0 <= self.confidence <= 1.0):
            raise RangeError(f"confidence must lie in [0, 1], got {self.confidence}")


def iou(a: NormBox, b: NormBox) -> float:
    """Intersection over union of two boxes; 0.0 when they are disjoint."""
    if a == b:
        return 1.0
    ax1, ay1, ax2, ay2 = a.corners
    bx1, by1, bx2, by2 = b.corners
    iw = min(ax2, bx2) - max(ax1, bx1)
    ih = min(ay2, by2) - max(ay1, by1)
    if iw <= 0 or ih <= 0:
        return 0.0
    inter = iw * ih
    union = a.area + b.area - inter
    if union <= 0:
        return 0.0
    # distinct boxes stay strictly below 1 even when rounding says otherwise
    return min(math.nextafter(1.0, 0.0), inter / union)


def nms(detections, iou_threshold: float = 0.45) -> list[Detection]:
    """Greedy non-maximum suppression.

    Detections are visited by descending confidence (ties by ascending
    ``source_index``); one is dropped when its IoU with an already kept
    detection exceeds ``iou_threshold``. Survivors come back in visiting
    order.
    """
    if not (0.0 < iou_threshold < 1.0):
        raise ConfigError(f"iou_threshold must lie in (0, 1), got {iou_threshold}")
    order = sorted(detections, key=lambda d: (-d.confidence, d.source_index))
    kept: list[Detection] = []
    for det in order:
        if all(iou(det.box, k.box) <= iou_threshold for k in kept):
            kept.append(det)
    return kept


def center_distance(a: NormBox, b: NormBox) -> float:
    dx = a.x_c - b.x_c
    dy = a.y_c - b.y_c
    return math.sqrt(dx * dx + dy * dy)


def bbox_area_px(box: NormBox, width: float, height: float) -> float:
    """Box area in pixels, ``(w * W) * (h * H)``, unrounded."""
    if width <= 0 or height <= 0:
        raise RangeError(f"image size must be positive, got {width}x{height}")
    return (box.w * width) * (box.h * height)
