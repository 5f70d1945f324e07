"""Detection-to-spot assignment and adaptive bounding-box partitioning.

A frame goes through ``nms -> abbp_refine -> assign_detections``. All
functions here are pure.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

from .errors import ConfigError
from .geometry import Detection, NormBox, bbox_area_px, center_distance, nms
from .roi import RoiMask, point_in_roi
from .spots import SpotMap

DEFAULT_DELTA = 0.1
DEFAULT_AREA_THRESHOLD = 5674.0
DEFAULT_NMS_IOU = 0.45


@dataclass(frozen=True)
class Assignment:
    detection_index: int
    spot_id: int
    distance: float


@dataclass(frozen=True)
class FrameResult:
    occupied: tuple[bool, ...]
    assignments: tuple[Assignment, ...] = ()
    refined_detections: tuple[Detection, ...] = ()
    dropped_outside_roi: int = 0

    @property
    def occupied_count(self) -> int:
        return sum(self.occupied)


@dataclass(frozen=True)
class PipelineConfig:
    """Tunables for one frame pass.

    ``abbp_delta`` defaults to ``delta`` when left as ``None``.
    """

    delta: float = DEFAULT_DELTA
    area_threshold: float = DEFAULT_AREA_THRESHOLD
    nms_iou: float = DEFAULT_NMS_IOU
    abbp_delta: float | None = None
    critical_ids: frozenset[int] | None = field(default=None)

    def __post_init__(self):
        for name in ("delta", "area_threshold"):
            v = getattr(self, name)
            if not (math.isfinite(v) and v > 0):
                raise ConfigError(f"{name} must be positive, got {v}")
        if self.abbp_delta is not None and not self.abbp_delta > 0:
            raise ConfigError(f"abbp_delta must be positive, got {self.abbp_delta}")
        if not 0.0 < self.nms_iou < 1.0:
            raise ConfigError(f"nms_iou must lie in (0, 1), got {self.nms_iou}")

    @property
    def split_delta(self) -> float:
        return self.delta if self.abbp_delta is None else self.abbp_delta


def assign_detections(detections, spots: SpotMap, mask: RoiMask, delta: float = DEFAULT_DELTA) -> FrameResult:
    """Mark each spot whose center is the nearest one (within ``delta``) to a detection.

    Spots are scanned in ascending id and the comparison is strict, so on
    equal distances the lowest id wins. The ROI test is applied to the
    detection center only after a nearest spot was found; detections that
    fail it are counted in ``dropped_outside_roi``.
    """
    if not delta > 0:
        raise ConfigError(f"delta must be positive, got {delta}")
    if spots.n_spots == 0:
        raise ConfigError("spot map is empty")
    occupied = [False] * spots.n_spots
    assignments = []
    dropped = 0
    for det in detections:
        x, y = det.box.x_c, det.box.y_c
        nearest, min_dist = None, math.inf
        for spot in spots.spots:
            dist = center_distance(det.box, spot.center_box)
            if dist < min_dist and dist < delta:
                min_dist = dist
                nearest = spot.spot_id
        if nearest is None:
            continue
        if point_in_roi(x, y, mask):
            occupied[nearest - 1] = True
            assignments.append(Assignment(det.source_index, nearest, min_dist))
        else:
            dropped += 1
    return FrameResult(tuple(occupied), tuple(assignments), tuple(detections), dropped)


def _split(det: Detection, child_index: int) -> tuple[Detection, Detection]:
    b = det.box
    half = b.w / 2
    # a child center can leave [0, 1] only for parents hugging the border
    left = min(max(b.x_c - half / 2, 0.0), 1.0)
    right = min(max(b.x_c + half / 2, 0.0), 1.0)
    return (
        Detection(NormBox(left, b.y_c, half, b.h), det.confidence, child_index),
        Detection(NormBox(right, b.y_c, half, b.h), det.confidence, child_index + 1),
    )


def abbp_refine(
    detections,
    spots: SpotMap,
    width: float,
    height: float,
    critical_ids=None,
    area_threshold: float = DEFAULT_AREA_THRESHOLD,
    delta: float = DEFAULT_DELTA,
) -> list[Detection]:
    """Split oversized detections sitting on critical spots into two halves.

    A detection is replaced by two half-width boxes (same height, centers
    shifted by a quarter of the parent width) when some critical spot center
    lies closer than ``delta`` and its pixel area is strictly above
    ``area_threshold``. Each detection splits at most once. Children keep the
    parent's confidence and get fresh source indices after all originals.

    ``critical_ids`` defaults to the spots flagged critical in ``spots``.
    """
    if not area_threshold > 0:
        raise ConfigError(f"area_threshold must be positive, got {area_threshold}")
    dets = list(detections)
    if critical_ids is None:
        critical_ids = spots.critical_ids
    critical_ids = frozenset(critical_ids)
    unknown = critical_ids - {s.spot_id for s in spots.spots}
    if unknown:
        raise ConfigError(f"critical ids {sorted(unknown)} are not spot ids")
    critical = [s for s in spots.spots if s.spot_id in critical_ids]
    next_index = max((d.source_index for d in dets), default=-1) + 1
    out: list[Detection] = []
    for det in dets:
        split = False
        for spot in critical:
            if center_distance(det.box, spot.center_box) < delta:
                if bbox_area_px(det.box, width, height) > area_threshold:
                    out.extend(_split(det, next_index))
                    next_index += 2
                    split = True
                    break
        if not split:
            out.append(det)
    return out


def run_pipeline(raw_detections, spots: SpotMap, mask: RoiMask, cfg: PipelineConfig | None = None) -> FrameResult:
    """NMS, then ABBP, then assignment, for one frame."""
    cfg = cfg or PipelineConfig()
    kept = nms(raw_detections, cfg.nms_iou)
    refined = abbp_refine(
        kept,
        spots,
        spots.image_width,
        spots.image_height,
        cfg.critical_ids,
        cfg.area_threshold,
        cfg.split_delta,
    )
    return assign_detections(refined, spots, mask, cfg.delta)
