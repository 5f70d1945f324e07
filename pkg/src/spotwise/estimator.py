"""scikit-learn style front ends.

:class:`SpotOccupancyEstimator` is fitted on a lot (spot map + ROI mask) and
predicts per-spot occupancy for frames of detections.
:class:`AreaOutlierDetector` learns per-spot detection-area bounds.
"""

from __future__ import annotations

from collections.abc import Iterable, Mapping

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin
from sklearn.utils.validation import check_is_fitted

from ._validation import check_frames, check_positive, check_ratio_open
from .assignment import (
    DEFAULT_AREA_THRESHOLD,
    DEFAULT_DELTA,
    DEFAULT_NMS_IOU,
    FrameResult,
    PipelineConfig,
    run_pipeline,
)
from .codec import encode_status
from .errors import ConfigError, DomainError
from .roi import RoiMask
from .spots import SpotMap
from .stats import AreaStats, area_outlier_bounds, evaluate


class SpotOccupancyEstimator(TransformerMixin, BaseEstimator):
    """Per-spot occupancy from vehicle detections.

    Parameters
    ----------
    delta : float
        Largest normalized center distance at which a detection may claim a spot.
    area_threshold : float
        Pixel area above which a detection near a critical spot is split in two.
    nms_iou : float
        IoU above which the lower-confidence of two detections is suppressed.
    critical_ids : iterable of int or None
        Spots where oversized boxes get split. ``None`` uses the spots flagged
        critical in the fitted spot map.
    abbp_delta : float or None
        Distance used for the split test; ``None`` reuses ``delta``.

    Attributes
    ----------
    spot_map_ : SpotMap
    mask_ : RoiMask
    n_spots_ : int
    config_ : PipelineConfig
    """

    def __init__(
        self,
        delta=DEFAULT_DELTA,
        area_threshold=DEFAULT_AREA_THRESHOLD,
        nms_iou=DEFAULT_NMS_IOU,
        critical_ids=None,
        abbp_delta=None,
    ):
        self.delta = delta
        self.area_threshold = area_threshold
        self.nms_iou = nms_iou
        self.critical_ids = critical_ids
        self.abbp_delta = abbp_delta

    def fit(self, spot_map: SpotMap, mask: RoiMask, y=None):
        if not isinstance(spot_map, SpotMap):
            raise DomainError(f"fit expects a SpotMap, got {type(spot_map).__name__}")
        if not isinstance(mask, RoiMask):
            raise DomainError(f"fit expects a RoiMask, got {type(mask).__name__}")
        if spot_map.n_spots == 0:
            raise ConfigError("spot map is empty")
        check_positive(self.delta, "delta")
        check_positive(self.area_threshold, "area_threshold")
        check_ratio_open(self.nms_iou, "nms_iou")
        critical = None if self.critical_ids is None else frozenset(int(i) for i in self.critical_ids)
        if critical is not None and not critical <= set(range(1, spot_map.n_spots + 1)):
            raise ConfigError(f"critical ids {sorted(critical)} not all in 1..{spot_map.n_spots}")
        self.config_ = PipelineConfig(
            delta=float(self.delta),
            area_threshold=float(self.area_threshold),
            nms_iou=float(self.nms_iou),
            abbp_delta=None if self.abbp_delta is None else float(self.abbp_delta),
            critical_ids=critical,
        )
        self.spot_map_ = spot_map
        self.mask_ = mask
        self.n_spots_ = spot_map.n_spots
        return self

    def predict_frames(self, X) -> list[FrameResult]:
        """Full per-frame results, including assignments and refined boxes."""
        check_is_fitted(self, "config_")
        return [run_pipeline(frame, self.spot_map_, self.mask_, self.config_) for frame in check_frames(X)]

    def predict(self, X) -> np.ndarray:
        """Boolean matrix of shape ``(n_frames, n_spots)``."""
        results = self.predict_frames(X)
        out = np.zeros((len(results), self.n_spots_), dtype=bool)
        for i, r in enumerate(results):
            out[i] = r.occupied
        return out

    def transform(self, X) -> np.ndarray:
        """Occupancy bitmask per frame (spot 1 is the most significant bit)."""
        occ = self.predict(X)
        return np.array([encode_status(row) for row in occ], dtype=object if self.n_spots_ > 63 else np.int64)

    def score(self, X, y) -> float:
        """Balanced accuracy of :meth:`predict` against truth ``y``."""
        return evaluate(self.predict(X), y).balanced_accuracy


class AreaOutlierDetector(BaseEstimator):
    """Per-spot mean +/- ``n_sigma`` std bounds on detection areas.

    ``fit`` takes a mapping ``{spot_id: [areas]}`` or an iterable of
    ``(spot_id, area)`` pairs. Spots with fewer than two samples are skipped.
    """

    def __init__(self, min_samples: int = 2):
        self.min_samples = min_samples

    @staticmethod
    def _group(X) -> dict[int, list[float]]:
        if isinstance(X, Mapping):
            return {int(k): [float(a) for a in v] for k, v in X.items()}
        grouped: dict[int, list[float]] = {}
        for sid, area in X:
            grouped.setdefault(int(sid), []).append(float(area))
        return grouped

    def fit(self, X, y=None):
        if self.min_samples < 2:
            raise ConfigError("min_samples must be at least 2")
        grouped = self._group(X)
        self.stats_: dict[int, AreaStats] = {
            sid: area_outlier_bounds(v, sid) for sid, v in sorted(grouped.items()) if len(v) >= self.min_samples
        }
        return self

    def predict(self, X: Iterable[tuple[int, float]]) -> np.ndarray:
        """``True`` for each ``(spot_id, area)`` outside its spot's bounds.

        Spots without fitted bounds never flag.
        """
        check_is_fitted(self, "stats_")
        out = []
        for sid, area in X:
            st = self.stats_.get(int(sid))
            out.append(st is not None and not (st.lower <= float(area) <= st.upper))
        return np.array(out, dtype=bool)
