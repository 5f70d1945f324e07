"""Input validation helpers shared by the estimators and the functional core."""

from __future__ import annotations

import math
from collections.abc import Iterable, Sequence

import numpy as np

from .errors import ConfigError, DomainError, RangeError
from .geometry import Detection, NormBox


def check_unit_interval(value: float, name: str, *, closed_low: bool = True) -> float:
    value = float(value)
    if not math.isfinite(value):
        raise RangeError(f"{name} must be finite, got {value}")
    low_ok = value >= 0.0 if closed_low else value > 0.0
    if not (low_ok and value <= 1.0):
        bracket = "[0, 1]" if closed_low else "(0, 1]"
        raise RangeError(f"{name} must lie in {bracket}, got {value}")
    return value


def check_positive(value: float, name: str, error: type[Exception] = ConfigError) -> float:
    value = float(value)
    if not (math.isfinite(value) and value > 0):
        raise error(f"{name} must be a positive finite number, got {value}")
    return value


def check_ratio_open(value: float, name: str) -> float:
    value = float(value)
    if not (0.0 < value < 1.0):
        raise ConfigError(f"{name} must lie in (0, 1), got {value}")
    return value


def check_detections(frame) -> list[Detection]:
    """Coerce one frame of detections to a list of :class:`Detection`.

    Accepts a sequence of ``Detection`` objects, or an array-like of shape
    ``(n, 4)`` / ``(n, 5)`` holding ``x_c, y_c, w, h[, conf]`` rows. Rows
    without a confidence get ``1.0``. Source indices follow row order.
    """
    if isinstance(frame, np.ndarray) or (
        isinstance(frame, Sequence) and frame and not isinstance(frame[0], Detection)
    ):
        arr = np.asarray(frame, dtype=float)
        if arr.size == 0:
            return []
        if arr.ndim != 2 or arr.shape[1] not in (4, 5):
            raise DomainError(f"detection array must have shape (n, 4) or (n, 5), got {arr.shape}")
        out = []
        for i, row in enumerate(arr):
            conf = float(row[4]) if arr.shape[1] == 5 else 1.0
            out.append(Detection(NormBox(*map(float, row[:4])), conf, i))
        return out
    dets = list(frame)
    for d in dets:
        if not isinstance(d, Detection):
            raise DomainError(f"expected Detection, got {type(d).__name__}")
    seen = set()
    for d in dets:
        if d.source_index in seen:
            raise DomainError(f"duplicate source_index {d.source_index} in frame")
        seen.add(d.source_index)
    return dets


def check_frames(X: Iterable) -> list[list[Detection]]:
    return [check_detections(frame) for frame in X]


def check_bool_matrix(a, name: str) -> np.ndarray:
    arr = np.asarray(a)
    if arr.ndim != 2:
        raise DomainError(f"{name} must be 2-D (frames x spots), got shape {arr.shape}")
    if arr.dtype != bool:
        if not np.isin(arr, (0, 1)).all():
            raise DomainError(f"{name} must contain only 0/1 or booleans")
        arr = arr.astype(bool)
    return arr
