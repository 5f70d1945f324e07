"""Spot annotations, the lot configuration file, and detection logs.

Spot CSV grammar (one line per labeled image, only the first data line is
used)::

    line   := [image ","] boxes
    boxes  := box (";" box)*
    box    := class SP x_c SP y_c SP w SP h

All coordinates are normalized. Spot ids are assigned 1..n in file order.
"""

from __future__ import annotations

import json
import math
import os
from collections.abc import Iterable, Iterator, Mapping
from dataclasses import dataclass, field
from datetime import datetime, timezone

from .errors import ConfigError, ParseError, RangeError
from .geometry import Detection, NormBox

DEFAULT_GROUP = "general"


@dataclass(frozen=True)
class SpotAnnotation:
    spot_id: int
    center_box: NormBox
    group_id: str = DEFAULT_GROUP
    critical: bool = False
    class_id: int = 0


@dataclass(frozen=True)
class SpotMap:
    spots: tuple[SpotAnnotation, ...]
    image_width: int
    image_height: int
    image_name: str | None = None

    def __post_init__(self):
        if self.image_width <= 0 or self.image_height <= 0:
            raise ConfigError(
                f"image size must be positive, got {self.image_width}x{self.image_height}"
            )
        ids = [s.spot_id for s in self.spots]
        if ids != list(range(1, len(ids) + 1)):
            raise ConfigError("spot ids must be 1..n in ascending order without gaps")

    def __len__(self) -> int:
        return len(self.spots)

    def __iter__(self) -> Iterator[SpotAnnotation]:
        return iter(self.spots)

    @property
    def n_spots(self) -> int:
        return len(self.spots)

    @property
    def critical_ids(self) -> frozenset[int]:
        return frozenset(s.spot_id for s in self.spots if s.critical)

    def groups(self) -> dict[str, list[int]]:
        out: dict[str, list[int]] = {}
        for s in self.spots:
            out.setdefault(s.group_id, []).append(s.spot_id)
        return out


def invert_groups(groups: Mapping[str, Iterable[int]], n_spots: int | None = None) -> dict[int, str]:
    """Turn ``{group_id: [spot ids]}`` into ``{spot_id: group_id}``.

    Raises :class:`ConfigError` when a spot appears in two groups, or, with
    ``n_spots`` given, when a spot is missing or out of range.
    """
    out: dict[int, str] = {}
    for gid, members in groups.items():
        for sid in members:
            sid = int(sid)
            if sid in out:
                raise ConfigError(f"spot {sid} is in groups {out[sid]!r} and {gid!r}")
            out[sid] = str(gid)
    if n_spots is not None:
        extra = sorted(set(out) - set(range(1, n_spots + 1)))
        if extra:
            raise ConfigError(f"groups reference unknown spot ids {extra}")
        missing = sorted(set(range(1, n_spots + 1)) - set(out))
        if missing:
            raise ConfigError(f"spots {missing} belong to no group")
    return out


def _parse_float(token: str, row: int, column: int) -> float:
    try:
        value = float(token)
    except ValueError:
        raise ParseError(f"not a number: {token!r}", row, column) from None
    if not math.isfinite(value):
        raise ParseError(f"non-finite value {token!r}", row, column)
    return value


def _parse_boxes(text: str, row: int, offset: int) -> list[tuple[int, NormBox]]:
    boxes = []
    pos = 0
    for chunk in text.split(";"):
        column = offset + pos + 1
        pos += len(chunk) + 1
        fields = chunk.split()
        if not fields:
            raise ParseError("empty box entry", row, column)
        if len(fields) != 5:
            raise ParseError(f"box must have 5 fields (class x_c y_c w h), got {len(fields)}", row, column)
        try:
            cls = int(fields[0])
        except ValueError:
            raise ParseError(f"class id must be an integer, got {fields[0]!r}", row, column) from None
        x, y, w, h = (_parse_float(t, row, column) for t in fields[1:])
        for name, v in (("x_c", x), ("y_c", y)):
            if not 0.0 <= v <= 1.0:
                raise RangeError(f"{name}={v} outside [0, 1] at row {row}, column {column}")
        for name, v in (("w", w), ("h", h)):
            if not 0.0 < v <= 1.0:
                raise RangeError(f"{name}={v} outside (0, 1] at row {row}, column {column}")
        boxes.append((cls, NormBox(x, y, w, h)))
    return boxes


def parse_spot_annotations(
    csv_text: str,
    image_w: int,
    image_h: int,
    groups: Mapping[int, str] | None = None,
    critical_ids: Iterable[int] = (),
) -> SpotMap:
    """Parse the spot CSV into a :class:`SpotMap`.

    ``groups`` maps spot id to group id; when omitted every spot lands in
    ``"general"``. Every spot must be covered when it is given.
    """
    row_no, line = None, None
    for i, raw in enumerate(csv_text.splitlines(), start=1):
        if raw.strip() and not raw.lstrip().startswith("#"):
            row_no, line = i, raw
            break
    if line is None:
        raise ParseError("no annotation row found", 1, 1)

    image_name = None
    offset = 0
    if "," in line:
        head, _, rest = line.partition(",")
        image_name = head.strip() or None
        offset = len(head) + 1
        line = rest
    line = line.rstrip()
    if len(line) >= 2 and line[0] == line[-1] == '"':
        line = line[1:-1]
        offset += 1

    boxes = _parse_boxes(line, row_no, offset)
    if not boxes:
        raise ParseError("annotation row holds no boxes", row_no, offset + 1)
    n = len(boxes)

    critical = {int(c) for c in critical_ids}
    bad = sorted(c for c in critical if not 1 <= c <= n)
    if bad:
        raise ConfigError(f"critical ids {bad} not in 1..{n}")
    if groups is not None:
        missing = [i for i in range(1, n + 1) if i not in groups]
        if missing:
            raise ConfigError(f"spots {missing} belong to no group")
        extra = sorted(set(groups) - set(range(1, n + 1)))
        if extra:
            raise ConfigError(f"groups reference unknown spot ids {extra}")

    spots = tuple(
        SpotAnnotation(
            spot_id=i,
            center_box=box,
            group_id=groups[i] if groups is not None else DEFAULT_GROUP,
            critical=i in critical,
            class_id=cls,
        )
        for i, (cls, box) in enumerate(boxes, start=1)
    )
    return SpotMap(spots, int(image_w), int(image_h), image_name)


def serialize_spot_annotations(spot_map: SpotMap) -> str:
    """Inverse of :func:`parse_spot_annotations` for the geometry part."""
    boxes = ";".join(
        f"{s.class_id} {s.center_box.x_c!r} {s.center_box.y_c!r} {s.center_box.w!r} {s.center_box.h!r}"
        for s in spot_map.spots
    )
    if spot_map.image_name is not None:
        return f"{spot_map.image_name},\"{boxes}\"\n"
    return boxes + "\n"


@dataclass
class LotConfig:
    """Deployment configuration for one lot (the lot config JSON)."""

    image_width: int
    image_height: int
    delta: float = 0.1
    area_threshold_px: float = 5674.0
    nms_iou: float = 0.45
    critical_spot_ids: list[int] = field(default_factory=list)
    groups: dict[str, list[int]] = field(default_factory=dict)
    abbp_delta: float | None = None
    roi_threshold: int = 128
    lot_name: str = "parking"
    building_name: str = "building"
    totem_scope: str = "total"
    spots_csv: str | None = None
    mask: str | None = None

    KEYS = (
        "image_width", "image_height", "delta", "area_threshold_px", "nms_iou",
        "critical_spot_ids", "groups", "abbp_delta", "roi_threshold", "lot_name",
        "building_name", "totem_scope", "spots_csv", "mask",
    )

    @classmethod
    def from_dict(cls, data: Mapping) -> "LotConfig":
        unknown = sorted(set(data) - set(cls.KEYS))
        if unknown:
            raise ConfigError(f"unknown lot config keys {unknown}")
        for key in ("image_width", "image_height"):
            if key not in data:
                raise ConfigError(f"lot config is missing {key!r}")
        kwargs = dict(data)
        kwargs["critical_spot_ids"] = [int(i) for i in kwargs.get("critical_spot_ids", [])]
        kwargs["groups"] = {str(k): [int(i) for i in v] for k, v in kwargs.get("groups", {}).items()}
        return cls(**kwargs)

    def to_dict(self) -> dict:
        return {k: getattr(self, k) for k in self.KEYS}

    def spot_groups(self, n_spots: int) -> dict[int, str] | None:
        if not self.groups:
            return None
        return invert_groups(self.groups, n_spots)


def load_lot_config(path: str | os.PathLike) -> LotConfig:
    """Read a lot config; relative ``spots_csv``/``mask`` paths resolve against its directory."""
    with open(path, encoding="utf-8") as fh:
        try:
            data = json.load(fh)
        except json.JSONDecodeError as exc:
            raise ConfigError(f"{path}: invalid JSON: {exc}") from None
    cfg = LotConfig.from_dict(data)
    base = os.path.dirname(os.path.abspath(path))
    for key in ("spots_csv", "mask"):
        value = getattr(cfg, key)
        if value and not os.path.isabs(value):
            setattr(cfg, key, os.path.join(base, value))
    return cfg


def load_spot_map(cfg: LotConfig, csv_text: str | None = None) -> SpotMap:
    if csv_text is None:
        if not cfg.spots_csv:
            raise ConfigError("lot config names no spots_csv")
        with open(cfg.spots_csv, encoding="utf-8") as fh:
            csv_text = fh.read()
    # count boxes first so the group map can be checked against n
    probe = parse_spot_annotations(csv_text, cfg.image_width, cfg.image_height)
    return parse_spot_annotations(
        csv_text,
        cfg.image_width,
        cfg.image_height,
        groups=cfg.spot_groups(probe.n_spots),
        critical_ids=cfg.critical_spot_ids,
    )


# -- detection logs (JSON Lines) ---------------------------------------------


def parse_timestamp(value: str) -> datetime:
    ts = datetime.fromisoformat(value.replace("Z", "+00:00"))
    if ts.tzinfo is None:
        ts = ts.replace(tzinfo=timezone.utc)
    return ts.astimezone(timezone.utc)


def format_timestamp(ts: datetime) -> str:
    return ts.astimezone(timezone.utc).isoformat().replace("+00:00", "Z")


def read_detection_log(lines: Iterable[str]) -> Iterator[tuple[datetime, list[Detection]]]:
    """Yield ``(timestamp, detections)`` per record of a detection log.

    Each line is ``{"timestamp": ..., "detections": [{"x_c", "y_c", "w", "h", "conf"}]}``.
    Blank lines are skipped.
    """
    for row, line in enumerate(lines, start=1):
        if not line.strip():
            continue
        try:
            rec = json.loads(line)
            ts = parse_timestamp(rec["timestamp"])
            dets = [
                Detection(
                    NormBox(float(d["x_c"]), float(d["y_c"]), float(d["w"]), float(d["h"])),
                    float(d.get("conf", 1.0)),
                    i,
                )
                for i, d in enumerate(rec.get("detections", []))
            ]
        except (json.JSONDecodeError, KeyError, TypeError, ValueError) as exc:
            if isinstance(exc, RangeError):
                raise
            raise ParseError(f"bad detection record: {exc}", row) from None
        yield ts, dets


def detection_record(ts: datetime, detections: Iterable[Detection]) -> dict:
    return {
        "timestamp": format_timestamp(ts),
        "detections": [
            {"x_c": d.box.x_c, "y_c": d.box.y_c, "w": d.box.w, "h": d.box.h, "conf": d.confidence}
            for d in detections
        ],
    }
