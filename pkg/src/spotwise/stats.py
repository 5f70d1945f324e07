"""Occupancy series, daily/weekly reports, area outlier bounds and evaluation metrics."""

from __future__ import annotations

import csv
import enum
import io
import json
import math
import os
from collections.abc import Iterable, Mapping, Sequence
from dataclasses import dataclass, field
from datetime import date, datetime, timedelta, timezone, tzinfo
from pathlib import Path
from zoneinfo import ZoneInfo

import numpy as np

from .codec import ParkingStatus, decode_status
from .errors import DomainError, InsufficientDataError, ParseError
from .spots import format_timestamp, parse_timestamp

MINUTES_PER_HOUR = 60
Z_LIMIT = 2.0
Z_DECIMALS = 12


def _zone(tz) -> tzinfo:
    if tz is None:
        return timezone.utc
    if isinstance(tz, str):
        return ZoneInfo(tz)
    return tz


# -- series -------------------------------------------------------------------


@dataclass
class OccupancySeries:
    """Time-ordered parking statuses at nominal one-minute resolution."""

    n_spots: int
    rows: list[ParkingStatus] = field(default_factory=list)

    def __post_init__(self):
        rows, self.rows = self.rows, []
        for r in rows:
            self.append(r)

    def __len__(self) -> int:
        return len(self.rows)

    def append(self, status: ParkingStatus) -> None:
        if status.n_spots != self.n_spots:
            raise DomainError(f"status has {status.n_spots} spots, series has {self.n_spots}")
        if self.rows and status.timestamp <= self.rows[-1].timestamp:
            raise DomainError(
                f"timestamps must increase: {status.timestamp} after {self.rows[-1].timestamp}"
            )
        self.rows.append(status)

    def bits_matrix(self) -> np.ndarray:
        """``(rows, n_spots)`` boolean matrix, column ``i`` is spot ``i + 1``."""
        if not self.rows:
            return np.zeros((0, self.n_spots), dtype=bool)
        masks = np.array([r.bitmask for r in self.rows], dtype=np.uint64)
        shifts = np.arange(self.n_spots - 1, -1, -1, dtype=np.uint64)
        return ((masks[:, None] >> shifts[None, :]) & np.uint64(1)).astype(bool)

    def local_dates(self, tz=None) -> list[date]:
        zone = _zone(tz)
        return [r.timestamp.astimezone(zone).date() for r in self.rows]

    def daily_minutes(self, tz=None) -> dict[date, np.ndarray]:
        """Occupied-minute counts per spot for every local day present."""
        bits = self.bits_matrix()
        out: dict[date, np.ndarray] = {}
        for d, row in zip(self.local_dates(tz), bits):
            acc = out.get(d)
            if acc is None:
                acc = out[d] = np.zeros(self.n_spots, dtype=np.int64)
            acc += row
        return out

    # -- persistence: ``timestamp,bitmask`` CSV plus ``{n_spots}`` sidecar

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["timestamp", "bitmask"])
        for r in self.rows:
            w.writerow([format_timestamp(r.timestamp), r.bitmask])
        return buf.getvalue()

    @classmethod
    def from_csv(cls, text: str, n_spots: int) -> "OccupancySeries":
        series = cls(n_spots)
        reader = csv.reader(io.StringIO(text))
        for row_no, row in enumerate(reader, start=1):
            if not row or (row_no == 1 and row[0].strip() == "timestamp"):
                continue
            if len(row) != 2:
                raise ParseError(f"expected 2 fields, got {len(row)}", row_no)
            try:
                ts = parse_timestamp(row[0].strip())
                mask = int(row[1])
            except ValueError as exc:
                raise ParseError(str(exc), row_no) from None
            series.append(ParkingStatus(n_spots, mask, ts))
        return series

    def save(self, path: str | os.PathLike) -> None:
        path = Path(path)
        path.write_text(self.to_csv(), encoding="utf-8")
        sidecar_path(path).write_text(json.dumps({"n_spots": self.n_spots}) + "\n", encoding="utf-8")

    @classmethod
    def load(cls, path: str | os.PathLike, n_spots: int | None = None) -> "OccupancySeries":
        path = Path(path)
        if n_spots is None:
            meta = json.loads(sidecar_path(path).read_text(encoding="utf-8"))
            n_spots = int(meta["n_spots"])
        return cls.from_csv(path.read_text(encoding="utf-8"), n_spots)


def sidecar_path(csv_path: str | os.PathLike) -> Path:
    return Path(csv_path).with_suffix(".json")


class SeriesWriter:
    """Append-only writer for the series CSV; writes the sidecar on open."""

    def __init__(self, path: str | os.PathLike, n_spots: int):
        self.path = Path(path)
        self.n_spots = n_spots
        self._last: datetime | None = None
        new = not self.path.exists() or self.path.stat().st_size == 0
        if not new:
            existing = OccupancySeries.load(self.path, n_spots)
            if existing.rows:
                self._last = existing.rows[-1].timestamp
        sidecar_path(self.path).write_text(json.dumps({"n_spots": n_spots}) + "\n", encoding="utf-8")
        self._fh = open(self.path, "a", encoding="utf-8", newline="")
        if new:
            self._fh.write("timestamp,bitmask\n")

    def append(self, status: ParkingStatus) -> None:
        if status.n_spots != self.n_spots:
            raise DomainError(f"status has {status.n_spots} spots, writer has {self.n_spots}")
        if self._last is not None and status.timestamp <= self._last:
            raise DomainError("timestamps must increase")
        self._fh.write(f"{format_timestamp(status.timestamp)},{status.bitmask}\n")
        self._last = status.timestamp

    def close(self) -> None:
        self._fh.close()

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()


# -- hours --------------------------------------------------------------------


def occupied_hours(series: OccupancySeries, spot_id: int, day: date, tz=None) -> float:
    """Hours spot ``spot_id`` was occupied on local calendar ``day``.

    Each row counts as one minute; minutes with no row count as free.
    """
    if not 1 <= spot_id <= series.n_spots:
        raise DomainError(f"spot {spot_id} not in 1..{series.n_spots}")
    zone = _zone(tz)
    minutes = sum(
        1
        for r in series.rows
        if r.timestamp.astimezone(zone).date() == day and r.is_occupied(spot_id)
    )
    return minutes / MINUTES_PER_HOUR


# -- day classes and history ----------------------------------------------------


class DayClass(str, enum.Enum):
    WEEKDAY = "weekday"
    WEEKEND = "weekend"


def day_class(day: date, holidays: Iterable[date] = ()) -> DayClass:
    """Weekends and holidays share one class."""
    if day.weekday() >= 5 or day in set(holidays):
        return DayClass.WEEKEND
    return DayClass.WEEKDAY


def load_holidays(path: str | os.PathLike) -> set[date]:
    """One ISO date per line; ``#`` starts a comment."""
    out = set()
    with open(path, encoding="utf-8") as fh:
        for line_no, line in enumerate(fh, start=1):
            line = line.split("#", 1)[0].strip()
            if not line:
                continue
            try:
                out.add(date.fromisoformat(line))
            except ValueError:
                raise ParseError(f"bad holiday date {line!r}", line_no) from None
    return out


# history[day_class][spot_id] = (mean_hours, std_hours)
History = Mapping[DayClass, Mapping[int, tuple[float, float]]]


def build_history(
    series: OccupancySeries,
    before: date,
    tz=None,
    holidays: Iterable[date] = (),
) -> dict[DayClass, dict[int, tuple[float, float]]]:
    """Per-spot mean/std of daily hours over the days preceding ``before``.

    Only local days with at least one row count. Uses population std.
    """
    holidays = set(holidays)
    per_class: dict[DayClass, list[np.ndarray]] = {DayClass.WEEKDAY: [], DayClass.WEEKEND: []}
    for d, minutes in series.daily_minutes(tz).items():
        if d < before:
            per_class[day_class(d, holidays)].append(minutes / MINUTES_PER_HOUR)
    out: dict[DayClass, dict[int, tuple[float, float]]] = {}
    for cls, days in per_class.items():
        if not days:
            out[cls] = {}
            continue
        arr = np.vstack(days)
        means, stds = arr.mean(axis=0), arr.std(axis=0)
        out[cls] = {i + 1: (float(means[i]), float(stds[i])) for i in range(series.n_spots)}
    return out


def history_to_json(history: History) -> dict:
    return {
        DayClass(cls).value: {str(s): {"mean": m, "std": sd} for s, (m, sd) in spots.items()}
        for cls, spots in history.items()
    }


def history_from_json(data: Mapping) -> dict[DayClass, dict[int, tuple[float, float]]]:
    return {
        DayClass(cls): {int(s): (float(v["mean"]), float(v["std"])) for s, v in spots.items()}
        for cls, spots in data.items()
    }


# -- daily statistics -----------------------------------------------------------


class Flag(str, enum.Enum):
    NORMAL = "Normal"
    BUSY = "Busy"
    LOW_OCCUPATION = "Low Occupation"
    INSUFFICIENT_HISTORY = "Insufficient history"


@dataclass(frozen=True)
class SpotDayStat:
    spot_id: int
    hours: float
    hist_mean: float | None
    hist_std: float | None
    z: float | None
    delta_hours: float | None
    flag: Flag

    @property
    def anomalous(self) -> bool:
        return self.z is not None and abs(self.z) > Z_LIMIT


def z_score(hours: float, mean: float, std: float) -> float:
    """``(hours - mean) / std``; with zero std, 0 when equal and +/-inf otherwise.

    Rounded to 12 decimals so decimal inputs sitting exactly on the flag
    threshold are not pushed over it by binary float noise.
    """
    diff = hours - mean
    if std > 0:
        return round(diff / std, Z_DECIMALS)
    if diff == 0:
        return 0.0
    return math.copysign(math.inf, diff)


def flag_for(z: float) -> Flag:
    if z > Z_LIMIT:
        return Flag.BUSY
    if z < -Z_LIMIT:
        return Flag.LOW_OCCUPATION
    return Flag.NORMAL


def spot_day_stat(spot_id: int, hours: float, mean: float | None, std: float | None) -> SpotDayStat:
    if mean is None or std is None:
        return SpotDayStat(spot_id, hours, None, None, None, None, Flag.INSUFFICIENT_HISTORY)
    z = z_score(hours, mean, std)
    return SpotDayStat(spot_id, hours, mean, std, z, hours - mean, flag_for(z))


def daily_spot_stats(
    series: OccupancySeries,
    history: History,
    day: date,
    tz=None,
    holidays: Iterable[date] = (),
) -> list[SpotDayStat]:
    """Score each spot's occupied hours on ``day`` against its history.

    The history row is picked by the day's class (weekday, or
    weekend/holiday). Spots without history get ``INSUFFICIENT_HISTORY``.
    """
    cls = day_class(day, holidays)
    hist = history.get(cls, {})
    minutes = series.daily_minutes(tz).get(day, np.zeros(series.n_spots, dtype=np.int64))
    out = []
    for i in range(series.n_spots):
        sid = i + 1
        mean, std = hist.get(sid, (None, None))
        out.append(spot_day_stat(sid, int(minutes[i]) / MINUTES_PER_HOUR, mean, std))
    return out


@dataclass(frozen=True)
class DailySummary:
    total_hours: float
    avg_hours_per_spot: float
    most_occupied: tuple[int, float]
    least_occupied: tuple[int, float]
    spots_under_1h: int
    anomalous_count: int


def overall_daily_summary(stats: Sequence[SpotDayStat]) -> DailySummary:
    if not stats:
        raise DomainError("no spot statistics to summarize")
    total = math.fsum(s.hours for s in stats)
    # max/min keep the first hit, and ids are ascending, so ties go to the lowest id
    ordered = sorted(stats, key=lambda s: s.spot_id)
    most = max(ordered, key=lambda s: s.hours)
    least = min(ordered, key=lambda s: s.hours)
    return DailySummary(
        total_hours=total,
        avg_hours_per_spot=total / len(stats),
        most_occupied=(most.spot_id, most.hours),
        least_occupied=(least.spot_id, least.hours),
        spots_under_1h=sum(1 for s in stats if s.hours < 1.0),
        anomalous_count=sum(1 for s in stats if s.anomalous),
    )


def _fmt(value: float | None, signed: bool = False) -> str:
    if value is None:
        return "-"
    if math.isinf(value):
        return "+inf" if value > 0 else "-inf"
    return f"{value:+.1f}" if signed else f"{value:.1f}"


def format_daily_table(stats: Sequence[SpotDayStat], summary: DailySummary | None = None) -> str:
    """Render the per-spot table, values rounded to one decimal."""
    header = ("Spot", "Hours", "Hist. Avg.", "Z-score", "Delta Hours", "Occupation")
    rows = [
        (str(s.spot_id), _fmt(s.hours), _fmt(s.hist_mean), _fmt(s.z), _fmt(s.delta_hours, True), s.flag.value)
        for s in stats
    ]
    widths = [max(len(h), *(len(r[i]) for r in rows)) for i, h in enumerate(header)]
    lines = ["  ".join(h.ljust(w) for h, w in zip(header, widths))]
    lines.append("  ".join("-" * w for w in widths))
    for r in rows:
        lines.append("  ".join(c.rjust(w) if i < 5 else c for i, (c, w) in enumerate(zip(r, widths))))
    if summary is not None:
        lines.append("")
        lines.append(
            f"Total occupied hours = {summary.total_hours:.1f}; "
            f"Average per spot = {summary.avg_hours_per_spot:.1f}h; "
            f"Most occupied = spot {summary.most_occupied[0]} ({summary.most_occupied[1]:.1f}h); "
            f"Least occupied = spot {summary.least_occupied[0]} ({summary.least_occupied[1]:.1f}h); "
            f"Spots with < 1h = {summary.spots_under_1h}; "
            f"Spots with |Z|>2 = {summary.anomalous_count}"
        )
    return "\n".join(lines)


def daily_report_json(day: date, stats: Sequence[SpotDayStat], summary: DailySummary) -> dict:
    def num(v):
        if v is None or (isinstance(v, float) and math.isinf(v)):
            return None if v is None else ("inf" if v > 0 else "-inf")
        return v

    return {
        "date": day.isoformat(),
        "spots": [
            {
                "spot_id": s.spot_id,
                "hours": s.hours,
                "hist_mean": s.hist_mean,
                "hist_std": s.hist_std,
                "z": num(s.z),
                "delta_hours": s.delta_hours,
                "flag": s.flag.value,
            }
            for s in stats
        ],
        "summary": {
            "total_hours": summary.total_hours,
            "avg_hours_per_spot": summary.avg_hours_per_spot,
            "most_occupied": {"spot_id": summary.most_occupied[0], "hours": summary.most_occupied[1]},
            "least_occupied": {"spot_id": summary.least_occupied[0], "hours": summary.least_occupied[1]},
            "spots_under_1h": summary.spots_under_1h,
            "anomalous_count": summary.anomalous_count,
        },
    }


# -- weekly report ----------------------------------------------------------------


@dataclass(frozen=True)
class WeeklyReport:
    days: tuple[date, ...]
    hours: np.ndarray  # (7, n_spots)
    hourly_profile: np.ndarray  # (24,) mean occupied spots per hour of day

    @property
    def per_spot(self) -> np.ndarray:
        return self.hours.sum(axis=0)

    @property
    def per_day(self) -> np.ndarray:
        return self.hours.sum(axis=1)

    @property
    def total(self) -> float:
        return float(self.hours.sum())

    def to_json(self) -> dict:
        return {
            "days": [d.isoformat() for d in self.days],
            "hours_per_day_per_spot": self.hours.tolist(),
            "hours_per_spot": self.per_spot.tolist(),
            "hours_per_day": self.per_day.tolist(),
            "total_hours": self.total,
            "hourly_profile": self.hourly_profile.tolist(),
        }

    def format(self) -> str:
        n = self.hours.shape[1]
        lines = ["Day         " + " ".join(f"{i:>5d}" for i in range(1, n + 1)) + "   Total"]
        for d, row in zip(self.days, self.hours):
            lines.append(f"{d.isoformat()}  " + " ".join(f"{v:5.1f}" for v in row) + f"  {row.sum():6.1f}")
        lines.append("Total       " + " ".join(f"{v:5.1f}" for v in self.per_spot) + f"  {self.total:6.1f}")
        lines.append("")
        lines.append("Hour  Mean occupied spots")
        for h, v in enumerate(self.hourly_profile):
            lines.append(f"{h:02d}    {v:.1f}")
        return "\n".join(lines)


def weekly_report(series: OccupancySeries, end: date, tz=None) -> WeeklyReport:
    """Occupied hours for the seven local days ending on ``end`` (inclusive)."""
    zone = _zone(tz)
    days = tuple(end - timedelta(days=k) for k in range(6, -1, -1))
    index = {d: i for i, d in enumerate(days)}
    hours = np.zeros((7, series.n_spots))
    per_hour_sum = np.zeros(24)
    per_hour_rows = np.zeros(24)
    bits = series.bits_matrix()
    for r, row in zip(series.rows, bits):
        local = r.timestamp.astimezone(zone)
        i = index.get(local.date())
        if i is None:
            continue
        hours[i] += row
        per_hour_sum[local.hour] += row.sum()
        per_hour_rows[local.hour] += 1
    hours /= MINUTES_PER_HOUR
    profile = np.divide(per_hour_sum, per_hour_rows, out=np.zeros(24), where=per_hour_rows > 0)
    return WeeklyReport(days, hours, profile)


# -- detection area distribution ---------------------------------------------------


@dataclass(frozen=True)
class AreaStats:
    spot_id: int | None
    mean: float
    std: float
    lower: float
    upper: float
    outlier_count: int
    n_samples: int


def area_outlier_bounds(samples: Sequence[float], spot_id: int | None = None) -> AreaStats:
    """Mean +/- 3 population std of detection areas, lower bound clamped at 0."""
    arr = np.asarray(samples, dtype=float)
    if arr.size < 2:
        raise InsufficientDataError(f"need at least 2 area samples, got {arr.size}")
    mu = float(arr.mean())
    sigma = float(arr.std())
    lower = max(0.0, mu - 3 * sigma)
    upper = mu + 3 * sigma
    outliers = int(((arr < lower) | (arr > upper)).sum())
    return AreaStats(spot_id, mu, sigma, lower, upper, outliers, int(arr.size))


def area_histogram(samples: Sequence[float], bins: int = 20) -> list[tuple[float, float, int]]:
    counts, edges = np.histogram(np.asarray(samples, dtype=float), bins=bins)
    return [(float(edges[i]), float(edges[i + 1]), int(counts[i])) for i in range(len(counts))]


# -- evaluation -------------------------------------------------------------------


@dataclass(frozen=True)
class EvalReport:
    balanced_accuracy: float
    mae_count: float
    n_frames: int
    tp: int
    tn: int
    fp: int
    fn: int

    def to_json(self) -> dict:
        return {
            "balanced_accuracy": self.balanced_accuracy,
            "mae_count": self.mae_count,
            "n_frames": self.n_frames,
            "tp": self.tp,
            "tn": self.tn,
            "fp": self.fp,
            "fn": self.fn,
        }


def evaluate(predicted, truth) -> EvalReport:
    """Balanced accuracy over spot-frame pairs and per-frame count MAE.

    Occupied is the positive class. When the truth holds only one class,
    balanced accuracy is the recall of that class alone.
    """
    pred = np.asarray(predicted, dtype=bool)
    true = np.asarray(truth, dtype=bool)
    if pred.shape != true.shape or pred.ndim != 2:
        raise DomainError(f"shape mismatch: predicted {pred.shape}, truth {true.shape}")
    if pred.shape[0] == 0:
        raise DomainError("no frames to evaluate")
    tp = int((pred & true).sum())
    tn = int((~pred & ~true).sum())
    fp = int((pred & ~true).sum())
    fn = int((~pred & true).sum())
    recalls = []
    if tp + fn:
        recalls.append(tp / (tp + fn))
    if tn + fp:
        recalls.append(tn / (tn + fp))
    bacc = sum(recalls) / len(recalls)
    mae = float(np.abs(pred.sum(axis=1).astype(np.int64) - true.sum(axis=1)).mean())
    return EvalReport(bacc, mae, int(pred.shape[0]), tp, tn, fp, fn)


def bitmasks_to_matrix(bitmasks: Iterable[int], n_spots: int) -> np.ndarray:
    return np.array([decode_status(int(m), n_spots) for m in bitmasks], dtype=bool).reshape(-1, n_spots)
