"""Edge -> server -> totem telemetry: store-and-forward queue, ingestion,
staleness monitoring and totem validation, plus a minute-tick simulator.

Time is always passed in explicitly, so everything here runs on simulated
clocks.
"""

from __future__ import annotations

import enum
import json
import logging
import threading
from collections.abc import Callable, Iterable, Mapping
from dataclasses import dataclass, field, replace
from datetime import datetime, timedelta, timezone
from urllib.parse import parse_qs, urlsplit

import numpy as np

from .codec import WIRE_FIELD, ParkingStatus, decode_status
from .errors import ClockSkewError, ConfigError, IngestRejected, RangeError
from .shadow import EntityGraph, apply_status_update
from .spots import format_timestamp, parse_timestamp
from .stats import OccupancySeries

log = logging.getLogger(__name__)

DEFAULT_QUEUE_CAPACITY = 10_080  # one week of one-minute measurements
DEFAULT_TOLERANCE = timedelta(minutes=5)
TOTEM_MAX_AGE = timedelta(minutes=5)
INGEST_PATH = "/iot-agent"
TOTEM_PATH = "/totem"


# -- store and forward -----------------------------------------------------------


@dataclass(frozen=True)
class Measurement:
    device_id: str
    bitmask: int
    produced_at: datetime
    attempt_count: int = 0


@dataclass(frozen=True)
class ForwardQueue:
    """FIFO of undelivered measurements. ``capacity=None`` means unbounded."""

    pending: tuple[Measurement, ...] = ()
    capacity: int | None = DEFAULT_QUEUE_CAPACITY
    dropped_oldest: int = 0

    def __post_init__(self):
        if self.capacity is not None and self.capacity < 1:
            raise ConfigError(f"queue capacity must be >= 1, got {self.capacity}")


def enqueue_and_flush(
    queue: ForwardQueue, m: Measurement, link_up: bool
) -> tuple[ForwardQueue, list[Measurement]]:
    """Append ``m``; when the link is up, drain everything in FIFO order.

    A full queue drops its oldest entry before appending. While the link is
    down every pending measurement records one more failed attempt.
    """
    pending = queue.pending
    dropped = queue.dropped_oldest
    if queue.capacity is not None and len(pending) >= queue.capacity:
        overflow = len(pending) - queue.capacity + 1
        pending = pending[overflow:]
        dropped += overflow
    pending = pending + (m,)
    if link_up:
        return ForwardQueue((), queue.capacity, dropped), list(pending)
    pending = tuple(replace(p, attempt_count=p.attempt_count + 1) for p in pending)
    return ForwardQueue(pending, queue.capacity, dropped), []


# -- staleness ----------------------------------------------------------------------


class Freshness(str, enum.Enum):
    FRESH = "fresh"
    STALE = "stale"


@dataclass(frozen=True)
class StalenessStatus:
    last_update: datetime
    tolerance: timedelta
    state: Freshness
    notified: bool
    notify: bool = False  # true only on the check that opened a stale episode


def check_staleness(
    last_update: datetime,
    now: datetime,
    tolerance: timedelta = DEFAULT_TOLERANCE,
    already_notified: bool = False,
) -> StalenessStatus:
    if now < last_update:
        raise ClockSkewError(f"now {now} precedes last update {last_update}")
    if now - last_update > tolerance:
        return StalenessStatus(last_update, tolerance, Freshness.STALE, True, not already_notified)
    return StalenessStatus(last_update, tolerance, Freshness.FRESH, False, False)


@dataclass(frozen=True)
class Notification:
    at: datetime
    device_id: str
    last_update: datetime
    message: str


class StalenessMonitor:
    """Periodic staleness check that notifies once per stale episode.

    ``sink`` receives each :class:`Notification`; they are also logged and
    kept in ``notifications``.
    """

    def __init__(self, tolerance: timedelta = DEFAULT_TOLERANCE, sink: Callable[[Notification], None] | None = None):
        self.tolerance = tolerance
        self.sink = sink
        self.notified: dict[str, bool] = {}
        self.notifications: list[Notification] = []

    def check(self, device_id: str, last_update: datetime, now: datetime) -> StalenessStatus:
        st = check_staleness(last_update, now, self.tolerance, self.notified.get(device_id, False))
        self.notified[device_id] = st.notified
        if st.notify:
            delay = now - last_update
            note = Notification(now, device_id, last_update, f"{device_id}: no update for {delay}")
            log.warning(note.message)
            self.notifications.append(note)
            if self.sink is not None:
                self.sink(note)
        return st


# -- totem ----------------------------------------------------------------------------


def totem_value(
    available: int | None,
    n_spots: int,
    last_success: datetime | None,
    now: datetime,
    max_age: timedelta = TOTEM_MAX_AGE,
) -> int | None:
    """The number the totem shows, or ``None`` when the display is off.

    Off when the value is negative, above ``n_spots``, or when no request
    succeeded within ``max_age``.
    """
    if available is None or last_success is None:
        return None
    if available < 0 or available > n_spots:
        return None
    if now - last_success > max_age:
        return None
    return int(available)


@dataclass
class Totem:
    """Display side: polls the server each tick and validates what it got."""

    n_spots: int
    max_age: timedelta = TOTEM_MAX_AGE
    last_value: int | None = None
    last_success: datetime | None = None
    displayed: int | None = None

    def poll(self, response: int | None, now: datetime) -> int | None:
        """``response`` is the value from a successful request, or ``None`` on failure."""
        if response is not None:
            self.last_value = response
            self.last_success = now
        self.displayed = totem_value(self.last_value, self.n_spots, self.last_success, now, self.max_age)
        return self.displayed


# -- ingestion --------------------------------------------------------------------------


@dataclass(frozen=True)
class Device:
    api_key: str
    n_spots: int


def ingest_request(
    query: Mapping[str, str],
    body: str | bytes,
    registry: Mapping[str, Device],
    now: datetime | None = None,
) -> ParkingStatus:
    """Validate one ``POST /iot-agent?k=<key>&i=<device>`` request.

    The body is ``{"parking_status": <int>}``; an optional ``"timestamp"``
    (ISO 8601) carries the production time of replayed measurements,
    otherwise ``now`` stamps the status. Raises :class:`IngestRejected`.
    """
    device_id = query.get("i")
    device = registry.get(device_id) if device_id is not None else None
    if device is None:
        raise IngestRejected("unknown-device", f"device {device_id!r} is not registered")
    if query.get("k") != device.api_key:
        raise IngestRejected("unauthorized", f"bad api key for {device_id!r}")
    try:
        payload = json.loads(body)
    except (json.JSONDecodeError, UnicodeDecodeError):
        raise IngestRejected("bad-payload", "body is not JSON") from None
    if not isinstance(payload, dict) or WIRE_FIELD not in payload:
        raise IngestRejected("bad-payload", f"missing {WIRE_FIELD!r}")
    value = payload[WIRE_FIELD]
    if isinstance(value, bool) or not isinstance(value, int):
        raise IngestRejected("bad-payload", f"{WIRE_FIELD} must be an integer, got {value!r}")
    try:
        decode_status(value, device.n_spots)
    except RangeError as exc:
        raise IngestRejected("range", str(exc)) from None
    if "timestamp" in payload:
        try:
            ts = parse_timestamp(str(payload["timestamp"]))
        except ValueError:
            raise IngestRejected("bad-payload", f"bad timestamp {payload['timestamp']!r}") from None
    else:
        ts = now or datetime.now(timezone.utc)
    return ParkingStatus(device.n_spots, value, ts)


_REJECT_CODES = {"unknown-device": 404, "unauthorized": 401, "bad-payload": 400, "range": 422}


class IngestionServer:
    """In-process stand-in for the ingestion endpoint and the totem feed.

    Accepted statuses are appended to the device's series, fanned out over
    its entity graph (when one is attached) and passed to ``on_status``.
    Updates for one device are serialized by a lock.
    """

    def __init__(
        self,
        registry: Mapping[str, Device],
        graphs: Mapping[str, EntityGraph] | None = None,
        clock: Callable[[], datetime] | None = None,
        tolerance: timedelta = DEFAULT_TOLERANCE,
        on_status: Callable[[str, ParkingStatus], None] | None = None,
    ):
        self.registry = dict(registry)
        self.graphs = dict(graphs or {})
        self.clock = clock or (lambda: datetime.now(timezone.utc))
        self.tolerance = tolerance
        self.on_status = on_status
        self.series = {d: OccupancySeries(dev.n_spots) for d, dev in self.registry.items()}
        self.changes: dict[str, list] = {d: [] for d in self.registry}
        self.value_override: dict[str, int] = {}
        self._locks = {d: threading.Lock() for d in self.registry}

    def latest(self, device_id: str) -> ParkingStatus | None:
        rows = self.series[device_id].rows
        return rows[-1] if rows else None

    def ingest(self, query: Mapping[str, str], body: str | bytes) -> ParkingStatus:
        status = ingest_request(query, body, self.registry, self.clock())
        device_id = query["i"]
        with self._locks[device_id]:
            latest = self.latest(device_id)
            if latest is not None and status.timestamp <= latest.timestamp:
                raise IngestRejected("bad-payload", "timestamp not after the latest stored status")
            self.series[device_id].append(status)
            graph = self.graphs.get(device_id)
            if graph is not None:
                graph, changes = apply_status_update(graph, status)
                self.graphs[device_id] = graph
                self.changes[device_id].extend(changes)
        if self.on_status is not None:
            self.on_status(device_id, status)
        return status

    def totem_feed(self, device_id: str) -> tuple[int, dict]:
        """What a totem poll gets: available count if the data is fresh, else 503."""
        latest = self.latest(device_id)
        if latest is None:
            return 503, {"error": "no data"}
        now = self.clock()
        st = check_staleness(latest.timestamp, now, self.tolerance)
        if st.state is Freshness.STALE:
            return 503, {"error": "stale", "last_update": format_timestamp(latest.timestamp)}
        graph = self.graphs.get(device_id)
        if graph is not None:
            available = graph.one("Totem").dynamic_props["availableSpotNumber"]
        else:
            available = latest.free_count
        available = self.value_override.get(device_id, available)
        return 200, {"available": available, "timestamp": format_timestamp(latest.timestamp)}

    def handle(self, method: str, target: str, body: bytes | str = b"") -> tuple[int, dict]:
        """Dispatch an HTTP-style request; returns ``(status code, JSON body)``."""
        parts = urlsplit(target)
        query = {k: v[-1] for k, v in parse_qs(parts.query, keep_blank_values=True).items()}
        if parts.path == INGEST_PATH:
            if method != "POST":
                return 405, {"error": "method not allowed"}
            try:
                status = self.ingest(query, body)
            except IngestRejected as exc:
                return _REJECT_CODES[exc.reason], {"error": exc.reason, "detail": exc.detail}
            return 200, {"accepted": True, WIRE_FIELD: status.bitmask, "timestamp": format_timestamp(status.timestamp)}
        if parts.path == TOTEM_PATH:
            if method != "GET":
                return 405, {"error": "method not allowed"}
            device_id = query.get("i")
            if device_id not in self.registry:
                return 404, {"error": "unknown-device"}
            return self.totem_feed(device_id)
        return 404, {"error": "not found"}

    def wsgi_app(self, environ, start_response):
        """WSGI adapter so the endpoint can be mounted on any WSGI server."""
        method = environ.get("REQUEST_METHOD", "GET")
        target = environ.get("PATH_INFO", "/")
        if environ.get("QUERY_STRING"):
            target += "?" + environ["QUERY_STRING"]
        length = int(environ.get("CONTENT_LENGTH") or 0)
        body = environ["wsgi.input"].read(length) if length else b""
        code, payload = self.handle(method, target, body)
        reasons = {200: "OK", 400: "Bad Request", 401: "Unauthorized", 404: "Not Found",
                   405: "Method Not Allowed", 422: "Unprocessable Entity", 503: "Service Unavailable"}
        data = json.dumps(payload).encode("utf-8")
        start_response(f"{code} {reasons.get(code, '')}".strip(),
                       [("Content-Type", "application/json"), ("Content-Length", str(len(data)))])
        return [data]


# -- simulation --------------------------------------------------------------------------


def _windows(raw) -> list[tuple[int, int]]:
    out = []
    for w in raw:
        start, end = int(w[0]), int(w[1])
        if end < start:
            raise ConfigError(f"window end {end} before start {start}")
        out.append((start, end))
    return out


def in_windows(t: int, windows: Iterable[tuple[int, int]]) -> bool:
    """Windows are half-open tick ranges ``[start, end)``."""
    return any(a <= t < b for a, b in windows)


@dataclass
class Scenario:
    """Simulation input (the scenario JSON file).

    ``outages`` cut the edge->server link, ``totem_outages`` the
    totem->server link, and ``value_faults`` entries ``[start, end, value]``
    replace the value served to the totem.
    """

    ticks: int = 1440
    n_spots: int = 16
    start: datetime = datetime(2025, 10, 22, tzinfo=timezone.utc)
    seed: int = 0
    bitmasks: list[int] | None = None
    flip_probability: float = 0.02
    outages: list[tuple[int, int]] = field(default_factory=list)
    totem_outages: list[tuple[int, int]] = field(default_factory=list)
    value_faults: list[tuple[int, int, int]] = field(default_factory=list)
    tolerance_minutes: float = 5.0
    totem_max_age_minutes: float = 5.0
    queue_capacity: int | None = None
    device_id: str = "edge-01"
    api_key: str = "secret"
    groups: dict[str, list[int]] | None = None

    @classmethod
    def from_dict(cls, data: Mapping) -> "Scenario":
        known = set(cls.__dataclass_fields__)
        unknown = sorted(set(data) - known)
        if unknown:
            raise ConfigError(f"unknown scenario keys {unknown}")
        kw = dict(data)
        if "start" in kw:
            kw["start"] = parse_timestamp(kw["start"])
        for key in ("outages", "totem_outages"):
            if key in kw:
                kw[key] = _windows(kw[key])
        if "value_faults" in kw:
            kw["value_faults"] = [(int(a), int(b), int(v)) for a, b, v in kw["value_faults"]]
        sc = cls(**kw)
        if sc.bitmasks is not None and len(sc.bitmasks) < sc.ticks:
            raise ConfigError(f"scenario gives {len(sc.bitmasks)} bitmasks for {sc.ticks} ticks")
        return sc

    @classmethod
    def load(cls, path) -> "Scenario":
        with open(path, encoding="utf-8") as fh:
            return cls.from_dict(json.load(fh))

    def bitmask_sequence(self) -> list[int]:
        if self.bitmasks is not None:
            return [int(b) for b in self.bitmasks[: self.ticks]]
        rng = np.random.default_rng(self.seed)
        state = rng.random(self.n_spots) < 0.5
        out = []
        for _ in range(self.ticks):
            flips = rng.random(self.n_spots) < self.flip_probability
            state = state ^ flips
            value = 0
            for b in state:
                value = (value << 1) | int(b)
            out.append(value)
        return out


@dataclass
class SimulationReport:
    produced: list[Measurement]
    delivered: list[Measurement]
    series: OccupancySeries
    notifications: list[Notification]
    totem_display: list[int | None]
    dropped_oldest: int
    pending_at_end: int
    graph: EntityGraph | None = None

    def to_json(self) -> dict:
        off = [i for i, v in enumerate(self.totem_display) if v is None]
        return {
            "ticks": len(self.produced),
            "produced": len(self.produced),
            "delivered": len(self.delivered),
            "persisted": len(self.series),
            "dropped_oldest": self.dropped_oldest,
            "pending_at_end": self.pending_at_end,
            "in_order": [m.produced_at for m in self.delivered] == sorted(m.produced_at for m in self.delivered),
            "notifications": [
                {"at": format_timestamp(n.at), "last_update": format_timestamp(n.last_update)}
                for n in self.notifications
            ],
            "totem_off_ticks": len(off),
            "totem_off_intervals": _intervals(off),
        }


def _intervals(ticks: list[int]) -> list[list[int]]:
    out: list[list[int]] = []
    for t in ticks:
        if out and out[-1][1] == t:
            out[-1][1] = t + 1
        else:
            out.append([t, t + 1])
    return out


def simulate(scenario: Scenario, graph: EntityGraph | None = None,
             sink: Callable[[Notification], None] | None = None) -> SimulationReport:
    """Run the minute-tick pipeline: edge queue, ingestion, monitor, totem."""
    sim_now = [scenario.start]
    tolerance = timedelta(minutes=scenario.tolerance_minutes)
    registry = {scenario.device_id: Device(scenario.api_key, scenario.n_spots)}
    server = IngestionServer(
        registry,
        {scenario.device_id: graph} if graph is not None else None,
        clock=lambda: sim_now[0],
        tolerance=tolerance,
    )
    monitor = StalenessMonitor(tolerance, sink)
    totem = Totem(scenario.n_spots, timedelta(minutes=scenario.totem_max_age_minutes))
    queue = ForwardQueue(capacity=scenario.queue_capacity)
    target = f"{INGEST_PATH}?k={scenario.api_key}&i={scenario.device_id}"

    produced, delivered, display = [], [], []
    for t, bitmask in enumerate(scenario.bitmask_sequence()):
        now = scenario.start + timedelta(minutes=t)
        sim_now[0] = now
        m = Measurement(scenario.device_id, bitmask, now)
        produced.append(m)
        queue, out = enqueue_and_flush(queue, m, not in_windows(t, scenario.outages))
        for d in out:
            body = json.dumps({WIRE_FIELD: d.bitmask, "timestamp": format_timestamp(d.produced_at)})
            code, payload = server.handle("POST", target, body)
            if code != 200:
                raise RuntimeError(f"simulated ingestion rejected: {payload}")
            delivered.append(d)

        latest = server.latest(scenario.device_id)
        if latest is not None:
            monitor.check(scenario.device_id, latest.timestamp, now)

        server.value_override.pop(scenario.device_id, None)
        for a, b, v in scenario.value_faults:
            if a <= t < b:
                server.value_override[scenario.device_id] = v
        response = None
        if not in_windows(t, scenario.totem_outages):
            code, payload = server.handle("GET", f"{TOTEM_PATH}?i={scenario.device_id}")
            if code == 200:
                response = int(payload["available"])
        display.append(totem.poll(response, now))

    return SimulationReport(
        produced,
        delivered,
        server.series[scenario.device_id],
        monitor.notifications,
        display,
        queue.dropped_oldest,
        len(queue.pending),
        server.graphs.get(scenario.device_id),
    )
