import io
import json
import random
from datetime import datetime, timedelta, timezone

import pytest

from oracles import expected_totem_off, stale_episodes
from spotwise.errors import ClockSkewError, ConfigError, IngestRejected
from spotwise.shadow import build_entities
from spotwise.telemetry import (
    Device,
    ForwardQueue,
    Freshness,
    IngestionServer,
    Measurement,
    Scenario,
    StalenessMonitor,
    Totem,
    check_staleness,
    enqueue_and_flush,
    in_windows,
    ingest_request,
    simulate,
    totem_value,
)

T0 = datetime(2025, 10, 22, 8, 0, tzinfo=timezone.utc)
REGISTRY = {"cam": Device("k123", 16)}


def minutes(n):
    return timedelta(minutes=n)


def m(i):
    return Measurement("cam", i, T0 + minutes(i))


class TestIngest:
    def test_reference_request(self):
        st = ingest_request({"k": "k123", "i": "cam"}, '{ "parking_status": 34406 }', REGISTRY, T0)
        assert st.bitmask == 34406 and st.occupied_count == 7 and st.timestamp == T0

    @pytest.mark.parametrize(
        "query,body,reason",
        [
            ({"k": "nope", "i": "cam"}, '{"parking_status": 1}', "unauthorized"),
            ({"k": "k123"}, '{"parking_status": 1}', "unknown-device"),
            ({"k": "k123", "i": "other"}, '{"parking_status": 1}', "unknown-device"),
            ({"k": "k123", "i": "cam"}, '{"parking_status": 65536}', "range"),
            ({"k": "k123", "i": "cam"}, '{"parking_status": -1}', "range"),
            ({"k": "k123", "i": "cam"}, '{"parking_status": "12"}', "bad-payload"),
            ({"k": "k123", "i": "cam"}, '{"parking_status": 1.5}', "bad-payload"),
            ({"k": "k123", "i": "cam"}, '{"parking_status": true}', "bad-payload"),
            ({"k": "k123", "i": "cam"}, '{"status": 1}', "bad-payload"),
            ({"k": "k123", "i": "cam"}, "[1]", "bad-payload"),
            ({"k": "k123", "i": "cam"}, "{", "bad-payload"),
            ({"k": "k123", "i": "cam"}, '{"parking_status": 1, "timestamp": "later"}', "bad-payload"),
        ],
    )
    def test_rejections(self, query, body, reason):
        with pytest.raises(IngestRejected) as info:
            ingest_request(query, body, REGISTRY, T0)
        assert info.value.reason == reason

    def test_replayed_timestamp(self):
        st = ingest_request({"k": "k123", "i": "cam"}, '{"parking_status": 3, "timestamp": "2025-10-22T07:55:00Z"}',
                            REGISTRY, T0)
        assert st.timestamp == T0 - minutes(5)


class TestQueue:
    def test_outage_then_replay(self):
        q = ForwardQueue(capacity=None)
        for i in range(3):
            q, out = enqueue_and_flush(q, m(i), False)
            assert out == []
        q, out = enqueue_and_flush(q, m(3), True)
        assert [d.bitmask for d in out] == [0, 1, 2, 3]
        assert [d.attempt_count for d in out] == [3, 2, 1, 0]
        assert q.pending == ()

    def test_passthrough(self):
        q = ForwardQueue()
        for i in range(10):
            q, out = enqueue_and_flush(q, m(i), True)
            assert [d.bitmask for d in out] == [i]

    def test_random_schedule_no_loss(self):
        rng = random.Random(99)
        q = ForwardQueue(capacity=None)
        delivered = []
        for i in range(10_000):
            q, out = enqueue_and_flush(q, m(i), rng.random() < 0.3)
            delivered.extend(out)
        assert [d.bitmask for d in delivered] + [p.bitmask for p in q.pending] == list(range(10_000))
        assert q.dropped_oldest == 0

    def test_bounded_loss_keeps_contiguous_suffix(self):
        rng = random.Random(5)
        q = ForwardQueue(capacity=7)
        delivered = []
        for i in range(2_000):
            q, out = enqueue_and_flush(q, m(i), rng.random() < 0.05)
            assert len(q.pending) <= 7
            if out:
                ids = [d.bitmask for d in out]
                assert ids == list(range(ids[0], ids[0] + len(ids)))
            delivered.extend(out)
        assert 2_000 - len(delivered) - len(q.pending) == q.dropped_oldest > 0
        ids = [d.bitmask for d in delivered]
        assert ids == sorted(ids)

    def test_default_capacity(self):
        assert ForwardQueue().capacity == 10_080

    def test_bad_capacity(self):
        with pytest.raises(ConfigError):
            ForwardQueue(capacity=0)


class TestStaleness:
    def test_stale(self):
        st = check_staleness(T0, T0 + minutes(10), minutes(5))
        assert st.state is Freshness.STALE and st.notify

    def test_fresh(self):
        assert check_staleness(T0, T0 + minutes(4), minutes(5)).state is Freshness.FRESH

    def test_boundary_is_fresh(self):
        assert check_staleness(T0, T0 + minutes(5), minutes(5)).state is Freshness.FRESH

    def test_skew(self):
        with pytest.raises(ClockSkewError):
            check_staleness(T0, T0 - minutes(1))

    def test_two_episodes_two_notifications(self):
        seen = []
        mon = StalenessMonitor(minutes(5), seen.append)
        last = T0
        for t in range(60):
            now = T0 + minutes(t)
            if t < 10 or 30 <= t < 35:
                last = now
            mon.check("cam", last, now)
        assert len(seen) == 2 == len(mon.notifications)
        assert seen[0].at == T0 + minutes(15)


class TestTotem:
    @pytest.mark.parametrize("available,expected", [(-1, None), (17, None), (9, 9), (0, 0), (16, 16)])
    def test_value_rules(self, available, expected):
        assert totem_value(available, 16, T0 - minutes(2), T0) == expected

    def test_old_success_turns_off(self):
        assert totem_value(9, 16, T0 - minutes(6), T0) is None
        assert totem_value(9, 16, T0 - minutes(5), T0) == 9

    def test_poll_holds_last_value(self):
        totem = Totem(16)
        assert totem.poll(4, T0) == 4
        assert totem.poll(None, T0 + minutes(3)) == 4
        assert totem.poll(None, T0 + minutes(6)) is None
        assert totem.poll(-1, T0 + minutes(7)) is None

    def test_safety_random(self):
        rng = random.Random(3)
        for _ in range(2000):
            v = totem_value(rng.randint(-3, 20), 16, T0 - minutes(rng.uniform(0, 10)), T0)
            assert v is None or 0 <= v <= 16


class TestServer:
    def make(self, lot_config, clock):
        graph = build_entities(lot_config)
        return IngestionServer(REGISTRY, {"cam": graph}, clock=clock)

    def test_handle_roundtrip(self, lot_config):
        now = [T0]
        srv = self.make(lot_config, lambda: now[0])
        code, body = srv.handle("POST", "/iot-agent?k=k123&i=cam", b'{"parking_status": 34406}')
        assert code == 200 and body["accepted"]
        assert srv.handle("GET", "/totem?i=cam") == (200, {"available": 9, "timestamp": "2025-10-22T08:00:00Z"})
        now[0] = T0 + minutes(6)
        assert srv.handle("GET", "/totem?i=cam")[0] == 503
        assert len(srv.series["cam"]) == 1
        assert srv.graphs["cam"].one("Totem").dynamic_props["availableSpotNumber"] == 9

    @pytest.mark.parametrize(
        "method,target,body,code",
        [
            ("POST", "/iot-agent?k=bad&i=cam", b'{"parking_status": 1}', 401),
            ("POST", "/iot-agent?k=k123&i=zzz", b'{"parking_status": 1}', 404),
            ("POST", "/iot-agent?k=k123&i=cam", b"{}", 400),
            ("POST", "/iot-agent?k=k123&i=cam", b'{"parking_status": 99999}', 422),
            ("GET", "/iot-agent?k=k123&i=cam", b"", 405),
            ("GET", "/totem?i=zzz", b"", 404),
            ("GET", "/totem?i=cam", b"", 503),
            ("GET", "/elsewhere", b"", 404),
        ],
    )
    def test_status_codes(self, lot_config, method, target, body, code):
        srv = self.make(lot_config, lambda: T0)
        assert srv.handle(method, target, body)[0] == code

    def test_out_of_order_rejected(self, lot_config):
        srv = self.make(lot_config, lambda: T0)
        assert srv.handle("POST", "/iot-agent?k=k123&i=cam", b'{"parking_status": 1}')[0] == 200
        assert srv.handle("POST", "/iot-agent?k=k123&i=cam", b'{"parking_status": 2}')[0] == 400

    def test_wsgi(self, lot_config):
        srv = self.make(lot_config, lambda: T0)
        body = b'{"parking_status": 34406}'
        got = {}

        def start_response(status, headers):
            got["status"] = status

        environ = {"REQUEST_METHOD": "POST", "PATH_INFO": "/iot-agent", "QUERY_STRING": "k=k123&i=cam",
                   "CONTENT_LENGTH": str(len(body)), "wsgi.input": io.BytesIO(body)}
        out = json.loads(b"".join(srv.wsgi_app(environ, start_response)))
        assert got["status"] == "200 OK" and out["parking_status"] == 34406


class TestSimulation:
    def test_windows_half_open(self):
        assert in_windows(3, [(3, 5)]) and not in_windows(5, [(3, 5)])

    def test_scenario_errors(self):
        with pytest.raises(ConfigError):
            Scenario.from_dict({"bogus": 1})
        with pytest.raises(ConfigError):
            Scenario.from_dict({"outages": [[5, 2]]})
        with pytest.raises(ConfigError):
            Scenario.from_dict({"ticks": 5, "bitmasks": [1, 2]})

    def test_fixture_run(self, fixtures_dir, lot_config):
        sc = Scenario.load(fixtures_dir / "scenario.json")
        graph = build_entities(lot_config, sc.groups)
        rep = simulate(sc, graph)
        assert [d.bitmask for d in rep.delivered] == [p.bitmask for p in rep.produced]
        assert [r.bitmask for r in rep.series.rows] == sc.bitmask_sequence()
        assert rep.dropped_oldest == 0 and rep.pending_at_end == 0
        assert len(rep.notifications) == stale_episodes(sc.ticks, sc.outages, 5) == 2
        off = [t for t, v in enumerate(rep.totem_display) if v is None]
        assert off == expected_totem_off(sc.ticks, 16, sc.outages, sc.totem_outages, sc.value_faults, 5, 5)
        # whenever the totem shows a number it is the lot availability of the newest stored status
        lot = rep.graph.one("OffStreetParking").dynamic_props
        assert rep.totem_display[-1] == lot["availableSpotNumber"]

    def test_fault_free_totem_tracks_latest(self):
        sc = Scenario(ticks=120, seed=4)
        rep = simulate(sc)
        assert all(v is not None for v in rep.totem_display)
        for status, shown in zip(rep.series.rows, rep.totem_display):
            assert shown == status.free_count

    def test_deterministic(self, fixtures_dir):
        sc = Scenario.load(fixtures_dir / "scenario.json")
        assert simulate(sc).to_json() == simulate(sc).to_json()

    def test_seed_changes_sequence(self):
        assert Scenario(ticks=50, seed=1).bitmask_sequence() != Scenario(ticks=50, seed=2).bitmask_sequence()

    def test_bounded_queue_loses_oldest(self):
        sc = Scenario(ticks=100, seed=3, outages=[(10, 60)], queue_capacity=20)
        rep = simulate(sc)
        # 50 queued during the outage, plus the reconnect tick's append into a full queue
        assert rep.dropped_oldest == 31
        assert [d.produced_at for d in rep.delivered] == [p.produced_at for p in rep.produced[:10] + rep.produced[41:]]
