"""Command-line interface.

Exit codes: 0 success, 1 data error, 2 configuration or usage error.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from dataclasses import dataclass, field
from datetime import date, datetime, timezone
from pathlib import Path

from .assignment import PipelineConfig, run_pipeline
from .codec import ParkingStatus, bits_to_string, decode_status, encode_status, string_to_bits
from .errors import ConfigError, SpotwiseError
from .geometry import bbox_area_px
from .roi import load_roi_mask
from .shadow import CONTEXT_URL, build_entities, apply_status_update, entity_to_dict
from .spots import format_timestamp, load_lot_config, load_spot_map, parse_timestamp, read_detection_log
from .stats import (
    OccupancySeries,
    area_histogram,
    area_outlier_bounds,
    bitmasks_to_matrix,
    build_history,
    daily_report_json,
    daily_spot_stats,
    evaluate,
    format_daily_table,
    history_from_json,
    load_holidays,
    overall_daily_summary,
    weekly_report,
)
from .telemetry import Scenario, simulate

log = logging.getLogger("spotwise")

CONFIG_ENV = "SPOTWISE_CONFIG"


@dataclass
class CommandOutcome:
    exit_code: int
    artifacts: list[str] = field(default_factory=list)


class _UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        raise _UsageError(f"{self.prog}: error: {message}")


def _emit(args, text: str, payload) -> None:
    if getattr(args, "json", False):
        print(json.dumps(payload, indent=2, sort_keys=True, default=str))
    else:
        print(text)


def _lot_config(args):
    path = args.config or os.environ.get(CONFIG_ENV)
    if not path:
        raise ConfigError(f"no lot config: pass --config or set {CONFIG_ENV}")
    return load_lot_config(path)


# -- subcommands -----------------------------------------------------------------


def cmd_process(args, outcome: CommandOutcome) -> None:
    cfg = _lot_config(args)
    if args.spots:
        cfg.spots_csv = args.spots
    if args.mask:
        cfg.mask = args.mask
    if not cfg.mask:
        raise ConfigError("no ROI mask: pass --mask or set 'mask' in the lot config")
    spot_map = load_spot_map(cfg)
    mask = load_roi_mask(cfg.mask, cfg.roi_threshold)
    pipe = PipelineConfig(cfg.delta, cfg.area_threshold_px, cfg.nms_iou, cfg.abbp_delta)

    series = OccupancySeries(spot_map.n_spots)
    records = []
    with open(args.detections, encoding="utf-8") as fh:
        for ts, dets in read_detection_log(fh):
            res = run_pipeline(dets, spot_map, mask, pipe)
            bitmask = encode_status(res.occupied)
            series.append(ParkingStatus(spot_map.n_spots, bitmask, ts))
            by_index = {d.source_index: d for d in res.refined_detections}
            records.append(
                {
                    "timestamp": format_timestamp(ts),
                    "bitmask": bitmask,
                    "occupied": [int(b) for b in res.occupied],
                    "assignments": [
                        {
                            "detection_index": a.detection_index,
                            "spot_id": a.spot_id,
                            "distance": a.distance,
                            "area_px": bbox_area_px(
                                by_index[a.detection_index].box, spot_map.image_width, spot_map.image_height
                            ),
                        }
                        for a in res.assignments
                    ],
                    "dropped_outside_roi": res.dropped_outside_roi,
                }
            )
    if args.out:
        with open(args.out, "w", encoding="utf-8") as fh:
            for rec in records:
                fh.write(json.dumps(rec, sort_keys=True) + "\n")
        outcome.artifacts.append(args.out)
    if args.series:
        series.save(args.series)
        outcome.artifacts.append(args.series)
    occupied = [sum(r["occupied"]) for r in records]
    text = f"frames={len(records)} spots={spot_map.n_spots}"
    if records:
        text += f" last_bitmask={records[-1]['bitmask']} last_occupied={occupied[-1]}"
    _emit(args, text, {"frames": len(records), "n_spots": spot_map.n_spots, "records": records})


def cmd_encode(args, outcome: CommandOutcome) -> None:
    bits = string_to_bits(args.bits)
    value = encode_status(bits)
    occ = sum(bits)
    _emit(args, str(value), {"bitmask": value, "bits": bits_to_string(bits), "occupied": occ, "free": len(bits) - occ})


def cmd_decode(args, outcome: CommandOutcome) -> None:
    bits = decode_status(args.bitmask, args.spots)
    occ = sum(bits)
    s = bits_to_string(bits)
    _emit(args, f"{s} occupied={occ} free={len(bits) - occ}",
          {"bitmask": args.bitmask, "bits": s, "occupied": occ, "free": len(bits) - occ})


def _load_series(path: str, n_spots: int | None) -> OccupancySeries:
    return OccupancySeries.load(path, n_spots)


def cmd_stats_daily(args, outcome: CommandOutcome) -> None:
    series = _load_series(args.series, args.spots)
    holidays = load_holidays(args.holidays) if args.holidays else set()
    day = date.fromisoformat(args.date)
    if args.history:
        with open(args.history, encoding="utf-8") as fh:
            history = history_from_json(json.load(fh))
    else:
        history = build_history(series, day, args.tz, holidays)
    stats = daily_spot_stats(series, history, day, args.tz, holidays)
    summary = overall_daily_summary(stats)
    payload = daily_report_json(day, stats, summary)
    if args.out:
        Path(args.out).write_text(json.dumps(payload, indent=2, sort_keys=True) + "\n", encoding="utf-8")
        outcome.artifacts.append(args.out)
    _emit(args, f"Daily occupation statistics for {day.isoformat()}\n" + format_daily_table(stats, summary), payload)


def cmd_stats_weekly(args, outcome: CommandOutcome) -> None:
    series = _load_series(args.series, args.spots)
    report = weekly_report(series, date.fromisoformat(args.end), args.tz)
    payload = report.to_json()
    if args.out:
        Path(args.out).write_text(json.dumps(payload, indent=2) + "\n", encoding="utf-8")
        outcome.artifacts.append(args.out)
    _emit(args, report.format(), payload)


def _read_frames(path: str, n_spots: int | None):
    """Occupancy matrix from a series CSV or a frame-result JSONL file."""
    if path.endswith(".csv"):
        series = OccupancySeries.load(path, n_spots)
        return series.bits_matrix()
    rows = []
    with open(path, encoding="utf-8") as fh:
        for line in fh:
            if not line.strip():
                continue
            rec = json.loads(line)
            if "occupied" in rec:
                rows.append([bool(b) for b in rec["occupied"]])
            else:
                if n_spots is None:
                    raise ConfigError(f"{path}: records carry only bitmasks; pass --spots")
                rows.append(list(decode_status(int(rec["bitmask"]), n_spots)))
    return rows


def cmd_eval(args, outcome: CommandOutcome) -> None:
    report = evaluate(_read_frames(args.predicted, args.spots), _read_frames(args.truth, args.spots))
    payload = report.to_json()
    text = (
        f"frames={report.n_frames} balanced_accuracy={report.balanced_accuracy:.4f} "
        f"mae={report.mae_count:.4f} tp={report.tp} tn={report.tn} fp={report.fp} fn={report.fn}"
    )
    _emit(args, text, payload)


def cmd_areas(args, outcome: CommandOutcome) -> None:
    by_spot: dict[int, list[float]] = {}
    with open(args.frames, encoding="utf-8") as fh:
        for line in fh:
            if not line.strip():
                continue
            for a in json.loads(line).get("assignments", []):
                by_spot.setdefault(int(a["spot_id"]), []).append(float(a["area_px"]))
    stats = [area_outlier_bounds(v, sid) for sid, v in sorted(by_spot.items()) if len(v) >= 2]
    lines = ["spot_id,n_samples,mean,std,lower,upper,outlier_count"]
    for s in stats:
        lines.append(f"{s.spot_id},{s.n_samples},{s.mean!r},{s.std!r},{s.lower!r},{s.upper!r},{s.outlier_count}")
    hist_lines = ["spot_id,bin_left,bin_right,count"]
    for sid, v in sorted(by_spot.items()):
        for left, right, count in area_histogram(v, args.bins):
            hist_lines.append(f"{sid},{left!r},{right!r},{count}")
    if args.out_stats:
        Path(args.out_stats).write_text("\n".join(lines) + "\n", encoding="utf-8")
        outcome.artifacts.append(args.out_stats)
    if args.out_hist:
        Path(args.out_hist).write_text("\n".join(hist_lines) + "\n", encoding="utf-8")
        outcome.artifacts.append(args.out_hist)
    payload = [s.__dict__ for s in stats]
    _emit(args, "\n".join(lines), payload)


def cmd_simulate(args, outcome: CommandOutcome) -> None:
    scenario = Scenario.load(args.scenario)
    if args.seed is not None:
        scenario.seed = args.seed
    graph = None
    if args.config or os.environ.get(CONFIG_ENV):
        graph = build_entities(_lot_config(args), n_spots=scenario.n_spots)
    elif scenario.groups:
        graph = build_entities({"image_width": 1, "image_height": 1}, scenario.groups, scenario.n_spots)
    report = simulate(scenario, graph)
    payload = report.to_json()
    if args.series:
        report.series.save(args.series)
        outcome.artifacts.append(args.series)
    if args.out:
        Path(args.out).write_text(json.dumps(payload, indent=2, sort_keys=True) + "\n", encoding="utf-8")
        outcome.artifacts.append(args.out)
    text = (
        f"ticks={payload['ticks']} delivered={payload['delivered']} persisted={payload['persisted']} "
        f"dropped={payload['dropped_oldest']} in_order={payload['in_order']} "
        f"notifications={len(payload['notifications'])} totem_off_ticks={payload['totem_off_ticks']}"
    )
    _emit(args, text, payload)


def cmd_entities(args, outcome: CommandOutcome) -> None:
    cfg = _lot_config(args)
    groups = None
    if args.groups:
        with open(args.groups, encoding="utf-8") as fh:
            groups = json.load(fh)
    graph = build_entities(cfg, groups, args.spots)
    if args.bitmask is not None:
        ts = parse_timestamp(args.timestamp) if args.timestamp else datetime.now(timezone.utc)
        graph, _ = apply_status_update(graph, ParkingStatus(graph.n_spots, args.bitmask, ts))
    if args.out:
        Path(args.out).write_text(graph.dumps(), encoding="utf-8")
        outcome.artifacts.append(args.out)
    entities = [entity_to_dict(e, CONTEXT_URL) for e in sorted(graph.entities.values(), key=lambda e: e.id)]
    print(json.dumps(entities, indent=2, sort_keys=True, ensure_ascii=False))


# -- parser ------------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="spotwise", description="Spot-level parking occupancy tools.")
    p.add_argument("-v", "--verbose", action="store_true", help="log at INFO level")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    def add_json(sp):
        sp.add_argument("--json", action="store_true", help="machine-readable output")

    sp = sub.add_parser("process", help="detections JSONL -> frame results and bitmask series")
    sp.add_argument("detections", help="detection log (JSON Lines)")
    sp.add_argument("--config", help=f"lot config JSON (default: ${CONFIG_ENV})")
    sp.add_argument("--spots", help="spot annotation CSV (overrides the config)")
    sp.add_argument("--mask", help="ROI mask PNG/PGM (overrides the config)")
    sp.add_argument("--out", help="frame-result JSONL to write")
    sp.add_argument("--series", help="series CSV to write (sidecar JSON next to it)")
    add_json(sp)
    sp.set_defaults(func=cmd_process)

    sp = sub.add_parser("encode", help="bit string -> bitmask")
    sp.add_argument("bits")
    add_json(sp)
    sp.set_defaults(func=cmd_encode)

    sp = sub.add_parser("decode", help="bitmask -> bit string")
    sp.add_argument("bitmask", type=int)
    sp.add_argument("--spots", type=int, required=True)
    add_json(sp)
    sp.set_defaults(func=cmd_decode)

    sp = sub.add_parser("stats", help="occupancy reports")
    stats_sub = sp.add_subparsers(dest="report", required=True, parser_class=_Parser)
    for name, func in (("daily", cmd_stats_daily), ("weekly", cmd_stats_weekly)):
        r = stats_sub.add_parser(name)
        r.add_argument("--series", required=True, help="series CSV")
        r.add_argument("--spots", type=int, help="spot count (default: from the sidecar)")
        r.add_argument("--tz", default="UTC", help="IANA zone for day boundaries")
        r.add_argument("--out", help="write the JSON report here")
        add_json(r)
        if name == "daily":
            r.add_argument("--date", required=True)
            r.add_argument("--history", help="history JSON; default: computed from earlier days")
            r.add_argument("--holidays", help="file of ISO dates treated like weekends")
        else:
            r.add_argument("--end", required=True, help="last day of the week (inclusive)")
        r.set_defaults(func=func)

    sp = sub.add_parser("areas", help="frame results -> per-spot area bounds and histograms")
    sp.add_argument("frames", help="frame-result JSONL from 'process'")
    sp.add_argument("--out-stats", help="AreaStats CSV")
    sp.add_argument("--out-hist", help="histogram CSV")
    sp.add_argument("--bins", type=int, default=20)
    add_json(sp)
    sp.set_defaults(func=cmd_areas)

    sp = sub.add_parser("eval", help="predicted vs truth occupancy")
    sp.add_argument("--predicted", required=True, help="series CSV or frame-result JSONL")
    sp.add_argument("--truth", required=True, help="series CSV or frame-result JSONL")
    sp.add_argument("--spots", type=int)
    add_json(sp)
    sp.set_defaults(func=cmd_eval)

    sp = sub.add_parser("simulate", help="run an edge/server/totem scenario")
    sp.add_argument("scenario", help="scenario JSON")
    sp.add_argument("--seed", type=int, help="overrides the scenario seed")
    sp.add_argument("--config", help="lot config used to build the entity graph")
    sp.add_argument("--series", help="write the persisted series CSV")
    sp.add_argument("--out", help="write the JSON run report")
    add_json(sp)
    sp.set_defaults(func=cmd_simulate)

    sp = sub.add_parser("entities", help="entity graph payloads, optionally after a status update")
    sp.add_argument("--config", help=f"lot config JSON (default: ${CONFIG_ENV})")
    sp.add_argument("--groups", help="groups JSON {group_id: [spot ids]} (overrides the config)")
    sp.add_argument("--spots", type=int, help="spot count (default: highest grouped id)")
    sp.add_argument("--bitmask", type=int)
    sp.add_argument("--timestamp", help="ISO timestamp of the status (default: now)")
    sp.add_argument("--out", help="write the graph snapshot JSON")
    sp.set_defaults(func=cmd_entities)
    return p


def run_command(argv: list[str] | None = None) -> CommandOutcome:
    parser = build_parser()
    outcome = CommandOutcome(0)
    try:
        args = parser.parse_args(argv)
    except _UsageError as exc:
        print(exc, file=sys.stderr)
        return CommandOutcome(2)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        args.func(args, outcome)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        outcome.exit_code = 2
    except (SpotwiseError, OSError, ValueError, KeyError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        outcome.exit_code = 1
    return outcome


def main(argv: list[str] | None = None) -> int:
    return run_command(argv).exit_code


if __name__ == "__main__":
    sys.exit(main())
