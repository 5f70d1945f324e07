"""Regenerate the files under tests/fixtures/.

Expected values written into manifest.json are computed here with plain
Pillow/stdlib code, independently of the spotwise package.
"""

import json
import random
from datetime import datetime, timedelta, timezone
from pathlib import Path

from PIL import Image, ImageDraw

OUT = Path(__file__).resolve().parent.parent / "tests" / "fixtures"
W, H = 1024, 512

# reference day 2025-10-22: spot -> (hours, historical weekday mean, printed z)
REFERENCE_TABLE = {
    1: (7.1, 7.6, -0.5), 2: (1.4, 4.7, -2.2), 3: (8.3, 4.2, 2.0), 4: (6.2, 4.4, 0.9),
    5: (4.8, 3.9, 0.4), 6: (2.4, 4.5, -0.9), 7: (4.5, 4.5, -0.0), 8: (2.5, 4.0, -0.7),
    9: (2.7, 3.7, -0.4), 10: (1.4, 4.0, -1.8), 11: (10.8, 6.9, 2.9), 12: (6.1, 6.3, -0.1),
    13: (4.7, 5.4, -0.3), 14: (6.0, 5.0, 0.5), 15: (1.9, 3.3, -1.1), 16: (2.2, 3.5, -0.7),
}


def spot_centers():
    # spots 3 and 4 sit 56 px apart in the top-right corner; the rest on a grid
    centers = {3: (0.75, 0.2), 4: (0.75 + 56 / W, 0.2)}
    free_ids = [i for i in range(1, 17) if i not in centers]
    grid = [(0.1 + 0.11 * (k % 7), 0.45 + 0.25 * (k // 7)) for k in range(len(free_ids))]
    for sid, xy in zip(free_ids, grid):
        centers[sid] = xy
    return centers


def write_spots():
    centers = spot_centers()
    boxes = ";".join(f"2 {centers[i][0]!r} {centers[i][1]!r} 0.04 0.06" for i in range(1, 17))
    (OUT / "spots.csv").write_text(f"reference.jpg,\"{boxes}\"\n", encoding="utf-8")
    return centers


def write_mask():
    img = Image.new("L", (W, H), 255)
    draw = ImageDraw.Draw(img)
    draw.polygon([(40, 60), (990, 60), (990, 470), (40, 470)], fill=0)
    # a white notch so the ROI is not a plain rectangle
    draw.polygon([(40, 60), (200, 60), (40, 180)], fill=255)
    img.save(OUT / "mask.png")
    img.save(OUT / "mask.pgm")
    hist = img.histogram()
    return sum(hist[:128])


def write_lot():
    lot = {
        "image_width": W,
        "image_height": H,
        "delta": 0.1,
        "area_threshold_px": 5674,
        "nms_iou": 0.45,
        "critical_spot_ids": [3, 4],
        "groups": {"general": list(range(1, 15)), "disabled": [15, 16]},
        "lot_name": "ic2",
        "building_name": "ic2-building",
        "spots_csv": "spots.csv",
        "mask": "mask.png",
    }
    (OUT / "lot.json").write_text(json.dumps(lot, indent=2) + "\n", encoding="utf-8")


def write_reference_day():
    day = datetime(2025, 10, 22, tzinfo=timezone.utc)
    minutes = {sid: round(h * 60) for sid, (h, _, _) in REFERENCE_TABLE.items()}
    rows = ["timestamp,bitmask"]
    for m in range(1440):
        mask = 0
        for sid in range(1, 17):
            start = (sid * 37) % (1440 - minutes[sid]) if minutes[sid] < 1440 else 0
            bit = start <= m < start + minutes[sid]
            mask = (mask << 1) | int(bit)
        ts = (day + timedelta(minutes=m)).isoformat().replace("+00:00", "Z")
        rows.append(f"{ts},{mask}")
    (OUT / "reference_day.csv").write_text("\n".join(rows) + "\n", encoding="utf-8")
    (OUT / "reference_day.json").write_text(json.dumps({"n_spots": 16}) + "\n", encoding="utf-8")

    weekday = {}
    for sid, (hours, mean, z) in REFERENCE_TABLE.items():
        h = minutes[sid] / 60
        # std recovered from the printed z; a zero z carries no information
        std = (h - mean) / z if z != 0 else 1.0
        weekday[str(sid)] = {"mean": mean, "std": std}
    (OUT / "reference_history.json").write_text(
        json.dumps({"weekday": weekday, "weekend": {}}, indent=2) + "\n", encoding="utf-8"
    )
    return minutes


def write_detections(centers):
    rng = random.Random(7)
    start = datetime(2025, 10, 22, 12, 0, tzinfo=timezone.utc)
    lines = []
    for f in range(30):
        dets = []
        for sid in range(1, 17):
            if sid in (3, 4):
                continue
            if rng.random() < 0.5:
                x, y = centers[sid]
                dets.append({"x_c": x + rng.uniform(-0.02, 0.02), "y_c": y + rng.uniform(-0.02, 0.02),
                             "w": 0.06, "h": 0.1, "conf": round(rng.uniform(0.5, 0.99), 3)})
        if f % 3 == 0:
            # one merged 112x54 px box across the two critical spots
            x = (centers[3][0] + centers[4][0]) / 2
            dets.append({"x_c": x, "y_c": centers[3][1], "w": 112 / W, "h": 54 / H, "conf": 0.8})
        ts = (start + timedelta(minutes=f)).isoformat().replace("+00:00", "Z")
        lines.append(json.dumps({"timestamp": ts, "detections": dets}))
    (OUT / "detections.jsonl").write_text("\n".join(lines) + "\n", encoding="utf-8")


def write_scenario():
    scenario = {
        "ticks": 1440,
        "n_spots": 16,
        "start": "2025-10-22T00:00:00Z",
        "seed": 11,
        "outages": [[100, 103], [400, 460], [900, 1020]],
        "totem_outages": [[1200, 1215]],
        "value_faults": [[300, 310, -1], [700, 705, 17]],
        "tolerance_minutes": 5,
        "totem_max_age_minutes": 5,
        "queue_capacity": None,
        "groups": {"general": list(range(1, 15)), "disabled": [15, 16]},
    }
    (OUT / "scenario.json").write_text(json.dumps(scenario, indent=2) + "\n", encoding="utf-8")


def main():
    OUT.mkdir(parents=True, exist_ok=True)
    centers = write_spots()
    inside = write_mask()
    write_lot()
    minutes = write_reference_day()
    write_detections(centers)
    write_scenario()
    (OUT / "holidays.txt").write_text("# local holidays\n2025-11-20\n", encoding="utf-8")
    manifest = {
        "mask_width": W,
        "mask_height": H,
        "mask_inside_count": inside,
        "reference_day_minutes": {str(k): v for k, v in minutes.items()},
    }
    (OUT / "manifest.json").write_text(json.dumps(manifest, indent=2) + "\n", encoding="utf-8")


if __name__ == "__main__":
    main()
