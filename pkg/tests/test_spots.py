import json

import pytest
from hypothesis import given
from hypothesis import strategies as st

from spotwise.errors import ConfigError, ParseError, RangeError
from spotwise.spots import (
    LotConfig,
    detection_record,
    invert_groups,
    load_lot_config,
    parse_spot_annotations,
    read_detection_log,
    serialize_spot_annotations,
)


def test_single_box():
    sm = parse_spot_annotations("0 0.5 0.5 0.1 0.1", 640, 480)
    assert sm.n_spots == 1
    s = sm.spots[0]
    assert s.spot_id == 1 and (s.center_box.x_c, s.center_box.y_c) == (0.5, 0.5)
    assert s.group_id == "general" and not s.critical


def test_sixteen_boxes_with_critical(fixtures_dir):
    text = (fixtures_dir / "spots.csv").read_text()
    sm = parse_spot_annotations(text, 1024, 512, critical_ids={3, 4})
    assert sm.n_spots == 16
    assert [s.spot_id for s in sm.spots] == list(range(1, 17))
    assert sm.critical_ids == {3, 4}
    assert sm.image_name == "reference.jpg"


@pytest.mark.parametrize("text", ["", "   \n\n", "# only a comment\n"])
def test_empty_input(text):
    with pytest.raises(ParseError):
        parse_spot_annotations(text, 640, 480)


def test_malformed_reports_position():
    with pytest.raises(ParseError) as info:
        parse_spot_annotations("0 0.1 0.1 0.1 0.1;0 0.2 oops 0.1 0.1", 640, 480)
    assert info.value.row == 1
    assert info.value.column == 19


def test_wrong_field_count():
    with pytest.raises(ParseError):
        parse_spot_annotations("0 0.1 0.1 0.1", 640, 480)


def test_coordinate_out_of_range():
    with pytest.raises(RangeError):
        parse_spot_annotations("0 1.5 0.1 0.1 0.1", 640, 480)


def test_zero_width_rejected():
    with pytest.raises(RangeError):
        parse_spot_annotations("0 0.5 0.1 0 0.1", 640, 480)


def test_critical_id_out_of_range():
    with pytest.raises(ConfigError):
        parse_spot_annotations("0 0.5 0.5 0.1 0.1", 640, 480, critical_ids={2})


def test_groups_must_cover_every_spot():
    with pytest.raises(ConfigError):
        parse_spot_annotations("0 0.5 0.5 0.1 0.1;0 0.6 0.5 0.1 0.1", 640, 480, groups={1: "a"})


def test_invert_groups_rejects_double_membership():
    with pytest.raises(ConfigError):
        invert_groups({"a": [1, 2], "b": [2]})


def test_invert_groups_rejects_missing():
    with pytest.raises(ConfigError):
        invert_groups({"a": [1, 3]}, 3)


coords = st.floats(0.0, 1.0, allow_nan=False)
sizes = st.floats(1e-6, 1.0, allow_nan=False)


@given(st.lists(st.tuples(st.integers(0, 9), coords, coords, sizes, sizes), min_size=1, max_size=40),
       st.booleans())
def test_parse_serialize_roundtrip(boxes, named):
    text = ";".join(f"{c} {x!r} {y!r} {w!r} {h!r}" for c, x, y, w, h in boxes)
    if named:
        text = f'img.png,"{text}"'
    n = len(boxes)
    groups = {i: ("a" if i % 2 else "b") for i in range(1, n + 1)}
    first = parse_spot_annotations(text, 800, 600, groups=groups, critical_ids={1})
    again = parse_spot_annotations(serialize_spot_annotations(first), 800, 600, groups=groups, critical_ids={1})
    assert again == first


def test_lot_config_resolves_paths(fixtures_dir):
    cfg = load_lot_config(fixtures_dir / "lot.json")
    assert cfg.spots_csv == str(fixtures_dir / "spots.csv")
    assert cfg.delta == 0.1 and cfg.area_threshold_px == 5674 and cfg.nms_iou == 0.45


def test_lot_config_unknown_key():
    with pytest.raises(ConfigError):
        LotConfig.from_dict({"image_width": 1, "image_height": 1, "bogus": 3})


def test_lot_config_missing_size():
    with pytest.raises(ConfigError):
        LotConfig.from_dict({"image_width": 1})


def test_detection_log_roundtrip():
    from datetime import datetime, timezone

    from spotwise.geometry import Detection, NormBox

    ts = datetime(2025, 1, 2, 3, 4, tzinfo=timezone.utc)
    dets = [Detection(NormBox(0.1, 0.2, 0.3, 0.4), 0.5, 0), Detection(NormBox(0.5, 0.5, 0.1, 0.1), 1.0, 1)]
    line = json.dumps(detection_record(ts, dets))
    [(ts2, dets2)] = list(read_detection_log([line, ""]))
    assert ts2 == ts and dets2 == dets


def test_detection_log_bad_record():
    with pytest.raises(ParseError) as info:
        list(read_detection_log(['{"timestamp": "2025-01-01T00:00:00Z"}', "{nope"]))
    assert info.value.row == 2
