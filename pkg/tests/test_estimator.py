import numpy as np
import pytest
from sklearn.base import clone
from sklearn.exceptions import NotFittedError

from helpers import det
from spotwise.assignment import PipelineConfig, run_pipeline
from spotwise.codec import encode_status
from spotwise.errors import ConfigError, DomainError
from spotwise.estimator import AreaOutlierDetector, SpotOccupancyEstimator


def frames_for(spot_map):
    centers = [(s.center_box.x_c, s.center_box.y_c) for s in spot_map.spots]
    return [
        [],
        [det(x, y, index=i) for i, (x, y) in enumerate(centers[:5])],
        [det(centers[10][0], centers[10][1], index=0), det(0.01, 0.99, index=1)],
    ]


def test_params_roundtrip():
    est = SpotOccupancyEstimator(delta=0.2, critical_ids=[3])
    params = est.get_params()
    assert params == {"delta": 0.2, "area_threshold": 5674.0, "nms_iou": 0.45, "critical_ids": [3], "abbp_delta": None}
    est.set_params(delta=0.05)
    assert est.delta == 0.05
    assert clone(est).get_params() == est.get_params()


def test_not_fitted():
    with pytest.raises(NotFittedError):
        SpotOccupancyEstimator().predict([[]])


def test_predict_matches_pipeline(spot_map, roi_mask):
    est = SpotOccupancyEstimator().fit(spot_map, roi_mask)
    frames = frames_for(spot_map)
    pred = est.predict(frames)
    assert pred.shape == (3, 16) and pred.dtype == bool
    for row, frame in zip(pred, frames):
        assert tuple(row) == run_pipeline(frame, spot_map, roi_mask, PipelineConfig()).occupied
    assert est.transform(frames).tolist() == [encode_status(r) for r in pred]


def test_array_input(spot_map, roi_mask):
    est = SpotOccupancyEstimator().fit(spot_map, roi_mask)
    s = spot_map.spots[0].center_box
    frame = np.array([[s.x_c, s.y_c, 0.05, 0.05, 0.9]])
    assert est.predict([frame])[0, 0]


def test_score(spot_map, roi_mask):
    est = SpotOccupancyEstimator().fit(spot_map, roi_mask)
    frames = frames_for(spot_map)
    assert est.score(frames, est.predict(frames)) == 1.0


@pytest.mark.parametrize("kw", [{"delta": 0}, {"nms_iou": 1.0}, {"area_threshold": -5}, {"critical_ids": [99]}])
def test_bad_params(kw, spot_map, roi_mask):
    with pytest.raises(ConfigError):
        SpotOccupancyEstimator(**kw).fit(spot_map, roi_mask)


def test_fit_type_checks(roi_mask, spot_map):
    with pytest.raises(DomainError):
        SpotOccupancyEstimator().fit("spots.csv", roi_mask)
    with pytest.raises(DomainError):
        SpotOccupancyEstimator().fit(spot_map, np.ones((2, 2)))


def test_area_detector():
    pairs = [(4, 1000.0)] * 100 + [(4, 10000.0), (5, 500.0), (5, 520.0), (6, 1.0)]
    det_ = AreaOutlierDetector().fit(pairs)
    assert set(det_.stats_) == {4, 5}
    assert det_.predict([(4, 10000.0), (4, 1000.0), (6, 1e9)]).tolist() == [True, False, False]


def test_area_detector_mapping_and_params():
    det_ = AreaOutlierDetector(min_samples=3).fit({1: [1, 2, 3], 2: [5, 5]})
    assert set(det_.stats_) == {1}
    with pytest.raises(ConfigError):
        AreaOutlierDetector(min_samples=1).fit({})
