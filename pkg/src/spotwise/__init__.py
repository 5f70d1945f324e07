"""Spot-level parking occupancy from vehicle detections."""

from .assignment import (
    Assignment,
    FrameResult,
    PipelineConfig,
    abbp_refine,
    assign_detections,
    run_pipeline,
)
from .codec import ParkingStatus, decode_status, encode_status, summarize
from .errors import (
    ClockSkewError,
    ConfigError,
    DegenerateMaskError,
    DomainError,
    FormatError,
    IngestRejected,
    InsufficientDataError,
    ParseError,
    RangeError,
    SpotwiseError,
)
from .estimator import AreaOutlierDetector, SpotOccupancyEstimator
from .geometry import Detection, NormBox, bbox_area_px, center_distance, iou, nms
from .roi import RoiMask, load_roi_mask, point_in_roi
from .shadow import EntityGraph, apply_status_update, build_entities, serialize_entity
from .spots import (
    LotConfig,
    SpotAnnotation,
    SpotMap,
    load_lot_config,
    load_spot_map,
    parse_spot_annotations,
    read_detection_log,
    serialize_spot_annotations,
)
from .stats import (
    OccupancySeries,
    area_outlier_bounds,
    daily_spot_stats,
    evaluate,
    occupied_hours,
    overall_daily_summary,
)
from .telemetry import (
    IngestionServer,
    Scenario,
    ForwardQueue,
    Measurement,
    check_staleness,
    enqueue_and_flush,
    ingest_request,
    simulate,
    totem_value,
)

__version__ = "0.1.0"
