"""Asynchronous corner detection for event cameras.

The package implements a three-layer event filter (dynamic timestamp filter
with throughput feedback, spatial plus-filter, lifetime filter) followed by
a low-complexity Harris score on a 9x9 binary recency patch, alongside
reference detectors (efast, arc-star, eharris), a synthetic DVS scene
generator with ground-truth corner tracks, and the evaluation tooling
(reduction percentage, two-cylinder accuracy).

Entry points: run_detector drives any detector over a stream; the evcorner
command exposes generate/detect/evaluate/bench/calibrate.
"""

from .baselines import (
    DetectorKind,
    arcstar_detect,
    efast_detect,
    eharris_detect,
)
from .control import MESSAGE_SIZE_DEFAULT, PerformanceState, ThroughputMonitor
from .events import (
    Event,
    EventArrays,
    SaeFamily,
    SaeMap,
    SensorGeometry,
    extract_binary_patch,
    s_to_us,
    us_to_s,
)
from .filters import (
    PipelineConfig,
    PipelineState,
    StageCounters,
    lifetime_filter,
    plus_filter,
    timestamp_filter,
)
from .flow import FlowGrid, update_flow
from .io import (
    FileFormatError,
    MetricsReport,
    build_configs,
    read_config,
    read_events,
    read_tracks,
    scene_from_mapping,
    write_events,
    write_tracks,
)
from .metrics import (
    CylinderParams,
    CylinderResult,
    DetectionRecord,
    cylinder_accuracy,
    reduction_percentage,
)
from .pipeline import DetectionResult, harvest_patches, run_detector
from .scoring import (
    HarrisParams,
    ScoreResult,
    benchmark_scores,
    harris_score,
    lc_harris_score,
)
from .synth import (
    GroundTruthTrack,
    MotionSegment,
    Scene,
    Shape,
    bounce_segments,
    flip_intensities,
    render_events,
    scene_presets,
)

__version__ = "0.1.0"

__all__ = [
    "DetectorKind",
    "arcstar_detect",
    "efast_detect",
    "eharris_detect",
    "MESSAGE_SIZE_DEFAULT",
    "PerformanceState",
    "ThroughputMonitor",
    "Event",
    "EventArrays",
    "SaeFamily",
    "SaeMap",
    "SensorGeometry",
    "extract_binary_patch",
    "s_to_us",
    "us_to_s",
    "PipelineConfig",
    "PipelineState",
    "StageCounters",
    "lifetime_filter",
    "plus_filter",
    "timestamp_filter",
    "FlowGrid",
    "update_flow",
    "FileFormatError",
    "MetricsReport",
    "build_configs",
    "read_config",
    "read_events",
    "read_tracks",
    "scene_from_mapping",
    "write_events",
    "write_tracks",
    "CylinderParams",
    "CylinderResult",
    "DetectionRecord",
    "cylinder_accuracy",
    "reduction_percentage",
    "DetectionResult",
    "harvest_patches",
    "run_detector",
    "HarrisParams",
    "ScoreResult",
    "benchmark_scores",
    "harris_score",
    "lc_harris_score",
    "GroundTruthTrack",
    "MotionSegment",
    "Scene",
    "Shape",
    "bounce_segments",
    "flip_intensities",
    "render_events",
    "scene_presets",
    "__version__",
]
