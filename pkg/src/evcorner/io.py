"""Text file formats, flat key=value configuration, and the metrics report.

Event and corner files share one grammar: "ts u v pol" per line, polarity
written as 0 (negative) or 1 (positive). Track files hold "id ts u v" lines
grouped by id. Timestamps are written as integer microseconds; the reader
also accepts fractional-second tokens (anything containing '.' or an
exponent) and converts them exactly via decimal arithmetic, so files from
the common events.txt convention load without drift. Malformed input is
reported with 1-based line numbers.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from decimal import Decimal, InvalidOperation
from pathlib import Path
from typing import Iterable, Mapping, Sequence

import numpy as np

from .events import US_PER_S, EventArrays, SensorGeometry
from .filters import PipelineConfig
from .scoring import HarrisParams
from .synth import (
    GroundTruthTrack,
    MotionSegment,
    Scene,
    Shape,
    _regular_polygon,
    _square,
)

EVENT_HEADER = "# ts u v pol  (ts integer microseconds; pol 0=negative 1=positive)"
TRACK_HEADER = "# id ts u v  (ts integer microseconds; u v sub-pixel)"


class FileFormatError(ValueError):
    """Malformed input file; message carries the path and line number."""


def _fail(path, line_no: int, msg: str) -> None:
    raise FileFormatError(f"{path}:{line_no}: {msg}")


def _data_lines(path) -> Iterable[tuple[int, list[str]]]:
    with open(path, "r", encoding="utf-8") as f:
        for line_no, raw in enumerate(f, start=1):
            line = raw.strip()
            if not line or line.startswith("#"):
                continue
            yield line_no, line.split()


def _ts_token_to_us(tok: str, path, line_no: int) -> int:
    try:
        if "." in tok or "e" in tok or "E" in tok:
            # Fractional seconds: exact decimal scaling, round to nearest us.
            us = Decimal(tok) * US_PER_S
            val = int(us.to_integral_value())
        else:
            val = int(tok)
    except (ValueError, InvalidOperation):
        _fail(path, line_no, f"bad timestamp token {tok!r}")
    if val < 0:
        _fail(path, line_no, f"negative timestamp {tok!r}")
    return val


def _int_token(tok: str, path, line_no: int, what: str) -> int:
    try:
        return int(tok)
    except ValueError:
        _fail(path, line_no, f"bad {what} token {tok!r}")


def read_events(path, geometry: SensorGeometry | None = None) -> EventArrays:
    """Read an event or corner file. Validates grammar, ordering, and bounds."""
    ts, us, vs, ps = [], [], [], []
    last_ts = -1
    for line_no, toks in _data_lines(path):
        if len(toks) != 4:
            _fail(path, line_no, f"expected 4 fields 'ts u v pol', got {len(toks)}")
        t = _ts_token_to_us(toks[0], path, line_no)
        u = _int_token(toks[1], path, line_no, "u")
        v = _int_token(toks[2], path, line_no, "v")
        p = _int_token(toks[3], path, line_no, "pol")
        if t < last_ts:
            _fail(path, line_no, "timestamps not non-decreasing")
        last_ts = t
        if p not in (0, 1, -1):
            _fail(path, line_no, f"polarity must be 0 or 1, got {toks[3]}")
        if geometry is not None and not geometry.contains(u, v):
            _fail(
                path, line_no,
                f"pixel ({u},{v}) outside {geometry.width}x{geometry.height}",
            )
        ts.append(t)
        us.append(u)
        vs.append(v)
        ps.append(1 if p == 1 else -1)
    return EventArrays(
        u=np.asarray(us, np.int32),
        v=np.asarray(vs, np.int32),
        pol=np.asarray(ps, np.int8),
        ts_us=np.asarray(ts, np.int64),
    )


def write_events(path, events: EventArrays) -> None:
    """Write an event or corner file: integer-microsecond ts, polarity as 0/1."""
    pol01 = (events.pol > 0).astype(np.int64)
    with open(path, "w", encoding="utf-8") as f:
        f.write(EVENT_HEADER + "\n")
        f.writelines(
            f"{t} {u} {v} {p}\n"
            for t, u, v, p in zip(events.ts_us, events.u, events.v, pol01)
        )


def read_tracks(path, geometry: SensorGeometry | None = None) -> list[GroundTruthTrack]:
    """Read a track file; one GroundTruthTrack per id, in first-seen order."""
    order: list[int] = []
    rows: dict[int, list[tuple[int, float, float]]] = {}
    for line_no, toks in _data_lines(path):
        if len(toks) != 4:
            _fail(path, line_no, f"expected 4 fields 'id ts u v', got {len(toks)}")
        tid = _int_token(toks[0], path, line_no, "id")
        t = _ts_token_to_us(toks[1], path, line_no)
        try:
            u, v = float(toks[2]), float(toks[3])
        except ValueError:
            _fail(path, line_no, f"bad position tokens {toks[2]!r} {toks[3]!r}")
        if tid not in rows:
            order.append(tid)
            rows[tid] = []
        elif rows[tid] and t <= rows[tid][-1][0]:
            _fail(path, line_no, f"track {tid} timestamps not strictly increasing")
        rows[tid].append((t, u, v))
    tracks = []
    for tid in order:
        arr = rows[tid]
        ts = np.array([r[0] for r in arr], np.int64)
        uu = np.array([r[1] for r in arr], np.float64)
        vv = np.array([r[2] for r in arr], np.float64)
        if geometry is None:
            inside = np.ones(len(arr), bool)
        else:
            inside = (
                (uu > -0.5) & (uu < geometry.width - 0.5)
                & (vv > -0.5) & (vv < geometry.height - 0.5)
            )
        tracks.append(GroundTruthTrack(track_id=tid, ts_us=ts, u=uu, v=vv, inside=inside))
    return tracks


def write_tracks(path, tracks: Sequence[GroundTruthTrack]) -> None:
    with open(path, "w", encoding="utf-8") as f:
        f.write(TRACK_HEADER + "\n")
        for tr in tracks:
            # repr of a Python float is its shortest exact form.
            f.writelines(
                f"{tr.track_id} {t} {float(u)!r} {float(v)!r}\n"
                for t, u, v in zip(tr.ts_us, tr.u, tr.v)
            )


# --- flat key=value configuration ---------------------------------------

_PIPELINE_FLOAT_KEYS = (
    "k_step", "ts_threshold_init", "ts_threshold_min", "ts_threshold_max",
    "fast_motion_ts", "theta_flow", "expected_throughput", "harris_threshold",
)
_PIPELINE_INT_KEYS = ("lifetime_radius", "n_recent")
_HARRIS_KEYS = ("harris.k", "harris.gaussian_sigma", "harris.score_threshold")
CONFIG_KEYS = _PIPELINE_FLOAT_KEYS + _PIPELINE_INT_KEYS + _HARRIS_KEYS


def parse_kv_items(items: Iterable[str], source: str = "override") -> dict[str, str]:
    """Parse 'key=value' strings (CLI --set arguments)."""
    out: dict[str, str] = {}
    for item in items:
        key, sep, value = item.partition("=")
        if not sep or not key.strip():
            raise ValueError(f"bad {source} {item!r}; expected key=value")
        out[key.strip()] = value.strip()
    return out


def read_config(path) -> dict[str, str]:
    """Read a flat key=value config file; '#' comments and blank lines allowed."""
    out: dict[str, str] = {}
    for line_no, toks in _data_lines(path):
        joined = " ".join(toks)
        key, sep, value = joined.partition("=")
        if not sep or not key.strip():
            _fail(path, line_no, f"expected key=value, got {joined!r}")
        out[key.strip()] = value.strip()
    return out


def build_configs(mapping: Mapping[str, str]) -> tuple[PipelineConfig, HarrisParams]:
    """Materialize PipelineConfig and HarrisParams from string key=value pairs."""
    pipe: dict[str, float | int | tuple] = {}
    bounds = [None, None]
    harris: dict[str, float] = {}
    for key, raw in mapping.items():
        if key not in CONFIG_KEYS:
            raise ValueError(f"unknown config key {key!r}; valid keys: {', '.join(CONFIG_KEYS)}")
        try:
            val = int(raw) if key in _PIPELINE_INT_KEYS else float(raw)
        except ValueError:
            raise ValueError(f"bad value for {key}: {raw!r}") from None
        if key == "ts_threshold_min":
            bounds[0] = val
        elif key == "ts_threshold_max":
            bounds[1] = val
        elif key.startswith("harris."):
            harris[key.split(".", 1)[1]] = val
        else:
            pipe[key] = val
    defaults = PipelineConfig()
    if bounds[0] is not None or bounds[1] is not None:
        lo = bounds[0] if bounds[0] is not None else defaults.ts_threshold_bounds[0]
        hi = bounds[1] if bounds[1] is not None else defaults.ts_threshold_bounds[1]
        pipe["ts_threshold_bounds"] = (lo, hi)
    return PipelineConfig(**pipe), HarrisParams(**harris)


# --- scene description files ----------------------------------------------

_SCENE_DEFAULTS: dict[str, str] = {
    "shape": "square",       # square | polygon
    "side": "40",            # square edge length (px)
    "sides": "5",            # polygon vertex count
    "radius": "25",          # polygon circumradius (px)
    "center_u": "",          # defaults to sensor center
    "center_v": "",
    "velocity_u": "0",       # px/s
    "velocity_v": "0",
    "omega": "0",            # rad/s
    "duration": "1.0",       # s
    "dt": "",                # s; empty picks a safe step from the speed bound
    "intensity": "0.1",
    "background": "1.0",
    "contrast": "0.25",
    "noise_rate": "0",       # spurious events/s over the sensor
    "noise_seed": "0",
    "width": "240",
    "height": "180",
}
SCENE_KEYS = tuple(_SCENE_DEFAULTS)


def scene_from_mapping(mapping: Mapping[str, str]) -> tuple[Scene, SensorGeometry]:
    """Build a one-shape scene from flat key=value pairs (see SCENE_KEYS)."""
    for key in mapping:
        if key not in _SCENE_DEFAULTS:
            raise ValueError(f"unknown scene key {key!r}; valid keys: {', '.join(SCENE_KEYS)}")
    kv = dict(_SCENE_DEFAULTS)
    kv.update(mapping)

    def num(key: str) -> float:
        try:
            return float(kv[key])
        except ValueError:
            raise ValueError(f"bad value for scene key {key}: {kv[key]!r}") from None

    geom = SensorGeometry(int(num("width")), int(num("height")))
    cu = num("center_u") if kv["center_u"] else geom.width / 2.0
    cv = num("center_v") if kv["center_v"] else geom.height / 2.0
    if kv["shape"] == "square":
        verts = _square(num("side"), (cu, cv))
    elif kv["shape"] == "polygon":
        verts = _regular_polygon(int(num("sides")), num("radius"), (cu, cv))
    else:
        raise ValueError(f"unknown shape {kv['shape']!r}; use square or polygon")
    duration = num("duration")
    shape = Shape(
        vertices=verts,
        intensity=num("intensity"),
        segments=(MotionSegment(0.0, duration, num("velocity_u"), num("velocity_v")),),
        omega=num("omega"),
    )
    if kv["dt"]:
        dt = num("dt")
    else:
        speed = shape.max_boundary_speed()
        # 0.4/speed keeps a margin under the 1/(2*speed) renderer bound.
        dt = min(0.01, 0.4 / speed) if speed > 0 else 0.01
        dt = max(dt, 2e-6)
    scene = Scene(
        shapes=(shape,),
        duration=duration,
        dt=dt,
        background_intensity=num("background"),
        contrast=num("contrast"),
        noise_rate=num("noise_rate"),
        noise_seed=int(num("noise_seed")),
    )
    return scene, geom


# --- metrics report -------------------------------------------------------


@dataclass
class MetricsReport:
    """Per-detector run summary: counters, reduction, accuracy, throughput.

    Counter fields are exact; wall-clock derived fields are measurements.
    Optional fields stay None when the corresponding stage was not computed
    (e.g. no ground truth supplied), and render as 'null'.
    """

    detector: str
    events_in: int
    passed_l1: int
    passed_l2: int
    passed_l3: int
    corners: int
    reduction_pct: float | None
    tec: int | None = None
    fec: int | None = None
    accuracy: float | None = None
    n_outside_time: int | None = None
    n_beyond_outer: int | None = None
    mean_throughput: float | None = None
    threshold_trace_s: list[float] = field(default_factory=list)

    @staticmethod
    def from_run(result, cylinder=None) -> "MetricsReport":
        """Build from a pipeline.DetectionResult and optional CylinderResult."""
        rep = MetricsReport(
            detector=result.kind.value,
            events_in=result.counters.events_in,
            passed_l1=result.counters.passed_l1,
            passed_l2=result.counters.passed_l2,
            passed_l3=result.counters.passed_l3,
            corners=result.counters.corners,
            reduction_pct=result.reduction_pct,
            mean_throughput=result.mean_throughput,
            threshold_trace_s=[float(x) for x in result.threshold_trace_s],
        )
        if cylinder is not None:
            rep.tec = cylinder.tec
            rep.fec = cylinder.fec
            rep.accuracy = cylinder.accuracy
            rep.n_outside_time = cylinder.n_outside_time
            rep.n_beyond_outer = cylinder.n_beyond_outer
        return rep

    def to_json_dict(self) -> dict:
        return {
            "detector": self.detector,
            "events_in": self.events_in,
            "passed_l1": self.passed_l1,
            "passed_l2": self.passed_l2,
            "passed_l3": self.passed_l3,
            "corners": self.corners,
            "reduction_pct": self.reduction_pct,
            "tec": self.tec,
            "fec": self.fec,
            "accuracy": self.accuracy,
            "n_outside_time": self.n_outside_time,
            "n_beyond_outer": self.n_beyond_outer,
            "mean_throughput": self.mean_throughput,
            "threshold_trace_s": self.threshold_trace_s,
        }

    def render_text(self) -> str:
        def fmt(v):
            if v is None:
                return "null"
            if isinstance(v, float):
                return format(v, ".6g")
            return str(v)

        lines = [
            f"detector = {self.detector}",
            f"events_in = {self.events_in}",
            f"passed_l1 = {self.passed_l1}",
            f"passed_l2 = {self.passed_l2}",
            f"passed_l3 = {self.passed_l3}",
            f"corners = {self.corners}",
            f"reduction_pct = {fmt(self.reduction_pct)}",
            f"tec = {fmt(self.tec)}",
            f"fec = {fmt(self.fec)}",
            f"accuracy = {fmt(self.accuracy)}",
            f"n_outside_time = {fmt(self.n_outside_time)}",
            f"n_beyond_outer = {fmt(self.n_beyond_outer)}",
            f"mean_throughput = {fmt(self.mean_throughput)}",
        ]
        if self.threshold_trace_s:
            trace = " ".join(format(x, ".6f") for x in self.threshold_trace_s)
            lines.append(f"threshold_trace_s = {trace}")
        return "\n".join(lines)
