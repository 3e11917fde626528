"""Stream runner: drives a detector over an ordered event stream.

Events are processed in messages (default 10,000 events). After each message
the throughput monitor is fed one rate sample; the resulting performance
state is handed to the timestamp filter, which applies at most one K-step
threshold adjustment per monitor update. Timing is either measured wall
clock or a virtual model (per-event base cost plus an injected delay charged
to events that survive the front filter), so feedback experiments are
deterministic and fast.

Per-event work:

- tlf-harris: timestamp filter, plus filter, lifetime filter, then the
  low-complexity score on the 9x9 binary patch of the polarity surface.
- efast: verdict on the polarity surface for every event, no front filter.
- arcstar: fixed 0.05 s timestamp pre-filter, then the extended-arc verdict.
- eharris: full Harris on the all-events surface for every event.
"""
from __future__ import annotations

from dataclasses import dataclass
import time
from typing import Sequence

import numpy as np
from numba import njit

from .baselines import DetectorKind, _arcstar_verdict, _efast_verdict, _eharris_verdict
from .control import MESSAGE_SIZE_DEFAULT, PerformanceState, ThroughputMonitor
from .events import (
    PATCH_SIDE,
    UNSET_TS,
    EventArrays,
    SensorGeometry,
    _patch_bits,
    s_to_us,
)
from .filters import (
    CTL_LEN,
    CTL_PENDING,
    CTL_PERF,
    CTL_THR_US,
    PERF_AT,
    PERF_OVER,
    PERF_UNDER,
    PipelineConfig,
    StageCounters,
    _lifetime_step,
    _plus_step,
    _timestamp_step,
)
from .flow import cells_per_col, cells_per_row
from .scoring import HarrisParams, _lc_response, gaussian_weights

# Fixed front-filter threshold the extended-arc baseline runs behind.
ARCSTAR_PREFILTER_S = 0.05

# Stage codes stored per event: the layer that rejected it, or corner.
STAGE_REJECT_L1 = 0
STAGE_REJECT_L2 = 1
STAGE_REJECT_L3 = 2
STAGE_REJECT_SCORE = 3
STAGE_CORNER = 4

_PERF_CODE = {
    PerformanceState.AT: PERF_AT,
    PerformanceState.UNDER: PERF_UNDER,
    PerformanceState.OVER: PERF_OVER,
}


@njit(cache=True)
def _tlf_chunk(
    u, v, pol, ts, i0, i1,
    gsae_ts, gsae_pol, epos_ts, eneg_ts, c_ts, c_tau,
    fmag, flast, cells_x, ctl,
    theta_flow, fast_us, k_us, min_us, max_us,
    lifetime_radius, n_recent, lc_threshold,
    stage, flow, thr, tau, score,
):
    for i in range(i0, i1):
        uu = np.int64(u[i])
        vv = np.int64(v[i])
        pp = np.int64(pol[i])
        tt = ts[i]
        if pp > 0:
            esae = epos_ts
        else:
            esae = eneg_ts
        passed, fv, t_used = _timestamp_step(
            uu, vv, pp, tt,
            gsae_ts, gsae_pol, esae,
            fmag, flast, cells_x, ctl,
            theta_flow, fast_us, k_us, min_us, max_us,
            False,
        )
        flow[i] = fv
        thr[i] = t_used
        if not passed:
            stage[i] = STAGE_REJECT_L1
            continue
        if not _plus_step(esae, uu, vv):
            stage[i] = STAGE_REJECT_L2
            continue
        ok, tv = _lifetime_step(c_ts, c_tau, esae, uu, vv, tt, lifetime_radius)
        if not ok:
            stage[i] = STAGE_REJECT_L3
            continue
        tau[i] = tv
        bits = _patch_bits(esae, uu, vv, n_recent)
        r = _lc_response(bits)
        score[i] = r
        if r > lc_threshold:
            stage[i] = STAGE_CORNER
        else:
            stage[i] = STAGE_REJECT_SCORE


@njit(cache=True)
def _efast_chunk(u, v, pol, ts, i0, i1, epos_ts, eneg_ts, stage):
    for i in range(i0, i1):
        uu = np.int64(u[i])
        vv = np.int64(v[i])
        tt = ts[i]
        if pol[i] > 0:
            esae = epos_ts
        else:
            esae = eneg_ts
        if tt >= esae[vv, uu]:
            esae[vv, uu] = tt
        stage[i] = STAGE_CORNER if _efast_verdict(esae, uu, vv) else STAGE_REJECT_L2


@njit(cache=True)
def _arcstar_chunk(
    u, v, pol, ts, i0, i1, gsae_ts, gsae_pol, epos_ts, eneg_ts, fixed_us, stage
):
    for i in range(i0, i1):
        uu = np.int64(u[i])
        vv = np.int64(v[i])
        pp = np.int64(pol[i])
        tt = ts[i]
        old_pol = gsae_pol[vv, uu]
        old_ts = gsae_ts[vv, uu]
        passed = old_pol == 0 or old_pol != pp or tt > old_ts + fixed_us
        if tt >= gsae_ts[vv, uu]:
            gsae_ts[vv, uu] = tt
            gsae_pol[vv, uu] = pp
        if not passed:
            stage[i] = STAGE_REJECT_L1
            continue
        if pp > 0:
            esae = epos_ts
        else:
            esae = eneg_ts
        if tt >= esae[vv, uu]:
            esae[vv, uu] = tt
        stage[i] = STAGE_CORNER if _arcstar_verdict(esae, uu, vv) else STAGE_REJECT_L2


@njit(cache=True)
def _eharris_chunk(u, v, pol, ts, i0, i1, gsae_ts, n_recent, weights, k, threshold, stage, score):
    for i in range(i0, i1):
        uu = np.int64(u[i])
        vv = np.int64(v[i])
        tt = ts[i]
        if tt >= gsae_ts[vv, uu]:
            gsae_ts[vv, uu] = tt
        ok, sc = _eharris_verdict(gsae_ts, uu, vv, n_recent, weights, k, threshold)
        score[i] = sc
        stage[i] = STAGE_CORNER if ok else STAGE_REJECT_L2


@dataclass
class DetectionResult:
    """Everything a detector run produced.

    stage holds the per-event outcome code; flow, thr_used_us and tau_us are
    populated for tlf-harris only (tau_us is -1 except where a candidate was
    stored by the lifetime filter). threshold_trace_us starts at the initial
    threshold and gains one entry per message.

    scores records the final-stage response so thresholds can be swept
    offline without rerunning: for tlf-harris the low-complexity score of
    every event that reached the score stage (NaN elsewhere), for eharris
    the Harris response of every event (0.0 at border pixels that carry no
    patch); None for the arc detectors. The score stage feeds nothing back
    into the surfaces, so corners under any threshold t are exactly the
    candidates with score > t.
    """

    kind: DetectorKind
    counters: StageCounters
    corner_indices: np.ndarray
    stage: np.ndarray
    flow: np.ndarray | None
    thr_used_us: np.ndarray | None
    tau_us: np.ndarray | None
    scores: np.ndarray | None
    threshold_trace_us: np.ndarray
    monitor_history: np.ndarray
    message_walls: np.ndarray
    charged_per_message: np.ndarray
    mean_throughput: float

    @property
    def threshold_trace_s(self) -> np.ndarray:
        return self.threshold_trace_us / 1e6

    @property
    def reduction_pct(self) -> float | None:
        """Reduction percentage, or None for an empty run."""
        n = self.counters.events_in
        if n == 0:
            return None
        return 100.0 * (1.0 - self.counters.corners / n)

    def corner_events(self, events: EventArrays) -> EventArrays:
        idx = self.corner_indices
        return EventArrays(
            u=events.u[idx], v=events.v[idx], pol=events.pol[idx], ts_us=events.ts_us[idx]
        )


def _counters_from_stage(stage: np.ndarray) -> StageCounters:
    c = StageCounters(
        events_in=int(stage.size),
        passed_l1=int(np.count_nonzero(stage >= 1)),
        passed_l2=int(np.count_nonzero(stage >= 2)),
        passed_l3=int(np.count_nonzero(stage >= 3)),
        corners=int(np.count_nonzero(stage == STAGE_CORNER)),
    )
    c.check_monotone()
    return c


def _delay_schedule(injected_delay_s, n_messages: int) -> np.ndarray:
    if isinstance(injected_delay_s, (int, float, np.integer, np.floating)):
        return np.full(n_messages, float(injected_delay_s))
    arr = np.asarray(injected_delay_s, np.float64)
    if arr.ndim != 1 or arr.size == 0:
        raise ValueError("injected_delay_s must be a scalar or a non-empty 1-d sequence")
    if arr.size >= n_messages:
        return arr[:n_messages].copy()
    out = np.empty(n_messages)
    out[: arr.size] = arr
    out[arr.size :] = arr[-1]  # last entry holds for the remaining messages
    return out


def run_detector(
    events: EventArrays,
    kind: DetectorKind | str,
    cfg: PipelineConfig = PipelineConfig(),
    geometry: SensorGeometry = SensorGeometry(),
    harris: HarrisParams = HarrisParams(),
    *,
    feedback: bool = False,
    message_size: int = MESSAGE_SIZE_DEFAULT,
    timing: str = "wall",
    injected_delay_s: float | Sequence[float] = 0.0,
    base_cost_s: float = 0.0,
    arcstar_prefilter_s: float = ARCSTAR_PREFILTER_S,
    validate: bool = True,
) -> DetectionResult:
    """Run one detector over the whole stream and return counters plus traces.

    feedback=False (the default) never adjusts the dynamic threshold, so the
    run is a pure function of the input; the fast-motion flow override still
    applies, as it does not depend on measured throughput. With feedback=True
    a ThroughputMonitor is fed after every message and the next message
    applies at most one K-step adjustment.

    timing="wall" measures real elapsed time per message and adds the modeled
    costs on top; timing="virtual" uses only the model
    wall = n_events * base_cost_s + n_charged * delay, where charged events
    are the front-filter survivors (every event for efast/eharris). Virtual
    timing with feedback requires a positive modeled cost.
    """
    if isinstance(kind, str):
        kind = DetectorKind.from_name(kind)
    if timing not in ("wall", "virtual"):
        raise ValueError(f"timing must be 'wall' or 'virtual', got {timing!r}")
    if message_size <= 0:
        raise ValueError("message_size must be positive")
    if base_cost_s < 0:
        raise ValueError("base_cost_s must be non-negative")
    if validate:
        events.validate(geometry)

    n = len(events)
    empty_i64 = np.empty(0, np.int64)
    empty_f64 = np.empty(0, np.float64)
    if n == 0:
        return DetectionResult(
            kind=kind,
            counters=StageCounters(),
            corner_indices=empty_i64.copy(),
            stage=np.empty(0, np.uint8),
            flow=None,
            thr_used_us=None,
            tau_us=None,
            scores=None,
            threshold_trace_us=empty_i64.copy(),
            monitor_history=empty_f64.copy(),
            message_walls=empty_f64.copy(),
            charged_per_message=empty_i64.copy(),
            mean_throughput=0.0,
        )

    n_messages = -(-n // message_size)
    delays = _delay_schedule(injected_delay_s, n_messages)
    if np.any(delays < 0):
        raise ValueError("injected delays must be non-negative")
    if feedback and timing == "virtual" and base_cost_s == 0.0 and not np.all(delays > 0):
        raise ValueError(
            "virtual timing with feedback needs base_cost_s > 0 or an always-positive delay"
        )

    h, w = geometry.height, geometry.width
    is_tlf = kind is DetectorKind.TLF_HARRIS
    stage = np.empty(n, np.uint8)
    flow = np.full(n, -1.0) if is_tlf else None
    thr_used = np.full(n, -1, np.int64) if is_tlf else None
    tau = np.full(n, -1, np.int64) if is_tlf else None
    scores = np.full(n, np.nan) if is_tlf or kind is DetectorKind.EHARRIS else None

    gsae_ts = np.full((h, w), UNSET_TS, np.int64)
    gsae_pol = np.zeros((h, w), np.int8)
    epos = np.full((h, w), UNSET_TS, np.int64)
    eneg = np.full((h, w), UNSET_TS, np.int64)
    c_ts = np.full((h, w), UNSET_TS, np.int64)
    c_tau = np.zeros((h, w), np.int64)
    n_cells = cells_per_row(geometry) * cells_per_col(geometry)
    fmag = np.zeros(n_cells, np.float64)
    flast = np.full(n_cells, -1, np.int64)
    cells_x = cells_per_row(geometry)
    ctl = np.zeros(CTL_LEN, np.int64)
    ctl[CTL_THR_US] = cfg.ts_threshold_init_us
    weights = gaussian_weights(harris.gaussian_sigma)
    fixed_us = s_to_us(arcstar_prefilter_s)

    monitor = (
        ThroughputMonitor(expected=cfg.expected_throughput, message_size=message_size)
        if feedback
        else None
    )
    trace = [int(ctl[CTL_THR_US])]
    walls = np.empty(n_messages)
    charged = np.empty(n_messages, np.int64)

    for m in range(n_messages):
        i0 = m * message_size
        i1 = min(i0 + message_size, n)
        t_start = time.perf_counter() if timing == "wall" else 0.0
        if is_tlf:
            _tlf_chunk(
                events.u, events.v, events.pol, events.ts_us, i0, i1,
                gsae_ts, gsae_pol, epos, eneg, c_ts, c_tau,
                fmag, flast, cells_x, ctl,
                cfg.theta_flow, cfg.fast_motion_ts_us, cfg.k_step_us,
                cfg.ts_threshold_min_us, cfg.ts_threshold_max_us,
                cfg.lifetime_radius, cfg.n_recent, cfg.harris_threshold,
                stage, flow, thr_used, tau, scores,
            )
        elif kind is DetectorKind.EFAST:
            _efast_chunk(events.u, events.v, events.pol, events.ts_us, i0, i1, epos, eneg, stage)
        elif kind is DetectorKind.ARCSTAR:
            _arcstar_chunk(
                events.u, events.v, events.pol, events.ts_us, i0, i1,
                gsae_ts, gsae_pol, epos, eneg, fixed_us, stage,
            )
        else:
            _eharris_chunk(
                events.u, events.v, events.pol, events.ts_us, i0, i1,
                gsae_ts, cfg.n_recent, weights, harris.k, harris.score_threshold,
                stage, scores,
            )
        elapsed = time.perf_counter() - t_start if timing == "wall" else 0.0
        n_chunk = i1 - i0
        chunk_stage = stage[i0:i1]
        if kind in (DetectorKind.TLF_HARRIS, DetectorKind.ARCSTAR):
            n_charged = int(np.count_nonzero(chunk_stage >= 1))
        else:
            n_charged = n_chunk
        wall_t = elapsed + n_chunk * base_cost_s + n_charged * delays[m]
        walls[m] = wall_t
        charged[m] = n_charged
        if monitor is not None:
            monitor.record_message(n_chunk, wall_t)
            perf = monitor.performance_state()
            ctl[CTL_PERF] = _PERF_CODE[perf]
            ctl[CTL_PENDING] = 1 if perf is not PerformanceState.AT else 0
        trace.append(int(ctl[CTL_THR_US]))

    counters = _counters_from_stage(stage)
    total_wall = float(walls.sum())
    result = DetectionResult(
        kind=kind,
        counters=counters,
        corner_indices=np.flatnonzero(stage == STAGE_CORNER),
        stage=stage,
        flow=flow,
        thr_used_us=thr_used,
        tau_us=tau,
        scores=scores,
        threshold_trace_us=np.asarray(trace if is_tlf else trace[:1], np.int64),
        monitor_history=np.asarray(monitor.history if monitor else [], np.float64),
        message_walls=walls,
        charged_per_message=charged,
        mean_throughput=n / total_wall if total_wall > 0 else 0.0,
    )
    return result


@njit(cache=True)
def _harvest_chunk(u, v, ts, take, n_recent, gsae_ts, out):
    j = 0
    for i in range(u.shape[0]):
        uu = np.int64(u[i])
        vv = np.int64(v[i])
        tt = ts[i]
        if tt >= gsae_ts[vv, uu]:
            gsae_ts[vv, uu] = tt
        while j < take.shape[0] and take[j] == i:
            out[j] = _patch_bits(gsae_ts, uu, vv, n_recent)
            j += 1


def harvest_patches(
    events: EventArrays,
    geometry: SensorGeometry = SensorGeometry(),
    n_patches: int = 100_000,
    n_recent: int = 25,
    seed: int = 0,
) -> np.ndarray:
    """Capture 9x9 binary patches at sampled events of the all-events surface.

    Each sampled event contributes the patch seen right after its own write,
    so the patches reflect what a per-event scorer would consume. Only events
    at least 4 px inside the border are eligible (full windows); sampling
    falls back to replacement when the stream has fewer eligible events than
    requested. Deterministic for a fixed seed.
    """
    if n_patches <= 0:
        raise ValueError("n_patches must be positive")
    margin = PATCH_SIDE // 2
    eligible = np.flatnonzero(
        (events.u >= margin) & (events.u < geometry.width - margin)
        & (events.v >= margin) & (events.v < geometry.height - margin)
    )
    if eligible.size == 0:
        raise ValueError("no events far enough from the border to carry a full patch")
    rng = np.random.default_rng(seed)
    take = np.sort(rng.choice(eligible, size=n_patches, replace=eligible.size < n_patches))
    gsae_ts = np.full((geometry.height, geometry.width), UNSET_TS, np.int64)
    out = np.empty((n_patches, PATCH_SIDE, PATCH_SIDE), np.uint8)
    _harvest_chunk(events.u, events.v, events.ts_us, take, n_recent, gsae_ts, out)
    return out
