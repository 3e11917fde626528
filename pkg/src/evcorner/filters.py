"""The three event filters that precede corner scoring.

Layer 1, timestamp filter: discards same-polarity events that arrive within a
dynamic per-stream threshold of the pixel's previous event. The threshold is
raised or lowered by throughput feedback and overridden to a fixed small value
inside fast-moving flow cells. The all-events surface is refreshed by every
event, pass or discard; the polarity surfaces only see passing events.

Layer 2, plus filter: a spatial test on the radius-3 circle. The circle
timestamps are sampled at clockwise offsets {2, 6, 10, 14} from the newest
circle pixel, one per quadrant between the anchor axes. The event is a
candidate iff exactly one sample is separated from the other three on the
recent side: the gap below the newest sorted sample strictly dominates the
other two gaps. A moving corner sweeps a quarter-plane wedge whose newest
pixels sit at the wedge ends, so anchoring at the newest pixel puts exactly
one sample inside the wedge and three on the stale far side. A straight edge
splits the samples 2-2 (dominant middle gap) or leaves a uniform timestamp
gradient (equal gaps); both are rejected, as is the mirrored stale-outlier
pattern produced by a partially swept edge.

Layer 3, lifetime filter: suppresses candidates that fall inside the
space-time exclusion region of an earlier stored candidate (Manhattan radius
<= 8, time window = the stored entry's lifetime tau). Tau is the largest
non-negative timestamp step from the candidate to its 8-connected neighbors
on the polarity surface.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from numba import njit

from .control import HYSTERESIS_DEFAULT, PerformanceState, classify_throughput
from .events import (
    CIRCLE_OFFSETS_R3,
    US_PER_S,
    CornerSae,
    Event,
    SaeFamily,
    SaeMap,
    SensorGeometry,
    s_to_us,
)
from .flow import CELL_SIDE, FIT_DEGENERATE, FIT_INSUFFICIENT, FlowGrid, _cell_ema, _plane_flow, update_flow

# Plus-filter geometry: full radius-3 circle support plus the 9x9 patch downstream.
PLUS_BORDER_MARGIN = 4

# Sampled clockwise offsets from the newest circle pixel.
PLUS_GAMMA = (2, 6, 10, 14)

LIFETIME_RADIUS_DEFAULT = 8

# Indices into the mutable controller scalar array used by the compiled steps.
CTL_THR_US = 0        # current timestamp threshold, us
CTL_PENDING = 1       # 1 while a monitor update still owes its one adjustment
CTL_PERF = 2          # 0 at, 1 under, 2 over
CTL_FAST_N = 3        # events that used the fast-motion override
CTL_DEGEN = 4         # degenerate plane fits
CTL_INSUF = 5         # undersampled plane fits
CTL_LEN = 6

PERF_AT = 0
PERF_UNDER = 1
PERF_OVER = 2


@dataclass(frozen=True)
class PipelineConfig:
    """Tunables of the filtering pipeline. Times in seconds, rates in px/s or ev/s."""

    k_step: float = 0.005
    ts_threshold_init: float = 0.05
    ts_threshold_bounds: tuple[float, float] = (0.001, 5.0)
    fast_motion_ts: float = 0.01
    theta_flow: float = 300.0
    expected_throughput: float = 300_000.0
    lifetime_radius: int = LIFETIME_RADIUS_DEFAULT
    n_recent: int = 25
    harris_threshold: float = 290.0  # final-stage low-complexity score threshold

    def __post_init__(self) -> None:
        lo, hi = self.ts_threshold_bounds
        if not (0 < lo <= hi):
            raise ValueError(f"threshold bounds must be ordered and positive, got {self.ts_threshold_bounds}")
        if not (lo <= self.ts_threshold_init <= hi):
            raise ValueError("ts_threshold_init outside bounds")
        for name in ("k_step", "fast_motion_ts", "theta_flow", "expected_throughput"):
            if getattr(self, name) <= 0:
                raise ValueError(f"{name} must be positive")
        if self.lifetime_radius < 1 or self.n_recent < 1:
            raise ValueError("lifetime_radius and n_recent must be positive")

    # Internal microsecond forms used by the compiled kernels.
    @property
    def k_step_us(self) -> int:
        return s_to_us(self.k_step)

    @property
    def ts_threshold_init_us(self) -> int:
        return s_to_us(self.ts_threshold_init)

    @property
    def ts_threshold_min_us(self) -> int:
        return s_to_us(self.ts_threshold_bounds[0])

    @property
    def ts_threshold_max_us(self) -> int:
        return s_to_us(self.ts_threshold_bounds[1])

    @property
    def fast_motion_ts_us(self) -> int:
        return s_to_us(self.fast_motion_ts)


@dataclass
class StageCounters:
    events_in: int = 0
    passed_l1: int = 0
    passed_l2: int = 0
    passed_l3: int = 0
    corners: int = 0

    def as_tuple(self) -> tuple[int, int, int, int, int]:
        return (self.events_in, self.passed_l1, self.passed_l2, self.passed_l3, self.corners)

    def check_monotone(self) -> None:
        t = self.as_tuple()
        if not (t[0] >= t[1] >= t[2] >= t[3] >= t[4]):
            raise AssertionError(f"layer counters not monotone: {t}")


@dataclass
class PipelineState:
    """Mutable per-stream state: surfaces, flow grid, the dynamic threshold, counters."""

    geometry: SensorGeometry
    config: PipelineConfig
    sae: SaeFamily = field(init=False)
    flow: FlowGrid = field(init=False)
    ts_threshold_us: int = field(init=False)
    counters: StageCounters = field(init=False, default_factory=StageCounters)

    def __post_init__(self) -> None:
        self.sae = SaeFamily.create(self.geometry)
        self.flow = FlowGrid(self.geometry)
        self.ts_threshold_us = self.config.ts_threshold_init_us

    @property
    def ts_threshold(self) -> float:
        """Current dynamic threshold in seconds."""
        return self.ts_threshold_us / US_PER_S

    def _clamp_threshold(self) -> None:
        self.ts_threshold_us = min(
            max(self.ts_threshold_us, self.config.ts_threshold_min_us),
            self.config.ts_threshold_max_us,
        )


@njit(cache=True)
def _clamp_i64(x, lo, hi):
    if x < lo:
        return lo
    if x > hi:
        return hi
    return x


@njit(cache=True)
def _timestamp_step(
    u, v, pol, ts,
    gsae_ts, gsae_pol, esae_ts,
    fmag, flast, cells_x,
    ctl,
    theta_flow, fast_us, k_us, min_us, max_us,
    adjust_per_call,
):
    """One Alg.-1 step. Returns (passed, flow_value, threshold_used).

    flow_value is -1.0 and threshold_used is -1 on the polarity-change branch,
    where neither is consulted.
    """
    old_pol = gsae_pol[v, u]
    old_ts = gsae_ts[v, u]
    passed = False
    flow_value = -1.0
    thr_used = np.int64(-1)
    if old_pol == 0 or old_pol != pol:
        passed = True
    else:
        est, status = _plane_flow(esae_ts, u, v)
        if status == FIT_DEGENERATE:
            ctl[CTL_DEGEN] += 1
        elif status == FIT_INSUFFICIENT:
            ctl[CTL_INSUF] += 1
        cell = (u // CELL_SIDE) + (v // CELL_SIDE) * cells_x
        flow_value = _cell_ema(fmag, flast, cell, est, ts)
        if flow_value > theta_flow:
            ctl[CTL_THR_US] = _clamp_i64(fast_us, min_us, max_us)
            ctl[CTL_FAST_N] += 1
        elif adjust_per_call or ctl[CTL_PENDING] == 1:
            if ctl[CTL_PERF] == PERF_UNDER:
                ctl[CTL_THR_US] = _clamp_i64(ctl[CTL_THR_US] + k_us, min_us, max_us)
            elif ctl[CTL_PERF] == PERF_OVER:
                ctl[CTL_THR_US] = _clamp_i64(ctl[CTL_THR_US] - k_us, min_us, max_us)
            ctl[CTL_PENDING] = 0
        thr_used = ctl[CTL_THR_US]
        passed = ts > old_ts + thr_used
    # The all-events surface sees every event, pass or discard.
    if ts >= gsae_ts[v, u]:
        gsae_ts[v, u] = ts
        gsae_pol[v, u] = pol
    if passed and ts >= esae_ts[v, u]:
        esae_ts[v, u] = ts
    return passed, flow_value, thr_used


@njit(cache=True)
def _plus_verdict(ring):
    """Candidate verdict from the 16 clockwise ring timestamps."""
    nidx = 0
    nts = ring[0]
    for i in range(1, 16):
        if ring[i] > nts:
            nts = ring[i]
            nidx = i
    if nts < 0:
        return False  # untouched circle
    s = np.empty(4, np.int64)
    for j in range(4):
        s[j] = ring[(nidx + 2 + 4 * j) % 16]
    for a in range(1, 4):
        key = s[a]
        b = a - 1
        while b >= 0 and s[b] < key:
            s[b + 1] = s[b]
            b -= 1
        s[b + 1] = key
    g1 = s[0] - s[1]
    g2 = s[1] - s[2]
    g3 = s[2] - s[3]
    return g1 > g2 and g1 > g3


@njit(cache=True)
def _plus_step(esae_ts, u, v):
    h, w = esae_ts.shape
    if (
        u < PLUS_BORDER_MARGIN
        or v < PLUS_BORDER_MARGIN
        or u >= w - PLUS_BORDER_MARGIN
        or v >= h - PLUS_BORDER_MARGIN
    ):
        return False
    ring = np.empty(16, np.int64)
    for i in range(16):
        x = u + CIRCLE_OFFSETS_R3[i, 0]
        y = v + CIRCLE_OFFSETS_R3[i, 1]
        ring[i] = esae_ts[y, x]
    return _plus_verdict(ring)


@njit(cache=True)
def _lifetime_step(c_ts, c_tau, esae_ts, u, v, ts, radius):
    """One Alg.-2 step against the corner surface. Returns (passed, tau)."""
    h, w = c_ts.shape
    # Discard while any stored candidate within the Manhattan window is alive.
    for dy in range(-radius, radius + 1):
        y = v + dy
        if y < 0 or y >= h:
            continue
        rem = radius - (dy if dy >= 0 else -dy)
        for dx in range(-rem, rem + 1):
            x = u + dx
            if x < 0 or x >= w:
                continue
            t0 = c_ts[y, x]
            if t0 >= 0 and ts <= t0 + c_tau[y, x]:
                return False, np.int64(0)
    # Every remaining entry in the window has expired; drop them.
    for dy in range(-radius, radius + 1):
        y = v + dy
        if y < 0 or y >= h:
            continue
        rem = radius - (dy if dy >= 0 else -dy)
        for dx in range(-rem, rem + 1):
            x = u + dx
            if x < 0 or x >= w:
                continue
            if c_ts[y, x] >= 0:
                c_ts[y, x] = -1
                c_tau[y, x] = 0
    # Lifetime: largest non-negative timestamp step to an 8-connected neighbor.
    tau = np.int64(0)
    for dy in range(-1, 2):
        y = v + dy
        if y < 0 or y >= h:
            continue
        for dx in range(-1, 2):
            if dx == 0 and dy == 0:
                continue
            x = u + dx
            if x < 0 or x >= w:
                continue
            tn = esae_ts[y, x]
            if 0 <= tn <= ts:
                d = ts - tn
                if d > tau:
                    tau = d
    c_ts[v, u] = ts
    c_tau[v, u] = tau
    return True, tau


def timestamp_filter(
    state: PipelineState,
    cfg: PipelineConfig,
    e: Event,
    throughput_now: float | None = None,
) -> bool:
    """Layer-1 verdict for one event, adjusting the dynamic threshold in place.

    The polarity-change rule passes unconditionally. Otherwise the event's flow
    cell is refreshed; fast motion pins the threshold to fast_motion_ts, else
    throughput_now moves it one K step (under-performing raises, over-performing
    lowers, inside the hysteresis band leaves it alone). This per-event form
    applies the adjustment on every call; the stream runner instead applies at
    most one adjustment per monitor update.
    """
    if not state.geometry.contains(e.u, e.v):
        raise ValueError(f"event at ({e.u},{e.v}) outside sensor")
    state.counters.events_in += 1
    g = state.sae.g_sae
    esae = state.sae.esae_for(e.pol)
    old_pol = g.pol[e.v, e.u]
    old_ts = g.ts[e.v, e.u]
    if old_pol == 0 or old_pol != e.pol:
        passed = True
    else:
        flow_value = update_flow(state.flow, esae, e)
        if flow_value > cfg.theta_flow:
            state.ts_threshold_us = cfg.fast_motion_ts_us
            state._clamp_threshold()
        elif throughput_now is not None:
            perf = classify_throughput(throughput_now, cfg.expected_throughput, HYSTERESIS_DEFAULT)
            if perf is PerformanceState.UNDER:
                state.ts_threshold_us += cfg.k_step_us
            elif perf is PerformanceState.OVER:
                state.ts_threshold_us -= cfg.k_step_us
            state._clamp_threshold()
        passed = e.ts_us > old_ts + state.ts_threshold_us
    g.update(e.u, e.v, e.ts_us, e.pol)
    if passed:
        esae.update(e.u, e.v, e.ts_us)
        state.counters.passed_l1 += 1
    return passed


def plus_filter(esae: SaeMap, e: Event) -> bool:
    """Layer-2 verdict: spatial plus-filter on the polarity surface.

    Events within 4 pixels of the border are rejected (incomplete circle).
    """
    if not esae.geometry.contains(e.u, e.v):
        raise ValueError(f"event at ({e.u},{e.v}) outside sensor")
    return bool(_plus_step(esae.ts, e.u, e.v))


def lifetime_filter(c_sae: CornerSae, cfg: PipelineConfig, candidate: Event, esae: SaeMap) -> bool:
    """Layer-3 verdict: admit the candidate unless a stored neighbor is still alive.

    On admission all expired entries in the window are dropped and the
    candidate is stored with its freshly computed lifetime.
    """
    if not c_sae.geometry.contains(candidate.u, candidate.v):
        raise ValueError(f"candidate at ({candidate.u},{candidate.v}) outside sensor")
    passed, _tau = _lifetime_step(
        c_sae.ts, c_sae.tau, esae.ts, candidate.u, candidate.v, candidate.ts_us, cfg.lifetime_radius
    )
    return bool(passed)
