"""Core event-camera types: events, sensor geometry, and surfaces of active events.

Timestamps are carried as int64 microseconds everywhere inside the library.
Integer time avoids equality-tolerance questions in the filter comparisons;
the file readers convert fractional-second text to microseconds exactly.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterator

import numpy as np
from numba import njit

US_PER_S = 1_000_000

# Sentinel for a pixel that has never fired. Orders below every real timestamp.
UNSET_TS = -1

MIN_SENSOR_SIDE = 9
DEFAULT_WIDTH = 240
DEFAULT_HEIGHT = 180

PATCH_SIDE = 9
PATCH_RECENT_DEFAULT = 25


def s_to_us(ts: float) -> int:
    """Convert seconds to integer microseconds (round to nearest)."""
    return int(round(ts * US_PER_S))


def us_to_s(ts_us: int) -> float:
    return ts_us / US_PER_S


@dataclass(frozen=True)
class SensorGeometry:
    """Pixel dimensions of the sensor. Both sides must be at least 9."""

    width: int = DEFAULT_WIDTH
    height: int = DEFAULT_HEIGHT

    def __post_init__(self) -> None:
        if self.width < MIN_SENSOR_SIDE or self.height < MIN_SENSOR_SIDE:
            raise ValueError(
                f"sensor must be at least {MIN_SENSOR_SIDE}x{MIN_SENSOR_SIDE}, "
                f"got {self.width}x{self.height}"
            )

    def contains(self, u: int, v: int) -> bool:
        return 0 <= u < self.width and 0 <= v < self.height


@dataclass(frozen=True)
class Event:
    """A single camera event: pixel, polarity (+1/-1), timestamp in microseconds."""

    u: int
    v: int
    pol: int
    ts_us: int

    def __post_init__(self) -> None:
        if self.pol not in (-1, 1):
            raise ValueError(f"polarity must be +1 or -1, got {self.pol}")
        if self.ts_us < 0:
            raise ValueError(f"timestamp must be non-negative, got {self.ts_us}")

    @property
    def ts(self) -> float:
        """Timestamp in seconds."""
        return self.ts_us / US_PER_S


@dataclass
class EventArrays:
    """Column-oriented event stream. The pipeline operates on these directly."""

    u: np.ndarray       # int32
    v: np.ndarray       # int32
    pol: np.ndarray     # int8, values -1/+1
    ts_us: np.ndarray   # int64, non-decreasing

    def __post_init__(self) -> None:
        n = len(self.ts_us)
        if not (len(self.u) == len(self.v) == len(self.pol) == n):
            raise ValueError("event columns must have equal length")

    def __len__(self) -> int:
        return len(self.ts_us)

    def event(self, i: int) -> Event:
        return Event(int(self.u[i]), int(self.v[i]), int(self.pol[i]), int(self.ts_us[i]))

    def iter_events(self) -> Iterator[Event]:
        for i in range(len(self)):
            yield self.event(i)

    @staticmethod
    def empty() -> "EventArrays":
        return EventArrays(
            u=np.empty(0, np.int32),
            v=np.empty(0, np.int32),
            pol=np.empty(0, np.int8),
            ts_us=np.empty(0, np.int64),
        )

    @staticmethod
    def from_events(events: list[Event]) -> "EventArrays":
        return EventArrays(
            u=np.array([e.u for e in events], np.int32),
            v=np.array([e.v for e in events], np.int32),
            pol=np.array([e.pol for e in events], np.int8),
            ts_us=np.array([e.ts_us for e in events], np.int64),
        )

    def validate(self, geometry: SensorGeometry) -> None:
        """Raise ValueError on out-of-bounds pixels, bad polarity, or unsorted ts."""
        if len(self) == 0:
            return
        if self.ts_us[0] < 0:
            raise ValueError("negative timestamp in event stream")
        if np.any(np.diff(self.ts_us) < 0):
            i = int(np.argmax(np.diff(self.ts_us) < 0))
            raise ValueError(f"timestamps not non-decreasing at index {i + 1}")
        for name, col, hi in (("u", self.u, geometry.width), ("v", self.v, geometry.height)):
            bad = (col < 0) | (col >= hi)
            if np.any(bad):
                i = int(np.argmax(bad))
                raise ValueError(f"{name}={col[i]} out of bounds at index {i}")
        badp = (self.pol != 1) & (self.pol != -1)
        if np.any(badp):
            i = int(np.argmax(badp))
            raise ValueError(f"polarity {self.pol[i]} at index {i} is not +1/-1")


# Circle of radius 3 around a pixel: the 16 ring offsets (du, dv), clockwise
# starting at 12 o'clock in image coordinates (v grows downward).
CIRCLE_OFFSETS_R3 = np.array(
    [
        (0, -3), (1, -3), (2, -2), (3, -1),
        (3, 0), (3, 1), (2, 2), (1, 3),
        (0, 3), (-1, 3), (-2, 2), (-3, 1),
        (-3, 0), (-3, -1), (-2, -2), (-1, -3),
    ],
    dtype=np.int64,
)

# Circle of radius 4: the 20 ring offsets, same ordering convention.
CIRCLE_OFFSETS_R4 = np.array(
    [
        (0, -4), (1, -4), (2, -3), (3, -2), (4, -1),
        (4, 0), (4, 1), (3, 2), (2, 3), (1, 4),
        (0, 4), (-1, 4), (-2, 3), (-3, 2), (-4, 1),
        (-4, 0), (-4, -1), (-3, -2), (-2, -3), (-1, -4),
    ],
    dtype=np.int64,
)

CIRCLE_RADII = {3: CIRCLE_OFFSETS_R3, 4: CIRCLE_OFFSETS_R4}


class SaeMap:
    """Surface of active events: per-pixel timestamp of the latest event.

    One writer at a time; use copy() to share a snapshot across threads.
    Optionally tracks the polarity of the latest event per pixel (0 = never fired).
    """

    def __init__(self, geometry: SensorGeometry, track_polarity: bool = False):
        self.geometry = geometry
        self.ts = np.full((geometry.height, geometry.width), UNSET_TS, dtype=np.int64)
        self.pol = np.zeros((geometry.height, geometry.width), dtype=np.int8) if track_polarity else None

    def _check_bounds(self, u: int, v: int) -> None:
        if not self.geometry.contains(u, v):
            raise ValueError(f"pixel ({u},{v}) outside {self.geometry.width}x{self.geometry.height}")

    def update(self, u: int, v: int, ts_us: int, pol: int = 0) -> bool:
        """Write the event into the surface.

        Returns False (surface unchanged) for an out-of-order timestamp, so a
        stored timestamp never decreases. Out-of-bounds pixels raise.
        """
        self._check_bounds(u, v)
        if ts_us < self.ts[v, u]:
            return False
        self.ts[v, u] = ts_us
        if self.pol is not None and pol != 0:
            self.pol[v, u] = pol
        return True

    def ts_at(self, u: int, v: int) -> int:
        self._check_bounds(u, v)
        return int(self.ts[v, u])

    def pol_at(self, u: int, v: int) -> int:
        if self.pol is None:
            raise ValueError("this surface does not track polarity")
        self._check_bounds(u, v)
        return int(self.pol[v, u])

    def fired(self, u: int, v: int) -> bool:
        return self.ts_at(u, v) != UNSET_TS

    def copy(self) -> "SaeMap":
        out = SaeMap(self.geometry, track_polarity=self.pol is not None)
        out.ts[:] = self.ts
        if self.pol is not None:
            out.pol[:] = self.pol
        return out


class CornerSae(SaeMap):
    """Corner-candidate surface with per-entry lifetime bookkeeping (microseconds)."""

    def __init__(self, geometry: SensorGeometry):
        super().__init__(geometry, track_polarity=False)
        self.tau = np.zeros((geometry.height, geometry.width), dtype=np.int64)

    def set_entry(self, u: int, v: int, ts_us: int, tau_us: int) -> None:
        self._check_bounds(u, v)
        self.ts[v, u] = ts_us
        self.tau[v, u] = tau_us

    def clear_entry(self, u: int, v: int) -> None:
        self._check_bounds(u, v)
        self.ts[v, u] = UNSET_TS
        self.tau[v, u] = 0

    def entry_at(self, u: int, v: int) -> tuple[int, int]:
        self._check_bounds(u, v)
        return int(self.ts[v, u]), int(self.tau[v, u])

    def copy(self) -> "CornerSae":
        out = CornerSae(self.geometry)
        out.ts[:] = self.ts
        out.tau[:] = self.tau
        return out


@dataclass
class SaeFamily:
    """The four surfaces the detection pipeline maintains.

    g_sae sees every event (timestamp + polarity); the two polarity surfaces
    only receive events that pass the timestamp filter; c_sae holds corner
    candidates admitted by the lifetime filter.
    """

    g_sae: SaeMap
    esae_pos: SaeMap
    esae_neg: SaeMap
    c_sae: CornerSae

    @staticmethod
    def create(geometry: SensorGeometry) -> "SaeFamily":
        return SaeFamily(
            g_sae=SaeMap(geometry, track_polarity=True),
            esae_pos=SaeMap(geometry),
            esae_neg=SaeMap(geometry),
            c_sae=CornerSae(geometry),
        )

    def esae_for(self, pol: int) -> SaeMap:
        return self.esae_pos if pol > 0 else self.esae_neg


@dataclass(frozen=True)
class BinaryPatch:
    """9x9 binary mask of the most recent events around a center pixel."""

    bits: np.ndarray  # uint8, shape (9, 9)
    center: tuple[int, int]


@njit(cache=True)
def _patch_bits(ts_map, u, v, n):
    # Top-n most recent fired pixels of the 9x9 window; row-major order breaks ties.
    bits = np.zeros((PATCH_SIDE, PATCH_SIDE), np.uint8)
    vals = np.full(PATCH_SIDE * PATCH_SIDE, -1, np.int64)
    h, w = ts_map.shape
    for dy in range(-4, 5):
        y = v + dy
        for dx in range(-4, 5):
            x = u + dx
            if 0 <= x < w and 0 <= y < h:
                vals[(dy + 4) * PATCH_SIDE + (dx + 4)] = ts_map[y, x]
    taken = 0
    while taken < n:
        best = -1
        best_ts = np.int64(-1)
        for i in range(PATCH_SIDE * PATCH_SIDE):
            if vals[i] > best_ts:  # strict: earliest row-major index wins ties
                best_ts = vals[i]
                best = i
        if best < 0:
            break  # fewer than n fired pixels: set all of them and stop
        bits[best // PATCH_SIDE, best % PATCH_SIDE] = 1
        vals[best] = -2
        taken += 1
    return bits


@njit(cache=True)
def _gather_ring(ts_map, u, v, offsets):
    # Ring timestamps in offset-table order; out-of-sensor reads as the sentinel.
    out = np.empty(offsets.shape[0], np.int64)
    h, w = ts_map.shape
    for i in range(offsets.shape[0]):
        x = u + offsets[i, 0]
        y = v + offsets[i, 1]
        if 0 <= x < w and 0 <= y < h:
            out[i] = ts_map[y, x]
        else:
            out[i] = -1
    return out


def sae_update(sae: SaeMap, e: Event) -> bool:
    """Apply an event to a surface. Stale events leave the surface unchanged."""
    return sae.update(e.u, e.v, e.ts_us, e.pol)


def extract_binary_patch(sae: SaeMap, center: tuple[int, int], n: int = PATCH_RECENT_DEFAULT) -> BinaryPatch:
    """Binary 9x9 patch of the n most recent fired pixels around center.

    If fewer than n pixels in the window have fired, all fired pixels are set.
    After the center pixel receives an event, its bit is always 1 (it is the
    most recent by construction).
    """
    u, v = center
    if not sae.geometry.contains(u, v):
        raise ValueError(f"center ({u},{v}) outside sensor")
    if n < 1:
        raise ValueError("n must be positive")
    return BinaryPatch(bits=_patch_bits(sae.ts, u, v, n), center=(u, v))


def extract_circle(
    sae: SaeMap, center: tuple[int, int], radius: int
) -> list[tuple[tuple[int, int], int]]:
    """Ring timestamps around center for radius 3 (16 pixels) or 4 (20 pixels).

    Returns ((du, dv), ts_us) pairs in clockwise order starting at 12 o'clock;
    pixels outside the sensor read as the unset sentinel.
    """
    if radius not in CIRCLE_RADII:
        raise ValueError(f"supported radii are {sorted(CIRCLE_RADII)}, got {radius}")
    u, v = center
    if not sae.geometry.contains(u, v):
        raise ValueError(f"center ({u},{v}) outside sensor")
    offsets = CIRCLE_RADII[radius]
    ts = _gather_ring(sae.ts, u, v, offsets)
    return [((int(offsets[i, 0]), int(offsets[i, 1])), int(ts[i])) for i in range(len(offsets))]
