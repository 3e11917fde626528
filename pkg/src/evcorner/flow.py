"""Per-cell optical flow magnitude from local plane fits on a polarity surface.

The sensor is tiled into 20x20 cells. Each event refreshes its cell with the
magnitude from a least-squares plane fit ts = a*u + b*v + c over the fired
pixels of its 5x5 neighborhood; the cell keeps an exponential moving average.
Flow magnitude is 1/|grad t| in px/s: 0 for flat, degenerate, or undersampled
fits (degenerate fits are counted, not silently dropped).
"""
from __future__ import annotations

from dataclasses import dataclass, field
import math

import numpy as np
from numba import njit

from .events import US_PER_S, Event, SaeMap, SensorGeometry

CELL_SIDE = 20
EMA_ALPHA = 0.3
# Slope guard: 1e-6 s/px expressed in us/px. Shallower gradients report magnitude 0.
SLOPE_EPS_US = 1.0

FIT_OK = 0
FIT_INSUFFICIENT = 1
FIT_DEGENERATE = 2

_MIN_SUPPORT = 5


def cells_per_row(geometry: SensorGeometry) -> int:
    return -(-geometry.width // CELL_SIDE)


def cells_per_col(geometry: SensorGeometry) -> int:
    return -(-geometry.height // CELL_SIDE)


def batch_of(geometry: SensorGeometry, u: int, v: int) -> int:
    """Flow-cell index of a pixel: row-major over ceil(w/20) x ceil(h/20) cells."""
    if not geometry.contains(u, v):
        raise ValueError(f"pixel ({u},{v}) outside sensor")
    return (u // CELL_SIDE) + (v // CELL_SIDE) * cells_per_row(geometry)


@njit(cache=True)
def _plane_flow(ts_map, u, v):
    """Plane-fit flow magnitude at (u, v). Returns (magnitude px/s, status)."""
    h, w = ts_map.shape
    # Reference timestamp keeps the normal equations well conditioned.
    tref = ts_map[v, u]
    if tref < 0:
        tref = 0
    n = 0.0
    su = 0.0
    sv = 0.0
    st = 0.0
    suu = 0.0
    svv = 0.0
    suv = 0.0
    sut = 0.0
    svt = 0.0
    for dy in range(-2, 3):
        y = v + dy
        if y < 0 or y >= h:
            continue
        for dx in range(-2, 3):
            x = u + dx
            if x < 0 or x >= w:
                continue
            t = ts_map[y, x]
            if t < 0:
                continue
            tt = float(t - tref)
            fx = float(dx)
            fy = float(dy)
            n += 1.0
            su += fx
            sv += fy
            st += tt
            suu += fx * fx
            svv += fy * fy
            suv += fx * fy
            sut += fx * tt
            svt += fy * tt
    if n < _MIN_SUPPORT:
        return 0.0, FIT_INSUFFICIENT
    # Solve the 3x3 normal equations by cofactor expansion. All position sums are
    # integers, so an exactly singular system has |det| < 0.5.
    m00, m01, m02 = suu, suv, su
    m10, m11, m12 = suv, svv, sv
    m20, m21, m22 = su, sv, n
    det = (
        m00 * (m11 * m22 - m12 * m21)
        - m01 * (m10 * m22 - m12 * m20)
        + m02 * (m10 * m21 - m11 * m20)
    )
    if abs(det) < 0.5:
        return 0.0, FIT_DEGENERATE
    a = (
        sut * (m11 * m22 - m12 * m21)
        - m01 * (svt * m22 - m12 * st)
        + m02 * (svt * m21 - m11 * st)
    ) / det
    b = (
        m00 * (svt * m22 - m12 * st)
        - sut * (m10 * m22 - m12 * m20)
        + m02 * (m10 * st - svt * m20)
    ) / det
    slope = math.sqrt(a * a + b * b)  # us/px
    if slope <= SLOPE_EPS_US:
        return 0.0, FIT_OK
    return US_PER_S / slope, FIT_OK


@njit(cache=True)
def _cell_ema(mag, last_ts, cell, est, ts_us):
    # First sample initializes the cell; later samples blend with alpha = 0.3.
    if last_ts[cell] < 0:
        mag[cell] = est
    else:
        mag[cell] = EMA_ALPHA * est + (1.0 - EMA_ALPHA) * mag[cell]
    last_ts[cell] = ts_us
    return mag[cell]


@dataclass
class FlowGrid:
    """EMA flow magnitude per 20x20 cell, plus fit diagnostics."""

    geometry: SensorGeometry
    mag: np.ndarray = field(init=False)       # float64 per cell, px/s
    last_ts: np.ndarray = field(init=False)   # int64 per cell, last refresh (us), -1 = never
    degenerate_fits: int = field(init=False, default=0)
    insufficient_fits: int = field(init=False, default=0)

    def __post_init__(self) -> None:
        n = cells_per_row(self.geometry) * cells_per_col(self.geometry)
        self.mag = np.zeros(n, np.float64)
        self.last_ts = np.full(n, -1, np.int64)

    @property
    def n_cells(self) -> int:
        return len(self.mag)

    def magnitude_at(self, u: int, v: int) -> float:
        return float(self.mag[batch_of(self.geometry, u, v)])


def update_flow(grid: FlowGrid, sae: SaeMap, e: Event) -> float:
    """Refresh the cell containing e from a plane fit around it; return the cell value."""
    est, status = _plane_flow(sae.ts, e.u, e.v)
    if status == FIT_DEGENERATE:
        grid.degenerate_fits += 1
    elif status == FIT_INSUFFICIENT:
        grid.insufficient_fits += 1
    cell = batch_of(grid.geometry, e.u, e.v)
    return float(_cell_ema(grid.mag, grid.last_ts, cell, est, e.ts_us))
