"""Quantitative evaluation of detector output.

Two measures: the reduction percentage (share of input events removed before
the corner report) and cylinder accuracy. The latter classifies each detected
corner by its Euclidean distance, at the corner's timestamp, to the nearest
interpolated ground-truth corner trajectory: a true event-corner inside the
inner cylinder (radius 3 px), a false event-corner inside the outer cylinder
(radius 5 px), and excluded from the accuracy denominator beyond that.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np

from .baselines import DetectorKind
from .events import Event, EventArrays
from .synth import GroundTruthTrack

CYLINDER_INNER_RADIUS = 3.0
CYLINDER_OUTER_RADIUS = 5.0


@dataclass(frozen=True)
class DetectionRecord:
    """One detected corner: the triggering event plus the detector that fired."""

    event: Event
    detector: DetectorKind


@dataclass(frozen=True)
class CylinderParams:
    inner_radius: float = CYLINDER_INNER_RADIUS
    outer_radius: float = CYLINDER_OUTER_RADIUS

    def __post_init__(self) -> None:
        if not (0.0 < self.inner_radius < self.outer_radius):
            raise ValueError(
                f"cylinder radii must satisfy 0 < inner < outer, got "
                f"{self.inner_radius}, {self.outer_radius}"
            )


@dataclass(frozen=True)
class CylinderResult:
    """Counts from the two-cylinder classification.

    accuracy is tec / (tec + fec), or None when nothing was classified.
    n_outside_time counts corners whose timestamp no track covers;
    n_beyond_outer counts corners farther than the outer radius from every
    covering track. Neither enters the accuracy denominator.
    """

    tec: int
    fec: int
    accuracy: float | None
    n_outside_time: int
    n_beyond_outer: int


def reduction_percentage(total_events: int, detected_corners: int) -> float:
    """Percentage of input events removed from the stream: 100 * (1 - corners/total)."""
    if total_events <= 0:
        raise ValueError(f"total_events must be positive, got {total_events}")
    if not (0 <= detected_corners <= total_events):
        raise ValueError(
            f"detected_corners must be in [0, total_events], got {detected_corners}"
        )
    return 100.0 * (1.0 - detected_corners / total_events)


def _corner_columns(
    corners: EventArrays | Iterable[DetectionRecord | Event],
) -> tuple[np.ndarray, ...]:
    if isinstance(corners, EventArrays):
        return (
            corners.u.astype(np.float64),
            corners.v.astype(np.float64),
            corners.ts_us,
        )
    us, vs, ts = [], [], []
    for rec in corners:
        e = rec.event if isinstance(rec, DetectionRecord) else rec
        us.append(e.u)
        vs.append(e.v)
        ts.append(e.ts_us)
    return (
        np.asarray(us, np.float64),
        np.asarray(vs, np.float64),
        np.asarray(ts, np.int64),
    )


def cylinder_accuracy(
    corners: EventArrays | Sequence[DetectionRecord | Event],
    tracks: Sequence[GroundTruthTrack],
    p: CylinderParams = CylinderParams(),
) -> CylinderResult:
    """Classify corners against ground-truth tracks with the two-cylinder rule.

    Every track covering the corner's timestamp is linearly interpolated to
    that instant; the nearest interpolated point decides the distance. Corners
    covered by no track are reported in n_outside_time.
    """
    if len(corners) == 0:
        return CylinderResult(0, 0, None, 0, 0)
    cu, cv, cts = _corner_columns(corners)
    n = len(cts)
    best_d2 = np.full(n, np.inf)
    covered = np.zeros(n, bool)
    for tr in tracks:
        ts = tr.ts_us
        mask = (cts >= ts[0]) & (cts <= ts[-1])
        if not mask.any():
            continue
        sel = cts[mask]
        iu = np.interp(sel, ts, tr.u)
        iv = np.interp(sel, ts, tr.v)
        d2 = (cu[mask] - iu) ** 2 + (cv[mask] - iv) ** 2
        best_d2[mask] = np.minimum(best_d2[mask], d2)
        covered |= mask
    d = np.sqrt(best_d2[covered])
    tec = int(np.count_nonzero(d <= p.inner_radius))
    fec = int(np.count_nonzero((d > p.inner_radius) & (d <= p.outer_radius)))
    beyond = int(np.count_nonzero(d > p.outer_radius))
    outside = int(n - np.count_nonzero(covered))
    acc = tec / (tec + fec) if tec + fec > 0 else None
    return CylinderResult(
        tec=tec,
        fec=fec,
        accuracy=acc,
        n_outside_time=outside,
        n_beyond_outer=beyond,
    )
