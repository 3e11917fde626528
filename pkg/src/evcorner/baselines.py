"""Per-event corner detectors used as comparison baselines.

Two arc detectors and one patch detector, all operating on timestamp
surfaces:

- fast-arc: the event is a corner iff the newest timestamps on the radius-3
  circle form one contiguous arc of length 3..6 that is strictly newer than
  the remaining circle pixels, and the radius-4 circle agrees with an arc of
  length 4..8.
- extended-arc: same idea, but the dominant run may also be the complement
  of a corner wake, so the admissible lengths are 3..6 or 10..13 on the inner
  circle and 4..8 or 12..16 on the outer circle. The stream runner puts a
  fixed-threshold timestamp filter in front of this detector.
- patch-harris: the full Harris response of the binary patch of most recent
  events around the pixel, computed on the all-events surface for every
  incoming event.

A dominant arc of length L exists iff the top-L timestamps are pairwise
strictly newer than the rest and their circle positions form a single
circular run, so the check sorts once and tests each admissible length.
"""
from __future__ import annotations

from enum import Enum

import numpy as np
from numba import njit

from .events import (
    CIRCLE_OFFSETS_R3,
    CIRCLE_OFFSETS_R4,
    Event,
    SaeMap,
    _gather_ring,
    _patch_bits,
)
from .scoring import HarrisParams, ScoreResult, _harris_response, gaussian_weights

ARC_BORDER_MARGIN = 4  # radius-4 circle and 9x9 patch both need 4 pixels

EFAST_INNER = (3, 6)
EFAST_OUTER = (4, 8)
ARCSTAR_INNER_COMPLEMENT = (10, 13)
ARCSTAR_OUTER_COMPLEMENT = (12, 16)


class DetectorKind(Enum):
    TLF_HARRIS = "tlf-harris"
    EFAST = "efast"
    ARCSTAR = "arcstar"
    EHARRIS = "eharris"

    @classmethod
    def from_name(cls, name: str) -> "DetectorKind":
        key = name.strip().lower().replace("_", "-").replace("*", "star")
        aliases = {
            "tlf": cls.TLF_HARRIS,
            "tlf-harris": cls.TLF_HARRIS,
            "efast": cls.EFAST,
            "e-fast": cls.EFAST,
            "arcstar": cls.ARCSTAR,
            "arc-star": cls.ARCSTAR,
            "eharris": cls.EHARRIS,
            "e-harris": cls.EHARRIS,
        }
        try:
            return aliases[key]
        except KeyError:
            raise ValueError(
                f"unknown detector {name!r}; expected one of "
                f"{sorted(set(a for a in aliases))}"
            ) from None


@njit(cache=True)
def _has_dominant_arc(ring, lo, hi):
    """True iff some L in [lo, hi] has a strictly dominant contiguous arc.

    Dominance means every arc timestamp beats every non-arc timestamp, so
    ties across the boundary and arcs touching unset pixels never qualify.
    """
    n = ring.shape[0]
    idx = np.argsort(ring)  # ascending
    marked = np.zeros(n, np.uint8)
    for k in range(lo - 1):
        marked[idx[n - 1 - k]] = 1
    for length in range(lo, hi + 1):
        marked[idx[n - length]] = 1
        if ring[idx[n - length]] <= ring[idx[n - length - 1]]:
            continue
        starts = 0
        for p in range(n):
            prev = n - 1 if p == 0 else p - 1
            if marked[p] == 1 and marked[prev] == 0:
                starts += 1
        if starts == 1:
            return True
    return False


@njit(cache=True)
def _inside_margin(u, v, w, h):
    return (
        u >= ARC_BORDER_MARGIN
        and v >= ARC_BORDER_MARGIN
        and u < w - ARC_BORDER_MARGIN
        and v < h - ARC_BORDER_MARGIN
    )


@njit(cache=True)
def _efast_verdict(esae_ts, u, v):
    h, w = esae_ts.shape
    if not _inside_margin(u, v, w, h):
        return False
    inner = _gather_ring(esae_ts, u, v, CIRCLE_OFFSETS_R3)
    if not _has_dominant_arc(inner, EFAST_INNER[0], EFAST_INNER[1]):
        return False
    outer = _gather_ring(esae_ts, u, v, CIRCLE_OFFSETS_R4)
    return _has_dominant_arc(outer, EFAST_OUTER[0], EFAST_OUTER[1])


@njit(cache=True)
def _arcstar_verdict(esae_ts, u, v):
    h, w = esae_ts.shape
    if not _inside_margin(u, v, w, h):
        return False
    inner = _gather_ring(esae_ts, u, v, CIRCLE_OFFSETS_R3)
    if not (
        _has_dominant_arc(inner, EFAST_INNER[0], EFAST_INNER[1])
        or _has_dominant_arc(inner, ARCSTAR_INNER_COMPLEMENT[0], ARCSTAR_INNER_COMPLEMENT[1])
    ):
        return False
    outer = _gather_ring(esae_ts, u, v, CIRCLE_OFFSETS_R4)
    return _has_dominant_arc(outer, EFAST_OUTER[0], EFAST_OUTER[1]) or _has_dominant_arc(
        outer, ARCSTAR_OUTER_COMPLEMENT[0], ARCSTAR_OUTER_COMPLEMENT[1]
    )


@njit(cache=True)
def _eharris_verdict(gsae_ts, u, v, n_recent, weights, k, threshold):
    h, w = gsae_ts.shape
    if not _inside_margin(u, v, w, h):
        return False, 0.0
    bits = _patch_bits(gsae_ts, u, v, n_recent)
    score = _harris_response(bits, weights, k)
    return score > threshold, score


def efast_detect(esae: SaeMap, e: Event) -> bool:
    """Dual-circle arc verdict on the polarity surface.

    Call after the event has been written to the surface; the center pixel is
    not on either circle, so the verdict does not depend on the order.
    """
    if not esae.geometry.contains(e.u, e.v):
        raise ValueError(f"event at ({e.u},{e.v}) outside sensor")
    return bool(_efast_verdict(esae.ts, e.u, e.v))


def arcstar_detect(esae: SaeMap, e: Event) -> bool:
    """Arc verdict that also admits complement-of-wake runs."""
    if not esae.geometry.contains(e.u, e.v):
        raise ValueError(f"event at ({e.u},{e.v}) outside sensor")
    return bool(_arcstar_verdict(esae.ts, e.u, e.v))


def eharris_detect(gsae: SaeMap, e: Event, params: HarrisParams, n_recent: int = 25) -> ScoreResult:
    """Full Harris response of the all-events binary patch at the event."""
    if not gsae.geometry.contains(e.u, e.v):
        raise ValueError(f"event at ({e.u},{e.v}) outside sensor")
    weights = gaussian_weights(params.gaussian_sigma)
    is_corner, score = _eharris_verdict(
        gsae.ts, e.u, e.v, n_recent, weights, params.k, params.score_threshold
    )
    return ScoreResult(score=float(score), is_corner=bool(is_corner))
