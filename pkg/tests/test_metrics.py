"""Reduction percentage and cylinder accuracy against a brute-force oracle.

The oracle below classifies every corner by looping over all tracks and
interpolating by hand (bisect + lerp), independent of the vectorized library
path. It is the reference for the exact-count comparisons.
"""
from __future__ import annotations

import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from evcorner.baselines import DetectorKind
from evcorner.events import Event, s_to_us
from evcorner.metrics import (
    CylinderParams,
    CylinderResult,
    DetectionRecord,
    cylinder_accuracy,
    reduction_percentage,
)
from evcorner.synth import GroundTruthTrack


def oracle_cylinder(corners, tracks, inner, outer):
    """All-pairs reference classifier. Returns (tec, fec, outside, beyond)."""
    tec = fec = outside = beyond = 0
    for rec in corners:
        e = rec.event if isinstance(rec, DetectionRecord) else rec
        best = None
        for tr in tracks:
            ts = tr.ts_us
            if not (ts[0] <= e.ts_us <= ts[-1]):
                continue
            if len(ts) == 1:
                ui, vi = float(tr.u[0]), float(tr.v[0])
            else:
                j = int(np.searchsorted(ts, e.ts_us, side="right")) - 1
                j = min(max(j, 0), len(ts) - 2)
                t0, t1 = float(ts[j]), float(ts[j + 1])
                frac = 0.0 if t1 == t0 else (e.ts_us - t0) / (t1 - t0)
                ui = float(tr.u[j]) + frac * (float(tr.u[j + 1]) - float(tr.u[j]))
                vi = float(tr.v[j]) + frac * (float(tr.v[j + 1]) - float(tr.v[j]))
            d = math.hypot(e.u - ui, e.v - vi)
            if best is None or d < best:
                best = d
        if best is None:
            outside += 1
        elif best <= inner:
            tec += 1
        elif best <= outer:
            fec += 1
        else:
            beyond += 1
    return tec, fec, outside, beyond


def make_track(track_id, t0_s, t1_s, n, u_fn, v_fn):
    ts = np.linspace(s_to_us(t0_s), s_to_us(t1_s), n).astype(np.int64)
    ts_s = ts / 1e6
    return GroundTruthTrack(
        track_id=track_id,
        ts_us=ts,
        u=np.array([u_fn(t) for t in ts_s]),
        v=np.array([v_fn(t) for t in ts_s]),
        inside=np.ones(n, bool),
    )


def random_fixture(rng, n_corners=200, n_tracks=6):
    tracks = []
    for i in range(n_tracks):
        t0 = rng.uniform(0.0, 0.5)
        t1 = t0 + rng.uniform(0.5, 2.0)
        n = rng.integers(2, 40)
        au, bu = rng.uniform(10, 200), rng.uniform(-30, 30)
        av, bv = rng.uniform(10, 150), rng.uniform(-30, 30)
        tracks.append(
            make_track(i, t0, t1, int(n), lambda t, a=au, b=bu: a + b * t, lambda t, a=av, b=bv: a + b * t)
        )
    corners = []
    for _ in range(n_corners):
        ts = rng.uniform(-0.2, 3.0)
        base = tracks[int(rng.integers(0, n_tracks))]
        # Bias positions near a track so all classification bands get hits.
        tu = float(np.interp(s_to_us(ts), base.ts_us, base.u))
        tv = float(np.interp(s_to_us(ts), base.ts_us, base.v))
        du, dv = rng.uniform(-8, 8), rng.uniform(-8, 8)
        corners.append(
            Event(int(round(tu + du)) % 240, int(round(tv + dv)) % 180, 1, s_to_us(max(ts, 0.0)))
        )
    return corners, tracks


class TestReductionPercentage:
    def test_table_scale_example(self):
        assert reduction_percentage(1_000_000, 9_400) == pytest.approx(99.06)

    def test_zero_detected_is_full_reduction(self):
        assert reduction_percentage(1000, 0) == 100.0

    def test_all_detected_is_zero_reduction(self):
        assert reduction_percentage(1000, 1000) == 0.0

    def test_zero_total_rejected(self):
        with pytest.raises(ValueError):
            reduction_percentage(0, 0)

    def test_detected_above_total_rejected(self):
        with pytest.raises(ValueError):
            reduction_percentage(10, 11)

    def test_negative_detected_rejected(self):
        with pytest.raises(ValueError):
            reduction_percentage(10, -1)


class TestCylinderParams:
    def test_defaults(self):
        p = CylinderParams()
        assert p.inner_radius == 3.0 and p.outer_radius == 5.0

    def test_inner_must_be_below_outer(self):
        with pytest.raises(ValueError):
            CylinderParams(inner_radius=5.0, outer_radius=3.0)
        with pytest.raises(ValueError):
            CylinderParams(inner_radius=0.0, outer_radius=5.0)


class TestCylinderAccuracy:
    def straight_track(self):
        return make_track(0, 0.0, 2.0, 21, lambda t: 50.0 + 25.0 * t, lambda t: 80.0)

    def test_corner_on_track_is_tec(self):
        tr = self.straight_track()
        r = cylinder_accuracy([Event(75, 80, 1, s_to_us(1.0))], [tr])
        assert (r.tec, r.fec) == (1, 0)
        assert r.accuracy == 1.0

    def test_corner_four_px_off_is_fec(self):
        tr = self.straight_track()
        r = cylinder_accuracy([Event(75, 84, 1, s_to_us(1.0))], [tr])
        assert (r.tec, r.fec) == (0, 1)
        assert r.accuracy == 0.0

    def test_boundary_distances_inclusive(self):
        tr = self.straight_track()
        at3 = cylinder_accuracy([Event(75, 83, 1, s_to_us(1.0))], [tr])
        at5 = cylinder_accuracy([Event(75, 85, 1, s_to_us(1.0))], [tr])
        past5 = cylinder_accuracy([Event(75, 86, 1, s_to_us(1.0))], [tr])
        assert (at3.tec, at3.fec) == (1, 0)
        assert (at5.tec, at5.fec) == (0, 1)
        assert (past5.tec, past5.fec) == (0, 0)
        assert past5.n_beyond_outer == 1

    def test_interpolation_between_samples(self):
        # Track sampled at 0.1 s steps; corner at 1.05 s sits at u = 76.25.
        tr = self.straight_track()
        r = cylinder_accuracy([Event(76, 80, 1, s_to_us(1.05))], [tr])
        assert (r.tec, r.fec) == (1, 0)

    def test_corner_outside_all_spans_diagnosed(self):
        tr = self.straight_track()
        r = cylinder_accuracy([Event(75, 80, 1, s_to_us(2.5))], [tr])
        assert (r.tec, r.fec) == (0, 0)
        assert r.n_outside_time == 1
        assert r.accuracy is None

    def test_empty_corner_list(self):
        r = cylinder_accuracy([], [self.straight_track()])
        assert r == CylinderResult(tec=0, fec=0, accuracy=None, n_outside_time=0, n_beyond_outer=0)

    def test_nearest_track_wins(self):
        near = self.straight_track()
        far = make_track(1, 0.0, 2.0, 21, lambda t: 50.0 + 25.0 * t, lambda t: 120.0)
        r = cylinder_accuracy([Event(75, 81, 1, s_to_us(1.0))], [near, far])
        assert (r.tec, r.fec) == (1, 0)

    def test_detection_records_accepted(self):
        tr = self.straight_track()
        rec = DetectionRecord(event=Event(75, 80, 1, s_to_us(1.0)), detector=DetectorKind.TLF_HARRIS)
        r = cylinder_accuracy([rec], [tr])
        assert r.tec == 1

    def test_matches_oracle_on_random_fixtures(self):
        p = CylinderParams()
        for seed in range(5):
            rng = np.random.default_rng(seed)
            corners, tracks = random_fixture(rng)
            got = cylinder_accuracy(corners, tracks, p)
            tec, fec, outside, beyond = oracle_cylinder(corners, tracks, p.inner_radius, p.outer_radius)
            assert (got.tec, got.fec, got.n_outside_time, got.n_beyond_outer) == (
                tec,
                fec,
                outside,
                beyond,
            ), f"seed {seed}"

    def test_accuracy_range_and_formula(self):
        rng = np.random.default_rng(7)
        corners, tracks = random_fixture(rng)
        r = cylinder_accuracy(corners, tracks)
        assert r.tec + r.fec > 0
        assert r.accuracy == pytest.approx(r.tec / (r.tec + r.fec))
        assert 0.0 <= r.accuracy <= 1.0

    @given(du=st.integers(-40, 40), dv=st.integers(-40, 40), seed=st.integers(0, 50))
    @settings(max_examples=25, deadline=None)
    def test_translation_invariance(self, du, dv, seed):
        rng = np.random.default_rng(seed)
        corners, tracks = random_fixture(rng, n_corners=60, n_tracks=3)
        base = cylinder_accuracy(corners, tracks)
        moved_corners = [Event(e.u + du + 100, e.v + dv + 100, e.pol, e.ts_us) for e in corners]
        moved_tracks = [
            GroundTruthTrack(t.track_id, t.ts_us, t.u + du + 100, t.v + dv + 100, t.inside)
            for t in tracks
        ]
        moved = cylinder_accuracy(moved_corners, moved_tracks)
        assert (base.tec, base.fec, base.n_outside_time, base.n_beyond_outer) == (
            moved.tec,
            moved.fec,
            moved.n_outside_time,
            moved.n_beyond_outer,
        )

    @given(inner=st.floats(0.5, 2.9), seed=st.integers(0, 50))
    @settings(max_examples=25, deadline=None)
    def test_shrinking_inner_radius_moves_tec_to_fec(self, inner, seed):
        rng = np.random.default_rng(seed)
        corners, tracks = random_fixture(rng, n_corners=60, n_tracks=3)
        base = cylinder_accuracy(corners, tracks)
        shrunk = cylinder_accuracy(corners, tracks, CylinderParams(inner_radius=inner, outer_radius=5.0))
        assert shrunk.tec <= base.tec
        assert shrunk.tec + shrunk.fec == base.tec + base.fec
