from __future__ import annotations

import csv
import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from rbwalk.alcove import geometry
from rbwalk.errors import DegenerateDirection
from rbwalk.raytrace import (classify_direction, crossing_times, decode_window, first_return, hit_rate,
                             lattice_equal, mod_coroot_lattice, next_crossing, trace, window_codes,
                             window_frequencies, window_frequencies_from_labels, write_events_csv)

SQRT2 = math.sqrt(2.0)
B_IRR = np.array([1.0, SQRT2]) / math.sqrt(3.0)


@pytest.fixture(scope="module")
def a2():
    return geometry("A2")


def test_crossing_rate_matches_hit_rate(a2):
    seq = trace(a2.frame.centroid, B_IRR, 20_000, a2)
    k_b = hit_rate(B_IRR, a2.spec)
    # the count up to time t differs from k_b t by at most one per root family
    assert abs(len(seq) - k_b * seq.times[-1]) <= a2.spec.n_positive
    assert np.all(np.diff(seq.times) > 0)


def test_crossing_points_lie_on_their_hyperplanes(a2):
    seq = trace(a2.frame.centroid, B_IRR, 500, a2)
    heights = np.einsum("nd,nd->n", seq.points(), a2.spec.roots[seq.alpha])
    assert np.allclose(heights, seq.k, atol=1e-9)


def test_labels_match_the_ray_alcoves(a2):
    seq = trace(a2.frame.centroid, B_IRR, 300, a2)
    for n in range(300):
        g, v = a2.tables.step(int(seq.ray_g[n]), tuple(seq.ray_v[n]), int(seq.labels[n]))
        assert g == seq.ray_g[n + 1] and tuple(v) == tuple(seq.ray_v[n + 1])


def test_rational_direction_is_periodic(a2):
    seq = trace(a2.frame.centroid + np.array([1e-3, 2e-3]), (0.0, 1.0), 60, a2)
    assert np.array_equal(seq.labels[:3], [0, 1, 2])
    assert np.array_equal(seq.labels[3:], seq.labels[:-3])


def test_codimension_two_hit_raises_and_jitter_recovers(a2):
    with pytest.raises(DegenerateDirection):
        trace(a2.frame.centroid, (1.0, 0.0), 10, a2)
    seq = trace(a2.frame.centroid, (1.0, 0.0), 10, a2, jitter=1)
    assert len(seq) == 10


def test_jitter_is_deterministic(a2):
    s1 = trace(a2.frame.centroid, (1.0, 0.0), 50, a2, jitter=3)
    s2 = trace(a2.frame.centroid, (1.0, 0.0), 50, a2, jitter=3)
    assert np.array_equal(s1.labels, s2.labels) and np.array_equal(s1.times, s2.times)


@given(st.integers(0, 5), st.lists(st.integers(-5, 5), min_size=2, max_size=2))
def test_labels_invariant_under_affine_weyl_group(g, v):
    geom = geometry("A2")
    iso = geom.tables.isometry(g, v)
    L0 = geom.frame.centroid + np.array([0.01, -0.02])
    ref = trace(L0, B_IRR, 300, geom).labels
    moved = trace(iso(L0), iso.linear @ B_IRR, 300, geom).labels
    assert np.array_equal(ref, moved)


@given(st.integers(0, 11), st.lists(st.integers(-3, 3), min_size=2, max_size=2))
def test_labels_invariant_g2(g, v):
    geom = geometry("G2")
    iso = geom.tables.isometry(g, v)
    ref = trace(geom.frame.centroid, B_IRR, 200, geom).labels
    assert np.array_equal(ref, trace(iso(geom.frame.centroid), iso.linear @ B_IRR, 200, geom).labels)


def test_next_crossing_agrees_with_trace(a2):
    x = a2.frame.centroid + np.array([0.02, 0.01])
    ev = next_crossing(x, B_IRR, a2)
    seq = trace(x, B_IRR, 1, a2)
    assert math.isclose(ev.t, seq.times[0]) and ev.label == seq.labels[0]


def test_crossing_times_sorted_and_counted(a2):
    t, alpha, k = crossing_times(a2.spec, a2.frame.centroid, B_IRR, 1000)[:3]
    assert len(t) == 1000 and np.all(np.diff(t) >= 0)


@given(st.lists(st.integers(0, 3), min_size=1, max_size=6))
def test_window_code_roundtrip(pattern):
    labels = np.asarray(pattern, dtype=np.int64)
    w = len(pattern)
    code = int(window_codes(labels, w, 4)[0])
    assert decode_window(code, w, 4) == tuple(pattern)


def test_window_frequencies_sum_to_one_and_equidistribute(a2):
    f0 = window_frequencies(a2.frame.centroid, B_IRR, 3, 200_000, 0, a2)
    f1 = window_frequencies(a2.frame.centroid, B_IRR, 3, 200_000, 500_000, a2)
    assert math.isclose(sum(f0.frequencies.values()), 1.0)
    keys = set(f0.frequencies) | set(f1.frequencies)
    assert max(abs(f0.frequency(k) - f1.frequency(k)) for k in keys) < 5e-3


def test_window_frequencies_from_labels_counts():
    tab = window_frequencies_from_labels(np.array([0, 1, 0, 1, 0]), 2, base=2)
    assert tab.total == 4
    assert tab.frequency((0, 1)) == 0.5 and tab.frequency((1, 0)) == 0.5


def test_first_return_time_and_parity(a2):
    alpha = a2.spec.roots[0]
    x = alpha / (alpha @ alpha) * 2.0 + np.array([-alpha[1], alpha[0]]) * 0.123
    fr = first_return(0, 0, x, B_IRR, a2)
    assert math.isclose(fr.time, 2.0 / abs(B_IRR @ alpha))
    assert math.isclose(fr.point @ alpha, x @ alpha + 2.0 * np.sign(B_IRR @ alpha))
    assert abs(fr.crossings - fr.time * hit_rate(B_IRR, a2.spec)) <= a2.spec.n_positive


def test_lattice_helpers(a2):
    Q = a2.spec.coroot_basis
    x = np.array([0.3, 0.1])
    assert lattice_equal(x, x + Q @ np.array([2, -3]), a2.spec)
    assert not lattice_equal(x, x + 0.5 * Q[:, 0], a2.spec)
    f = mod_coroot_lattice(x + Q @ np.array([4, 1]), a2.spec)
    assert np.allclose(f, mod_coroot_lattice(x, a2.spec))
    assert np.all((f >= 0) & (f < 1))


def test_classify_direction():
    a2, a3 = geometry("A2").spec, geometry("A3").spec
    assert classify_direction((0.0, 1.0), a2)[0] == "rational"
    assert classify_direction((1.0, SQRT2), a2)[0] == "fully_irrational"
    b = a3.coroot_basis @ np.array([1.0, SQRT2, 1.0 + SQRT2])
    assert classify_direction(b, a3)[0] == "intermediate"
    assert classify_direction((1.0,), geometry("A1").spec)[0] == "rational"


def test_events_csv(tmp_path, a2):
    seq = trace(a2.frame.centroid, B_IRR, 25, a2)
    path = tmp_path / "events.csv"
    write_events_csv(path, seq)
    rows = list(csv.reader(open(path)))
    assert rows[0] == ["n", "t", "alpha", "k", "label", "x_1", "x_2"]
    assert len(rows) == 26
    assert [int(r[4]) for r in rows[1:]] == seq.labels.tolist()
