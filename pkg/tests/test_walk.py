from __future__ import annotations

import csv
import io
import itertools
import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from rbwalk.alcove import geometry
from rbwalk.errors import HorizonExceeded
from rbwalk.raytrace import hit_rate, trace
from rbwalk.rng import RngStream
from rbwalk.walk import (BatchWalk, WalkConfig, WalkState, continuous_positions, coupling_distance, endpoints,
                         ensemble, refract, rescale, simulate_continuous, simulate_discrete,
                         simulate_refraction, step_discrete, write_trajectory_csv)

B_IRR = (1.0 / math.sqrt(3.0), math.sqrt(2.0 / 3.0))


class FixedBits:
    """Stand-in stream that replays a given transmission pattern."""

    def __init__(self, bits):
        self.bits = np.asarray(bits, dtype=bool)

    def transmissions(self, start, count, p):
        return self.bits[start: start + count]


@pytest.fixture(scope="module")
def a2():
    return geometry("A2")


def test_always_transmit_follows_the_ray(a2):
    L0 = a2.frame.centroid
    seq = trace(L0, B_IRR, 200, a2)
    tr = simulate_discrete(L0, B_IRR, 0.0, 200, RngStream(0, 0), a2)
    assert np.array_equal(tr.g, seq.ray_g) and np.array_equal(tr.v, seq.ray_v)
    cont = simulate_continuous(L0, B_IRR, 0.0, 30.0, RngStream(0, 0), a2)
    assert np.allclose(cont.points, L0 + cont.times[:, None] * np.asarray(B_IRR), atol=1e-9)


def test_always_reflect_stays_home(a2):
    tr = simulate_discrete(a2.frame.centroid, B_IRR, 1.0, 100, RngStream(1, 0), a2)
    assert np.allclose(tr.points, a2.frame.centroid)
    cont = simulate_continuous(a2.frame.centroid, B_IRR, 1.0, 50.0, RngStream(1, 0), a2)
    assert all(a2.frame.contains(x, tol=1e-9) for x in cont.points)


def test_same_seed_same_path_different_seed_same_labels(a2):
    t1 = simulate_discrete(a2.frame.centroid, B_IRR, 0.3, 300, RngStream(5, 2), a2)
    t2 = simulate_discrete(a2.frame.centroid, B_IRR, 0.3, 300, RngStream(5, 2), a2)
    t3 = simulate_discrete(a2.frame.centroid, B_IRR, 0.3, 300, RngStream(6, 2), a2)
    assert np.array_equal(t1.points, t2.points)
    assert np.array_equal(t1.labels, t3.labels)
    assert not np.array_equal(t1.eps, t3.eps)


def test_step_discrete_matches_simulation(a2):
    rng = RngStream(9, 0)
    tr = simulate_discrete(a2.frame.centroid, B_IRR, 0.4, 60, rng, a2)
    state = WalkState.start(a2, a2.frame.centroid, B_IRR)
    for n in range(60):
        state = step_discrete(state, int(tr.labels[n]), rng, 0.4)
        assert np.allclose(state.centroid, tr.points[n + 1])


@given(st.integers(0, 2**31 - 1), st.floats(0.05, 0.95))
def test_batch_engine_matches_single_runs(seed, p):
    geom = geometry("A2")
    seq = trace(geom.frame.centroid, B_IRR, 120, geom)
    X = endpoints(geom, seq.labels, p, seed, 3, [0, 60, 120], int(seq.ray_g[0]), seq.ray_v[0])
    for r in range(3):
        tr = simulate_discrete(geom.frame.centroid, B_IRR, p, 120, RngStream(seed, r), geom, cutting=seq)
        assert np.allclose(X[r], tr.points[[0, 60, 120]])


def test_batch_walk_step_reports_labels(a2):
    seq = trace(a2.frame.centroid, B_IRR, 50, a2)
    bw = BatchWalk.create(a2, seq.labels, 0.3, 0, np.arange(4), int(seq.ray_g[0]), seq.ray_v[0])
    for n in range(50):
        label, eps, _ = bw.step()
        assert label == seq.labels[n] and eps.shape == (4,)


def test_continuous_batch_matches_single_runs(a2):
    seq = trace(a2.frame.centroid, B_IRR, 400, a2)
    times = np.array([0.0, 3.3, 17.0, 40.0])
    L = continuous_positions(a2, seq, 0.3, 11, 4, times)
    for r in range(4):
        cont = simulate_continuous(a2.frame.centroid, B_IRR, 0.3, 40.0, RngStream(11, r), a2)
        assert np.allclose(L[r], np.stack([cont.value(t) for t in times]), atol=1e-9)


def test_continuous_path_is_continuous_and_unit_speed(a2):
    cont = simulate_continuous(a2.frame.centroid, B_IRR, 0.3, 60.0, RngStream(2, 0), a2)
    seg = np.linalg.norm(np.diff(cont.points, axis=0), axis=1)
    assert np.allclose(seg, np.diff(cont.times), atol=1e-9)
    assert np.allclose(np.linalg.norm(cont.directions, axis=1), 1.0)


@pytest.mark.parametrize("name", ["A2", "B2", "G2"])
def test_coupling_bound(name):
    geom = geometry(name)
    b = np.asarray(B_IRR)
    k_b = hit_rate(b, geom.spec)
    for r in range(5):
        cont, disc = simulate_continuous(geom.frame.centroid, b, 0.3, 150.0, RngStream(4, r), geom,
                                         with_discrete=True)
        assert coupling_distance(cont, disc, k_b) <= 2.0 * geom.frame.diameter


def test_refract_is_reflection_through_the_normal_line():
    d = np.array([0.6, 0.8])
    n = np.array([0.0, 2.0])
    out = refract(d, n)
    assert np.allclose(out, [-0.6, 0.8])
    assert math.isclose(np.linalg.norm(out), 1.0)


def test_refraction_mode(a2):
    tr = simulate_refraction(a2.frame.centroid, B_IRR, 0.3, 50.0, RngStream(3, 0), a2)
    assert math.isclose(tr.times[-1], 50.0)
    assert np.allclose(np.linalg.norm(tr.directions, axis=1), 1.0)
    seg = np.linalg.norm(np.diff(tr.points, axis=0), axis=1)
    assert np.allclose(seg, np.diff(tr.times), atol=1e-8)
    straight = simulate_refraction(a2.frame.centroid, B_IRR, 0.0, 20.0, RngStream(3, 0), a2)
    assert np.allclose(straight.points[-1], a2.frame.centroid + 20.0 * np.asarray(B_IRR), atol=1e-8)


def test_rescale(a2):
    tr = simulate_discrete(a2.frame.centroid, B_IRR, 0.3, 400, RngStream(0, 0), a2)
    path = rescale(tr, 400)
    assert np.allclose(path(1.0), tr.points[400] / 20.0)
    assert np.allclose(path(0.5), tr.points[200] / 20.0)
    with pytest.raises(HorizonExceeded):
        rescale(tr, 401)


def test_trajectory_csv_rows(a2):
    tr = simulate_discrete(a2.frame.centroid, B_IRR, 0.3, 30, RngStream(0, 0), a2)
    buf = io.StringIO()
    write_trajectory_csv(buf, tr)
    rows = list(csv.reader(io.StringIO(buf.getvalue())))
    assert rows[0] == ["n", "t", "eps", "label", "x_1", "x_2"]
    assert len(rows) == 31 and rows[1][0] == "1" and rows[-1][0] == "30"
    assert np.allclose([float(x) for x in rows[-1][4:]], tr.points[30])


def test_ensemble_independent_of_threads():
    cfg = WalkConfig("A2", 0.3, B_IRR, seed=8)
    a = ensemble(cfg, 12, lambda t: t.points[-1], N=200, threads=1)
    b = ensemble(cfg, 12, lambda t: t.points[-1], N=200, threads=4)
    assert np.array_equal(a, b)


def _a1_second_moment(p: float, N: int) -> float:
    """Exact E[(X_N - X_0)^2] in A1 by enumerating every transmission pattern."""
    geom = geometry("A1")
    seq = trace(geom.frame.centroid, (1.0,), N, geom)
    total = 0.0
    for bits in itertools.product((False, True), repeat=N):
        w = math.prod((1 - p) if e else p for e in bits)
        tr = simulate_discrete(geom.frame.centroid, (1.0,), p, N, FixedBits(bits), geom, cutting=seq)
        total += w * float(tr.points[-1, 0] - tr.points[0, 0]) ** 2
    return total


@pytest.mark.parametrize("p", [0.3, 0.5, 0.7])
def test_a1_enumeration_slope_is_closed_form(p):
    slope = _a1_second_moment(p, 13) - _a1_second_moment(p, 12)
    assert abs(slope - (1 - p) / p) < 1e-3


def test_a1_fair_coin_is_exact():
    # at p = 1/2 the offset is exactly -1/2
    assert math.isclose(_a1_second_moment(0.5, 10), 10 - 0.5, abs_tol=1e-12)


def test_a1_enumeration_matches_monte_carlo():
    geom = geometry("A1")
    seq = trace(geom.frame.centroid, (1.0,), 12, geom)
    X = endpoints(geom, seq.labels, 0.3, 21, 200_000, [12], int(seq.ray_g[0]), seq.ray_v[0])
    sq = (X[:, 0, 0] - geom.frame.centroid[0]) ** 2
    exact = _a1_second_moment(0.3, 12)
    assert abs(sq.mean() - exact) < 4.0 * sq.std() / math.sqrt(sq.size)
