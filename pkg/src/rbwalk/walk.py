"""The random billiard walk and its discretization.

A run is determined by the deterministic cutting sequence ``i_1, i_2, ...``
and i.i.d. transmission bits ``eps_n`` (1 = pass through, 0 = reflect).  The
walk's alcove after ``n`` crossings is ``w_n = s_{i_1}^{eps_1} ... s_{i_n}^{eps_n}``
held exactly as ``(g, v)``; centroids and positions are derived from it, so
floating-point error never accumulates along a run.

The continuous walk is recovered by folding: if ``u_n`` is the alcove of the
unreflected ray after ``n`` crossings, the laser sits at ``w_n u_n^{-1}`` of
the ray point.  That isometry maps each face of the ray's alcove to the face
with the same label, which is why reflections never change the labels.
"""
from __future__ import annotations

import csv
import json
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable

import numpy as np

from .alcove import AffineIsometry, Geometry, geometry, locate_alcove
from .errors import DegenerateDirection, HorizonExceeded, RBWalkError
from .raytrace import TIE_TOL, CuttingSequence, hit_rate, trace
from .rng import RngStream

MAX_BATCH_CELLS = 20_000_000


def _geom(geom) -> Geometry:
    return geometry(geom) if isinstance(geom, str) else geom


def _unit(b) -> np.ndarray:
    b = np.asarray(b, dtype=float)
    return b / np.linalg.norm(b)


@dataclass(frozen=True)
class WalkConfig:
    """One walk: type, reflection probability, direction, start, seed."""

    type: str = "A2"
    p: float = 0.3
    b: tuple = (1.0, math.sqrt(2.0))
    L0: tuple | None = None
    seed: int = 0
    jitter: int | None = None

    def __post_init__(self):
        if not 0.0 <= self.p <= 1.0:
            raise ValueError("p must lie in [0, 1]")

    @property
    def geom(self) -> Geometry:
        return geometry(self.type)

    @property
    def direction(self) -> np.ndarray:
        return _unit(self.b)

    @property
    def start(self) -> np.ndarray:
        if self.L0 is None:
            return self.geom.frame.centroid.copy()
        return np.asarray(self.L0, dtype=float)

    def cutting(self, N: int) -> CuttingSequence:
        return trace(self.start, self.direction, N, self.geom, jitter=self.jitter)


@dataclass(frozen=True, eq=False)
class WalkState:
    """Alcove ``(g, v)`` of the walk plus the laser's position and heading."""

    geom: Geometry
    g: int
    v: tuple
    position: np.ndarray
    direction: np.ndarray
    n: int = 0
    rng_cursor: int = 0

    @property
    def w(self) -> AffineIsometry:
        return self.geom.tables.isometry(self.g, self.v)

    @property
    def centroid(self) -> np.ndarray:
        return self.w(self.geom.frame.centroid)

    @classmethod
    def start(cls, geom, L0, b) -> "WalkState":
        geom = _geom(geom)
        g, v = locate_alcove(geom.frame, geom.tables, L0)
        return cls(geom, g, v, np.asarray(L0, dtype=float), _unit(b))


def step_discrete(state: WalkState, i: int, rng: RngStream, p: float) -> WalkState:
    """Advance over one crossing of face ``i``; the bit is draw ``state.rng_cursor``."""
    geom = state.geom
    eps = bool(rng.transmissions(state.rng_cursor, 1, p)[0])
    g, v = state.g, state.v
    direction = state.direction
    if eps:
        g, v = geom.tables.step(g, v, i)
    else:
        rho = geom.tables.matrix(g)
        normal = rho @ geom.frame.wall_normals[i]
        normal = normal / np.linalg.norm(normal)
        direction = direction - 2.0 * (direction @ normal) * normal
    centroid = geom.tables.isometry(g, v)(geom.frame.centroid)
    return WalkState(geom, g, v, centroid, direction, state.n + 1, state.rng_cursor + 1)


@dataclass(frozen=True, eq=False)
class Trajectory:
    """A recorded run.

    ``points[n]`` is the state after ``n`` crossings (``n = 0`` is the start),
    ``times[n]`` its time.  ``labels[n-1]`` and ``eps[n-1]`` describe crossing
    ``n``.  Discrete runs record centroids; continuous and refraction runs
    record the laser's position at the crossing, with the final sample at the
    horizon ``T``.
    """

    mode: str
    times: np.ndarray
    points: np.ndarray
    labels: np.ndarray
    eps: np.ndarray
    g: np.ndarray | None = None
    v: np.ndarray | None = None
    directions: np.ndarray | None = None

    def __len__(self) -> int:
        return len(self.times)

    @property
    def n_crossings(self) -> int:
        return len(self.labels)

    def value(self, s: float) -> np.ndarray:
        """Linear interpolation of ``points`` in the time variable."""
        return np.array([np.interp(s, self.times, self.points[:, j]) for j in range(self.points.shape[1])])

    def to_csv(self, path) -> None:
        write_trajectory_csv(path, self)


def _eps_block(seed: int, streams, start: int, count: int, p: float) -> np.ndarray:
    out = np.empty((len(streams), count), dtype=bool)
    for r, s in enumerate(streams):
        out[r] = RngStream(seed, int(s)).transmissions(start, count, p)
    return out


def simulate_discrete(L0, b, p: float, N: int, rng: RngStream, geom="A2",
                      jitter: int | None = None, cutting: CuttingSequence | None = None) -> Trajectory:
    """Centroids ``X_0..X_N`` of the discretized walk."""
    g_ = _geom(geom)
    seq = cutting if cutting is not None else trace(L0, b, N, g_, jitter=jitter)
    labels = seq.labels[:N]
    eps = rng.transmissions(0, N, p)
    gs, vs = _fold_path(g_, seq.ray_g[0], seq.ray_v[0], labels, eps)
    pts = g_.centroids(gs, vs) if g_.tables.complete else np.array(
        [g_.tables.isometry(int(a), c)(g_.frame.centroid) for a, c in zip(gs, vs)])
    times = np.concatenate([[0.0], seq.times[:N]])
    return Trajectory("discrete", times, pts, labels.copy(), eps, gs, vs)


def _fold_path(g_: Geometry, g0: int, v0, labels, eps):
    """Exact alcoves ``w_0..w_N`` of one run."""
    N = len(labels)
    gs = np.empty(N + 1, dtype=np.int64)
    vs = np.empty((N + 1, g_.rank), dtype=np.int64)
    g, v = int(g0), tuple(int(x) for x in v0)
    gs[0], vs[0] = g, v
    step = g_.tables.step
    for n, (i, e) in enumerate(zip(labels.tolist(), eps.tolist())):
        if e:
            g, v = step(g, v, i)
        gs[n + 1] = g
        vs[n + 1] = v
    return gs, vs


def _compose_fold(g_: Geometry, gw, vw, gu, vu):
    """Linear and translation parts of ``w u^{-1}`` for stacked ``(g, v)`` pairs."""
    tables = g_.tables
    Rw = tables.matrices(gw)
    Ru = tables.matrices(gu)
    Q = g_.spec.coroot_basis
    tw = np.asarray(vw, dtype=float) @ Q.T
    tu = np.asarray(vu, dtype=float) @ Q.T
    lin = Rw @ np.swapaxes(Ru, -1, -2)
    trans = tw - np.einsum("...ij,...j->...i", lin, tu)
    return lin, trans


def simulate_continuous(L0, b, p: float, T: float, rng: RngStream, geom="A2",
                        jitter: int | None = None, with_discrete: bool = False):
    """The walk ``L_t`` on ``[0, T]``, sampled at every crossing and at ``T``.

    With ``with_discrete`` the coupled discrete trajectory (same bits) is
    returned as well.
    """
    g_ = _geom(geom)
    b = _unit(b)
    L0 = np.asarray(L0, dtype=float)
    k = hit_rate(b, g_.spec)
    N = int(math.ceil(k * T)) + 4 * g_.spec.n_positive + 8
    seq = trace(L0, b, N, g_, jitter=jitter)
    while seq.times[-1] <= T:
        N *= 2
        seq = trace(L0, b, N, g_, jitter=jitter)
    n_cross = int(np.searchsorted(seq.times, T, side="right"))
    labels = seq.labels[:n_cross]
    eps = rng.transmissions(0, n_cross, p)
    gw, vw = _fold_path(g_, seq.ray_g[0], seq.ray_v[0], labels, eps)
    gu, vu = seq.ray_g[: n_cross + 1], seq.ray_v[: n_cross + 1]
    lin, trans = _compose_fold(g_, gw, vw, gu, vu)
    times = np.concatenate([[0.0], seq.times[:n_cross], [T]])
    ray = L0[None, :] + times[:, None] * seq.b[None, :]
    # sample j uses the fold in force after crossing j (the last one after T)
    idx = np.concatenate([[0], np.arange(1, n_cross + 1), [n_cross]])
    pts = np.einsum("nij,nj->ni", lin[idx], ray) + trans[idx]
    dirs = lin[idx] @ seq.b
    traj = Trajectory("continuous", times, pts, labels.copy(), eps, gw[idx], vw[idx], dirs)
    if not with_discrete:
        return traj
    cents = g_.centroids(gw, vw) if g_.tables.complete else np.array(
        [g_.tables.isometry(int(a), c)(g_.frame.centroid) for a, c in zip(gw, vw)])
    disc = Trajectory("discrete", np.concatenate([[0.0], seq.times[:n_cross]]), cents,
                      labels.copy(), eps, gw, vw)
    return traj, disc


def coupling_distance(cont: Trajectory, disc: Trajectory, k_b: float) -> float:
    """``sup_{t <= T} |L_t - X_{floor(k_b t)}|`` for a coupled pair.

    ``L`` is piecewise linear and ``X_{floor(k_b t)}`` piecewise constant, so
    the supremum is attained at breakpoints of either (approached from both
    sides).
    """
    T = float(cont.times[-1])
    jumps = np.arange(1, int(math.floor(k_b * T)) + 1) / k_b
    ts = np.unique(np.concatenate([cont.times, jumps]))
    ts = ts[ts <= T]
    L = np.stack([np.interp(ts, cont.times, cont.points[:, j]) for j in range(cont.points.shape[1])], 1)
    n_max = len(disc.points) - 1
    best = 0.0
    for side in (0.0, 1.0):
        # left limits of the step function at each jump time
        n = np.floor(k_b * ts + 1e-12).astype(np.int64) - (side == 0.0) * (np.isin(ts, jumps))
        n = np.clip(n, 0, n_max)
        best = max(best, float(np.linalg.norm(L - disc.points[n], axis=1).max()))
    return best


def refract(direction: np.ndarray, normal: np.ndarray) -> np.ndarray:
    """Index -1 refraction: keep the normal component, negate the tangential one."""
    n = normal / np.linalg.norm(normal)
    return 2.0 * (direction @ n) * n - direction


def simulate_refraction(L0, b, p: float, T: float, rng: RngStream, geom="A2") -> Trajectory:
    """Refraction walk: at each wall the laser always enters the next alcove;
    with probability ``p`` its direction is refracted, otherwise kept.

    Exits are computed against the ``d+1`` walls of the current alcove,
    which is tracked exactly; the local position is snapped back onto the
    crossed wall after every step.
    """
    g_ = _geom(geom)
    frame, tables = g_.frame, g_.tables
    x = np.asarray(L0, dtype=float).copy()
    d_ = _unit(b)
    g, v = locate_alcove(frame, tables, x)
    normals = frame.wall_normals
    times, pts, labels, eps_l, dirs = [0.0], [x.copy()], [], [], [d_.copy()]
    t = 0.0
    cursor = 0
    block = np.empty(0, dtype=bool)
    block_start = 0
    while True:
        w = tables.isometry(g, v)
        R = w.linear
        y = R.T @ (x - w.translation)
        e = R.T @ d_
        vals = frame.walls(y)
        rates = normals @ e
        rates[0] = -rates[0]
        with np.errstate(divide="ignore", invalid="ignore"):
            tj = np.where(rates < 0, vals / -rates, np.inf)
        tj = np.maximum(tj, 0.0)
        order = np.argsort(tj)
        j = int(order[0])
        dt = float(tj[j])
        if len(order) > 1 and tj[order[1]] - dt < TIE_TOL * max(dt, 1e-300) and tj[order[1]] < np.inf:
            raise DegenerateDirection("refraction path hits a codimension-2 face")
        if t + dt > T:
            x = x + (T - t) * d_
            times.append(T)
            pts.append(x.copy())
            dirs.append(d_.copy())
            break
        t += dt
        # snap onto the crossed wall in local coordinates
        y = y + dt * e
        nj = normals[j]
        target = frame.wall_offsets[0] if j == 0 else 0.0
        y = y - (y @ nj - target) / (nj @ nj) * nj
        x = R @ y + w.translation
        if cursor - block_start >= block.size:
            block_start = cursor
            block = rng.transmissions(cursor, 4096, p)
        eps = bool(block[cursor - block_start])
        cursor += 1
        if not eps:
            d_ = refract(d_, R @ nj)
        g, v = tables.step(g, v, j)
        times.append(t)
        pts.append(x.copy())
        labels.append(j)
        eps_l.append(eps)
        dirs.append(d_.copy())
    return Trajectory("refraction", np.array(times), np.array(pts), np.array(labels, dtype=np.int64),
                      np.array(eps_l, dtype=bool), directions=np.array(dirs))


class RescaledPath:
    """``t -> n^{-1/2} value(n t)`` on ``[0, 1]``, linearly interpolated."""

    def __init__(self, traj: Trajectory, n: float, by: str = "index"):
        self.traj = traj
        self.n = float(n)
        self.by = by
        if by == "index":
            self._x = np.arange(len(traj.points), dtype=float)
        else:
            self._x = np.asarray(traj.times, dtype=float)
        if self._x[-1] < self.n:
            raise HorizonExceeded(f"trajectory horizon {self._x[-1]:g} < n = {self.n:g}")

    def __call__(self, t):
        t = np.asarray(t, dtype=float)
        s = self.n * t
        pts = self.traj.points
        out = np.stack([np.interp(s, self._x, pts[:, j]) for j in range(pts.shape[1])], -1)
        return out / math.sqrt(self.n)


def rescale(traj: Trajectory, n: float) -> RescaledPath:
    """Rescaled path; discrete runs use the step index as time, others use ``t``."""
    return RescaledPath(traj, n, "index" if traj.mode == "discrete" else "time")


# ----------------------------------------------------------------- batches

@dataclass
class BatchWalk:
    """Many runs sharing one cutting sequence, advanced in lockstep.

    Holds only the current alcoves ``(g, v)``; callers record what they need
    as the batch advances.  The bit for crossing ``n`` of run ``r`` is draw
    ``rng_start + n - 1`` of stream ``(seed, streams[r])``.
    """

    geom: Geometry
    labels: np.ndarray
    p: float
    seed: int
    streams: np.ndarray
    g: np.ndarray
    v: np.ndarray
    rng_start: int = 0
    n: int = 0
    _eps: np.ndarray = field(default=None, repr=False)
    _eps_from: int = 0

    @classmethod
    def create(cls, geom, labels, p, seed, streams, g0=None, v0=None, rng_start: int = 0) -> "BatchWalk":
        geom = _geom(geom)
        geom.require_group()
        streams = np.asarray(list(streams), dtype=np.int64)
        M = streams.size
        g = np.broadcast_to(np.asarray(0 if g0 is None else g0, dtype=np.int64), (M,)).copy()
        v = np.zeros((M, geom.rank), dtype=np.int64)
        if v0 is not None:
            v = np.broadcast_to(np.asarray(v0, dtype=np.int64), (M, geom.rank)).copy()
        return cls(geom, np.asarray(labels, dtype=np.int64), float(p), int(seed), streams, g, v, rng_start)

    @property
    def size(self) -> int:
        return self.streams.size

    def centroids(self) -> np.ndarray:
        return self.geom.centroids(self.g, self.v)

    def _bits(self, count: int) -> None:
        chunk = max(count, min(len(self.labels) - self.n, max(1, MAX_BATCH_CELLS // max(self.size, 1))))
        self._eps = _eps_block(self.seed, self.streams, self.rng_start + self.n, chunk, self.p)
        self._eps_from = self.n

    def step(self):
        """One crossing for every run; returns ``(label, eps, g_before)``."""
        if self.n >= len(self.labels):
            raise HorizonExceeded("cutting sequence exhausted")
        if self._eps is None or self.n - self._eps_from >= self._eps.shape[1]:
            self._bits(1)
        e = self._eps[:, self.n - self._eps_from]
        i = int(self.labels[self.n])
        g_old = self.g
        if i == 0:
            self.v = self.v + e[:, None] * self.geom.shift0_table[g_old]
        self.g = np.where(e, self.geom.right_table[g_old, i], g_old)
        self.n += 1
        return i, e, g_old

    def advance(self, steps: int) -> None:
        for _ in range(int(steps)):
            self.step()


def batched(streams, N: int, cells: int = MAX_BATCH_CELLS):
    """Split run indices into batches of at most ``cells / N`` runs."""
    streams = np.asarray(list(streams), dtype=np.int64)
    size = max(1, cells // max(int(N), 1))
    for lo in range(0, streams.size, size):
        yield streams[lo: lo + size]


def endpoints(geom, labels, p: float, seed: int, M: int, record, g0: int = 0, v0=None,
              stream_offset: int = 0, rng_start: int = 0) -> np.ndarray:
    """Centroids ``X_n`` at the crossing counts in ``record`` for runs ``0..M-1``.

    Returns an ``(M, len(record), d)`` array.
    """
    g_ = _geom(geom)
    record = np.asarray(record, dtype=np.int64)
    N = int(record.max())
    out = np.empty((M, record.size, g_.rank))
    want = {int(r): j for j, r in enumerate(record)}
    row = 0
    for batch in batched(np.arange(stream_offset, stream_offset + M), N):
        bw = BatchWalk.create(g_, labels[:N], p, seed, batch, g0, v0, rng_start)
        if 0 in want:
            out[row: row + batch.size, want[0]] = bw.centroids()
        for n in range(1, N + 1):
            bw.step()
            if n in want:
                out[row: row + batch.size, want[n]] = bw.centroids()
        row += batch.size
    return out


def continuous_positions(geom, seq: CuttingSequence, p: float, seed: int, M: int, times,
                         stream_offset: int = 0) -> np.ndarray:
    """Laser positions ``L_t`` for runs ``0..M-1``, as ``(M, n_times, d)``.

    ``times`` is either shared, shape ``(n_times,)``, or per run, shape
    ``(M, n_times)``.  Uses the fold ``L_t = w_n u_n^{-1}(L0 + t b)`` with
    ``n`` the number of crossings before ``t``; only the alcoves at those
    crossing counts are needed, so this runs on the batch engine.
    """
    g_ = _geom(geom)
    times = np.asarray(times, dtype=float)
    if times.max() > seq.times[-1]:
        raise HorizonExceeded("cutting sequence shorter than the requested horizon")
    times = np.broadcast_to(times, (M,) + times.shape[-1:])
    counts = np.searchsorted(seq.times, times, side="right")
    record = np.unique(np.concatenate([[0], counts.ravel()]))
    G = g_.require_group()
    gs, vs = _record_alcoves(g_, seq, p, seed, M, record, stream_offset)
    col = np.searchsorted(record, counts)
    rows = np.arange(M)[:, None]
    gw, vw = gs[rows, col], vs[rows, col]
    gu, vu = seq.ray_g[counts], seq.ray_v[counts]
    Q = g_.spec.coroot_basis
    y = seq.L0 + times[..., None] * seq.b
    local = np.einsum("mkji,mkj->mki", G.elements[gu], y - vu @ Q.T)
    return np.einsum("mkij,mkj->mki", G.elements[gw], local) + vw @ Q.T


def _record_alcoves(g_: Geometry, seq: CuttingSequence, p, seed, M, record, stream_offset=0):
    record = np.asarray(record, dtype=np.int64)
    N = int(record.max())
    gs = np.empty((M, record.size), dtype=np.int64)
    vs = np.empty((M, record.size, g_.rank), dtype=np.int64)
    want = {int(r): j for j, r in enumerate(record)}
    row = 0
    for batch in batched(np.arange(stream_offset, stream_offset + M), max(N, 1)):
        bw = BatchWalk.create(g_, seq.labels[:N], p, seed, batch, int(seq.ray_g[0]), seq.ray_v[0])
        sl = slice(row, row + batch.size)
        if 0 in want:
            gs[sl, want[0]], vs[sl, want[0]] = bw.g, bw.v
        for n in range(1, N + 1):
            bw.step()
            if n in want:
                gs[sl, want[n]], vs[sl, want[n]] = bw.g, bw.v
        row += batch.size
    return gs, vs


class EnsembleError(RBWalkError):
    def __init__(self, failures):
        self.failures = failures
        msg = "; ".join(f"run {r}: {e}" for r, e in failures[:5])
        super().__init__(f"{len(failures)} run(s) failed: {msg}")


def ensemble(config: WalkConfig, M: int, statistic: Callable, N: int | None = None,
             T: float | None = None, mode: str = "discrete", threads: int = 1) -> np.ndarray:
    """``statistic(trajectory)`` for runs on streams ``(seed, 0..M-1)``.

    Results come back in run order whatever the thread count.
    """
    if M < 1:
        raise ValueError("M must be >= 1")
    geom = config.geom
    L0, b = config.start, config.direction
    cut = config.cutting(N) if mode == "discrete" else None

    def one(r):
        rng = RngStream(config.seed, r)
        if mode == "discrete":
            traj = simulate_discrete(L0, b, config.p, N, rng, geom, cutting=cut)
        elif mode == "continuous":
            traj = simulate_continuous(L0, b, config.p, T, rng, geom, jitter=config.jitter)
        elif mode == "refraction":
            traj = simulate_refraction(L0, b, config.p, T, rng, geom)
        else:
            raise ValueError(f"unknown mode {mode!r}")
        return statistic(traj)

    def guarded(r):
        try:
            return r, one(r), None
        except RBWalkError as exc:
            return r, None, exc

    if threads > 1:
        with ThreadPoolExecutor(threads) as pool:
            results = list(pool.map(guarded, range(M)))
    else:
        results = [guarded(r) for r in range(M)]
    failures = [(r, e) for r, _, e in results if e is not None]
    if failures:
        raise EnsembleError(failures)
    return np.asarray([val for _, val, _ in results])


def write_trajectory_csv(path, traj: Trajectory) -> None:
    """Rows ``n = 1..N`` (one per crossing): ``n,t,eps,label,x_1..x_d``."""
    if hasattr(path, "write"):
        _write_trajectory_rows(path, traj)
        return
    with open(Path(path), "w", newline="") as fh:
        _write_trajectory_rows(fh, traj)


def _write_trajectory_rows(fh, traj: Trajectory) -> None:
    d = traj.points.shape[1]
    w = csv.writer(fh, lineterminator="\n")
    w.writerow(["n", "t", "eps", "label"] + [f"x_{i + 1}" for i in range(d)])
    for n in range(1, traj.n_crossings + 1):
        w.writerow([n, repr(float(traj.times[n])), int(traj.eps[n - 1]), int(traj.labels[n - 1])]
                   + [repr(float(x)) for x in traj.points[n]])


def ensemble_summary(config: WalkConfig, values, runs: int, statistic: str,
                     N: int | None = None, T: float | None = None) -> dict:
    out = {"type": config.type, "p": config.p, "b": [float(x) for x in config.b],
           "L0": [float(x) for x in config.start], "runs": int(runs), "seed": int(config.seed),
           "statistic": statistic, "values": np.asarray(values).tolist()}
    if N is not None:
        out["N"] = int(N)
    if T is not None:
        out["T"] = float(T)
    return out


def write_ensemble_json(path, summary: dict) -> None:
    Path(path).write_text(json.dumps(summary, indent=2, sort_keys=True) + "\n")
