"""Straight-line dynamics through the Coxeter arrangement.

The unreflected ray ``L0 + t b`` crosses the hyperplanes ``x.alpha = k`` of
each positive root at the arithmetic sequence of times ``(k - L0.alpha) /
(b.alpha)``; merging these sequences gives every crossing time directly from
``L0``, so no error accumulates along the ray.  Face labels are read off by
pulling each hyperplane back through the exact alcove element ``(g, v)``.
"""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from fractions import Fraction
from pathlib import Path

import numpy as np

from .alcove import Geometry, geometry, locate_alcove
from .errors import DegenerateDirection
from .roots import RootSystemSpec

TIE_TOL = 1e-9
DEFAULT_MAX_WINDOW = 8


def _geom(geom) -> Geometry:
    return geometry(geom) if isinstance(geom, str) else geom


def _unit(b) -> np.ndarray:
    b = np.asarray(b, dtype=float)
    n = np.linalg.norm(b)
    if n == 0.0:
        raise ValueError("direction must be nonzero")
    return b / n


@dataclass(frozen=True)
class CuttingEvent:
    t: float
    alpha_index: int
    k: int
    label: int
    point: np.ndarray


@dataclass(frozen=True, eq=False)
class CuttingSequence:
    """First ``N`` crossings of the unreflected ray.

    ``ray_g[n], ray_v[n]`` locate the alcove containing the ray after ``n``
    crossings (``n = 0`` is the starting alcove).
    """

    L0: np.ndarray
    b: np.ndarray
    times: np.ndarray
    alpha: np.ndarray
    k: np.ndarray
    labels: np.ndarray
    ray_g: np.ndarray
    ray_v: np.ndarray

    def __len__(self) -> int:
        return len(self.labels)

    def points(self) -> np.ndarray:
        return self.L0[None, :] + self.times[:, None] * self.b[None, :]

    def event(self, n: int) -> CuttingEvent:
        """The ``n``-th crossing, 1-based as in ``i_1, i_2, ...``."""
        j = n - 1
        return CuttingEvent(float(self.times[j]), int(self.alpha[j]), int(self.k[j]),
                            int(self.labels[j]), self.L0 + self.times[j] * self.b)


def hit_rate(b, spec: RootSystemSpec) -> float:
    """Hyperplane crossings per unit time of a ray with unit direction ``b``.

    Counts ``sum_{alpha > 0} |b . alpha|``.  With unit-length roots this equals
    ``(1/4) sum_{alpha in Phi} |b . alpha^vee|``; the two differ on the short
    roots of multiply-laced types, where only the first is a crossing rate.
    """
    b = _unit(b)
    return float(np.abs(spec.positive_roots @ b).sum())


def coroot_hit_rate(b, spec: RootSystemSpec) -> float:
    """``(1/4) sum_{alpha in Phi} |b . alpha^vee|``."""
    b = _unit(b)
    return 0.25 * float(np.abs(spec.coroots @ b).sum())


class _CrossingStream:
    """Merged crossing times of all positive-root families, generated in windows."""

    def __init__(self, spec: RootSystemSpec, L0, b):
        self.x = spec.positive_roots @ L0
        self.s = spec.positive_roots @ b
        self.active = np.flatnonzero(self.s != 0.0)
        s = self.s
        nxt = np.where(s > 0, np.floor(self.x) + 1, np.ceil(self.x) - 1)
        self.next_k = nxt.astype(np.int64)
        self.rate = float(np.abs(s).sum())
        self.t = 0.0

    def window(self, t_end: float):
        ts, als, ks = [], [], []
        for a in self.active:
            sa, xa, k0 = self.s[a], self.x[a], int(self.next_k[a])
            if sa > 0:
                kmax = math.floor(xa + t_end * sa)
                if kmax < k0:
                    continue
                kk = np.arange(k0, kmax + 1, dtype=np.int64)
                self.next_k[a] = kmax + 1
            else:
                kmin = math.ceil(xa + t_end * sa)
                if kmin > k0:
                    continue
                kk = np.arange(k0, kmin - 1, -1, dtype=np.int64)
                self.next_k[a] = kmin - 1
            ts.append((kk - xa) / sa)
            als.append(np.full(kk.size, a, dtype=np.int64))
            ks.append(kk)
        self.t = t_end
        if not ts:
            return np.empty(0), np.empty(0, dtype=np.int64), np.empty(0, dtype=np.int64)
        t = np.concatenate(ts)
        order = np.argsort(t, kind="stable")
        return t[order], np.concatenate(als)[order], np.concatenate(ks)[order]


def crossing_times(spec: RootSystemSpec, L0, b, N: int):
    """Times, root indices and heights of the first ``N`` crossings, tie-checked."""
    L0 = np.asarray(L0, dtype=float)
    b = _unit(b)
    stream = _CrossingStream(spec, L0, b)
    if stream.rate == 0.0:
        raise ValueError("direction is orthogonal to every root")
    chunks, total = [], 0
    span = max(N, 64) / stream.rate
    t_end = 0.0
    while total < N:
        t_end += span
        t, a, k = stream.window(t_end)
        chunks.append((t, a, k))
        total += t.size
        span = max(N - total, 64) / stream.rate * 1.05
    t = np.concatenate([c[0] for c in chunks])[:N]
    a = np.concatenate([c[1] for c in chunks])[:N]
    k = np.concatenate([c[2] for c in chunks])[:N]
    _check_ties(t, stream.rate)
    return t, a, k


def _check_ties(t: np.ndarray, rate: float) -> None:
    if t.size == 0:
        return
    # relative to the mean spacing, plus the float resolution at time t
    tol = TIE_TOL / rate + 64 * np.finfo(float).eps * np.abs(t[1:])
    gaps = np.diff(t)
    bad = np.flatnonzero(gaps < tol)
    if t[0] < TIE_TOL / rate:
        raise DegenerateDirection("starting point lies on a hyperplane")
    if bad.size:
        n = int(bad[0]) + 1
        raise DegenerateDirection(
            f"crossings {n} and {n + 1} coincide (t = {t[n]:.12g}); jitter the direction")


def jitter_direction(b, seed: int, magnitude: float = 1e-9) -> np.ndarray:
    b = _unit(b)
    rng = np.random.default_rng(seed)
    return _unit(b + magnitude * rng.standard_normal(b.size))


def trace(L0, b, N: int, geom="A2", jitter: int | None = None, max_jitter: int = 8) -> CuttingSequence:
    """Trace the first ``N`` crossings of the ray from ``L0`` in direction ``b``.

    With ``jitter`` set to a seed, a degenerate direction is perturbed by
    ``1e-9`` (then renormalized) and retried, up to ``max_jitter`` times.
    """
    g_ = _geom(geom)
    L0 = np.asarray(L0, dtype=float)
    b = _unit(b)
    attempt = 0
    while True:
        try:
            return _trace(g_, L0, b, int(N))
        except DegenerateDirection:
            if jitter is None or attempt >= max_jitter:
                raise
            b = jitter_direction(b, (int(jitter), attempt))
            attempt += 1


def _trace(g_: Geometry, L0, b, N: int) -> CuttingSequence:
    spec, frame, tables = g_.spec, g_.frame, g_.tables
    times, alpha, ks = crossing_times(spec, L0, b, N)
    if not frame.spec.rank:
        raise ValueError("rank must be positive")
    g, v = locate_alcove(frame, tables, L0)
    wall = frame.wall_lookup
    pairing = tables.pairing.tolist()
    pre = tables.preimage_root
    right = tables.right
    shift0 = tables.theta_shift

    labels = np.empty(N, dtype=np.int64)
    gs = np.empty(N + 1, dtype=np.int64)
    vs = np.empty((N + 1, spec.rank), dtype=np.int64)
    gs[0] = g
    vs[0] = v
    alist = alpha.tolist()
    klist = ks.tolist()
    for n in range(N):
        a = alist[n]
        kp = klist[n] - sum(x * y for x, y in zip(v, pairing[a]))
        j = wall[(pre(g, a), kp)]
        labels[n] = j
        if j == 0:
            v = tuple(x + y for x, y in zip(v, shift0(g)))
            vs[n + 1] = v
        else:
            vs[n + 1] = v
        g = right(g, j)
        gs[n + 1] = g
    return CuttingSequence(L0.copy(), b.copy(), times, alpha, ks, labels, gs, vs)


def cutting_sequence(L0, b, N: int, geom="A2", jitter: int | None = None) -> np.ndarray:
    """Labels ``i_1..i_N`` of the faces hit by the unreflected ray."""
    return trace(L0, b, N, geom, jitter=jitter).labels


def next_crossing(x, b, geom="A2") -> CuttingEvent:
    """First hyperplane hit by the ray from ``x`` (strictly after time 0).

    Found by minimizing ``(k - x.alpha)/(b.alpha)`` over every root family;
    the label comes from locating the alcove the ray occupies just before it.
    """
    g_ = _geom(geom)
    spec, frame, tables = g_.spec, g_.frame, g_.tables
    x = np.asarray(x, dtype=float)
    b = _unit(b)
    xa = spec.positive_roots @ x
    sa = spec.positive_roots @ b
    best = []
    for a in range(spec.n_positive):
        if sa[a] == 0.0:
            continue
        k = math.floor(xa[a]) + 1 if sa[a] > 0 else math.ceil(xa[a]) - 1
        # x exactly on a hyperplane and leaving it: floor/ceil already skip it
        best.append(((k - xa[a]) / sa[a], a, k))
    best.sort()
    t, a, k = best[0]
    if len(best) > 1 and best[1][0] - t < TIE_TOL * t:
        raise DegenerateDirection("two hyperplanes are struck simultaneously")
    mid = x + 0.5 * t * b
    g, v = locate_alcove(frame, tables, mid)
    kp = k - int(np.dot(v, tables.pairing[a]))
    label = frame.wall_lookup[(tables.preimage_root(g, a), kp)]
    return CuttingEvent(float(t), int(a), int(k), int(label), x + t * b)


@dataclass(frozen=True)
class WindowFrequencyTable:
    window_length: int
    counts: dict
    total: int

    @property
    def frequencies(self) -> dict:
        return {w: c / self.total for w, c in self.counts.items()}

    def frequency(self, pattern) -> float:
        return self.counts.get(tuple(pattern), 0) / self.total


def window_codes(labels: np.ndarray, w: int, base: int) -> np.ndarray:
    """Integer code of every length-``w`` window (most significant label first)."""
    labels = np.asarray(labels, dtype=np.int64)
    n = labels.size - w + 1
    if n <= 0:
        return np.empty(0, dtype=np.int64)
    code = np.zeros(n, dtype=np.int64)
    for j in range(w):
        code = code * base + labels[j: j + n]
    return code


def decode_window(code: int, w: int, base: int) -> tuple:
    out = []
    for _ in range(w):
        code, r = divmod(int(code), base)
        out.append(r)
    return tuple(reversed(out))


def window_frequencies_from_labels(labels, window_length: int, N: int | None = None, n0: int = 0,
                                   base: int | None = None,
                                   max_window: int = DEFAULT_MAX_WINDOW) -> WindowFrequencyTable:
    """Sliding-window counts over windows starting at positions ``n0 .. n0+N-1``."""
    if window_length < 1:
        raise ValueError("window_length must be >= 1")
    if window_length > max_window:
        raise ValueError(f"window_length {window_length} exceeds cap {max_window}")
    labels = np.asarray(labels, dtype=np.int64)
    if N is None:
        N = labels.size - n0 - window_length + 1
    seg = labels[n0: n0 + N + window_length - 1]
    if seg.size < N + window_length - 1:
        raise ValueError("not enough labels for the requested windows")
    base = int(base if base is not None else labels.max() + 1)
    codes = window_codes(seg, window_length, base)
    uniq, cnt = np.unique(codes, return_counts=True)
    counts = {decode_window(c, window_length, base): int(k) for c, k in zip(uniq, cnt)}
    return WindowFrequencyTable(window_length, counts, int(N))


def window_frequencies(L0, b, window_length: int, N: int, n0: int = 0, geom="A2",
                       max_window: int = DEFAULT_MAX_WINDOW) -> WindowFrequencyTable:
    g_ = _geom(geom)
    labels = cutting_sequence(L0, b, n0 + N + window_length - 1, g_)
    return window_frequencies_from_labels(labels, window_length, N, n0, base=g_.rank + 1,
                                          max_window=max_window)


@dataclass(frozen=True)
class FirstReturn:
    point: np.ndarray
    time: float
    crossings: int

    def displacement(self, x) -> np.ndarray:
        return self.point - np.asarray(x, dtype=float)


def first_return(alpha_index: int, parity: int, x, b, geom="A2") -> FirstReturn:
    """Next hit of the hyperplane family ``{x.alpha = k : k = parity mod 2}``.

    ``crossings`` counts every hyperplane hit on the way (the return time in
    units of the crossing map); ``time`` is the elapsed time at unit speed.
    """
    g_ = _geom(geom)
    spec = g_.spec
    alpha = spec.roots[alpha_index]
    x = np.asarray(x, dtype=float)
    b = _unit(b)
    h = float(x @ alpha)
    kx = round(h)
    if abs(h - kx) > 1e-9 or (kx - parity) % 2:
        raise ValueError("x is not on a hyperplane of the requested family")
    s = float(b @ alpha)
    if s == 0.0:
        raise DegenerateDirection("direction is parallel to the family")
    tau = 2.0 / abs(s)
    # crossings in (0, tau]: per family, heights strictly after the start up to the end
    xs = spec.positive_roots @ x
    ss = spec.positive_roots @ b
    count = 0
    for xa, sa in zip(xs, ss):
        if sa == 0.0:
            continue
        lo, hi = sorted((xa, xa + tau * sa))
        kl = math.floor(lo + 1e-9) + 1 if sa > 0 else math.ceil(lo - 1e-9)
        kh = math.floor(hi + 1e-9) if sa > 0 else math.ceil(hi - 1e-9) - 1
        count += max(0, kh - kl + 1)
    return FirstReturn(x + tau * b, tau, count)


def mod_coroot_lattice(v, spec: RootSystemSpec) -> np.ndarray:
    """Fractional coroot-basis coordinates of ``v`` (representative of ``v + Q^vee``)."""
    c = spec.to_coroot_coords(v)
    f = c - np.floor(c)
    f[np.isclose(f, 1.0, atol=1e-12)] = 0.0
    return f


def lattice_equal(u, v, spec: RootSystemSpec, atol: float = 1e-8) -> bool:
    """Whether ``u - v`` lies in the coroot lattice."""
    c = spec.to_coroot_coords(np.asarray(u, dtype=float) - np.asarray(v, dtype=float))
    return bool(np.all(np.abs(c - np.rint(c)) < atol))


def classify_direction(b, spec: RootSystemSpec, height: int = 10**6,
                       exact_tol: float = 1e-13, loose_tol: float = 1e-9) -> tuple[str, str]:
    """Classify ``b`` as ``rational``, ``fully_irrational`` or ``intermediate``.

    Works on the coroot-basis coordinates with integer relations of height at
    most ``height``.  Relations whose residual lies between ``exact_tol`` and
    ``loose_tol`` cannot be told apart from rounding and are reported as
    ``intermediate`` with an explanatory note.  Advisory only.
    """
    import mpmath

    c = spec.to_coroot_coords(_unit(b))
    c = c / np.abs(c).max()
    d = c.size
    if d == 1:
        return "rational", "rank one: every direction is rational"
    # rational: every coordinate a fraction of the largest one
    pivot = int(np.argmax(np.abs(c)))
    resid = 0.0
    for i in range(d):
        f = Fraction(float(c[i] / c[pivot])).limit_denominator(height)
        resid = max(resid, abs(float(c[i] / c[pivot]) - float(f)))
    if resid <= exact_tol:
        return "rational", f"coroot coordinates proportional to integers (residual {resid:.1e})"
    with mpmath.workdps(40):
        rel = mpmath.pslq([mpmath.mpf(float(x)) for x in c], tol=mpmath.mpf(loose_tol),
                          maxcoeff=height, maxsteps=10**5)
    if rel is None:
        return "fully_irrational", f"no integer relation of height <= {height}"
    r = abs(float(np.dot(rel, c)))
    if r <= exact_tol:
        return "intermediate", f"integer relation {list(rel)} (residual {r:.1e})"
    return "intermediate", (f"ambiguous: relation {list(rel)} holds to {r:.1e}, "
                            f"between rounding ({exact_tol:g}) and height-{height} noise")


def write_events_csv(path, seq: CuttingSequence) -> None:
    d = seq.L0.size
    pts = seq.points()
    with open(Path(path), "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["n", "t", "alpha", "k", "label"] + [f"x_{i + 1}" for i in range(d)])
        for n in range(len(seq)):
            w.writerow([n + 1, repr(float(seq.times[n])), int(seq.alpha[n]), int(seq.k[n]),
                        int(seq.labels[n])] + [repr(float(x)) for x in pts[n]])
