"""Mixing of the direction chain ``pi(w_n)`` on the finite Weyl group.

A distribution on ``W`` evolves by ``P_m = P_{m-1} (p + (1-p) pi(s_{i_m}))``.
Right multiplication by a generator is an involutive permutation of ``W``,
so each step operator ``T_i = p I + (1-p) Perm_i`` is symmetric and doubly
stochastic; both facts are used below.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .alcove import Geometry, geometry
from .errors import GroupTooLarge, QuotientTooLarge
from .walk import BatchWalk, WalkConfig, batched

NORM_CAP = 20_000
QUOTIENT_CAP = 2_000_000


def _geom(geom) -> Geometry:
    return geometry(geom) if isinstance(geom, str) else geom


@dataclass(frozen=True, eq=False)
class DistributionOnW:
    geom: Geometry
    probs: np.ndarray

    def __post_init__(self):
        if np.any(self.probs < 0) or abs(self.probs.sum() - 1.0) > 1e-12:
            raise ValueError("not a probability vector")

    @classmethod
    def delta(cls, geom, g: int = 0) -> "DistributionOnW":
        geom = _geom(geom)
        P = np.zeros(geom.require_group().order)
        P[g] = 1.0
        return cls(geom, P)

    @classmethod
    def uniform(cls, geom) -> "DistributionOnW":
        geom = _geom(geom)
        n = geom.require_group().order
        return cls(geom, np.full(n, 1.0 / n))

    def tv_to_uniform(self) -> float:
        return 0.5 * float(np.abs(self.probs - 1.0 / self.probs.size).sum())


def step_distribution(P: np.ndarray, right_col: np.ndarray, p: float) -> np.ndarray:
    """``P T_i`` for the permutation ``right_col = right_table[:, i]`` (an involution)."""
    return p * P + (1.0 - p) * P[..., right_col]


def apply_T(dist: DistributionOnW, i: int, p: float) -> DistributionOnW:
    P = step_distribution(dist.probs, dist.geom.right_table[:, i], p)
    P = np.clip(P, 0.0, None)
    return DistributionOnW(dist.geom, P / P.sum())


def propagate(geom, P0: np.ndarray, labels, p: float) -> np.ndarray:
    """Distributions ``P_0..P_n`` along ``labels``; rows of the result."""
    geom = _geom(geom)
    R = geom.right_table
    out = np.empty((len(labels) + 1,) + np.shape(P0))
    out[0] = P0
    P = np.asarray(P0, dtype=float)
    for n, i in enumerate(np.asarray(labels).tolist()):
        P = step_distribution(P, R[:, i], p)
        out[n + 1] = P
    return out


def operator_matrix(geom, i: int, p: float) -> np.ndarray:
    geom = _geom(geom)
    G = geom.require_group()
    if G.order > NORM_CAP:
        raise GroupTooLarge(f"|W| = {G.order} exceeds the dense-operator cap {NORM_CAP}")
    n = G.order
    T = p * np.eye(n)
    T[np.arange(n), geom.right_table[:, i]] += 1.0 - p
    return T


def product_operator(geom, iota, p: float) -> np.ndarray:
    """Matrix of ``P -> P T_{iota_1} ... T_{iota_m}`` acting on row vectors."""
    geom = _geom(geom)
    n = geom.require_group().order
    if n > NORM_CAP:
        raise GroupTooLarge(f"|W| = {n} exceeds the dense-operator cap {NORM_CAP}")
    A = np.eye(n)
    for i in iota:
        A = step_distribution(A, geom.right_table[:, int(i)], p)
    return A


def contraction_constant(iota, p: float, geom="A2") -> tuple[float, bool]:
    """Operator norm of ``T_{iota_m} ... T_{iota_1}`` on the complement of ``1``.

    Returns ``(c, covers)`` where ``covers`` says whether every label
    ``0..d`` occurs in ``iota``.  The product is doubly stochastic, so its
    restriction to ``1``-perp has the norm of ``A - J/|W|``.
    """
    geom = _geom(geom)
    A = product_operator(geom, iota, p)
    n = A.shape[0]
    c = float(np.linalg.norm(A - 1.0 / n, 2)) if n > 1 else 0.0
    covers = set(int(i) for i in iota) >= set(range(geom.rank + 1))
    return min(c, 1.0), covers


def generates_W(iota, geom="A2") -> bool:
    """Whether ``{pi(s_i) : i in iota}`` generates ``W`` (orbit of the identity)."""
    geom = _geom(geom)
    R = geom.right_table
    gens = sorted(set(int(i) for i in iota))
    seen = {0}
    frontier = [0]
    while frontier:
        nxt = []
        for g in frontier:
            for i in gens:
                h = int(R[g, i])
                if h not in seen:
                    seen.add(h)
                    nxt.append(h)
        frontier = nxt
    return len(seen) == R.shape[0]


def covering_length(labels, d: int) -> int:
    """Smallest ``M`` such that every length-``M`` window of ``labels`` contains all of ``0..d``.

    A window misses label ``i`` exactly when it fits in a run free of ``i``
    (including the runs before the first and after the last occurrence).
    """
    labels = np.asarray(labels)
    N = labels.size
    worst = 0
    for i in range(d + 1):
        pos = np.flatnonzero(labels == i)
        if pos.size == 0:
            raise ValueError("some label never occurs")
        gaps = np.diff(np.concatenate([[-1], pos, [N]]))
        worst = max(worst, int(gaps.max()))
    return worst


def certified_rate(geom, labels, p: float, M_cover: int | None = None, max_windows: int = 5000):
    """Contraction per step certified by the observed ``M_cover`` windows.

    Returns ``(c_step, eps, M_cover)`` where ``eps`` is the largest
    contraction constant over the distinct windows and ``c_step = eps^(1/M)``.
    """
    geom = _geom(geom)
    d = geom.rank
    if M_cover is None:
        M_cover = covering_length(labels, d)
    labels = np.asarray(labels, dtype=np.int64)
    windows = {tuple(labels[k: k + M_cover].tolist()) for k in range(labels.size - M_cover + 1)}
    windows = sorted(windows)[:max_windows]
    eps = max(contraction_constant(w, p, geom)[0] for w in windows)
    return eps ** (1.0 / M_cover), eps, M_cover


def tv_band(n_cells: int, M: int) -> float:
    """One Monte-Carlo standard deviation scale for TV-to-uniform with ``M`` samples."""
    q = 1.0 / n_cells
    return 0.5 * n_cells * math.sqrt(q * (1.0 - q) / M)


def fit_decay(n, tv, floor: float) -> float:
    """Least-squares slope of ``log tv`` against ``n`` where ``tv > 10 floor``."""
    n = np.asarray(n, dtype=float)
    tv = np.asarray(tv, dtype=float)
    keep = (tv > 10.0 * floor) & (n > 0)
    if keep.sum() < 2:
        keep = (tv > 0) & (n > 0)
        keep &= np.cumsum(keep) <= 3
    if keep.sum() < 2:
        return 0.0
    slope, _ = np.polyfit(n[keep], np.log(tv[keep]), 1)
    return float(min(math.exp(slope), 1.0))


@dataclass(frozen=True)
class MixingCurve:
    n: np.ndarray
    tv: np.ndarray
    tv_exact: np.ndarray
    band: float
    c_hat: float
    c_envelope: float
    c_certified: float
    M_cover: int
    M: int
    n0: int

    def report(self, config: WalkConfig) -> dict:
        return {"experiment": "mixing", "type": config.type, "p": config.p,
                "b": [float(x) for x in config.b], "n": self.n.tolist(), "tv": self.tv.tolist(),
                "tv_exact": self.tv_exact.tolist(), "band": self.band, "c_hat": self.c_hat,
                "c_envelope": self.c_envelope, "c_certified": self.c_certified,
                "M_cover": self.M_cover, "M": self.M, "n0": self.n0, "seed": config.seed}


def _histograms(g: np.ndarray, n_cells: int) -> np.ndarray:
    return np.bincount(g, minlength=n_cells) / g.size


def mixing_curve(config: WalkConfig, n_max: int, M: int, n0: int = 0,
                 cover_sample: int = 20_000) -> MixingCurve:
    """TV distance from uniform of ``pi(w_{n0+n})`` started at the identity at time ``n0``.

    Runs branch from the identity at crossing ``n0`` (the frozen-prefix
    convention), so the curve is the decay from the worst-case point mass.
    """
    geom = config.geom
    G = geom.require_group()
    labels = config.cutting(max(n0 + n_max, cover_sample)).labels
    window = labels[n0: n0 + n_max]
    counts = np.zeros((n_max + 1, G.order))
    for batch in batched(np.arange(M), n_max):
        bw = BatchWalk.create(geom, window, config.p, config.seed, batch, rng_start=n0)
        counts[0] += np.bincount(bw.g, minlength=G.order)
        for n in range(1, n_max + 1):
            bw.step()
            counts[n] += np.bincount(bw.g, minlength=G.order)
    P_hat = counts / M
    tv = 0.5 * np.abs(P_hat - 1.0 / G.order).sum(axis=1)
    P0 = np.zeros(G.order)
    P0[0] = 1.0
    exact = propagate(geom, P0, window, config.p)
    tv_exact = 0.5 * np.abs(exact - 1.0 / G.order).sum(axis=1)
    band = tv_band(G.order, M)
    ns = np.arange(n_max + 1)
    c_hat = fit_decay(ns, tv, band)
    with np.errstate(divide="ignore"):
        env = np.where(tv_exact[1:] > 0, tv_exact[1:] ** (1.0 / ns[1:]), 0.0)
    c_env = float(env.max()) if env.size else 0.0
    c_cert, _, M_cover = certified_rate(geom, labels[:cover_sample], config.p)
    return MixingCurve(ns, tv, tv_exact, band, c_hat, c_env, c_cert, M_cover, M, n0)


# -------------------------------------------------------------- quotients

@dataclass(frozen=True)
class QuotientChainSpec:
    """The finite quotient of the affine Weyl group by ``lambda Q^vee``.

    Cells are indexed by ``g * lambda^d + ravel(v mod lambda)``.
    """

    geom: Geometry
    lam: int

    @property
    def size(self) -> int:
        return self.geom.require_group().order * self.lam ** self.geom.rank

    def cell(self, g, v) -> np.ndarray:
        v = np.mod(np.asarray(v, dtype=np.int64), self.lam)
        flat = np.ravel_multi_index(tuple(np.moveaxis(v, -1, 0)), (self.lam,) * self.geom.rank)
        return np.asarray(g) * self.lam ** self.geom.rank + flat

    def step_permutation(self, i: int) -> np.ndarray:
        """Right multiplication by ``s_i`` as a permutation of the cells."""
        geom = self.geom
        n_w = geom.require_group().order
        d, lam = geom.rank, self.lam
        vs = np.stack(np.unravel_index(np.arange(lam ** d), (lam,) * d), -1)
        g = np.repeat(np.arange(n_w), lam ** d)
        v = np.tile(vs, (n_w, 1))
        g2 = geom.right_table[g, i]
        v2 = v + (geom.shift0_table[g] if i == 0 else 0)
        return self.cell(g2, v2)


def quotient_spec(geom, lam: int, cap: int = QUOTIENT_CAP) -> QuotientChainSpec:
    q = QuotientChainSpec(_geom(geom), int(lam))
    if q.size > cap:
        raise QuotientTooLarge(f"|D| = {q.size} exceeds cap {cap}")
    return q


@dataclass(frozen=True)
class QuotientCurve:
    n: np.ndarray
    deviation: np.ndarray
    deviation_exact: np.ndarray
    size: int
    M: int


def quotient_equidistribution(config: WalkConfig, lam: int, n_max: int, M: int,
                              record=None, cap: int = QUOTIENT_CAP) -> QuotientCurve:
    """``sup_cell |P(pi_lambda(w_n) = cell) - 1/|D||`` at the crossing counts ``record``."""
    geom = config.geom
    q = quotient_spec(geom, lam, cap)
    seq = config.cutting(n_max)
    record = np.arange(n_max + 1) if record is None else np.asarray(record, dtype=np.int64)
    want = {int(r): j for j, r in enumerate(record)}
    counts = np.zeros((record.size, q.size))
    g0, v0 = int(seq.ray_g[0]), seq.ray_v[0]
    for batch in batched(np.arange(M), n_max):
        bw = BatchWalk.create(geom, seq.labels, config.p, config.seed, batch, g0, v0)
        if 0 in want:
            counts[want[0]] += np.bincount(q.cell(bw.g, bw.v), minlength=q.size)
        for n in range(1, n_max + 1):
            bw.step()
            if n in want:
                counts[want[n]] += np.bincount(q.cell(bw.g, bw.v), minlength=q.size)
    dev = np.abs(counts / M - 1.0 / q.size).max(axis=1)
    # exact propagation on the quotient
    perms = [q.step_permutation(i) for i in range(geom.rank + 1)]
    inv = [np.argsort(P) for P in perms]
    P = np.zeros(q.size)
    P[q.cell(g0, v0)] = 1.0
    exact = np.empty(record.size)
    if 0 in want:
        exact[want[0]] = np.abs(P - 1.0 / q.size).max()
    for n, i in enumerate(seq.labels.tolist(), start=1):
        # mass at cell x moves to perm[x] with probability 1-p
        P = config.p * P + (1.0 - config.p) * P[inv[i]]
        if n in want:
            exact[want[n]] = np.abs(P - 1.0 / q.size).max()
    return QuotientCurve(record, dev, exact, q.size, M)


# ------------------------------------------------------ conditional means

def frozen_prefix(config: WalkConfig, n0: int, N: int):
    """Cutting sequence long enough for ``n0 + N`` crossings and the prefix state at ``n0``.

    The prefix is run ``(seed, 0)``; continuations use streams ``1..M`` from
    draw ``n0`` on.
    """
    geom = config.geom
    seq = config.cutting(n0 + N + 1)
    bw = BatchWalk.create(geom, seq.labels, config.p, config.seed, [0], int(seq.ray_g[0]), seq.ray_v[0])
    bw.advance(n0)
    return seq, int(bw.g[0]), bw.v[0].copy()


def exact_step_means(geom, g0: int, labels, p: float) -> np.ndarray:
    """``E[X_{k} - X_{k-1} | pi(w_0) = g0]`` for ``k = 1..len(labels)``, exactly."""
    geom = _geom(geom)
    P0 = np.zeros(geom.require_group().order)
    P0[g0] = 1.0
    Ps = propagate(geom, P0, labels[:-1] if len(labels) else labels, p)
    steps = geom.step_table
    lab = np.asarray(labels, dtype=np.int64)
    return (1.0 - p) * np.einsum("kg,kgj->kj", Ps[: lab.size], steps[:, lab].transpose(1, 0, 2))


def step_bias(config: WalkConfig, n_max: int, n0: int, M: int):
    """``|E[X_{n0+n+1} - X_{n0+n} | F_{n0}]|`` for ``n = 0..n_max``.

    Returns ``(monte_carlo, exact, band)``; ``band`` is one standard error.
    """
    geom = config.geom
    seq, g0, v0 = frozen_prefix(config, n0, n_max + 1)
    window = seq.labels[n0: n0 + n_max + 1]
    s1 = np.zeros((n_max + 1, geom.rank))
    s2 = np.zeros(n_max + 1)
    for batch in batched(np.arange(1, M + 1), n_max + 1):
        bw = BatchWalk.create(geom, window, config.p, config.seed, batch, g0, v0, rng_start=n0)
        for n in range(n_max + 1):
            i, e, g_old = bw.step()
            inc = e[:, None] * geom.step_table[g_old, i]
            s1[n] += inc.sum(0)
            s2[n] += (inc ** 2).sum()
    mean = s1 / M
    var = s2 / M - (mean ** 2).sum(1)
    band = np.sqrt(np.maximum(var, 0.0) / M)
    exact = np.linalg.norm(exact_step_means(geom, g0, window, config.p), axis=1)
    return np.linalg.norm(mean, axis=1), exact, band


def martingale_bound(geom, p: float, c: float) -> float:
    """``C = (1-p)|W| max|beta_i| / (1-c)``."""
    geom = _geom(geom)
    beta = np.linalg.norm(geom.frame.beta, axis=1).max()
    return (1.0 - p) * geom.require_group().order * float(beta) / (1.0 - c)


def martingale_gap(config: WalkConfig, N: int, n0: int, M: int):
    """``|E[X_{n0+N} | F_{n0}] - X_{n0}|`` by Monte Carlo and exactly.

    Returns ``(monte_carlo, exact, band)``.
    """
    geom = config.geom
    if N == 0:
        return 0.0, 0.0, 0.0
    seq, g0, v0 = frozen_prefix(config, n0, N)
    window = seq.labels[n0: n0 + N]
    tot = np.zeros(geom.rank)
    sq = 0.0
    x0 = geom.centroids(g0, v0)
    for batch in batched(np.arange(1, M + 1), N):
        bw = BatchWalk.create(geom, window, config.p, config.seed, batch, g0, v0, rng_start=n0)
        bw.advance(N)
        disp = bw.centroids() - x0
        tot += disp.sum(0)
        sq += (disp ** 2).sum()
    mean = tot / M
    band = math.sqrt(max(sq / M - mean @ mean, 0.0) / M)
    exact = exact_step_means(geom, g0, window, config.p).sum(0)
    return float(np.linalg.norm(mean)), float(np.linalg.norm(exact)), band


def write_report(path, report: dict) -> None:
    Path(path).write_text(json.dumps(report, indent=2, sort_keys=True) + "\n")
