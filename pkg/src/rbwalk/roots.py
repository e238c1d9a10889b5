"""Root systems and finite Weyl groups of the irreducible types.

Coordinate convention
---------------------
Simple roots are taken from Bourbaki's tables (ambient space ``R^n``) and
re-expressed in an orthonormal basis of their span, so every arrangement
lives in ``R^d`` with ``d`` the rank.  The whole system is then rescaled so
that the *long* roots have unit length.  With this choice ``A1`` has the
single positive root ``1`` (coroot ``2``) and its mirrors sit at the integers.

=======  ==========  =================================================
family   ranks       Bourbaki simple roots (before projection/scaling)
=======  ==========  =================================================
A        d >= 1      e_i - e_{i+1}, i = 1..d              (in R^{d+1})
B        d >= 2      e_i - e_{i+1} (i < d), e_d
C        d >= 3      e_i - e_{i+1} (i < d), 2 e_d
D        d >= 4      e_i - e_{i+1} (i < d), e_{d-1} + e_d
E        6, 7, 8     (e1+e8-e2-...-e7)/2, e1+e2, e_{i-1}-e_{i-2}  (R^8)
F        4           e2-e3, e3-e4, e4, (e1-e2-e3-e4)/2
G        2           e1-e2, -2e1+e2+e3                    (in R^3)
=======  ==========  =================================================

Group elements are stored exactly, as integer matrices acting on
simple-root coordinates; the orthogonal matrices are derived from them.
"""
from __future__ import annotations

import math
import re
from collections import deque
from dataclasses import dataclass, field
from functools import cached_property

import numpy as np

from .errors import GroupTooLarge, InvalidType, ZeroVector

DEFAULT_GROUP_CAP = 10**6
MULT_TABLE_CAP = 5000

_TYPE_RE = re.compile(r"^\s*([A-Ga-g])\s*(\d+)\s*$")


def parse_type(name: str) -> tuple[str, int]:
    """Split a type string such as ``"A2"`` or ``"e6"`` into (family, rank)."""
    m = _TYPE_RE.match(str(name))
    if not m:
        raise InvalidType(f"cannot parse root system type {name!r}")
    family, rank = m.group(1).upper(), int(m.group(2))
    _check_type(family, rank)
    return family, rank


def _check_type(family: str, rank: int) -> None:
    ok = {
        "A": rank >= 1,
        "B": rank >= 2,
        "C": rank >= 3,
        "D": rank >= 4,
        "E": rank in (6, 7, 8),
        "F": rank == 4,
        "G": rank == 2,
    }.get(family, False)
    if not ok:
        raise InvalidType(f"unsupported irreducible type {family}{rank}")


def weyl_group_order(family: str, rank: int) -> int:
    _check_type(family, rank)
    d = rank
    if family == "A":
        return math.factorial(d + 1)
    if family in "BC":
        return 2**d * math.factorial(d)
    if family == "D":
        return 2 ** (d - 1) * math.factorial(d)
    return {("E", 6): 51840, ("E", 7): 2903040, ("E", 8): 696729600,
            ("F", 4): 1152, ("G", 2): 12}[(family, d)]


def _bourbaki_simple_roots(family: str, d: int) -> np.ndarray:
    """Rows are simple roots in Bourbaki's ambient coordinates."""

    def e(n, i):
        v = np.zeros(n)
        v[i] = 1.0
        return v

    if family == "A":
        n = d + 1
        return np.array([e(n, i) - e(n, i + 1) for i in range(d)])
    if family in "BCD":
        rows = [e(d, i) - e(d, i + 1) for i in range(d - 1)]
        last = {"B": e(d, d - 1), "C": 2 * e(d, d - 1),
                "D": e(d, d - 2) + e(d, d - 1)}[family]
        return np.array(rows + [last])
    if family == "G":
        return np.array([[1.0, -1.0, 0.0], [-2.0, 1.0, 1.0]])
    if family == "F":
        return np.array([
            [0, 1, -1, 0],
            [0, 0, 1, -1],
            [0, 0, 0, 1],
            [0.5, -0.5, -0.5, -0.5],
        ], dtype=float)
    # E_d: first d simple roots of E8
    rows = [0.5 * np.array([1, -1, -1, -1, -1, -1, -1, 1], dtype=float),
            e(8, 0) + e(8, 1)]
    for i in range(2, 8):
        rows.append(e(8, i - 1) - e(8, i - 2))
    return np.array(rows[:d])


def reflection_matrix(alpha) -> np.ndarray:
    """Orthogonal reflection ``I - 2 a a^T / (a^T a)`` in the hyperplane ``a^perp``."""
    a = np.atleast_1d(np.asarray(alpha, dtype=float))
    nrm2 = float(a @ a)
    if nrm2 == 0.0:
        raise ZeroVector("cannot reflect in the zero vector")
    return np.eye(a.size) - 2.0 * np.outer(a, a) / nrm2


@dataclass(frozen=True, eq=False)
class RootSystemSpec:
    """Root datum of one irreducible type, realized in ``R^rank``.

    ``roots`` lists the positive roots (by increasing height) followed by
    their negatives in the same order, so root ``a`` and ``a + n_positive``
    are opposite.  ``coroots[a]`` is the coroot of ``roots[a]``.
    """

    family: str
    rank: int
    roots: np.ndarray
    simple_roots: np.ndarray
    highest_root: np.ndarray
    coroots: np.ndarray
    coroot_basis: np.ndarray
    root_coords: np.ndarray
    cartan: np.ndarray
    marks: np.ndarray
    highest_index: int
    _coord_index: dict = field(repr=False, compare=False)

    @property
    def name(self) -> str:
        return f"{self.family}{self.rank}"

    @property
    def n_positive(self) -> int:
        return len(self.roots) // 2

    @property
    def positive_roots(self) -> np.ndarray:
        return self.roots[: self.n_positive]

    @property
    def positive_coroots(self) -> np.ndarray:
        return self.coroots[: self.n_positive]

    def root_index(self, coords) -> int:
        """Index of the root with the given simple-root coordinates."""
        return self._coord_index[tuple(int(c) for c in coords)]

    def to_root_coords(self, v) -> np.ndarray:
        """Coordinates of ``v`` with respect to the simple roots."""
        return np.linalg.solve(self.simple_roots.T, np.asarray(v, dtype=float))

    def to_coroot_coords(self, v) -> np.ndarray:
        return np.linalg.solve(self.coroot_basis, np.asarray(v, dtype=float))

    @cached_property
    def simple_reflection_int(self) -> np.ndarray:
        """``(d, d, d)`` integer matrices of ``s_1..s_d`` on simple-root coordinates."""
        d = self.rank
        out = np.zeros((d, d, d), dtype=np.int64)
        for i in range(d):
            m = np.eye(d, dtype=np.int64)
            # s_i(a_j) = a_j - <a_j, a_i^vee> a_i
            m[i, :] -= self.cartan[:, i]
            out[i] = m
        return out

    @cached_property
    def highest_reflection_int(self) -> np.ndarray:
        """Integer matrix of the reflection in ``theta`` on simple-root coordinates."""
        d = self.rank
        # <a_j, theta^vee> for each simple root
        pair = np.rint(self.simple_roots @ self.coroots[self.highest_index]).astype(np.int64)
        return np.eye(d, dtype=np.int64) - np.outer(self.marks, pair)

    @cached_property
    def root_to_coroot_scale(self) -> np.ndarray:
        """``2/<a_i, a_i>`` for the simple roots; maps root coords to coroot coords."""
        return 2.0 / np.einsum("ij,ij->i", self.simple_roots, self.simple_roots)


def build_root_system(family: str, rank: int | None = None) -> RootSystemSpec:
    """Construct the root system of type ``family`` and ``rank``.

    ``family`` may also be a full type string (``"G2"``) with ``rank`` omitted.
    """
    if rank is None:
        family, rank = parse_type(family)
    else:
        family = str(family).upper()
        _check_type(family, int(rank))
        rank = int(rank)
    d = rank
    amb = _bourbaki_simple_roots(family, d)

    # orthonormal basis of the span; fix signs so the triangular factor has a positive diagonal
    q, r = np.linalg.qr(amb.T)
    q = q * np.sign(np.diag(r))
    simple = amb @ q
    simple = simple / np.sqrt(max(np.einsum("ij,ij->i", simple, simple)))
    simple[np.abs(simple) < 1e-15] = 0.0

    norms2 = np.einsum("ij,ij->i", simple, simple)
    cartan = np.rint(2.0 * (simple @ simple.T) / norms2[None, :]).astype(np.int64)

    # closure of the simple roots under simple reflections, in integer coordinates
    seen = {}
    frontier = [tuple(int(x) for x in row) for row in np.eye(d, dtype=np.int64)]
    for c in frontier:
        seen[c] = True
    while frontier:
        nxt = []
        for c in frontier:
            cv = np.array(c, dtype=np.int64)
            for i in range(d):
                k = int(cv @ cartan[:, i])
                if k == 0:
                    continue
                new = cv.copy()
                new[i] -= k
                t = tuple(int(x) for x in new)
                if t not in seen:
                    seen[t] = True
                    nxt.append(t)
        frontier = nxt
    pos = [c for c in seen if all(x >= 0 for x in c)]
    pos.sort(key=lambda c: (sum(c), tuple(-x for x in c)))
    coords = np.array(pos + [tuple(-x for x in c) for c in pos], dtype=np.int64)
    roots = coords @ simple
    roots[np.abs(roots) < 1e-15] = 0.0
    coroots = 2.0 * roots / np.einsum("ij,ij->i", roots, roots)[:, None]

    hi = len(pos) - 1
    marks = coords[hi].copy()
    coroot_basis = (2.0 * simple / norms2[:, None]).T
    index = {tuple(int(x) for x in c): a for a, c in enumerate(coords)}
    return RootSystemSpec(
        family=family,
        rank=d,
        roots=roots,
        simple_roots=simple,
        highest_root=roots[hi].copy(),
        coroots=coroots,
        coroot_basis=coroot_basis,
        root_coords=coords,
        cartan=cartan,
        marks=marks,
        highest_index=hi,
        _coord_index=index,
    )


@dataclass(frozen=True, eq=False)
class FiniteWeylGroup:
    """Complete enumeration of ``W`` together with lookup tables.

    Element ``g`` acts on ``R^d`` by ``elements[g]`` and on simple-root
    coordinates by ``int_mats[g]``.  ``right_gen[g, i]`` is the index of
    ``g * pi(s_i)`` and ``gen_index[i]`` the index of ``pi(s_i)`` itself
    (``pi(s_0)`` is the reflection in the highest root).
    """

    spec: RootSystemSpec
    elements: np.ndarray
    int_mats: np.ndarray
    index_of_identity: int
    gen_index: tuple
    right_gen: np.ndarray
    parent: np.ndarray
    parent_gen: np.ndarray

    def __len__(self) -> int:
        return len(self.elements)

    @property
    def order(self) -> int:
        return len(self.elements)

    @cached_property
    def _key_index(self) -> dict:
        return {m.tobytes(): g for g, m in enumerate(self.int_mats)}

    def index_of_int(self, m: np.ndarray) -> int:
        return self._key_index[np.ascontiguousarray(m, dtype=np.int64).tobytes()]

    @cached_property
    def inverse(self) -> np.ndarray:
        inv = np.empty(self.order, dtype=np.int64)
        for g, m in enumerate(self.elements):
            inv[g] = self.nearest(m.T)
        return inv

    def nearest(self, mat: np.ndarray) -> int:
        """Index of the element closest to ``mat`` (max-entry distance), and nothing else."""
        return int(np.argmin(np.abs(self.elements - mat[None]).reshape(self.order, -1).max(axis=1)))

    @cached_property
    def root_action(self) -> np.ndarray:
        """``root_action[g, a]`` = index of the root ``rho(g) alpha_a``."""
        spec = self.spec
        base = int(np.abs(spec.root_coords).max()) * 2 + 1
        weights = base ** np.arange(spec.rank, dtype=np.int64)
        keys = (spec.root_coords + base // 2) @ weights
        order = np.argsort(keys)
        images = np.einsum("gij,aj->gai", self.int_mats, spec.root_coords)
        ikeys = (images + base // 2) @ weights
        pos = np.searchsorted(keys[order], ikeys)
        return order[pos]

    @cached_property
    def coroot_mats(self) -> np.ndarray:
        """Integer matrices of ``rho(g)`` on coroot-basis coordinates."""
        s = self.spec.root_to_coroot_scale
        mats = self.int_mats * (1.0 / s)[None, :, None] * s[None, None, :]
        return np.rint(mats).astype(np.int64)

    @cached_property
    def mult_table(self) -> np.ndarray:
        """Full ``|W| x |W|`` product table ``mult_table[g, h] = index(g h)``."""
        n = self.order
        if n > MULT_TABLE_CAP:
            raise GroupTooLarge(f"multiplication table for |W| = {n} exceeds cap {MULT_TABLE_CAP}")
        table = np.empty((n, n), dtype=np.int64)
        table[:, self.index_of_identity] = np.arange(n)
        # BFS order guarantees the parent column is filled first
        for h in range(n):
            if h == self.index_of_identity:
                continue
            table[:, h] = self.right_gen[table[:, self.parent[h]], self.parent_gen[h]]
        return table


def generator_int_mats(spec: RootSystemSpec) -> np.ndarray:
    """``(d+1, d, d)`` integer matrices of ``pi(s_0), ..., pi(s_d)`` on root coordinates."""
    return np.concatenate([spec.highest_reflection_int[None], spec.simple_reflection_int])


def enumerate_weyl_group(spec: RootSystemSpec, cap: int = DEFAULT_GROUP_CAP) -> FiniteWeylGroup:
    """Breadth-first closure of ``{pi(s_0), ..., pi(s_d)}`` under right multiplication."""
    expected = weyl_group_order(spec.family, spec.rank)
    if expected > cap:
        raise GroupTooLarge(f"|W({spec.name})| = {expected} exceeds cap {cap}")
    d = spec.rank
    gens = generator_int_mats(spec)
    ident = np.eye(d, dtype=np.int64)
    mats = [ident]
    index = {ident.tobytes(): 0}
    parent = [-1]
    parent_gen = [-1]
    right = []
    queue = deque([0])
    while queue:
        g = queue.popleft()
        row = []
        prods = mats[g] @ gens
        for i in range(d + 1):
            key = prods[i].tobytes()
            h = index.get(key)
            if h is None:
                h = len(mats)
                if h >= cap:
                    raise GroupTooLarge(f"closure of W({spec.name}) exceeds cap {cap}")
                index[key] = h
                mats.append(prods[i])
                parent.append(g)
                parent_gen.append(i)
                queue.append(h)
            row.append(h)
        right.append(row)
    int_mats = np.array(mats, dtype=np.int64)
    # rho(g) = S^T-coordinates: x = sum c_j a_j, so rho(g) = S^T M S^{-T}
    s = spec.simple_roots.T
    elements = np.einsum("ij,gjk,kl->gil", s, int_mats.astype(float), np.linalg.inv(s))
    elements[np.abs(elements) < 1e-14] = 0.0
    right_gen = np.array(right, dtype=np.int64)
    gen_index = tuple(int(right_gen[0, i]) for i in range(d + 1))
    return FiniteWeylGroup(
        spec=spec,
        elements=elements,
        int_mats=int_mats,
        index_of_identity=0,
        gen_index=gen_index,
        right_gen=right_gen,
        parent=np.array(parent, dtype=np.int64),
        parent_gen=np.array(parent_gen, dtype=np.int64),
    )
