"""Fundamental alcove, affine simple reflections and the invariant face labeling.

Two representations of affine Weyl group elements coexist:

* :class:`AffineIsometry` -- floating ``x -> A x + v``; convenient for
  geometry and for checking statements numerically.
* ``(g, v)`` pairs used by the simulation core -- ``g`` indexes an element of
  the finite Weyl group (see :class:`GroupTables`) and ``v`` holds the integer
  coroot-lattice coordinates of the translation.  These are exact, so long
  trajectories never drift off the group.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property, lru_cache

import numpy as np

from .errors import NotInGroup
from .roots import (
    FiniteWeylGroup,
    RootSystemSpec,
    enumerate_weyl_group,
    generator_int_mats,
    reflection_matrix,
)


@dataclass(frozen=True)
class AffineIsometry:
    linear: np.ndarray
    translation: np.ndarray

    @classmethod
    def identity(cls, d: int) -> "AffineIsometry":
        return cls(np.eye(d), np.zeros(d))

    @classmethod
    def translation_by(cls, v) -> "AffineIsometry":
        v = np.asarray(v, dtype=float)
        return cls(np.eye(v.size), v.copy())

    def __call__(self, x):
        return apply_isometry(self, x)

    def compose(self, other: "AffineIsometry") -> "AffineIsometry":
        """``self o other``."""
        return AffineIsometry(self.linear @ other.linear,
                              self.linear @ other.translation + self.translation)

    __matmul__ = compose

    def inverse(self) -> "AffineIsometry":
        lin = self.linear.T
        return AffineIsometry(lin, -lin @ self.translation)

    def allclose(self, other: "AffineIsometry", atol: float = 1e-10) -> bool:
        return (np.allclose(self.linear, other.linear, atol=atol)
                and np.allclose(self.translation, other.translation, atol=atol))


def apply_isometry(g: AffineIsometry, x) -> np.ndarray:
    """Apply ``g`` to a point (or to the rows of an ``(n, d)`` array)."""
    x = np.asarray(x, dtype=float)
    if x.ndim == 1:
        return g.linear @ x + g.translation
    return x @ g.linear.T + g.translation


@dataclass(frozen=True, eq=False)
class AlcoveFrame:
    """Geometry of the fundamental alcove ``A0 = {x: x.a_i > 0, x.theta < 1}``.

    Wall ``0`` lies on ``x.theta = 1`` and wall ``i >= 1`` on ``x.a_i = 0``.
    ``wall_normals[j]`` and ``wall_offsets[j]`` describe wall ``j`` as
    ``x . n_j = c_j``; the inward functionals are ``walls(x)``.
    """

    spec: RootSystemSpec
    centroid: np.ndarray
    vertices: np.ndarray
    simple_affine: tuple
    beta: np.ndarray
    wall_normals: np.ndarray
    wall_offsets: np.ndarray
    wall_roots: tuple

    @property
    def rank(self) -> int:
        return self.spec.rank

    def walls(self, x) -> np.ndarray:
        """Values of the ``d+1`` inward wall functionals; all positive inside ``A0``."""
        x = np.asarray(x, dtype=float)
        vals = x @ self.wall_normals.T
        out = np.array(vals, copy=True)
        out[..., 0] = self.wall_offsets[0] - vals[..., 0]
        return out

    def contains(self, x, tol: float = 0.0) -> bool:
        return bool(np.all(self.walls(x) > -tol))

    @cached_property
    def diameter(self) -> float:
        v = self.vertices
        return float(np.max(np.linalg.norm(v[:, None, :] - v[None, :, :], axis=-1)))

    @cached_property
    def wall_lookup(self) -> dict:
        """Map ``(root index, height)`` of a hyperplane to the wall of ``A0`` on it."""
        spec = self.spec
        npos = spec.n_positive
        table = {}
        for j, a in enumerate(self.wall_roots):
            c = 1 if j == 0 else 0
            neg = a + npos if a < npos else a - npos
            table[(a, c)] = j
            table[(neg, -c)] = j
        return table


def fundamental_alcove(spec: RootSystemSpec) -> AlcoveFrame:
    d = spec.rank
    theta = spec.highest_root
    theta_co = spec.coroots[spec.highest_index]
    # vertices: origin and omega_i^vee / m_i, with omega^vee dual to the simple roots
    omega = np.linalg.inv(spec.simple_roots)  # columns omega_i^vee
    verts = [np.zeros(d)] + [omega[:, i] / spec.marks[i] for i in range(d)]
    vertices = np.array(verts)
    centroid = vertices.mean(axis=0)

    s0 = AffineIsometry(reflection_matrix(theta), theta_co.copy())
    simple_affine = [s0] + [AffineIsometry(reflection_matrix(a), np.zeros(d)) for a in spec.simple_roots]
    beta = np.array([apply_isometry(s, centroid) - centroid for s in simple_affine])

    normals = np.vstack([theta, spec.simple_roots])
    offsets = np.zeros(d + 1)
    offsets[0] = 1.0
    simple_idx = [spec.root_index(np.eye(d, dtype=int)[i]) for i in range(d)]
    wall_roots = tuple([spec.highest_index] + simple_idx)
    return AlcoveFrame(
        spec=spec,
        centroid=centroid,
        vertices=vertices,
        simple_affine=tuple(simple_affine),
        beta=beta,
        wall_normals=normals,
        wall_offsets=offsets,
        wall_roots=wall_roots,
    )


def crossing_label(frame: AlcoveFrame, w: AffineIsometry, facet, tol: float = 1e-8) -> int:
    """Label of a facet of the alcove ``w A0``.

    ``facet`` is either the wall index ``j`` of ``A0`` whose image under ``w``
    is the facet (in which case the answer is ``j`` by definition), or a
    hyperplane ``(normal, height)`` meaning ``{x : x . normal = height}``.  In
    the second case the hyperplane is pulled back through ``w^{-1}`` and
    matched against the walls of ``A0``.
    """
    if np.isscalar(facet):
        return int(facet)
    normal, height = facet
    normal = np.asarray(normal, dtype=float)
    # x in w^{-1}H  <=>  (A x + v) . n = h  <=>  x . (A^T n) = h - v . n
    n_local = w.linear.T @ normal
    h_local = float(height) - float(w.translation @ normal)
    for j in range(frame.rank + 1):
        nj, cj = frame.wall_normals[j], frame.wall_offsets[j]
        scale = float(n_local @ nj) / float(nj @ nj)
        if (abs(abs(scale) - 1.0) < tol and np.allclose(n_local, scale * nj, atol=tol)
                and abs(h_local - scale * cj) < tol):
            return j
    raise ValueError("hyperplane is not a facet of the given alcove")


def project_to_W(group: FiniteWeylGroup, g: AffineIsometry, tol: float = 1e-4) -> int:
    """Index of ``pi(g)``: the group element nearest to the linear part of ``g``."""
    idx = group.nearest(g.linear)
    dist = float(np.abs(group.elements[idx] - g.linear).max())
    if dist > tol:
        raise NotInGroup(f"linear part is {dist:.2e} away from every element of W")
    return idx


@dataclass(eq=False)
class GroupTables:
    """Exact lookup tables for ``(g, v)`` affine elements.

    Backed either by a complete :class:`FiniteWeylGroup` or, for groups too
    large to enumerate (E7, E8), by lazily discovered elements: only the
    elements a trajectory actually visits are ever materialized.
    """

    spec: RootSystemSpec
    group: FiniteWeylGroup | None = None
    _mats: list = field(default_factory=list, repr=False)
    _index: dict = field(default_factory=dict, repr=False)
    _right: list = field(default_factory=list, repr=False)
    _preimage: list = field(default_factory=list, repr=False)
    _shift0: list = field(default_factory=list, repr=False)

    def __post_init__(self):
        spec = self.spec
        self.gens = generator_int_mats(spec)
        self.scale = spec.root_to_coroot_scale
        self.pairing = (spec.root_coords @ spec.cartan).astype(np.int64)
        self.theta_co_coords = np.rint(
            spec.to_coroot_coords(spec.coroots[spec.highest_index])).astype(np.int64)
        self._root_keys = {tuple(int(x) for x in c): a for a, c in enumerate(spec.root_coords)}
        if self.group is not None:
            G = self.group
            self._right = G.right_gen.tolist()
            inv = G.inverse
            self._preimage = G.root_action[inv].tolist()
            shift = np.einsum("gij,j->gi", G.coroot_mats, self.theta_co_coords)
            self._shift0 = [tuple(int(x) for x in row) for row in shift]
            self.identity = G.index_of_identity
        else:
            self.identity = self._add(np.eye(spec.rank, dtype=np.int64))

    @classmethod
    def for_spec(cls, spec: RootSystemSpec, enumerate_cap: int = 60000) -> "GroupTables":
        from .roots import weyl_group_order

        if weyl_group_order(spec.family, spec.rank) <= enumerate_cap:
            return cls(spec, enumerate_weyl_group(spec, cap=enumerate_cap))
        return cls(spec)

    @property
    def complete(self) -> bool:
        return self.group is not None

    # lazy bookkeeping -------------------------------------------------
    def _add(self, m: np.ndarray) -> int:
        key = m.tobytes()
        g = self._index.get(key)
        if g is not None:
            return g
        g = len(self._mats)
        self._index[key] = g
        self._mats.append(m)
        self._right.append(None)
        inv = np.rint(np.linalg.inv(m)).astype(np.int64)
        images = self.spec.root_coords @ inv.T
        self._preimage.append([self._root_keys[tuple(int(x) for x in row)] for row in images])
        co = np.rint(m * (1.0 / self.scale)[:, None] * self.scale[None, :]).astype(np.int64)
        self._shift0.append(tuple(int(x) for x in co @ self.theta_co_coords))
        return g

    def right(self, g: int, i: int) -> int:
        row = self._right[g]
        if row is None:
            row = [self._add(self._mats[g] @ self.gens[j]) for j in range(len(self.gens))]
            self._right[g] = row
        return row[i]

    def preimage_root(self, g: int, a: int) -> int:
        return self._preimage[g][a]

    def theta_shift(self, g: int) -> tuple:
        return self._shift0[g]

    def matrix(self, g: int) -> np.ndarray:
        if self.group is not None:
            return self.group.elements[g]
        s = self.spec.simple_roots.T
        return s @ self._mats[g] @ np.linalg.inv(s)

    def matrices(self, gs) -> np.ndarray:
        gs = np.asarray(gs, dtype=np.int64)
        if self.group is not None:
            return self.group.elements[gs]
        return np.array([self.matrix(int(g)) for g in gs]).reshape(gs.shape + (self.spec.rank,) * 2)

    def isometry(self, g: int, v) -> AffineIsometry:
        return AffineIsometry(self.matrix(g), self.spec.coroot_basis @ np.asarray(v, dtype=float))

    def step(self, g: int, v: tuple, i: int) -> tuple[int, tuple]:
        """Right-multiply ``(g, v)`` by the affine simple reflection ``s_i``."""
        if i == 0:
            sh = self._shift0[g]
            v = tuple(a + b for a, b in zip(v, sh))
        return self.right(g, i), v


def locate_alcove(frame: AlcoveFrame, tables: GroupTables, x, max_iter: int = 100000):
    """Return ``(g, v)`` with ``x`` in the closure of ``(g, v) A0``.

    Folds ``x`` into ``A0`` by repeatedly reflecting in a violated wall.
    """
    y = np.array(x, dtype=float)
    g, v = tables.identity, tuple([0] * frame.rank)
    for _ in range(max_iter):
        vals = frame.walls(y)
        j = int(np.argmin(vals))
        if vals[j] >= 0.0:
            return g, v
        y = apply_isometry(frame.simple_affine[j], y)
        g, v = tables.step(g, v, j)
    raise RuntimeError("alcove location did not terminate")


@dataclass(frozen=True, eq=False)
class Geometry:
    """Everything a walk needs about one type, built once and shared."""

    spec: RootSystemSpec
    frame: AlcoveFrame
    tables: GroupTables

    @property
    def rank(self) -> int:
        return self.spec.rank

    @property
    def name(self) -> str:
        return self.spec.name

    @property
    def group(self) -> FiniteWeylGroup | None:
        return self.tables.group

    def require_group(self) -> FiniteWeylGroup:
        from .errors import GroupTooLarge

        if self.tables.group is None:
            raise GroupTooLarge(f"W({self.name}) is not enumerated")
        return self.tables.group

    @cached_property
    def step_table(self) -> np.ndarray:
        """``step_table[g, i] = rho(g) beta_i``: the step taken when crossing face ``i``."""
        G = self.require_group()
        return np.einsum("gij,kj->gki", G.elements, self.frame.beta)

    @cached_property
    def right_table(self) -> np.ndarray:
        """``right_table[g, i]``: index of ``g * pi(s_i)``."""
        return np.asarray(self.require_group().right_gen, dtype=np.int64)

    @cached_property
    def shift0_table(self) -> np.ndarray:
        """Coroot-coordinate translation picked up when crossing face 0 from ``g``."""
        self.require_group()
        return np.array(self.tables._shift0, dtype=np.int64).reshape(-1, self.rank)

    @cached_property
    def centroid_table(self) -> np.ndarray:
        """``rho(g) c0`` for every ``g``."""
        return self.require_group().elements @ self.frame.centroid

    def centroids(self, g, v) -> np.ndarray:
        """Centroid of the alcove ``(g, v) A0``; broadcasts over leading axes."""
        v = np.asarray(v)
        base = self.centroid_table[np.asarray(g)] if self.tables.complete else (
            self.tables.matrices(g) @ self.frame.centroid)
        return base + v @ self.spec.coroot_basis.T


@lru_cache(maxsize=None)
def geometry(type_name: str) -> Geometry:
    from .roots import build_root_system

    spec = build_root_system(type_name)
    return Geometry(spec, fundamental_alcove(spec), GroupTables.for_spec(spec))

