"""Polygonal meshes of the unit square: three refinable grid families.

Every family tiles [0, 1]^2 with ``2**(level-1)`` square cells per side and
splits each cell into two elements with a fixed template:

* ``TRIANGLE``: the diagonal from lower-left to upper-right.
* ``PENTAGON``: two non-convex pentagons separated by the zig-zag
  (0,0) -> (5/6,1/3) -> (1/6,2/3) -> (1,1).
* ``SGRID``: two interlocking non-convex 9-gons separated by a chain of
  quarter-point segments.

Edges carry a global orientation from the lower to the higher vertex index;
each element stores a +1/-1 sign per local edge telling whether its
counter-clockwise traversal agrees with that orientation.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .exceptions import CapacityError, ConfigurationError, GeometryError, MeshIntegrityError

BOUNDARY = -1

# cell templates in units of 1/12 of the cell size
_TEMPLATES = {
    "triangle": (
        [(0, 0), (12, 0), (12, 12)],
        [(0, 0), (12, 12), (0, 12)],
    ),
    "pentagon": (
        [(0, 0), (12, 0), (12, 12), (2, 8), (10, 4)],
        [(0, 0), (10, 4), (2, 8), (12, 12), (0, 12)],
    ),
    "sgrid": (
        [(0, 0), (12, 0), (12, 12), (9, 9), (3, 9), (3, 6), (9, 6), (9, 3), (3, 3)],
        [(0, 0), (3, 3), (9, 3), (9, 6), (3, 6), (3, 9), (9, 9), (12, 12), (0, 12)],
    ),
}
_UNITS = 12
_INDEX_LIMIT = np.iinfo(np.int32).max


class GridFamily(str, enum.Enum):
    TRIANGLE = "triangle"
    PENTAGON = "pentagon"
    SGRID = "sgrid"

    @classmethod
    def parse(cls, value) -> "GridFamily":
        if isinstance(value, cls):
            return value
        try:
            return cls(str(value).lower())
        except ValueError:
            names = ", ".join(f.value for f in cls)
            raise ConfigurationError(f"unknown grid family {value!r} (expected one of {names})") from None


@dataclass(frozen=True)
class ElementGeometry:
    vertices: np.ndarray
    h: float
    area: float
    centroid: np.ndarray
    lengths: np.ndarray
    normals: np.ndarray
    tangents: np.ndarray

    @property
    def n_edges(self) -> int:
        return len(self.lengths)


def signed_area(points) -> float:
    p = np.asarray(points, dtype=float)
    q = np.roll(p, -1, axis=0)
    return 0.5 * float(np.sum(p[:, 0] * q[:, 1] - q[:, 0] * p[:, 1]))


def polygon_geometry(points) -> ElementGeometry:
    """Diameter, area, centroid and per-edge frames of a CCW polygon."""
    p = np.asarray(points, dtype=float)
    q = np.roll(p, -1, axis=0)
    cross = p[:, 0] * q[:, 1] - q[:, 0] * p[:, 1]
    area = 0.5 * cross.sum()
    if not area > 0:
        raise MeshIntegrityError(f"degenerate or clockwise polygon (signed area {area:.3e})")
    centroid = ((p + q) * cross[:, None]).sum(axis=0) / (6.0 * area)
    d = q - p
    lengths = np.hypot(d[:, 0], d[:, 1])
    tangents = d / lengths[:, None]
    normals = np.column_stack([tangents[:, 1], -tangents[:, 0]])
    diff = p[:, None, :] - p[None, :, :]
    h = float(np.sqrt((diff**2).sum(axis=-1)).max())
    return ElementGeometry(p, h, float(area), centroid, lengths, normals, tangents)


def _segments_intersect(a, b, c, d) -> bool:
    def orient(p, q, r):
        return (q[0] - p[0]) * (r[1] - p[1]) - (q[1] - p[1]) * (r[0] - p[0])

    def on_segment(p, q, r):
        return min(p[0], q[0]) <= r[0] <= max(p[0], q[0]) and min(p[1], q[1]) <= r[1] <= max(p[1], q[1])

    o1, o2, o3, o4 = orient(a, b, c), orient(a, b, d), orient(c, d, a), orient(c, d, b)
    if o1 * o2 < 0 and o3 * o4 < 0:
        return True
    return (
        (o1 == 0 and on_segment(a, b, c))
        or (o2 == 0 and on_segment(a, b, d))
        or (o3 == 0 and on_segment(c, d, a))
        or (o4 == 0 and on_segment(c, d, b))
    )


def is_simple(points) -> bool:
    p = np.asarray(points, dtype=float)
    n = len(p)
    for i in range(n):
        for j in range(i + 1, n):
            if j == i + 1 or (i == 0 and j == n - 1):
                continue
            if _segments_intersect(p[i], p[(i + 1) % n], p[j], p[(j + 1) % n]):
                return False
    return True


def triangulate_polygon(points) -> list[tuple[int, int, int]]:
    """Ear-clipping triangulation of a simple counter-clockwise polygon.

    Returns index triples into ``points``; an n-gon yields n - 2 triangles,
    each with positive orientation.
    """
    p = np.asarray(points, dtype=float)
    n = len(p)
    if n < 3:
        raise GeometryError("a polygon needs at least three vertices")
    if not is_simple(p):
        raise GeometryError("polygon is self-intersecting")
    if signed_area(p) <= 0:
        raise GeometryError("polygon must be counter-clockwise with positive area")

    scale = np.ptp(p, axis=0).max()
    eps = 1e-14 * scale * scale

    def cross(a, b, c):
        return (b[0] - a[0]) * (c[1] - a[1]) - (b[1] - a[1]) * (c[0] - a[0])

    def inside(pt, a, b, c):
        # closed triangle test
        return cross(a, b, pt) >= -eps and cross(b, c, pt) >= -eps and cross(c, a, pt) >= -eps

    idx = list(range(n))
    triangles = []
    guard = 0
    while len(idx) > 3:
        m = len(idx)
        for pos in range(m):
            i0, i1, i2 = idx[pos - 1], idx[pos], idx[(pos + 1) % m]
            a, b, c = p[i0], p[i1], p[i2]
            if cross(a, b, c) <= eps:
                continue
            if any(
                inside(p[j], a, b, c) and not (np.allclose(p[j], a) or np.allclose(p[j], b) or np.allclose(p[j], c))
                for j in idx
                if j not in (i0, i1, i2)
            ):
                continue
            triangles.append((i0, i1, i2))
            del idx[pos]
            break
        else:
            raise GeometryError("ear clipping found no ear; polygon is not simple")
        guard += 1
        if guard > n:
            raise GeometryError("ear clipping did not terminate")
    triangles.append(tuple(idx))
    return triangles


@dataclass(frozen=True)
class PolyMesh:
    """Immutable polygonal mesh.

    ``edges[e] = (a, b)`` with ``a < b``. ``edge_elements[e] = (left, right)``
    where *left* traverses the edge from ``a`` to ``b`` and *right* the other
    way; a missing side is ``BOUNDARY``.
    """

    vertices: np.ndarray
    elements: list
    edges: np.ndarray
    edge_elements: np.ndarray
    element_edges: list
    element_signs: list
    family: GridFamily | None = None
    level: int | None = None
    cell_of_element: np.ndarray | None = None
    _geometry: dict = field(default_factory=dict, repr=False, compare=False)

    @property
    def n_vertices(self) -> int:
        return len(self.vertices)

    @property
    def n_edges(self) -> int:
        return len(self.edges)

    @property
    def n_elements(self) -> int:
        return len(self.elements)

    @property
    def boundary_edges(self) -> np.ndarray:
        return np.flatnonzero((self.edge_elements == BOUNDARY).any(axis=1))

    @property
    def is_boundary_edge(self) -> np.ndarray:
        return (self.edge_elements == BOUNDARY).any(axis=1)

    def element_points(self, t: int) -> np.ndarray:
        return self.vertices[self.elements[t]]

    def geometry(self, t: int) -> ElementGeometry:
        return element_geometry(self, t)

    def element_sizes(self) -> np.ndarray:
        return np.array([element_geometry(self, t).h for t in range(self.n_elements)])

    @property
    def h(self) -> float:
        return float(self.element_sizes().max())

    def validate(self, atol: float = 1e-12) -> None:
        """Check the structural invariants; raise MeshIntegrityError on failure."""
        total = 0.0
        for t, loop in enumerate(self.elements):
            pts = self.vertices[loop]
            if signed_area(pts) <= 0:
                raise MeshIntegrityError(f"element {t} is not counter-clockwise")
            if not is_simple(pts):
                raise MeshIntegrityError(f"element {t} is self-intersecting")
            total += signed_area(pts)
        if abs(total - 1.0) > atol:
            raise MeshIntegrityError(f"element areas sum to {total!r}, not 1")
        counts = np.zeros(self.n_edges, dtype=int)
        for t, (eds, sgn) in enumerate(zip(self.element_edges, self.element_signs)):
            for e, s in zip(eds, sgn):
                counts[e] += 1
                side = 0 if s > 0 else 1
                if self.edge_elements[e, side] != t:
                    raise MeshIntegrityError(f"edge {e} does not list element {t} on side {side}")
        bnd = self.is_boundary_edge
        if np.any(counts[~bnd] != 2) or np.any(counts[bnd] != 1):
            raise MeshIntegrityError("edge multiplicity mismatch")
        ends = self.vertices[self.edges[bnd]]
        on_square = np.isclose(ends, 0.0, atol=atol) | np.isclose(ends, 1.0, atol=atol)
        # both endpoints share a fixed side of the square
        same_side = (on_square[:, 0, 0] & on_square[:, 1, 0] & np.isclose(ends[:, 0, 0], ends[:, 1, 0])) | (
            on_square[:, 0, 1] & on_square[:, 1, 1] & np.isclose(ends[:, 0, 1], ends[:, 1, 1])
        )
        if not np.all(same_side):
            raise MeshIntegrityError("a boundary edge does not lie on the unit square boundary")
        if self.n_vertices - self.n_edges + self.n_elements != 1:
            raise MeshIntegrityError("Euler characteristic V - E + F != 1")


def element_geometry(mesh: PolyMesh, t: int) -> ElementGeometry:
    if not 0 <= t < mesh.n_elements:
        raise IndexError(f"element index {t} out of range")
    cache = mesh._geometry
    if t not in cache:
        cache[t] = polygon_geometry(mesh.element_points(t))
    return cache[t]


def from_loops(vertices, loops: Sequence[Sequence[int]], family=None, level=None, cell_of_element=None) -> PolyMesh:
    """Build edge topology for CCW element loops over ``vertices``."""
    vertices = np.asarray(vertices, dtype=float)
    loops = [np.asarray(loop, dtype=np.int64) for loop in loops]
    heads = np.concatenate(loops)
    tails = np.concatenate([np.roll(loop, -1) for loop in loops])
    owner = np.concatenate([np.full(len(loop), t) for t, loop in enumerate(loops)])
    lo = np.minimum(heads, tails)
    hi = np.maximum(heads, tails)
    sign = np.where(heads < tails, 1, -1)
    pairs, inverse = np.unique(np.column_stack([lo, hi]), axis=0, return_inverse=True)
    inverse = inverse.ravel()
    edge_elements = np.full((len(pairs), 2), BOUNDARY, dtype=np.int64)
    side = np.where(sign > 0, 0, 1)
    if np.any(np.bincount(inverse * 2 + side, minlength=2 * len(pairs)) > 1):
        raise MeshIntegrityError("an edge is traversed twice in the same direction")
    edge_elements[inverse, side] = owner
    splits = np.cumsum([len(loop) for loop in loops])[:-1]
    element_edges = np.split(inverse, splits)
    element_signs = np.split(sign, splits)
    return PolyMesh(
        vertices=vertices,
        elements=loops,
        edges=pairs.astype(np.int64),
        edge_elements=edge_elements,
        element_edges=element_edges,
        element_signs=element_signs,
        family=family,
        level=level,
        cell_of_element=cell_of_element,
    )


def build_grid(family, level: int) -> PolyMesh:
    """Grid ``level`` of ``family`` on the unit square."""
    family = GridFamily.parse(family)
    if not isinstance(level, (int, np.integer)) or level < 1:
        raise ConfigurationError(f"level must be a positive integer, got {level!r}")
    n = 2 ** (level - 1)
    templates = _TEMPLATES[family.value]
    if 2 * n * n * max(len(t) for t in templates) * 4 > _INDEX_LIMIT:
        raise CapacityError(f"level {level} exceeds the 32-bit index capacity")

    side = _UNITS * n + 1
    j, i = np.divmod(np.arange(n * n), n)
    loops_keys = []
    for tmpl in templates:
        t = np.asarray(tmpl)
        gx = i[:, None] * _UNITS + t[None, :, 0]
        gy = j[:, None] * _UNITS + t[None, :, 1]
        loops_keys.append(gx * side + gy)
    all_keys = np.concatenate([k.ravel() for k in loops_keys])
    uniq, inv = np.unique(all_keys, return_inverse=True)
    coords = np.column_stack([uniq // side, uniq % side]) / float(_UNITS * n)

    offsets = np.cumsum([0] + [k.size for k in loops_keys])
    per_template = [inv[offsets[m] : offsets[m + 1]].reshape(loops_keys[m].shape) for m in range(len(templates))]
    # cell-major element order: both template elements of cell 0, then cell 1, ...
    loops = []
    cells = []
    for c in range(n * n):
        for m in range(len(templates)):
            loops.append(per_template[m][c])
            cells.append(c)
    return from_loops(coords, loops, family=family, level=int(level), cell_of_element=np.asarray(cells))


def dump_mesh(mesh: PolyMesh, path) -> None:
    """Write the plain-text mesh dump used for debugging and golden files."""
    with open(path, "w") as fh:
        fh.write(f"{mesh.n_vertices} {mesh.n_edges} {mesh.n_elements}\n")
        for x, y in mesh.vertices:
            fh.write(f"{float(x)!r} {float(y)!r}\n")
        for loop in mesh.elements:
            fh.write(" ".join(str(int(v)) for v in loop) + "\n")
        for (a, b), (left, right) in zip(mesh.edges, mesh.edge_elements):
            bnd = int(left == BOUNDARY or right == BOUNDARY)
            fh.write(f"{a} {b} {left} {right} {bnd}\n")


def load_mesh(path) -> PolyMesh:
    with open(path) as fh:
        nv, ne, nel = (int(v) for v in fh.readline().split())
        verts = [tuple(float(v) for v in fh.readline().split()) for _ in range(nv)]
        loops = [[int(v) for v in fh.readline().split()] for _ in range(nel)]
    mesh = from_loops(verts, loops)
    if mesh.n_edges != ne:
        raise MeshIntegrityError(f"dump declares {ne} edges but loops produce {mesh.n_edges}")
    return mesh
