"""Element-local discrete weak gradient, curl and divergence.

All local matrices are computed once per *reference shape*: the element
translated to its centroid and scaled by its diameter h_T. On a physical
element with diameter h the scaled orthonormal basis has Gram matrix h^2 I,
and the weak operators pick up a factor 1/h::

    G_T = G_ref / h,    C_T = C_ref / h,    D_T = D_ref / h.

Edge degrees of freedom are shifted-Legendre coefficients in the element's
own counter-clockwise traversal; :func:`orientation_signs` converts them to
the mesh's global edge orientation.

Two-dimensional conventions: curl w = d_x w_2 - d_y w_1 for vectors,
curl q = (d_y q, -d_x q) for scalars, t = (-n_y, n_x) and
v x n = v_1 n_2 - v_2 n_1 = -v.t, so the tangential weak DoF is v_t = v.t.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from .exceptions import ConfigurationError
from .mesh import ElementGeometry, GridFamily, PolyMesh, polygon_geometry, triangulate_polygon
from .quadrature import (
    OrthonormalBasis,
    dim_p,
    edge_legendre,
    gauss_interval,
    orthonormal_basis,
    quad_rule,
)

log = logging.getLogger(__name__)

_FAMILY_EDGES = {GridFamily.TRIANGLE: 3, GridFamily.PENTAGON: 5, GridFamily.SGRID: 9}
_CONVEX = {GridFamily.TRIANGLE: True, GridFamily.PENTAGON: False, GridFamily.SGRID: False}
# dim P_{k+17} on 9-gons is prohibitive; convergence order is insensitive past this
SGRID_EXTRA_CAP = 11


def default_weak_curl_degree(n_edges: int, convex: bool, k: int) -> int:
    return n_edges + k - 1 if convex else 2 * n_edges + k - 1


def weak_curl_degree(family, k: int, override: int | None = None) -> int:
    """Polynomial degree r of the discrete weak curl for a grid family.

    Convex elements use N + k - 1 and non-convex ones 2N + k - 1 (N edges);
    the 9-gon family is capped at k + 11. An explicit ``override`` always
    wins but must be at least k - 1.
    """
    if k < 1:
        raise ConfigurationError(f"k must be >= 1, got {k}")
    family = GridFamily.parse(family)
    if override is not None:
        if override < k - 1:
            raise ConfigurationError(f"weak-curl degree r={override} is below k-1={k - 1}")
        r = default_weak_curl_degree(_FAMILY_EDGES[family], _CONVEX[family], k)
        if override < r:
            log.warning("weak-curl degree override r=%d is below the default %d for %s", override, r, family.value)
        return int(override)
    r = default_weak_curl_degree(_FAMILY_EDGES[family], _CONVEX[family], k)
    if family is GridFamily.SGRID and r > k + SGRID_EXTRA_CAP:
        log.info("capping weak-curl degree for sgrid at r=%d (bubble bound %d)", k + SGRID_EXTRA_CAP, r)
        r = k + SGRID_EXTRA_CAP
    return r


def _is_convex(points) -> bool:
    p = np.asarray(points, dtype=float)
    d1 = np.roll(p, -1, axis=0) - p
    d0 = p - np.roll(p, 1, axis=0)
    return bool(np.all(d0[:, 0] * d1[:, 1] - d0[:, 1] * d1[:, 0] > -1e-14))


def mesh_weak_curl_degree(mesh: PolyMesh, k: int, override: int | None = None) -> int:
    """Weak-curl degree for ``mesh``: its family rule, else the worst element."""
    if mesh.family is not None:
        return weak_curl_degree(mesh.family, k, override)
    if override is not None:
        if override < k - 1:
            raise ConfigurationError(f"weak-curl degree r={override} is below k-1={k - 1}")
        return int(override)
    return max(
        default_weak_curl_degree(len(loop), _is_convex(mesh.vertices[loop]), k) for loop in mesh.elements
    )


# ---------------------------------------------------------------------------
# reference shapes


# exact normalized vertices of the first element seen for each rounded key
_SHAPES: dict[tuple, np.ndarray] = {}


def _register(normalized: np.ndarray, decimals: int) -> tuple:
    key = tuple(map(tuple, np.round(normalized, decimals) + 0.0))
    _SHAPES.setdefault(key, np.array(normalized, dtype=float))
    return key


def shape_key(points, decimals: int = 9) -> tuple:
    """Hashable key of the element's shape up to translation and scaling."""
    geo = polygon_geometry(points)
    return _register((geo.vertices - geo.centroid) / geo.h, decimals)


@dataclass(frozen=True)
class ReferenceElement:
    """Quadrature and basis data of a reference shape (centroid 0, diameter 1)."""

    geometry: ElementGeometry
    degree: int
    basis: OrthonormalBasis
    points: np.ndarray
    weights: np.ndarray
    phi: np.ndarray  # (nq, dim)
    grad: np.ndarray  # (2, nq, dim)
    edge_s: np.ndarray  # (ns,)
    edge_w: np.ndarray  # (ns,)
    edge_phi: np.ndarray  # (N, ns, dim)

    @property
    def n_edges(self) -> int:
        return self.geometry.n_edges


@lru_cache(maxsize=64)
def reference_element(key: tuple, degree: int) -> ReferenceElement:
    pts = _SHAPES.get(key)
    if pts is None:
        pts = _SHAPES.setdefault(key, np.array(key, dtype=float))
    geo = polygon_geometry(pts)
    tris = triangulate_polygon(geo.vertices)
    rule = quad_rule(geo, 2 * degree + 2, tris)
    basis = orthonormal_basis(geo, degree, rule)
    phi, grad = basis.values_and_gradient(rule.points)
    s, w = gauss_interval(2 * degree + 2)
    v0 = geo.vertices
    v1 = np.roll(v0, -1, axis=0)
    epts = v0[:, None, :] + s[None, :, None] * (v1 - v0)[:, None, :]
    edge_phi = basis(epts)
    return ReferenceElement(geo, degree, basis, rule.points, rule.weights, phi, grad, s, w, edge_phi)


@dataclass(frozen=True)
class ReferenceOps:
    """Reference-shape local matrices for one (shape, k, r)."""

    k: int
    r: int
    n_edges: int
    G: np.ndarray  # (2 dimP_k, dimP_{k-1} + N(k+1))
    C: np.ndarray  # (dimP_r, 2 dimP_k + N(k+1))
    S: np.ndarray  # (dimP_{k-1} + N(k+1),) squared
    curl_form: np.ndarray  # ||curl v0||^2 on u-dofs
    jump_form: np.ndarray  # sum_e ||v0.t - v_t||^2_e on u-dofs
    ref: ReferenceElement
    h1_root: np.ndarray  # R with R^T R = curl_form + jump_form
    S_root: np.ndarray  # R with R^T R = S

    @property
    def n_u(self) -> int:
        return 2 * dim_p(self.k) + self.n_edges * (self.k + 1)

    @property
    def n_p(self) -> int:
        return dim_p(self.k - 1) + self.n_edges * (self.k + 1)


def _compress(R: np.ndarray) -> np.ndarray:
    # same Gram matrix, at most as many rows as columns
    if R.shape[0] <= R.shape[1]:
        return R
    return np.linalg.qr(R, mode="r")


def _edge_mass(ref: ReferenceElement, n_rows: int, n_cols: int) -> np.ndarray:
    """len_e * int_e phi_j phi_i ds for j < n_rows, i < n_cols, shape (N, n_rows, n_cols)."""
    lengths = ref.geometry.lengths
    return lengths[:, None, None] * np.einsum("s,esj,esi->eji", ref.edge_w, ref.edge_phi[:, :, :n_rows], ref.edge_phi[:, :, :n_cols])


@lru_cache(maxsize=128)
def reference_ops(key: tuple, k: int, r: int) -> ReferenceOps:
    if k < 1:
        raise ConfigurationError("k must be >= 1")
    if r < k - 1:
        raise ConfigurationError(f"weak-curl degree r={r} is below k-1={k - 1}")
    ref = reference_element(key, max(r, k))
    geo = ref.geometry
    N = geo.n_edges
    nk, nk1, nr, ne = dim_p(k), dim_p(k - 1), dim_p(r), k + 1
    W = ref.weights
    phi, grad = ref.phi, ref.grad
    L = edge_legendre(ref.edge_s, k)  # (ns, k+1)
    # edge moments len_e * int_0^1 L_m(s) phi_j(x(s)) ds -> (N, k+1, dim)
    emom = geo.lengths[:, None, None] * np.einsum("s,sm,esj->emj", ref.edge_w, L, ref.edge_phi)

    G = np.zeros((2 * nk, nk1 + N * ne))
    for c in range(2):
        G[c * nk : (c + 1) * nk, :nk1] = -((grad[c][:, :nk] * W[:, None]).T @ phi[:, :nk1])
        G[c * nk : (c + 1) * nk, nk1:] = (geo.normals[:, c, None, None] * emom[:, :, :nk]).transpose(2, 0, 1).reshape(nk, N * ne)

    # (C v, q) = (curl v0, q) + <v_t - v0.t, q>: only P_k functions are
    # differentiated, which avoids cancellation against large grad q for high r
    emass = _edge_mass(ref, nk, nr)  # (N, nk, nr)
    C = np.zeros((nr, 2 * nk + N * ne))
    C[:, :nk] = -((phi[:, :nr] * W[:, None]).T @ grad[1][:, :nk]) - np.einsum("e,eji->ij", geo.tangents[:, 0], emass)
    C[:, nk : 2 * nk] = (phi[:, :nr] * W[:, None]).T @ grad[0][:, :nk] - np.einsum("e,eji->ij", geo.tangents[:, 1], emass)
    C[:, 2 * nk :] = emom[:, :, :nr].transpose(2, 0, 1).reshape(nr, N * ne)

    # stabilizer sum_e len_e <p0 - pb, q0 - qb>_e; kept as a factor R with S = R^T R
    rows = []
    for e in range(N):
        T = np.zeros((len(ref.edge_s), nk1 + N * ne))
        T[:, :nk1] = ref.edge_phi[e][:, :nk1]
        T[:, nk1 + e * ne : nk1 + (e + 1) * ne] = -L
        rows.append(np.sqrt(geo.lengths[e] * ref.edge_w)[:, None] * T)
    S_root = np.concatenate(rows)

    # ||v||_{1,h}^2 = ||curl v0||^2 + sum_e ||v0.t - v_t||_e^2, also as a factor
    Kc = np.concatenate([-grad[1][:, :nk], grad[0][:, :nk]], axis=1)
    rows = [np.pad(np.sqrt(W)[:, None] * Kc, ((0, 0), (0, N * ne)))]
    for e in range(N):
        t = geo.tangents[e]
        T = np.zeros((len(ref.edge_s), 2 * nk + N * ne))
        T[:, :nk] = t[0] * ref.edge_phi[e][:, :nk]
        T[:, nk : 2 * nk] = t[1] * ref.edge_phi[e][:, :nk]
        T[:, 2 * nk + e * ne : 2 * nk + (e + 1) * ne] = -L
        rows.append(np.sqrt(geo.lengths[e] * ref.edge_w)[:, None] * T)
    n_curl = len(W)
    h1_root = np.concatenate(rows)
    curl_form = h1_root[:n_curl].T @ h1_root[:n_curl]
    jump_form = h1_root[n_curl:].T @ h1_root[n_curl:]
    S = S_root.T @ S_root
    sym = lambda M: 0.5 * (M + M.T)
    return ReferenceOps(k, r, N, G, C, sym(S), sym(curl_form), sym(jump_form), ref, _compress(h1_root), _compress(S_root))


@lru_cache(maxsize=32)
def reference_div(key: tuple, k: int, r: int) -> np.ndarray:
    """Weak divergence on {v0 in [P_k]^2, full vector trace in [P_k(e)]^2}."""
    ref = reference_element(key, max(r, k))
    geo = ref.geometry
    N = geo.n_edges
    nk, nr, ne = dim_p(k), dim_p(r), k + 1
    L = edge_legendre(ref.edge_s, k)
    emom = geo.lengths[:, None, None] * np.einsum("s,sm,esj->emj", ref.edge_w, L, ref.edge_phi[:, :, :nr])
    emass = _edge_mass(ref, nk, nr)
    D = np.zeros((nr, 2 * nk + 2 * N * ne))
    for c in range(2):
        # (div v0, w) - <v0.n, w> in place of -(v0, grad w)
        D[:, c * nk : (c + 1) * nk] = (ref.phi[:, :nr] * ref.weights[:, None]).T @ ref.grad[c][:, :nk] - np.einsum(
            "e,eji->ij", geo.normals[:, c], emass
        )
    for e in range(N):
        for c in range(2):
            col = 2 * nk + e * 2 * ne + c * ne
            D[:, col : col + ne] = geo.normals[e, c] * emom[e].T
    return D


# ---------------------------------------------------------------------------
# physical elements


@dataclass(frozen=True)
class LocalWeakOps:
    """Weak operators on one physical element.

    Scalar weak DoFs are ``[sigma_0 (dimP_{k-1}), sigma_b (N x (k+1))]``;
    vector weak DoFs are ``[v0_x (dimP_k), v0_y (dimP_k), v_t (N x (k+1))]``.
    Interior coefficients refer to ``basis`` (Gram matrix h^2 I on T).
    """

    k: int
    r: int
    h: float
    geometry: ElementGeometry
    basis: OrthonormalBasis
    G: np.ndarray
    C: np.ndarray
    reference: ReferenceOps

    def weak_gradient(self, sigma) -> np.ndarray:
        """Coefficients of the weak gradient, shape (2, dimP_k)."""
        return (self.G @ np.asarray(sigma)).reshape(2, -1)

    def weak_curl(self, v) -> np.ndarray:
        return self.C @ np.asarray(v)


def _as_geometry(element) -> ElementGeometry:
    return element if isinstance(element, ElementGeometry) else polygon_geometry(element)


def element_basis(element, degree: int) -> OrthonormalBasis:
    """Scaled orthonormal basis of P_degree on a physical element."""
    geo = _as_geometry(element)
    ref = reference_element(shape_key(geo.vertices), degree)
    return ref.basis.at(geo.centroid, geo.h)


def local_weak_ops(element, k: int, r: int) -> LocalWeakOps:
    geo = _as_geometry(element)
    key = shape_key(geo.vertices)
    ops = reference_ops(key, k, r)
    basis = ops.ref.basis.at(geo.centroid, geo.h)
    return LocalWeakOps(k, r, geo.h, geo, basis, ops.G / geo.h, ops.C / geo.h, ops)


def weak_gradient_matrix(element, k: int) -> np.ndarray:
    """Map scalar weak DoFs to weak-gradient coefficients in [P_k(T)]^2."""
    geo = _as_geometry(element)
    return reference_ops(shape_key(geo.vertices), k, k).G / geo.h


def weak_curl_matrix(element, k: int, r: int) -> np.ndarray:
    """Map vector weak DoFs to weak-curl coefficients in P_r(T)."""
    geo = _as_geometry(element)
    return reference_ops(shape_key(geo.vertices), k, r).C / geo.h


def weak_div_matrix(element, k: int, r: int) -> np.ndarray:
    """Map {v0, full trace} pairs to weak-divergence coefficients in P_r(T).

    Trace DoFs per edge are ``[v_x (k+1), v_y (k+1)]`` in traversal order.
    """
    geo = _as_geometry(element)
    return reference_div(shape_key(geo.vertices), k, r) / geo.h



def weak_curl_of_field(element, u, r: int, exactness: int | None = None) -> np.ndarray:
    """Weak curl in P_r(T) of the pair {u|_T, u|_dT} for a field ``u``.

    Integrals use quadrature of exactness ``exactness`` (default 2r + 8),
    so the result is exact for polynomial ``u`` of modest degree.
    """
    geo = _as_geometry(element)
    q = 2 * r + 8 if exactness is None else exactness
    basis = element_basis(geo, r)
    rule = quad_rule(geo, q)
    curl_q = basis.curl(rule.points)  # (2, nq, dim)
    uv = np.asarray(u(rule.points), dtype=float)
    rhs = np.einsum("q,qc,cqj->j", rule.weights, uv, curl_q)
    s, w = gauss_interval(q)
    for e in range(geo.n_edges):
        a, b = geo.vertices[e], geo.vertices[(e + 1) % geo.n_edges]
        pts = a + s[:, None] * (b - a)
        ut = np.asarray(u(pts), dtype=float) @ geo.tangents[e]
        rhs += geo.lengths[e] * (w * ut) @ basis(pts)
    return rhs / geo.h**2

# ---------------------------------------------------------------------------
# grouping of mesh elements by reference shape


@dataclass(frozen=True)
class ElementGroup:
    key: tuple
    elements: np.ndarray  # (n,)
    centroids: np.ndarray  # (n, 2)
    h: np.ndarray  # (n,)
    edges: np.ndarray  # (n, N) global edge ids in traversal order
    signs: np.ndarray  # (n, N) +1 when traversal matches the global orientation

    @property
    def n_edges(self) -> int:
        return self.edges.shape[1]


def group_elements(mesh: PolyMesh, decimals: int = 9) -> list[ElementGroup]:
    """Partition the elements of ``mesh`` into groups of identical reference shape."""
    cached = mesh._geometry.get(("groups", decimals))
    if cached is not None:
        return cached
    sizes = np.array([len(loop) for loop in mesh.elements])
    groups = []
    for N in np.unique(sizes):
        idx = np.flatnonzero(sizes == N)
        loops = np.stack([mesh.elements[t] for t in idx])
        P = mesh.vertices[loops]  # (n, N, 2)
        Q = np.roll(P, -1, axis=1)
        cross = P[..., 0] * Q[..., 1] - Q[..., 0] * P[..., 1]
        area = 0.5 * cross.sum(axis=1)
        cent = ((P + Q) * cross[..., None]).sum(axis=1) / (6.0 * area[:, None])
        diff = P[:, :, None, :] - P[:, None, :, :]
        h = np.sqrt((diff**2).sum(-1)).reshape(len(idx), -1).max(axis=1)
        normalized = (P - cent[:, None, :]) / h[:, None, None]
        ref = np.round(normalized, decimals) + 0.0
        uniq, first, inv = np.unique(ref.reshape(len(idx), -1), axis=0, return_index=True, return_inverse=True)
        inv = inv.ravel()
        edges = np.stack([mesh.element_edges[t] for t in idx])
        signs = np.stack([mesh.element_signs[t] for t in idx])
        for g in range(len(uniq)):
            sel = np.flatnonzero(inv == g)
            key = _register(normalized[first[g]], decimals)
            groups.append(ElementGroup(key, idx[sel], cent[sel], h[sel], edges[sel], signs[sel]))
    mesh._geometry[("groups", decimals)] = groups
    return groups


def orientation_signs(signs: np.ndarray, k: int, trailing_power: int) -> np.ndarray:
    """Per-DoF factors mapping global edge coefficients to traversal ones.

    Reversing the parameter flips L_m by (-1)^m; tangential components also
    flip sign, which ``trailing_power=1`` accounts for.
    """
    m = np.arange(k + 1)
    s = np.asarray(signs)[..., None]
    return np.where(s > 0, 1.0, (-1.0) ** (m + trailing_power)).reshape(*np.shape(signs)[:-1], -1)
