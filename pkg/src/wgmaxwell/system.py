"""Global degrees of freedom, saddle-point assembly, boundary data and solve.

Unknown layout (each block in index order)::

    [ u0 per element | u_t per edge | p0 per element | p_b per edge ]

The assembled operator is the symmetric indefinite matrix
``K = [[A, -B^T], [-B, -S]]`` obtained from the scheme by negating the
second equation, so ``K x = [F; -G]``.
"""

from __future__ import annotations

import logging
import time
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .exceptions import ConditioningError, ConfigurationError, SingularSystemError
from .mesh import PolyMesh
from .quadrature import dim_p, edge_legendre, gauss_interval, quad_rule
from .weak_ops import (
    ElementGroup,
    ReferenceOps,
    group_elements,
    mesh_weak_curl_degree,
    orientation_signs,
    reference_element,
    reference_ops,
)

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class DofMap:
    k: int
    n_elements: int
    n_edges: int
    boundary_edges: np.ndarray

    @property
    def n_u0(self) -> int:
        return 2 * dim_p(self.k)

    @property
    def n_p0(self) -> int:
        return dim_p(self.k - 1)

    @property
    def n_e(self) -> int:
        return self.k + 1

    @property
    def u0_offset(self) -> int:
        return 0

    @property
    def ut_offset(self) -> int:
        return self.n_elements * self.n_u0

    @property
    def p0_offset(self) -> int:
        return self.ut_offset + self.n_edges * self.n_e

    @property
    def pb_offset(self) -> int:
        return self.p0_offset + self.n_elements * self.n_p0

    @property
    def n_u(self) -> int:
        return self.p0_offset

    @property
    def n_p(self) -> int:
        return self.total - self.n_u

    @property
    def total(self) -> int:
        return self.pb_offset + self.n_edges * self.n_e

    def u0(self, t) -> np.ndarray:
        return self.u0_offset + np.asarray(t)[..., None] * self.n_u0 + np.arange(self.n_u0)

    def ut(self, e) -> np.ndarray:
        return self.ut_offset + np.asarray(e)[..., None] * self.n_e + np.arange(self.n_e)

    def p0(self, t) -> np.ndarray:
        return self.p0_offset + np.asarray(t)[..., None] * self.n_p0 + np.arange(self.n_p0)

    def pb(self, e) -> np.ndarray:
        return self.pb_offset + np.asarray(e)[..., None] * self.n_e + np.arange(self.n_e)

    @property
    def boundary_ut(self) -> np.ndarray:
        return self.ut(self.boundary_edges).ravel()

    @property
    def boundary_pb(self) -> np.ndarray:
        return self.pb(self.boundary_edges).ravel()

    def local_indices(self, group: ElementGroup) -> np.ndarray:
        """(n, n_local) global indices in element order [u0 | u_t | p0 | p_b]."""
        n = len(group.elements)
        return np.concatenate(
            [
                self.u0(group.elements),
                self.ut(group.edges).reshape(n, -1),
                self.p0(group.elements),
                self.pb(group.edges).reshape(n, -1),
            ],
            axis=1,
        )


def build_dof_map(mesh: PolyMesh, k: int) -> DofMap:
    if k < 1:
        raise ConfigurationError(f"k must be >= 1, got {k}")
    return DofMap(k, mesh.n_elements, mesh.n_edges, mesh.boundary_edges)


def estimate_dofs(n_elements: int, n_edges: int, k: int) -> int:
    return n_elements * (2 * dim_p(k) + dim_p(k - 1)) + 2 * n_edges * (k + 1)


@dataclass
class _Block:
    """All elements of one reference shape with their local-to-global maps."""

    group: ElementGroup
    ops: ReferenceOps
    K: np.ndarray  # reference element matrix (h = 1), nu included
    index: np.ndarray  # (n, nloc)
    sign: np.ndarray  # (n, nloc), +-1
    scale: np.ndarray  # (n, nloc): 1 on u-dofs, h on p-dofs; K_T = diag(scale) K diag(scale)
    interior: np.ndarray  # local positions of u0 and p0
    skeleton: np.ndarray  # local positions of u_t and p_b


def _reference_matrix(ops: ReferenceOps, nu: float) -> np.ndarray:
    nu_loc, np_loc = ops.n_u, ops.n_p
    nk = 2 * dim_p(ops.k)
    A = nu * ops.C.T @ ops.C
    B = np.zeros((np_loc, nu_loc))
    B[:, :nk] = ops.G.T
    K = np.block([[A, -B.T], [-B, -ops.S]])
    return 0.5 * (K + K.T)


def _blocks(mesh: PolyMesh, dofmap: DofMap, k: int, r: int, nu: float) -> list[_Block]:
    blocks = []
    for g in group_elements(mesh):
        ops = reference_ops(g.key, k, r)
        N = g.n_edges
        nk, nk1, ne = 2 * dim_p(k), dim_p(k - 1), k + 1
        n = len(g.elements)
        sign_t = orientation_signs(g.signs, k, 1)
        sign_p = orientation_signs(g.signs, k, 0)
        sign = np.concatenate([np.ones((n, nk)), sign_t, np.ones((n, nk1)), sign_p], axis=1)
        scale = np.concatenate([np.ones((n, nk + N * ne)), np.repeat(g.h[:, None], nk1 + N * ne, axis=1)], axis=1)
        interior = np.r_[np.arange(nk), nk + N * ne + np.arange(nk1)]
        skeleton = np.r_[nk + np.arange(N * ne), nk + N * ne + nk1 + np.arange(N * ne)]
        blocks.append(
            _Block(g, ops, _reference_matrix(ops, nu), dofmap.local_indices(g), sign, scale, interior, skeleton)
        )
    return blocks


def _data_rule_points(block: _Block, exactness: int):
    ref = reference_element(block.group.key, block.ops.ref.degree)
    rule = quad_rule(ref.geometry, exactness)
    phi = ref.basis(rule.points)
    g = block.group
    pts = g.centroids[:, None, :] + g.h[:, None, None] * rule.points[None, :, :]
    return pts, rule.weights, phi


@dataclass
class SaddleSystem:
    """Assembled scheme; sparse blocks are built on first access."""

    mesh: PolyMesh
    k: int
    r: int
    nu: float
    dofmap: DofMap
    blocks: list
    F: np.ndarray  # (f, v0) on u-dofs, length dofmap.n_u
    G: np.ndarray  # -(g, q0) on p-dofs, length dofmap.n_p
    _cache: dict = field(default_factory=dict, repr=False)

    @property
    def rhs(self) -> np.ndarray:
        return np.concatenate([self.F, -self.G])

    def _triplets(self, rows_sel, cols_sel):
        R, C, V = [], [], []
        for b in self.blocks:
            nloc = b.K.shape[0]
            rs = np.arange(nloc)[rows_sel(b)]
            cs = np.arange(nloc)[cols_sel(b)]
            w = b.sign * b.scale
            vals = b.K[np.ix_(rs, cs)][None] * w[:, rs, None] * w[:, None, cs]
            R.append(np.repeat(b.index[:, rs], len(cs), axis=1).ravel())
            C.append(np.tile(b.index[:, cs], (1, len(rs))).ravel())
            V.append(vals.ravel())
        return np.concatenate(R), np.concatenate(C), np.concatenate(V)

    @property
    def K(self) -> sp.csr_matrix:
        if "K" not in self._cache:
            n = self.dofmap.total
            R, C, V = self._triplets(lambda b: slice(None), lambda b: slice(None))
            K = sp.coo_matrix((V, (R, C)), shape=(n, n)).tocsr()
            K.eliminate_zeros()
            self._cache["K"] = K
        return self._cache["K"]

    @property
    def A(self) -> sp.csr_matrix:
        nu_ = self.dofmap.n_u
        return self.K[:nu_, :nu_]

    @property
    def B(self) -> sp.csr_matrix:
        nu_ = self.dofmap.n_u
        return -self.K[nu_:, :nu_]

    @property
    def S(self) -> sp.csr_matrix:
        nu_ = self.dofmap.n_u
        return -self.K[nu_:, nu_:]

    def apply(self, x) -> np.ndarray:
        """K @ x computed element by element (no global matrix)."""
        x = np.asarray(x, dtype=float)
        y = np.zeros_like(x)
        for b in self.blocks:
            w = b.sign * b.scale
            xl = x[b.index] * w
            yl = (xl @ b.K.T) * w
            y += np.bincount(b.index.ravel(), weights=yl.ravel(), minlength=len(x))
        return y


def assemble(mesh: PolyMesh, k: int, r: int | None = None, nu: float = 1.0, case=None, data_exactness=None) -> SaddleSystem:
    """Assemble the scheme on ``mesh``; right-hand sides come from ``case``.

    ``case`` needs ``f(points) -> (..., 2)`` and ``g(points) -> (...)``;
    without it both right-hand sides are zero.
    """
    if not nu > 0:
        raise ConfigurationError(f"nu must be positive, got {nu}")
    r = mesh_weak_curl_degree(mesh, k, r)
    dofmap = build_dof_map(mesh, k)
    blocks = _blocks(mesh, dofmap, k, r, nu)
    F = np.zeros(dofmap.n_u)
    G = np.zeros(dofmap.n_p)
    if case is not None:
        q = data_exactness if data_exactness is not None else 2 * k + 8
        nk, nk1 = dim_p(k), dim_p(k - 1)
        for b in blocks:
            pts, w, phi = _data_rule_points(b, q)
            h2w = b.group.h[:, None] ** 2 * w[None, :]
            fv = np.asarray(case.f(pts), dtype=float)  # (n, nq, 2)
            Fu = np.concatenate([(fv[..., c] * h2w) @ phi[:, :nk] for c in range(2)], axis=1)
            np.add.at(F, dofmap.u0(b.group.elements), Fu)
            gv = np.asarray(case.g(pts), dtype=float) * np.ones(pts.shape[:-1])
            Gp = -(gv * h2w) @ phi[:, :nk1]
            np.add.at(G, dofmap.p0(b.group.elements) - dofmap.n_u, Gp)
    return SaddleSystem(mesh, k, r, float(nu), dofmap, blocks, F, G)


# ---------------------------------------------------------------------------
# boundary conditions


def boundary_tangential_dofs(mesh: PolyMesh, k: int, case, exactness: int | None = None) -> np.ndarray:
    """Edge L2 projection of u.t on every boundary edge, global orientation.

    Returns an array (n_boundary_edges, k+1).
    """
    q = 2 * k + 2 if exactness is None else exactness
    s, w = gauss_interval(q)
    L = edge_legendre(s, k)
    bnd = mesh.boundary_edges
    a = mesh.vertices[mesh.edges[bnd, 0]]
    b = mesh.vertices[mesh.edges[bnd, 1]]
    t = (b - a) / np.linalg.norm(b - a, axis=1)[:, None]
    pts = a[:, None, :] + s[None, :, None] * (b - a)[:, None, :]
    trace = case.tangential_trace(pts, t[:, None, :]) if hasattr(case, "tangential_trace") else np.einsum(
        "nqc,nc->nq", np.asarray(case.u(pts), dtype=float), t
    )
    return (trace * w) @ L * (2.0 * np.arange(k + 1) + 1.0)


@dataclass
class ReducedSystem:
    system: SaddleSystem
    fixed: np.ndarray
    fixed_values: np.ndarray
    free: np.ndarray

    @property
    def ndof(self) -> int:
        return len(self.free)

    def full_vector(self, x_free) -> np.ndarray:
        x = np.zeros(self.system.dofmap.total)
        x[self.fixed] = self.fixed_values
        x[self.free] = x_free
        return x

    @property
    def K(self) -> sp.csr_matrix:
        return self.system.K[self.free][:, self.free]

    @property
    def rhs(self) -> np.ndarray:
        lift = self.system.apply(self.full_vector(np.zeros(self.ndof)))
        return (self.system.rhs - lift)[self.free]


def apply_boundary(system: SaddleSystem, case=None, exactness: int | None = None) -> ReducedSystem:
    """Fix boundary u_t to Q_b(u.t) and boundary p_b to zero.

    Without a ``case`` the tangential data is homogeneous.
    """
    dm = system.dofmap
    ut = dm.boundary_ut
    pb = dm.boundary_pb
    vals_t = np.zeros(len(ut)) if case is None else boundary_tangential_dofs(system.mesh, system.k, case, exactness).ravel()
    fixed = np.concatenate([ut, pb])
    values = np.concatenate([vals_t, np.zeros(len(pb))])
    order = np.argsort(fixed)
    fixed, values = fixed[order], values[order]
    mask = np.ones(dm.total, dtype=bool)
    mask[fixed] = False
    return ReducedSystem(system, fixed, values, np.flatnonzero(mask))


# ---------------------------------------------------------------------------
# solve


@dataclass
class Solution:
    system: SaddleSystem
    x: np.ndarray
    residual: float
    method: str
    timings: dict = field(default_factory=dict)

    @property
    def dofmap(self) -> DofMap:
        return self.system.dofmap

    def u0(self) -> np.ndarray:
        dm = self.dofmap
        return self.x[: dm.ut_offset].reshape(dm.n_elements, dm.n_u0)

    def ut(self) -> np.ndarray:
        dm = self.dofmap
        return self.x[dm.ut_offset : dm.p0_offset].reshape(dm.n_edges, dm.n_e)

    def p0(self) -> np.ndarray:
        dm = self.dofmap
        return self.x[dm.p0_offset : dm.pb_offset].reshape(dm.n_elements, dm.n_p0)

    def pb(self) -> np.ndarray:
        dm = self.dofmap
        return self.x[dm.pb_offset :].reshape(dm.n_edges, dm.n_e)


# (column ordering, diagonal pivot threshold). The symmetric ordering is faster
# and leaner on well-posed systems; partial pivoting is the fallback.
_ORDERINGS = (("MMD_AT_PLUS_A", 0.01), ("COLAMD", 1.0))


def _factor(K: sp.spmatrix, diagnostics: dict, ordering=_ORDERINGS[0]):
    perm, thresh = ordering
    diagnostics["ordering"] = perm
    try:
        return spla.splu(sp.csc_matrix(K), permc_spec=perm, diag_pivot_thresh=thresh)
    except RuntimeError as exc:
        raise SingularSystemError(f"sparse factorization failed: {exc}", diagnostics) from exc


def _condensation(block: _Block):
    K = block.K
    I, Bk = block.interior, block.skeleton
    KII = K[np.ix_(I, I)]
    cond = np.linalg.cond(KII)
    if not np.isfinite(cond) or cond > 1e13:
        raise ConditioningError("element interior block is singular", condition=float(cond))
    KIB = K[np.ix_(I, Bk)]
    inv = np.linalg.inv(KII)
    Z = inv @ KIB
    schur = K[np.ix_(Bk, Bk)] - KIB.T @ Z
    return inv, Z, 0.5 * (schur + schur.T)


def _solve_condensed(reduced: ReducedSystem, diagnostics: dict, timings: dict, ordering=_ORDERINGS[0]):
    system = reduced.system
    total = system.dofmap.total
    rhs_full = system.rhs
    t0 = time.perf_counter()
    # skeleton numbering
    skel_mask = np.zeros(total, dtype=bool)
    for b in system.blocks:
        skel_mask[b.index[:, b.skeleton].ravel()] = True
    skel = np.flatnonzero(skel_mask)
    pos = np.full(total, -1, dtype=np.int64)
    pos[skel] = np.arange(len(skel))
    rhs_s = rhs_full[skel].copy()
    rows, cols, vals = [], [], []
    cached = []
    for b in system.blocks:
        inv, Z, schur = _condensation(b)
        wB = (b.sign * b.scale)[:, b.skeleton]
        sI = b.scale[:, b.interior]
        FI = rhs_full[b.index[:, b.interior]]
        # K_BI K_II^{-1} F_I in scaled, signed form
        corr = wB * (((FI / sI) @ inv) @ b.K[np.ix_(b.interior, b.skeleton)])
        gidx = pos[b.index[:, b.skeleton]]
        rhs_s -= np.bincount(gidx.ravel(), weights=corr.ravel(), minlength=len(skel))
        nb = len(b.skeleton)
        rows.append(np.repeat(gidx, nb, axis=1).ravel().astype(np.int32))
        cols.append(np.tile(gidx, (1, nb)).ravel().astype(np.int32))
        vals.append((schur[None] * wB[:, :, None] * wB[:, None, :]).ravel())
        cached.append((inv, Z))
    n = len(skel)
    Ks = sp.coo_matrix((np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))), shape=(n, n)).tocsr()
    del rows, cols, vals
    fixed_s = pos[reduced.fixed]
    if np.any(fixed_s < 0):
        raise SingularSystemError("a constrained DoF is not on the skeleton", diagnostics)
    free_mask = np.ones(n, dtype=bool)
    free_mask[fixed_s] = False
    free_s = np.flatnonzero(free_mask)
    xs = np.zeros(n)
    xs[fixed_s] = reduced.fixed_values
    rhs_f = rhs_s[free_s] - Ks[free_s][:, fixed_s] @ reduced.fixed_values
    Kff = Ks[free_s][:, free_s]
    timings["condense"] = time.perf_counter() - t0
    diagnostics["skeleton_dofs"] = int(len(free_s))
    t0 = time.perf_counter()
    lu = _factor(Kff, diagnostics, ordering)
    xs[free_s] = lu.solve(rhs_f)
    timings["factor_solve"] = time.perf_counter() - t0
    del lu
    x = np.zeros(total)
    x[skel] = xs
    for b, (inv, Z) in zip(system.blocks, cached):
        wB = (b.sign * b.scale)[:, b.skeleton]
        sI = b.scale[:, b.interior]
        FI = rhs_full[b.index[:, b.interior]]
        xB = x[b.index[:, b.skeleton]] * wB
        xI = ((FI / sI) @ inv.T - xB @ Z.T) / sI
        x[b.index[:, b.interior]] = xI
    return x


def _solve_direct(reduced: ReducedSystem, diagnostics: dict, timings: dict, ordering=_ORDERINGS[0]):
    t0 = time.perf_counter()
    K = reduced.K
    rhs = reduced.rhs
    lu = _factor(K, diagnostics, ordering)
    x = reduced.full_vector(lu.solve(rhs))
    timings["factor_solve"] = time.perf_counter() - t0
    return x


def residual_norm(reduced: ReducedSystem, x) -> float:
    """||K_ff x_f - rhs_f|| / ||rhs_f|| with the boundary lift folded into rhs_f."""
    system = reduced.system
    lifted = system.rhs - system.apply(reduced.full_vector(np.zeros(reduced.ndof)))
    res = (system.apply(x) - system.rhs)[reduced.free]
    denom = np.linalg.norm(lifted[reduced.free])
    num = np.linalg.norm(res)
    return float(num / denom) if denom > 0 else float(num)


def solve(reduced: ReducedSystem, method: str = "condensed", tol: float = 1e-9) -> Solution:
    """Solve the reduced saddle-point system.

    ``method="condensed"`` eliminates element-interior DoFs before the sparse
    LU; ``"direct"`` factors the whole reduced matrix.
    """
    system = reduced.system
    diagnostics = {"k": system.k, "r": system.r, "level": system.mesh.level, "ndof": reduced.ndof}
    timings: dict = {}
    if method not in ("condensed", "direct"):
        raise ConfigurationError(f"unknown solve method {method!r}")
    if method == "condensed":
        try:
            for b in system.blocks:
                _condensation(b)
        except ConditioningError as exc:
            # a low weak-curl degree can leave the interior block singular
            log.warning("static condensation unavailable (%s); using the direct solve", exc)
            method = "direct"
    runner = _solve_condensed if method == "condensed" else _solve_direct
    error = None
    for ordering in _ORDERINGS:
        try:
            x = runner(reduced, diagnostics, timings, ordering)
        except SingularSystemError as exc:
            error = exc
            continue
        if not np.all(np.isfinite(x)):
            error = SingularSystemError("solution contains non-finite values", dict(diagnostics))
            continue
        res = residual_norm(reduced, x)
        diagnostics["residual"] = res
        if res <= tol:
            break
        error = SingularSystemError(f"relative residual {res:.3e} exceeds {tol:.1e}", dict(diagnostics))
    else:
        raise error
    log.debug("solved %d dofs (%s), residual %.2e", reduced.ndof, method, res)
    return Solution(system, x, res, method, timings)
