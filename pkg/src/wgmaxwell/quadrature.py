"""Polynomial bases, quadrature and L2 projections on polygons and edges."""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache

import numpy as np
from scipy.special import roots_jacobi, roots_legendre

from .exceptions import ConditioningError
from .mesh import ElementGeometry, polygon_geometry, triangulate_polygon


def dim_p(degree: int) -> int:
    """Dimension of P_degree in two variables."""
    return 0 if degree < 0 else (degree + 1) * (degree + 2) // 2


def graded_exponents(degree: int) -> np.ndarray:
    """Exponent pairs (a, b) of x^a y^b in graded lexicographic order."""
    return np.array([(d - j, j) for d in range(degree + 1) for j in range(d + 1)], dtype=int).reshape(-1, 2)


def legendre_table(t, n: int, derivative: bool = False):
    """Values (and optionally derivatives) of P_0..P_n at ``t``, shape (len(t), n+1)."""
    t = np.asarray(t, dtype=float)
    P = np.empty(t.shape + (n + 1,))
    P[..., 0] = 1.0
    if n >= 1:
        P[..., 1] = t
    for m in range(1, n):
        P[..., m + 1] = ((2 * m + 1) * t * P[..., m] - m * P[..., m - 1]) / (m + 1)
    if not derivative:
        return P
    D = np.zeros_like(P)
    # P'_{m+1} = P'_{m-1} + (2m+1) P_m
    for m in range(0, n):
        D[..., m + 1] = (D[..., m - 1] if m >= 1 else 0.0) + (2 * m + 1) * P[..., m]
    return P, D


def edge_legendre(s, k: int) -> np.ndarray:
    """Shifted Legendre polynomials L_m(s) = P_m(2s - 1) on [0, 1], m = 0..k."""
    return legendre_table(2.0 * np.asarray(s, dtype=float) - 1.0, k)


@dataclass(frozen=True)
class QuadratureRule:
    points: np.ndarray
    weights: np.ndarray
    exactness: int

    def integrate(self, values) -> float:
        return float(np.dot(self.weights, values))


@lru_cache(maxsize=None)
def gauss_interval(exactness: int) -> tuple[np.ndarray, np.ndarray]:
    """Gauss-Legendre nodes/weights on [0, 1] exact to degree ``exactness``."""
    n = max(1, exactness // 2 + 1)
    x, w = roots_legendre(n)
    return 0.5 * (x + 1.0), 0.5 * w


@lru_cache(maxsize=None)
def _collapsed_square(exactness: int) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    # Gauss-Jacobi(1, 0) in the collapsed direction absorbs the Duffy Jacobian
    n = max(1, exactness // 2 + 1)
    xa, wa = roots_legendre(n)
    xb, wb = roots_jacobi(n, 1.0, 0.0)
    xi = 0.5 * (xa + 1.0)
    eta = 0.5 * (xb + 1.0)
    XI, ETA = np.meshgrid(xi, eta, indexing="ij")
    W = np.outer(0.5 * wa, 0.25 * wb)
    return XI.ravel(), ETA.ravel(), W.ravel()


def triangle_rule(a, b, c, exactness: int) -> tuple[np.ndarray, np.ndarray]:
    a, b, c = (np.asarray(v, dtype=float) for v in (a, b, c))
    xi, eta, w = _collapsed_square(exactness)
    pts = a + np.outer(xi * (1.0 - eta), b - a) + np.outer(eta, c - a)
    jac = (b[0] - a[0]) * (c[1] - a[1]) - (b[1] - a[1]) * (c[0] - a[0])
    return pts, w * jac


def quad_rule(element, exactness: int, triangles=None) -> QuadratureRule:
    """Composite Duffy-Gauss rule on a polygon, exact to total degree ``exactness``.

    ``element`` is an :class:`ElementGeometry` or a CCW vertex array.
    """
    if exactness < 0:
        raise ValueError("exactness must be non-negative")
    pts = element.vertices if isinstance(element, ElementGeometry) else np.asarray(element, dtype=float)
    if triangles is None:
        triangles = triangulate_polygon(pts)
    P, W = [], []
    for i, j, l in triangles:
        p, w = triangle_rule(pts[i], pts[j], pts[l], exactness)
        P.append(p)
        W.append(w)
    return QuadratureRule(np.concatenate(P), np.concatenate(W), exactness)


class ScaledMonomialBasis:
    """Monomials ((x - c_x)/h)^a ((y - c_y)/h)^b of total degree <= ``degree``."""

    def __init__(self, center, scale: float, degree: int):
        self.center = np.asarray(center, dtype=float)
        self.scale = float(scale)
        self.degree = int(degree)
        self.exponents = graded_exponents(self.degree)

    @property
    def dim(self) -> int:
        return dim_p(self.degree)

    def _local(self, points):
        z = (np.asarray(points, dtype=float) - self.center) / self.scale
        return z[..., 0], z[..., 1]

    def __call__(self, points) -> np.ndarray:
        x, y = self._local(points)
        a, b = self.exponents.T
        return x[..., None] ** a * y[..., None] ** b

    def gradient(self, points) -> np.ndarray:
        x, y = self._local(points)
        a, b = self.exponents.T
        xa = np.where(a > 0, x[..., None] ** np.maximum(a - 1, 0), 0.0) * a
        yb = np.where(b > 0, y[..., None] ** np.maximum(b - 1, 0), 0.0) * b
        gx = xa * y[..., None] ** b / self.scale
        gy = x[..., None] ** a * yb / self.scale
        return np.stack([gx, gy])


class OrthonormalBasis:
    """Graded orthonormal basis of P_degree on one polygon.

    Generated by a polynomial Arnoldi process in the scaled coordinates
    x^ = (x - c)/h: each new function is x^ or y^ times an earlier one,
    orthogonalized against all previous functions under the element's
    quadrature. Every prefix of ``dim_p(d)`` functions spans P_d.
    Orthonormality is with respect to dx^ = dx / h^2, i.e. the Gram matrix
    on the physical element is ``h**2 * I``.
    """

    def __init__(self, center, scale: float, degree: int, recurrence, box=None):
        self.center = np.asarray(center, dtype=float)
        self.scale = float(scale)
        self.degree = int(degree)
        # recurrence = (parent index, variable, projection coefficients H)
        self.recurrence = recurrence
        if box is None:
            box = (np.zeros(2), np.ones(2))
        self.box = (np.asarray(box[0], dtype=float), np.asarray(box[1], dtype=float))

    @property
    def dim(self) -> int:
        return dim_p(self.degree)

    def _z(self, points):
        mid, half = self.box
        return ((np.asarray(points, dtype=float) - self.center) / self.scale - mid) / half

    def values_and_gradient(self, points, degree: int | None = None, gradient: bool = True):
        n = self.dim if degree is None else dim_p(degree)
        parent, var, H = self.recurrence
        z = self._z(points)
        shape = z.shape[:-1]
        z = z.reshape(-1, 2)
        Q = np.empty((len(z), n))
        Q[:, 0] = 1.0 / H[0, 0]
        if gradient:
            half = self.box[1]
            dz = 1.0 / (self.scale * half)  # d z_v / d x_v
            D = np.zeros((2, len(z), n))
        for j in range(1, n):
            p, v = parent[j], var[j]
            q = z[:, v] * Q[:, p] - Q[:, :j] @ H[j, :j]
            Q[:, j] = q / H[j, j]
            if gradient:
                d = z[:, v] * D[:, :, p] - D[:, :, :j] @ H[j, :j]
                d[v] += dz[v] * Q[:, p]
                D[:, :, j] = d / H[j, j]
        Q = Q.reshape(shape + (n,))
        if not gradient:
            return Q
        return Q, D.reshape((2,) + shape + (n,))

    def __call__(self, points, degree: int | None = None) -> np.ndarray:
        return self.values_and_gradient(points, degree, gradient=False)

    def gradient(self, points, degree: int | None = None) -> np.ndarray:
        return self.values_and_gradient(points, degree)[1]

    def curl(self, points, degree: int | None = None) -> np.ndarray:
        """Vector curl (d_y q, -d_x q) of each basis function, shape (2, npts, dim)."""
        g = self.gradient(points, degree)
        return np.stack([g[1], -g[0]])

    def restrict(self, degree: int) -> "OrthonormalBasis":
        n = dim_p(degree)
        parent, var, H = self.recurrence
        return OrthonormalBasis(self.center, self.scale, degree, (parent[:n], var[:n], H[:n, :n]), self.box)

    def at(self, center, scale: float) -> "OrthonormalBasis":
        """The same basis transported to a translated and scaled copy of the element."""
        return OrthonormalBasis(center, scale, self.degree, self.recurrence, self.box)


def orthonormal_basis(element, degree: int, rule: QuadratureRule | None = None) -> OrthonormalBasis:
    geo = element if isinstance(element, ElementGeometry) else polygon_geometry(element)
    if rule is None:
        rule = quad_rule(geo, 2 * degree + 2)
    if rule.exactness < 2 * degree:
        raise ValueError("quadrature too weak to orthonormalize")
    zv = (geo.vertices - geo.centroid) / geo.h
    lo, hi = zv.min(axis=0), zv.max(axis=0)
    mid, half = 0.5 * (lo + hi), 0.5 * (hi - lo)
    z = ((rule.points - geo.centroid) / geo.h - mid) / half
    w = rule.weights / geo.h**2
    exps = graded_exponents(degree)
    index = {tuple(e): i for i, e in enumerate(exps)}
    n = len(exps)
    parent = np.zeros(n, dtype=int)
    var = np.zeros(n, dtype=int)
    H = np.zeros((n, n))
    Q = np.empty((len(z), n))
    H[0, 0] = np.sqrt(w.sum())
    Q[:, 0] = 1.0 / H[0, 0]
    for j in range(1, n):
        a, b = exps[j]
        if a > 0:
            p, v = index[(a - 1, b)], 0
        else:
            p, v = index[(a, b - 1)], 1
        parent[j], var[j] = p, v
        q = z[:, v] * Q[:, p]
        # classical Gram-Schmidt, twice
        for _ in range(2):
            c = Q[:, :j].T @ (w * q)
            q = q - Q[:, :j] @ c
            H[j, :j] += c
        nrm = np.sqrt(np.dot(w, q * q))
        if nrm <= 1e-12 * np.sqrt(w.sum()):
            raise ConditioningError(f"polynomial basis lost rank at degree {a + b}", condition=float(1.0 / max(nrm, 1e-300)))
        H[j, j] = nrm
        Q[:, j] = q / nrm
    return OrthonormalBasis(geo.centroid, geo.h, degree, (parent, var, H), (mid, half))


def mass_matrix(basis, rule: QuadratureRule, vector: bool = False) -> np.ndarray:
    """Gram matrix of ``basis`` under ``rule``; block-diagonal copy for [P]^2."""
    if hasattr(basis, "degree") and rule.exactness < 2 * basis.degree:
        raise ValueError("rule exactness must be at least twice the basis degree")
    V = basis(rule.points)
    M = (V * rule.weights[:, None]).T @ V
    M = 0.5 * (M + M.T)
    try:
        np.linalg.cholesky(M)
    except np.linalg.LinAlgError:
        raise ConditioningError("mass matrix is not positive definite", condition=float(np.linalg.cond(M))) from None
    if vector:
        Z = np.zeros_like(M)
        M = np.block([[M, Z], [Z, M]])
    return M


def l2_project_element(f, basis, rule: QuadratureRule) -> np.ndarray:
    """Coefficients of the L2 projection of ``f`` onto span(basis).

    ``f`` maps an (n, 2) point array to n values, or to (n, m) values for
    m components; the result then has shape (m, dim).
    """
    V = basis(rule.points)
    vals = np.asarray(f(rule.points), dtype=float)
    M = mass_matrix(basis, rule)
    b = (V * rule.weights[:, None]).T @ vals
    try:
        c = np.linalg.solve(M, b)
    except np.linalg.LinAlgError:
        raise ConditioningError("singular mass matrix in element projection") from None
    return c.T if c.ndim == 2 else c


class EdgeBasis:
    """Shifted Legendre basis L_0..L_k on an edge, parametrized by s in [0, 1]."""

    def __init__(self, start, end, degree: int):
        self.start = np.asarray(start, dtype=float)
        self.end = np.asarray(end, dtype=float)
        self.degree = int(degree)

    @property
    def dim(self) -> int:
        return self.degree + 1

    @property
    def length(self) -> float:
        return float(np.hypot(*(self.end - self.start)))

    def point(self, s) -> np.ndarray:
        s = np.asarray(s, dtype=float)
        return self.start + s[..., None] * (self.end - self.start)

    def __call__(self, s) -> np.ndarray:
        return edge_legendre(s, self.degree)

    def mass_matrix(self) -> np.ndarray:
        return self.length * np.diag(1.0 / (2.0 * np.arange(self.dim) + 1.0))


def l2_project_edge(f, edge: EdgeBasis, exactness: int | None = None) -> np.ndarray:
    """Legendre coefficients of the L2 projection of ``f`` onto P_k(edge).

    ``f`` is evaluated at physical points (n, 2) and may return (n,) or (n, m).
    """
    q = 2 * edge.degree + 2 if exactness is None else exactness
    s, w = gauss_interval(q)
    vals = np.asarray(f(edge.point(s)), dtype=float)
    L = edge(s)
    scale = 2.0 * np.arange(edge.dim) + 1.0
    c = (L * w[:, None]).T @ vals
    return (scale[:, None] * c).T if c.ndim == 2 else scale * c
