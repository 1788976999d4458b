"""Manufactured solutions, discrete error norms and convergence orders."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np
from numpy.polynomial import polynomial as P

from .exceptions import ConfigurationError
from .quadrature import dim_p, quad_rule
from .system import Solution, SaddleSystem

Field = Callable[[np.ndarray], np.ndarray]


def _xy(points):
    points = np.asarray(points, dtype=float)
    return points[..., 0], points[..., 1]


@dataclass(frozen=True)
class ManufacturedCase:
    """Exact (u, p) with data f = curl(nu curl u) - grad p, g = div u.

    All callables take points of shape (..., 2); vector fields return
    (..., 2), scalar fields (...).  ``phi`` is the tangential boundary trace
    u.t; when omitted it is computed from ``u``.
    """

    name: str
    u: Field
    p: Field
    f: Field
    g: Field
    curl_u: Field
    nu: float = 1.0
    phi: Callable | None = None

    def tangential_trace(self, points, tangent) -> np.ndarray:
        if self.phi is not None:
            return self.phi(points, tangent)
        return np.einsum("...c,...c->...", np.asarray(self.u(points)), np.broadcast_to(tangent, np.shape(points)))


def case_e1() -> ManufacturedCase:
    """Smooth solution on the unit square, nu = 1, u = 0 on the boundary."""

    def u(x):
        X, Y = _xy(x)
        u1 = 4 * (X**2 - 2 * X**3 + X**4) * (2 * Y - 6 * Y**2 + 4 * Y**3)
        u2 = -4 * (Y**2 - 2 * Y**3 + Y**4) * (2 * X - 6 * X**2 + 4 * X**3)
        return np.stack([u1, u2], axis=-1)

    def p(x):
        X, Y = _xy(x)
        return (X - X**2) * (Y - Y**2)

    def curl_u(x):
        X, Y = _xy(x)
        X2, X3, X4 = X**2, X**3, X**4
        Y2, Y3, Y4 = Y**2, Y**3, Y**4
        return (
            -48 * X4 * Y2 + 48 * X4 * Y - 8 * X4 + 96 * X3 * Y2 - 96 * X3 * Y + 16 * X3
            - 48 * X2 * Y4 + 96 * X2 * Y3 - 96 * X2 * Y2 + 48 * X2 * Y - 8 * X2
            + 48 * X * Y4 - 96 * X * Y3 + 48 * X * Y2 - 8 * Y4 + 16 * Y3 - 8 * Y2
        )

    def f(x):
        X, Y = _xy(x)
        X2, X3, X4 = X**2, X**3, X**4
        Y2, Y3, Y4 = Y**2, Y**3, Y**4
        f1 = (
            -96 * X4 * Y + 48 * X4 + 192 * X3 * Y - 96 * X3 - 192 * X2 * Y3 + 288 * X2 * Y2
            - 192 * X2 * Y + 48 * X2 + 192 * X * Y3 - 290 * X * Y2 + 98 * X * Y
            - 32 * Y3 + 49 * Y2 - 17 * Y
        )
        f2 = (
            192 * X3 * Y2 - 192 * X3 * Y + 32 * X3 - 288 * X2 * Y2 + 286 * X2 * Y - 47 * X2
            + 96 * X * Y4 - 192 * X * Y3 + 192 * X * Y2 - 94 * X * Y + 15 * X
            - 48 * Y4 + 96 * Y3 - 48 * Y2
        )
        return np.stack([f1, f2], axis=-1)

    def g(x):
        return np.zeros(np.shape(x)[:-1])

    return ManufacturedCase("e1", u, p, f, g, curl_u, 1.0)


def polynomial_case(u1, u2, p=None, nu: float = 1.0, name: str = "polynomial") -> ManufacturedCase:
    """Case from power-basis coefficient arrays c[i, j] of x^i y^j.

    Data are obtained by exact polynomial differentiation.
    """
    u1 = np.atleast_2d(np.asarray(u1, dtype=float))
    u2 = np.atleast_2d(np.asarray(u2, dtype=float))
    pc = np.zeros((1, 1)) if p is None else np.atleast_2d(np.asarray(p, dtype=float))

    def dx(c):
        return P.polyder(c, axis=0) if c.shape[0] > 1 else np.zeros((1, 1))

    def dy(c):
        return P.polyder(c, axis=1) if c.shape[1] > 1 else np.zeros((1, 1))

    def add(a, b):
        out = np.zeros((max(a.shape[0], b.shape[0]), max(a.shape[1], b.shape[1])))
        out[: a.shape[0], : a.shape[1]] += a
        out[: b.shape[0], : b.shape[1]] += b
        return out

    curl = add(dx(u2), -dy(u1))
    f1 = add(nu * dy(curl), -dx(pc))
    f2 = add(-nu * dx(curl), -dy(pc))
    div = add(dx(u1), dy(u2))

    def ev(c):
        return lambda x: P.polyval2d(*_xy(x), c)

    def vec(a, b):
        return lambda x: np.stack([P.polyval2d(*_xy(x), a), P.polyval2d(*_xy(x), b)], axis=-1)

    return ManufacturedCase(name, vec(u1, u2), ev(pc), vec(f1, f2), ev(div), ev(curl), nu)


def random_polynomial_case(k: int, rng: np.random.Generator, nu: float = 1.0) -> ManufacturedCase:
    """Random u in [P_k]^2 (total degree), p = 0."""
    mask = np.add.outer(np.arange(k + 1), np.arange(k + 1)) <= k
    u1 = rng.standard_normal((k + 1, k + 1)) * mask
    u2 = rng.standard_normal((k + 1, k + 1)) * mask
    return polynomial_case(u1, u2, nu=nu, name=f"random-P{k}")


def patch_cases(k: int, rng: np.random.Generator | None = None, nu: float = 1.0) -> list[ManufacturedCase]:
    """Polynomial solutions that the scheme must reproduce (p = 0)."""
    rng = np.random.default_rng(0) if rng is None else rng
    cases = [
        polynomial_case([[1.0]], [[0.0]], nu=nu, name="const-x"),
        polynomial_case([[0.0]], [[1.0]], nu=nu, name="const-y"),
        polynomial_case([[0.0, -1.0]], [[0.0], [1.0]], nu=nu, name="rotation"),
        polynomial_case([[0.0], [1.0]], [[0.0, 1.0]], nu=nu, name="dilation"),
    ]
    cases.append(random_polynomial_case(k, rng, nu))
    return cases


CASES = {"e1": case_e1}


def get_case(name: str) -> ManufacturedCase:
    try:
        return CASES[name]()
    except KeyError:
        raise ConfigurationError(f"unknown case {name!r}; available: {', '.join(sorted(CASES))}") from None


# ---------------------------------------------------------------------------
# errors


def _block_rule(block, exactness: int):
    ref = block.ops.ref
    rule = quad_rule(ref.geometry, exactness)
    g = block.group
    pts = g.centroids[:, None, :] + g.h[:, None, None] * rule.points[None]
    return pts, rule.weights, ref.basis(rule.points)


def _solution(solution) -> Solution:
    if not isinstance(solution, Solution):
        raise TypeError("expected a Solution from wgmaxwell.system.solve")
    return solution


def error_l2_u(solution: Solution, case: ManufacturedCase, exactness: int | None = None) -> float:
    """||u - u0|| over the mesh."""
    sol = _solution(solution)
    k = sol.system.k
    q = 2 * k + 12 if exactness is None else exactness
    nk = dim_p(k)
    total = 0.0
    for b in sol.system.blocks:
        pts, w, phi = _block_rule(b, q)
        coef = sol.x[b.index[:, : 2 * nk]]
        uh = np.stack([coef[:, :nk] @ phi[:, :nk].T, coef[:, nk:] @ phi[:, :nk].T], axis=-1)
        diff = np.asarray(case.u(pts)) - uh
        total += float(np.sum(b.group.h**2 * ((diff**2).sum(-1) @ w)))
    return math.sqrt(total)


def error_l2_p(solution: Solution, case: ManufacturedCase, exactness: int | None = None) -> float:
    """||p - p0|| over the mesh."""
    sol = _solution(solution)
    k = sol.system.k
    q = 2 * k + 12 if exactness is None else exactness
    nk1 = dim_p(k - 1)
    total = 0.0
    for b in sol.system.blocks:
        pts, w, phi = _block_rule(b, q)
        start = b.ops.n_u
        coef = sol.x[b.index[:, start : start + nk1]]
        diff = np.asarray(case.p(pts)) - coef @ phi[:, :nk1].T
        total += float(np.sum(b.group.h**2 * ((diff**2) @ w)))
    return math.sqrt(total)


def error_energy(solution: Solution, case: ManufacturedCase, r: int | None = None, exactness: int | None = None) -> float:
    """(sum_T ||Q_r curl u - weak curl u_h||^2)^(1/2).

    The weak curl of the exact pair equals the projected exact curl, so this
    is the energy norm of the error.
    """
    sol = _solution(solution)
    system = sol.system
    k = system.k
    r = system.r if r is None else r
    if r != system.r:
        raise ConfigurationError(f"solution was computed with r={system.r}, not {r}")
    q = max(2 * r + 2, r + 2 * k + 8) if exactness is None else exactness
    nr = dim_p(r)
    total = 0.0
    for b in system.blocks:
        pts, w, phi = _block_rule(b, q)
        proj = (np.asarray(case.curl_u(pts)) * w) @ phi[:, :nr]
        nu_ = b.ops.n_u
        xu = sol.x[b.index[:, :nu_]] * b.sign[:, :nu_]
        Ch = xu @ b.ops.C.T / b.group.h[:, None]
        total += float(np.sum(b.group.h**2 * ((proj - Ch) ** 2).sum(-1)))
    return math.sqrt(total)


def exact_norms(case: ManufacturedCase, mesh_solution: Solution, exactness: int = 16) -> dict:
    """||u||, ||curl u||, ||p|| over the mesh (for relative errors)."""
    sol = _solution(mesh_solution)
    out = {"u": 0.0, "curl": 0.0, "p": 0.0}
    for b in sol.system.blocks:
        pts, w, _ = _block_rule(b, exactness)
        h2 = b.group.h**2
        out["u"] += float(np.sum(h2 * ((np.asarray(case.u(pts)) ** 2).sum(-1) @ w)))
        out["curl"] += float(np.sum(h2 * ((np.asarray(case.curl_u(pts)) ** 2) @ w)))
        out["p"] += float(np.sum(h2 * ((np.asarray(case.p(pts)) * np.ones(pts.shape[:-1])) ** 2 @ w)))
    return {key: math.sqrt(v) for key, v in out.items()}


def convergence_orders(errors, h=None) -> list[float]:
    """order_i = log2(e_{i-1}/e_i); NaN where undefined.

    With ``h`` given, the ratio h_{i-1}/h_i sets the logarithm base.
    """
    e = np.asarray(errors, dtype=float)
    if len(e) < 2:
        raise ConfigurationError("at least two levels are needed for an order")
    if h is None:
        ratio = np.full(len(e) - 1, 2.0)
    else:
        hh = np.asarray(h, dtype=float)
        ratio = hh[:-1] / hh[1:]
    out = []
    for i in range(1, len(e)):
        if e[i - 1] > 0 and e[i] > 0 and ratio[i - 1] > 1:
            out.append(float(math.log(e[i - 1] / e[i]) / math.log(ratio[i - 1])))
        else:
            out.append(float("nan"))
    return out


# ---------------------------------------------------------------------------
# discrete norms


def norm_suite(system: SaddleSystem, v=None, q=None) -> dict:
    """Discrete norms of global weak functions.

    ``v`` holds the u-part of a global vector (length dofmap.n_u), ``q`` the
    p-part (length dofmap.n_p).  Returns |||v|||_V, ||v||_{1,h} and
    |||q|||_W for whichever arguments are given.
    """
    dm = system.dofmap
    out = {}
    if v is not None:
        v = np.asarray(v, dtype=float)
        if v.shape != (dm.n_u,):
            raise ConfigurationError(f"vector weak function must have length {dm.n_u}")
        energy = 0.0
        h1 = 0.0
        for b in system.blocks:
            nu_ = b.ops.n_u
            x = v[b.index[:, :nu_]] * b.sign[:, :nu_]
            energy += float(np.sum((x @ b.ops.C.T) ** 2))
            h1 += float(np.sum((x @ b.ops.h1_root.T) ** 2))
        out["energy"] = math.sqrt(max(energy, 0.0))
        out["h1"] = math.sqrt(max(h1, 0.0))
    if q is not None:
        q = np.asarray(q, dtype=float)
        if q.shape != (dm.n_p,):
            raise ConfigurationError(f"scalar weak function must have length {dm.n_p}")
        w = 0.0
        for b in system.blocks:
            nu_ = b.ops.n_u
            y = q[b.index[:, nu_:] - dm.n_u] * b.sign[:, nu_:] * b.group.h[:, None]
            w += float(np.sum((y @ b.ops.S_root.T) ** 2))
        out["w"] = math.sqrt(max(w, 0.0))
    return out


def norm_ratio_stats(system: SaddleSystem, samples: int = 100, rng=None) -> tuple[float, float]:
    """(min, max) of |||v|||_V / ||v||_{1,h} over random global vectors."""
    rng = np.random.default_rng(0) if rng is None else rng
    ratios = []
    for _ in range(samples):
        n = norm_suite(system, v=rng.standard_normal(system.dofmap.n_u))
        ratios.append(n["energy"] / n["h1"])
    return float(min(ratios)), float(max(ratios))


# ---------------------------------------------------------------------------
# reports


@dataclass
class StudyRow:
    level: int
    h: float
    ndof: int
    err_u_l2: float
    err_energy: float
    err_p_l2: float
    residual: float = 0.0
    seconds: float = 0.0


COLUMNS = ("err_u_l2", "err_energy", "err_p_l2")


@dataclass
class StudyReport:
    family: str
    k: int
    r: int
    case: str
    rows: list = field(default_factory=list)
    failure: str | None = None

    def errors(self, column: str) -> list[float]:
        return [getattr(row, column) for row in self.rows]

    def orders(self, column: str) -> list[float | None]:
        """Per-row order; None on the first row."""
        if len(self.rows) < 2:
            return [None] * len(self.rows)
        return [None] + convergence_orders(self.errors(column), [row.h for row in self.rows])

    @property
    def ok(self) -> bool:
        return self.failure is None
