"""Shared oracles for the test suite."""

from fractions import Fraction
from math import comb

import numpy as np
from numpy.polynomial import polynomial as P

from wgmaxwell.mesh import build_grid
from wgmaxwell.quadrature import EdgeBasis, l2_project_edge, l2_project_element, quad_rule
from wgmaxwell.weak_ops import element_basis, local_weak_ops, weak_curl_degree, weak_div_matrix

FAMILIES = ("triangle", "pentagon", "sgrid")


def random_poly(rng, degree):
    """Coefficients c[i, j] of x^i y^j with total degree <= degree."""
    mask = np.add.outer(np.arange(degree + 1), np.arange(degree + 1)) <= degree
    return rng.standard_normal((degree + 1, degree + 1)) * mask


def evaluate(c, points):
    points = np.asarray(points, dtype=float)
    return P.polyval2d(points[..., 0], points[..., 1], c)


def vector_field(c1, c2):
    return lambda x: np.stack([evaluate(c1, x), evaluate(c2, x)], axis=-1)


def dx(c):
    return P.polyder(c, axis=0) if c.shape[0] > 1 else np.zeros((1, 1))


def dy(c):
    return P.polyder(c, axis=1) if c.shape[1] > 1 else np.zeros((1, 1))


def polygon_moment(vertices, a, b):
    """Exact integral of x^a y^b over a polygon given by rational vertices.

    Divergence theorem with F = (x^{a+1} y^b / (a+1), 0): the edge integral
    of x^{a+1} y^b n_x ds is dy * int_0^1 x(t)^{a+1} y(t)^b dt, expanded
    exactly in t.
    """
    V = [(Fraction(x), Fraction(y)) for x, y in vertices]
    total = Fraction(0)
    for i in range(len(V)):
        (x0, y0), (x1, y1) = V[i], V[(i + 1) % len(V)]
        ddx, ddy = x1 - x0, y1 - y0
        # polynomial coefficients in t of x(t)^{a+1} and y(t)^b
        px = [comb(a + 1, j) * x0 ** (a + 1 - j) * ddx**j for j in range(a + 2)]
        py = [comb(b, j) * y0 ** (b - j) * ddy**j for j in range(b + 1)]
        integral = sum(cx * cy / (i1 + i2 + 1) for i1, cx in enumerate(px) for i2, cy in enumerate(py))
        total += ddy * integral
    return total / (a + 1)


def project_vector(geo, k, u):
    rule = quad_rule(geo, 2 * k + 8)
    basis = element_basis(geo, k)
    u0 = l2_project_element(u, basis, rule).ravel()
    vt = []
    for e in range(geo.n_edges):
        eb = EdgeBasis(geo.vertices[e], geo.vertices[(e + 1) % geo.n_edges], k)
        vt.append(l2_project_edge(lambda x: u(x) @ geo.tangents[e], eb, 2 * k + 8))
    return np.concatenate([u0] + vt)


def project_scalar(geo, k, p, degree):
    rule = quad_rule(geo, 2 * degree + 8)
    s0 = l2_project_element(p, element_basis(geo, k - 1), rule)
    sb = [
        l2_project_edge(p, EdgeBasis(geo.vertices[e], geo.vertices[(e + 1) % geo.n_edges], k), 2 * degree + 8)
        for e in range(geo.n_edges)
    ]
    return np.concatenate([s0] + sb)


def commutation_errors(family, k, rng, level=2):
    """Errors of the three commutation identities for one random input."""
    m = build_grid(family, level)
    geo = m.geometry(int(rng.integers(m.n_elements)))
    r = weak_curl_degree(family, k)
    ops = local_weak_ops(geo, k, r)
    rule = quad_rule(geo, 2 * r + 8)
    # curl: discrete operator on [P_k]^2 data
    c1, c2 = random_poly(rng, k), random_poly(rng, k)
    u = vector_field(c1, c2)
    curl = lambda x: evaluate(dx(c2), x) - evaluate(dy(c1), x)
    proj = l2_project_element(curl, element_basis(geo, r), rule)
    e_curl = np.abs(ops.weak_curl(project_vector(geo, k, u)) - proj).max() / max(1.0, np.abs(proj).max())
    # gradient: holds for any q, use degree k + 3
    c = random_poly(rng, k + 3)
    grad = lambda x: np.stack([evaluate(dx(c), x), evaluate(dy(c), x)], -1)
    gproj = l2_project_element(grad, element_basis(geo, k), quad_rule(geo, 2 * k + 12))
    sigma = project_scalar(geo, k, lambda x: evaluate(c, x), k + 3)
    e_grad = np.abs(ops.weak_gradient(sigma) - gproj).max() / max(1.0, np.abs(gproj).max())
    # divergence on [P_k]^2 data with full vector traces
    div = lambda x: evaluate(dx(c1), x) + evaluate(dy(c2), x)
    u0 = l2_project_element(u, element_basis(geo, k), rule).ravel()
    traces = []
    for e in range(geo.n_edges):
        eb = EdgeBasis(geo.vertices[e], geo.vertices[(e + 1) % geo.n_edges], k)
        traces.append(l2_project_edge(u, eb).ravel())
    D = weak_div_matrix(geo, k, r)
    dproj = l2_project_element(div, element_basis(geo, r), rule)
    e_div = np.abs(D @ np.concatenate([u0] + traces) - dproj).max() / max(1.0, np.abs(dproj).max())
    return e_curl, e_grad, e_div


# pass/fail lines from test_acceptance, echoed in the terminal summary
ACCEPTANCE: list[str] = []
