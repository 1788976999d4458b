import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from wgmaxwell.mesh import build_grid
from wgmaxwell.quadrature import (
    EdgeBasis,
    ScaledMonomialBasis,
    dim_p,
    edge_legendre,
    gauss_interval,
    l2_project_edge,
    l2_project_element,
    mass_matrix,
    orthonormal_basis,
    quad_rule,
)

from helpers import FAMILIES, evaluate, polygon_moment, random_poly


def _element(family, t=0, level=2):
    return build_grid(family, level).geometry(t)


@pytest.mark.parametrize("family", FAMILIES)
@pytest.mark.parametrize("q", [0, 3, 8, 14])
def test_moments_match_divergence_theorem(family, q):
    geo = _element(family, 1)
    rule = quad_rule(geo, q)
    for a in range(q + 1):
        for b in range(q + 1 - a):
            exact = float(polygon_moment(geo.vertices, a, b))
            got = rule.integrate(rule.points[:, 0] ** a * rule.points[:, 1] ** b)
            assert got == pytest.approx(exact, rel=1e-11), (a, b)


@given(family=st.sampled_from(FAMILIES), t=st.integers(0, 7), q=st.integers(0, 16))
@settings(max_examples=30, deadline=None)
def test_rule_is_exact_for_top_degree(family, t, q):
    geo = _element(family, t)
    rule = quad_rule(geo, q)
    for a in range(q + 1):
        exact = float(polygon_moment(geo.vertices, a, q - a))
        got = rule.integrate(rule.points[:, 0] ** a * rule.points[:, 1] ** (q - a))
        assert got == pytest.approx(exact, rel=1e-11)


def test_gauss_interval_exactness():
    for q in range(12):
        s, w = gauss_interval(q)
        for m in range(q + 1):
            assert np.dot(w, s**m) == pytest.approx(1.0 / (m + 1), rel=1e-14)


def test_edge_legendre_orthogonality():
    s, w = gauss_interval(12)
    L = edge_legendre(s, 5)
    M = (L * w[:, None]).T @ L
    assert np.allclose(M, np.diag(1.0 / (2 * np.arange(6) + 1)), atol=1e-15)


@pytest.mark.parametrize("family", FAMILIES)
@pytest.mark.parametrize("degree", [1, 4, 8, 13])
def test_orthonormal_basis(family, degree):
    geo = _element(family, 3)
    basis = orthonormal_basis(geo, degree)
    rule = quad_rule(geo, 2 * degree + 6)
    M = mass_matrix(basis, rule)
    assert np.abs(M - geo.h**2 * np.eye(dim_p(degree))).max() < 1e-11 * geo.h**2


def test_basis_prefix_spans_lower_degrees():
    geo = _element("pentagon", 2)
    basis = orthonormal_basis(geo, 6)
    rule = quad_rule(geo, 14)
    mono = ScaledMonomialBasis(geo.centroid, geo.h, 3)(rule.points)
    V = basis(rule.points)[:, : dim_p(3)]
    coef, *_ = np.linalg.lstsq(V, mono, rcond=None)
    assert np.abs(V @ coef - mono).max() < 1e-12


def test_basis_gradient_against_finite_differences():
    geo = _element("sgrid", 1)
    basis = orthonormal_basis(geo, 5)
    x = geo.centroid[None, :] + 0.01
    eps = 1e-6
    g = basis.gradient(x)[:, 0, :]
    for c in range(2):
        d = np.zeros(2)
        d[c] = eps
        fd = (basis(x + d) - basis(x - d))[0] / (2 * eps)
        assert np.allclose(g[c], fd, rtol=1e-6, atol=1e-6)


@pytest.mark.parametrize("family", FAMILIES)
def test_element_projection_reproduces_polynomials(family):
    rng = np.random.default_rng(3)
    geo = _element(family, 0)
    basis = orthonormal_basis(geo, 3)
    rule = quad_rule(geo, 10)
    c = random_poly(rng, 3)
    coef = l2_project_element(lambda x: evaluate(c, x), basis, rule)
    pts = rule.points[:5]
    assert np.allclose(basis(pts) @ coef, evaluate(c, pts), atol=1e-12)


def test_edge_projection():
    rng = np.random.default_rng(1)
    edge = EdgeBasis([0.1, 0.2], [0.4, 0.9], 3)
    c = random_poly(rng, 3)
    coef = l2_project_edge(lambda x: evaluate(c, x), edge)
    s = np.linspace(0, 1, 7)
    assert np.allclose(edge(s) @ coef, evaluate(c, edge.point(s)), atol=1e-12)
    assert np.allclose(edge.mass_matrix(), edge.length * np.diag([1, 1 / 3, 1 / 5, 1 / 7]))
