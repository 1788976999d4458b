import numpy as np
import pytest
import scipy.sparse as sp

from wgmaxwell.analysis import case_e1, error_energy, error_l2_p, error_l2_u, polynomial_case
from wgmaxwell.exceptions import SingularSystemError
from wgmaxwell.mesh import build_grid, from_loops
from wgmaxwell.system import apply_boundary, assemble, build_dof_map, solve

from helpers import FAMILIES


@pytest.mark.parametrize(
    "family, k, blocks",
    [("triangle", 1, (12, 10, 2, 10)), ("triangle", 2, (24, 15, 6, 15)), ("pentagon", 1, (12, 14, 2, 14))],
)
def test_dof_counts(family, k, blocks):
    dm = build_dof_map(build_grid(family, 1), k)
    assert dm.ut_offset == blocks[0]
    assert dm.p0_offset - dm.ut_offset == blocks[1]
    assert dm.pb_offset - dm.p0_offset == blocks[2]
    assert dm.total - dm.pb_offset == blocks[3]
    assert dm.total == sum(blocks)


def test_shared_edge_blocks():
    m = build_grid("pentagon", 2)
    sysm = assemble(m, 2)
    seen = {}
    for b in sysm.blocks:
        for row, edges in zip(b.index, b.group.edges):
            for j, e in enumerate(edges):
                seen.setdefault(e, set()).add(tuple(row[sysm.dofmap.n_u0 + 3 * j : sysm.dofmap.n_u0 + 3 * j + 3]))
    assert all(len(v) == 1 for v in seen.values())


@pytest.mark.parametrize("family", FAMILIES)
@pytest.mark.parametrize("k", [1, 2])
def test_blocks_symmetric_psd(family, k):
    sysm = assemble(build_grid(family, 2), k)
    A, S = sysm.A, sysm.S
    assert abs(A - A.T).max() == 0
    assert abs(S - S.T).max() == 0
    rng = np.random.default_rng(0)
    for _ in range(100):
        v = rng.standard_normal(A.shape[0])
        q = rng.standard_normal(S.shape[0])
        assert v @ A @ v >= -1e-12 * (v @ v) * abs(A).max()
        assert q @ S @ q >= -1e-12 * (q @ q) * abs(S).max()
    K = sysm.K
    assert abs(K - K.T).max() == 0


def test_constant_field_in_kernel_of_A():
    m = build_grid("sgrid", 2)
    k = 2
    sysm = assemble(m, k)
    case = polynomial_case([[1.5]], [[-0.5]])
    red = apply_boundary(sysm, case)
    x = solve(red).x
    v = x[: sysm.dofmap.n_u]
    assert np.abs(sysm.A @ v).max() < 1e-10


def test_elementwise_apply_matches_matrix():
    sysm = assemble(build_grid("pentagon", 2), 2)
    x = np.random.default_rng(1).standard_normal(sysm.dofmap.total)
    assert np.allclose(sysm.apply(x), sysm.K @ x, atol=1e-11)


@pytest.mark.parametrize("method", ["condensed", "direct"])
def test_zero_data_gives_zero(method):
    sysm = assemble(build_grid("triangle", 3), 2)
    sol = solve(apply_boundary(sysm), method=method)
    assert np.abs(sol.x).max() == 0.0


def test_boundary_values_for_e1():
    case = case_e1()
    m = build_grid("triangle", 3)
    red = apply_boundary(assemble(m, 2, case=case), case)
    assert np.abs(red.fixed_values).max() < 1e-15
    dm = red.system.dofmap
    assert red.ndof == dm.total - len(dm.boundary_ut) - len(dm.boundary_pb)


def test_rhs_nonzero_with_case():
    case = case_e1()
    sysm = assemble(build_grid("triangle", 2), 1, case=case)
    assert np.abs(sysm.F).max() > 0
    assert np.abs(sysm.G).max() < 1e-15  # g = 0


@pytest.mark.parametrize("family", FAMILIES)
def test_rotation_patch(family):
    case = polynomial_case([[0.0, -1.0]], [[0.0], [1.0]])
    sol = solve(apply_boundary(assemble(build_grid(family, 2), 1, case=case), case))
    assert error_l2_u(sol, case) <= 1e-8
    assert error_energy(sol, case) <= 1e-8
    assert error_l2_p(sol, case) <= 1e-8


@pytest.mark.parametrize("family", FAMILIES)
@pytest.mark.parametrize("k", [1, 2, 3])
def test_nonsingular_through_level_5(family, k):
    for level in range(1, 6 if k == 1 else 5):
        sol = solve(apply_boundary(assemble(build_grid(family, level), k)), tol=1e-9)
        assert sol.residual <= 1e-9


def test_condensed_and_direct_agree():
    case = case_e1()
    red = apply_boundary(assemble(build_grid("pentagon", 3), 2, case=case), case)
    a = solve(red, method="condensed").x
    b = solve(red, method="direct").x
    assert np.abs(a - b).max() < 1e-10 * np.abs(b).max()


def test_order_independent_assembly():
    case = case_e1()
    m = build_grid("pentagon", 3)
    perm = np.random.default_rng(5).permutation(m.n_elements)
    shuffled = from_loops(m.vertices, [m.elements[t] for t in perm])
    errs = []
    for mesh in (m, shuffled):
        sol = solve(apply_boundary(assemble(mesh, 2, case=case), case))
        errs.append((error_l2_u(sol, case), error_energy(sol, case), error_l2_p(sol, case)))
    assert np.allclose(errs[0], errs[1], rtol=1e-11)


def test_residual_threshold_raises_with_diagnostics():
    case = case_e1()
    red = apply_boundary(assemble(build_grid("triangle", 2), 1, case=case), case)
    with pytest.raises(SingularSystemError) as info:
        solve(red, tol=1e-30)
    assert {"level", "k", "r"} <= set(info.value.diagnostics)


def test_nu_scales_curl_block():
    m = build_grid("triangle", 2)
    a1 = assemble(m, 1, nu=1.0).A
    a3 = assemble(m, 1, nu=3.0).A
    assert sp.linalg.norm(a3 - 3 * a1) < 1e-12 * sp.linalg.norm(a3)


def test_low_curl_degree_override_still_solves():
    c = case_e1()
    m = build_grid("pentagon", 3)
    ref = solve(apply_boundary(assemble(m, 2, case=c), c))
    sol = solve(apply_boundary(assemble(m, 2, r=4, case=c), c))
    assert sol.residual < 1e-9
    assert error_l2_u(sol, c) < 2 * error_l2_u(ref, c)


def test_degenerate_curl_degree_reports_singular():
    c = case_e1()
    red = apply_boundary(assemble(build_grid("pentagon", 2), 2, r=2, case=c), c)
    with pytest.raises(SingularSystemError):
        solve(red)
