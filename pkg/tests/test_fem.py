import numpy as np
import pytest
import scipy.sparse as sp
from hypothesis import given
from hypothesis import strategies as st

from fdcheck import rel_err
from thermovar.errors import NonPositiveJacobian, SingularMatrix
from thermovar.fem.assembly import QuadProblem, l2_project
from thermovar.fem.mesh import Mesh, distort_interior, interval, rectangle
from thermovar.fem.newton import solve_increment
from thermovar.fem.quadrature import gauss_1d, gauss_quad, q4_geometry, q4_shape
from thermovar.fem.solver import factor_solve, inertia, symmetry_defect
from thermovar.fem.vtk import write_vtk
from thermovar.plasticity import PlastParams
from thermovar.shearband import GradientPlasticityFE, strip_model

LAM, MU = 100.0, 40.0


def linear_elastic(g, order):
    """Small-strain isotropic elasticity on the row-major displacement gradient."""
    H = g[..., :4].reshape(g.shape[:-1] + (2, 2)) - np.eye(2)
    eps = 0.5 * (H + np.swapaxes(H, -1, -2))
    tr = eps[..., 0, 0] + eps[..., 1, 1]
    val = 0.5 * LAM * tr**2 + MU * np.sum(eps * eps, axis=(-2, -1))
    sig = LAM * tr[..., None, None] * np.eye(2) + 2 * MU * eps
    grad = sig.reshape(g.shape[:-1] + (4,))
    if order < 2:
        return val, grad, sig
    I = np.eye(2)
    C = (LAM * np.einsum("ij,kl->ijkl", I, I)
         + MU * (np.einsum("ik,jl->ijkl", I, I) + np.einsum("il,jk->ijkl", I, I)))
    hess = np.broadcast_to(C.reshape(4, 4), g.shape[:-1] + (4, 4)).copy()
    return val, grad, hess, sig


def neo_hookean(g, order):
    """Compressible neo-Hookean density, a nonlinear test potential."""
    F = g[..., :4].reshape(g.shape[:-1] + (2, 2))
    J = np.linalg.det(F)
    if np.any(J <= 0):
        raise NonPositiveJacobian("J <= 0")
    Fi = np.linalg.inv(F)
    FiT = np.swapaxes(Fi, -1, -2)
    lnJ = np.log(J)
    val = 0.5 * MU * (np.sum(F * F, axis=(-2, -1)) - 2) - MU * lnJ + 0.5 * LAM * lnJ**2
    P = MU * (F - FiT) + LAM * lnJ[..., None, None] * FiT
    grad = P.reshape(g.shape[:-1] + (4,))
    if order < 2:
        return val, grad, None
    # d FiT_ij / d F_kl = -Fi_jk Fi_li
    dFiT = -np.einsum("...jk,...li->...ijkl", Fi, Fi)
    A = (MU * np.einsum("ik,jl->ijkl", np.eye(2), np.eye(2))
         + (LAM * lnJ - MU)[..., None, None, None, None] * dFiT
         + LAM * np.einsum("...ij,...kl->...ijkl", FiT, FiT))
    return val, grad, A.reshape(g.shape[:-1] + (4, 4)), None


# ---------------------------------------------------------------- quadrature and mesh

@given(st.integers(0, 3), st.integers(0, 3))
def test_gauss_rule_integrates_bicubics(a, b):
    xi, w = gauss_quad(2)
    exact = (2.0 / (a + 1) if a % 2 == 0 else 0.0) * (2.0 / (b + 1) if b % 2 == 0 else 0.0)
    assert np.dot(w, xi[:, 0] ** a * xi[:, 1] ** b) == pytest.approx(exact, abs=1e-14)


def test_gauss_1d_weights_sum_to_two():
    for n in (1, 2, 3):
        assert gauss_1d(n)[1].sum() == pytest.approx(2.0)


def test_shape_functions_partition_unity():
    xi, _ = gauss_quad(3)
    N, dN = q4_shape(xi)
    assert np.allclose(N.sum(axis=1), 1.0)
    assert np.allclose(dN.sum(axis=1), 0.0)


def test_inverted_element_reported():
    m = rectangle(2, 1, 2.0, 1.0)
    X = m.nodes[m.elements]
    X[1] = X[1][::-1]
    _, dN = q4_shape(gauss_quad(2)[0])
    with pytest.raises(NonPositiveJacobian) as info:
        q4_geometry(X, dN)
    assert info.value.element == 1


def test_rectangle_layout():
    m = rectangle(3, 2, 3.0, 2.0)
    assert m.n_nodes == 12 and m.n_elements == 6
    assert set(m.node_sets) == {"left", "right", "bottom", "top"}
    assert np.allclose(m.nodes[m.node_sets["top"], 1], 2.0)
    _, dN = q4_shape(gauss_quad(2)[0])
    detJ, _, _ = q4_geometry(m.nodes[m.elements], dN)
    assert np.allclose(detJ, 0.25)
    assert np.allclose(m.element_centroids()[0], [0.5, 0.5])


def test_distortion_keeps_boundary_and_orientation():
    m = rectangle(4, 4, 1.0, 1.0)
    d = distort_interior(m, 0.3, seed=1)
    b = np.unique(np.concatenate(list(m.node_sets.values())))
    assert np.all(d.nodes[b] == m.nodes[b])
    assert not np.allclose(d.nodes, m.nodes)
    _, dN = q4_shape(gauss_quad(2)[0])
    assert np.all(q4_geometry(d.nodes[d.elements], dN)[0] > 0)
    with pytest.raises(ValueError):
        distort_interior(m, 0.6)


def test_interval_mesh():
    m = interval(5, 2.0)
    assert m.kind == "line2" and m.n_elements == 5
    assert m.nodes[-1, 0] == 2.0


# ---------------------------------------------------------------- linear algebra

def test_spd_solve():
    K = np.array([[4.0, 1.0, 0.0], [1.0, 3.0, 1.0], [0.0, 1.0, 2.0]])
    x = np.array([1.0, -2.0, 0.5])
    assert np.allclose(factor_solve(K, K @ x), x, rtol=0, atol=1e-14)


def test_pure_saddle_block():
    assert np.array_equal(factor_solve(np.array([[0.0, 1.0], [1.0, 0.0]]), np.array([2.0, 3.0])),
                          np.array([3.0, 2.0]))


def test_random_indefinite_solve():
    rng = np.random.default_rng(0)
    A = rng.standard_normal((200, 200))
    K = A + A.T
    b = rng.standard_normal(200)
    x = factor_solve(sp.csr_matrix(K), b)
    assert np.linalg.norm(K @ x - b) <= 1e-10 * np.linalg.norm(b)
    assert np.allclose(x, np.linalg.solve(K, b))
    pos, neg, zero = inertia(K)
    assert pos > 0 and neg > 0 and zero == 0


def test_singular_and_asymmetric_matrices_rejected():
    with pytest.raises(SingularMatrix):
        factor_solve(np.array([[1.0, 1.0], [1.0, 1.0]]), np.ones(2))
    with pytest.raises(ValueError):
        factor_solve(np.array([[1.0, 2.0], [0.0, 1.0]]), np.ones(2))
    assert symmetry_defect(np.eye(3)) == 0.0


# ---------------------------------------------------------------- assembly

def elastic_problem(mesh, eas=False):
    return QuadProblem(mesh, ("ux", "uy"), (("F",),), eas=eas)


def test_zero_fields_give_zero_residual():
    pr = elastic_problem(rectangle(2, 2, 1.0, 1.0))
    ev = pr.evaluate(np.zeros(pr.n_dof), linear_elastic)
    assert ev.value == 0.0 and np.all(ev.residual == 0.0)

    model, _, _ = strip_model(2, 3, PlastParams())
    ev = model.evaluator(0.01)(np.zeros(model.problem.n_dof), 2)
    assert np.abs(ev.residual).max() == 0.0


@pytest.mark.parametrize("eas", [False, True])
def test_single_element_derivatives(eas):
    rng = np.random.default_rng(2)
    mesh = distort_interior(rectangle(1, 1, 1.0, 1.0), 0.0)
    mesh.nodes[2] += [0.2, 0.1]  # a general quadrilateral
    pr = elastic_problem(mesh, eas)
    for _ in range(5):
        U = 0.05 * rng.standard_normal(pr.n_dof)
        ev = pr.evaluate(U, neo_hookean)
        K = ev.tangent.toarray()
        h = 1e-6
        g, Kf = np.zeros(pr.n_dof), np.zeros_like(K)
        for i in range(pr.n_dof):
            e = np.zeros(pr.n_dof)
            e[i] = h
            ep, em = pr.evaluate(U + e, neo_hookean), pr.evaluate(U - e, neo_hookean)
            g[i] = (ep.value - em.value) / (2 * h)
            Kf[:, i] = (ep.residual - em.residual) / (2 * h)
        assert rel_err(ev.residual, g) < 1e-6
        assert rel_err(K, Kf) < 1e-5
        assert ev.asymmetry < 1e-10


@pytest.mark.parametrize("eas", [False, True])
@pytest.mark.parametrize("density", [linear_elastic, neo_hookean])
def test_patch_test_on_distorted_mesh(eas, density):
    mesh = distort_interior(rectangle(2, 2, 2.0, 2.0), 0.35, seed=4)
    pr = elastic_problem(mesh, eas)
    A = np.array([[0.010, 0.004], [-0.002, 0.006]])
    b = np.array([0.001, -0.002])
    exact = mesh.nodes @ A.T + b
    bnd = np.unique(np.concatenate(list(mesh.node_sets.values())))
    fixed = np.concatenate([pr.dof(bnd, "ux"), pr.dof(bnd, "uy")])
    vals = np.concatenate([exact[bnd, 0], exact[bnd, 1]])
    U, info = solve_increment(lambda U, o: pr.evaluate(U, density, o), np.zeros(pr.n_dof),
                              fixed, vals, tol=1e-13)
    assert np.allclose(pr.nodal(U, "ux"), exact[:, 0], rtol=0, atol=1e-12)
    assert np.allclose(pr.nodal(U, "uy"), exact[:, 1], rtol=0, atol=1e-12)
    g = pr.local_variables(U)
    stress = density(g, 1)[1]
    assert np.abs(stress - stress[0, 0]).max() <= 1e-10 * np.abs(stress).max()
    if eas:
        assert np.abs(pr.enhanced_modes(U, density)).max() < 1e-12


def test_linear_problem_converges_in_one_iteration():
    mesh = rectangle(3, 3, 1.0, 1.0)
    pr = elastic_problem(mesh)
    s = mesh.node_sets
    fixed = np.concatenate([pr.dof(s["left"], "ux"), pr.dof(s["bottom"], "uy"),
                            pr.dof(s["right"], "ux")])
    vals = np.concatenate([np.zeros(s["left"].size + s["bottom"].size),
                           np.full(s["right"].size, 0.01)])
    U, info = solve_increment(lambda U, o: pr.evaluate(U, linear_elastic, o),
                              np.zeros(pr.n_dof), fixed, vals)
    assert info.iterations == 1
    assert np.array_equal(U[fixed], vals)


def test_l2_projection_reproduces_constants():
    mesh = distort_interior(rectangle(3, 3, 1.0, 1.0), 0.3)
    pr = elastic_problem(mesh)
    assert np.allclose(l2_project(pr, np.full(pr.wdet.shape, 2.5)), 2.5)


@pytest.mark.parametrize("eas", [False, True])
def test_plasticity_assembly_directional_derivatives(eas):
    rng = np.random.default_rng(1)
    model, _, _ = strip_model(3, 4, PlastParams(l=0.1), eas=eas)
    pr = model.problem
    X = pr.mesh.nodes
    ev_fun = model.evaluator(0.005)
    for _ in range(3):
        U = np.zeros(pr.n_dof)
        U[0::4] = -0.002 * X[:, 0] + 1e-4 * rng.standard_normal(len(X))
        U[1::4] = 0.004 * X[:, 1] + 1e-4 * rng.standard_normal(len(X))
        U[2::4] = 0.003 * rng.random(len(X))
        U[3::4] = 5 * rng.standard_normal(len(X))
        ev = ev_fun(U, 2)
        assert (ev.aux.dgamma > 0).any()
        v = rng.standard_normal(pr.n_dof)
        v[3::4] *= 1e3  # beta lives on the stress scale
        v /= np.linalg.norm(v)
        h = 1e-6
        ep, em = ev_fun(U + h * v, 2), ev_fun(U - h * v, 2)
        dv = (ep.value - em.value) / (2 * h)
        assert abs(dv - ev.residual @ v) <= 1e-6 * np.linalg.norm(ev.residual)
        Kv = ev.tangent @ v
        assert rel_err(Kv, (ep.residual - em.residual) / (2 * h)) < 1e-5
        assert ev.asymmetry < 1e-10


def test_quarter_model_matches_full_model():
    p = PlastParams(y0=1e4)
    nx, ny = 3, 6
    quarter, qfix, qtop = strip_model(nx, ny, p, weakening=0.0, eas=True)
    full_mesh = rectangle(2 * nx, 2 * ny, 50.0, 100.0, -25.0, -50.0)
    full = GradientPlasticityFE(full_mesh, p, eas=True)
    fp = full.problem
    s = full_mesh.node_sets
    centre = int(np.argmin(np.linalg.norm(full_mesh.nodes, axis=1)))
    ffix = np.concatenate([fp.dof([centre], "ux"), fp.dof(s["bottom"], "uy"),
                           fp.dof(s["top"], "uy")])
    nq = qfix.size - qtop.size
    for k in range(1, 4):
        u = 0.02 * k
        quarter.step(qfix, np.r_[np.zeros(nq), np.full(qtop.size, u)], 0.01, tol=1e-13)
        full.step(ffix, np.r_[0.0, np.full(s["bottom"].size, -u), np.full(s["top"].size, u)],
                  0.01, tol=1e-13)
    # map quarter nodes onto the full mesh by coordinates
    idx = [int(np.argmin(np.linalg.norm(full_mesh.nodes - x, axis=1))) for x in quarter.mesh.nodes]
    for name in ("ux", "uy", "alpha", "beta"):
        a, b = quarter.nodal(name), full.nodal(name)[idx]
        scale = max(np.abs(b).max(), 1e-30)
        assert np.abs(a - b).max() <= 1e-8 * scale + 1e-14, name


def test_vtk_output_is_deterministic(tmp_path):
    mesh = rectangle(2, 2, 1.0, 1.0)
    data = {"u": np.random.default_rng(0).random((mesh.n_nodes, 2)), "alpha": np.arange(9.0)}
    cells = {"dissipation": np.ones(4)}
    a = write_vtk(tmp_path / "a.vtk", mesh, data, cells)
    b = write_vtk(tmp_path / "b.vtk", mesh, data, cells)
    assert a.read_bytes() == b.read_bytes()
    text = a.read_text()
    assert "POINTS 9 double" in text and "CELL_TYPES 4" in text
    assert "VECTORS u double" in text and "SCALARS dissipation double 1" in text
    write_vtk(tmp_path / "line.vtk", interval(3, 1.0), {"d": np.zeros(4)})
    assert "CELLS 3 9" in (tmp_path / "line.vtk").read_text()
