import numpy as np
import pytest
from scipy.integrate import quad

from conftest import REGULAR_TET, TRIRECT_TET, random_plane_cut
from ife3d.geometry import (PlaneLevelSet, SphereLevelSet, compute_cut,
                            interpolate_levelset, classify_elements)
from ife3d.ife_local import (CoefficientPair, build_jump_maps,
                             build_local_basis, dof_edge_integral,
                             dof_face_flux, hdiv_system_matrix, _frame)
from ife3d.mesh import build_background_mesh, single_tet_mesh


def coeffs_of(alpha_ratio, beta_ratio):
    return CoefficientPair(alpha_plus=alpha_ratio, alpha_minus=1.0,
                           beta_plus=beta_ratio, beta_minus=1.0)


def test_coefficients_positive():
    with pytest.raises(ValueError):
        CoefficientPair(1.0, -1.0, 1.0, 1.0)


def test_jump_maps_identity_and_diag(rng):
    mesh, cut = random_plane_cut(TRIRECT_TET, rng)
    maps = build_jump_maps(cut, coeffs_of(1.0, 1.0))
    assert np.allclose(maps.A, np.eye(3), atol=1e-14)
    assert np.allclose(maps.B, np.eye(3), atol=1e-14)

    # axis-aligned normal: the maps are plain diagonal matrices
    mesh = single_tet_mesh(TRIRECT_TET)
    ls = PlaneLevelSet((0.3, 0, 0), (1, 0, 0))
    phi, _ = interpolate_levelset(mesh, ls)
    cut = compute_cut(mesh, 0, phi)
    maps = build_jump_maps(cut, coeffs_of(2.0, 5.0))
    assert np.allclose(maps.A, np.diag([1.0, 2.0, 2.0]), atol=1e-14)
    assert np.allclose(maps.B, np.diag([5.0, 1.0, 1.0]), atol=1e-14)


def test_jump_maps_eigenvalues(rng):
    for _ in range(20):
        mesh, cut = random_plane_cut(REGULAR_TET, rng)
        at, bt = 10.0 ** rng.uniform(-2, 2, 2)
        maps = build_jump_maps(cut, coeffs_of(at, bt))
        evA = np.sort(np.linalg.eigvalsh(maps.A))
        evB = np.sort(np.linalg.eigvalsh(maps.B))
        assert np.allclose(evA, np.sort([1.0, at, at]), rtol=1e-12)
        assert np.allclose(evB, np.sort([bt, 1.0, 1.0]), rtol=1e-12)


def test_appendix_determinant_oracle(rng):
    """det(M_K) = -1/16 on the unit regular tet at ratio 1, with the three
    faces through the first vertex in the reference order."""
    mesh = single_tet_mesh(REGULAR_TET)
    for _ in range(5):
        _, cut = random_plane_cut(REGULAR_TET, rng)
        maps = build_jump_maps(cut, coeffs_of(1.0, 1.0))
        M, _ = hdiv_system_matrix(_frame(mesh, 0), cut, maps, [3, 1, 2])
        assert np.linalg.det(M) == pytest.approx(-1.0 / 16.0, abs=1e-12)


def test_determinant_never_vanishes(rng):
    for trial in range(300):
        verts = REGULAR_TET if trial % 2 else TRIRECT_TET
        mesh, cut = random_plane_cut(verts, rng)
        at = 10.0 ** rng.uniform(-3, 3)
        maps = build_jump_maps(cut, coeffs_of(at, 1.0))
        M, scale = hdiv_system_matrix(_frame(mesh, 0), cut, maps, [3, 1, 2])
        assert abs(np.linalg.det(M)) > 1e-10 * scale


def test_uncut_standard_bases():
    verts = TRIRECT_TET * 0.7 + 0.1
    mesh = single_tet_mesh(verts)
    lb = build_local_basis(mesh, 0)
    E = np.array([[dof_edge_integral(mesh, 0, lb.edge[i], j)
                   for j in range(6)] for i in range(6)])
    F = np.array([[dof_face_flux(mesh, 0, lb.face[i], j)
                   for j in range(4)] for i in range(4)])
    N = np.array([[lb.nodal[i].eval(mesh.nodes[j][None, :])[0]
                   for j in range(4)] for i in range(4)])
    assert np.abs(E - np.eye(6)).max() < 1e-12
    assert np.abs(F - np.eye(4)).max() < 1e-12
    assert np.abs(N - np.eye(4)).max() < 1e-12


def test_cut_basis_duality(rng):
    worst = 0.0
    for trial in range(120):
        verts = REGULAR_TET if trial % 2 else TRIRECT_TET
        mesh, cut = random_plane_cut(verts, rng)
        at, bt = 10.0 ** rng.uniform(-3, 3, 2)
        lb = build_local_basis(mesh, 0, cut, coeffs_of(at, bt))
        E = np.array([[dof_edge_integral(mesh, 0, lb.edge[i], j, cut)
                       for j in range(6)] for i in range(6)])
        F = np.array([[dof_face_flux(mesh, 0, lb.face[i], j, cut)
                       for j in range(4)] for i in range(4)])
        Nv = np.array([[lb.nodal[i].eval(
            mesh.nodes[j][None, :], int(cut.vertex_signs[j]))[0]
            for j in range(4)] for i in range(4)])
        worst = max(worst,
                    np.abs(E - np.eye(6)).max(),
                    np.abs(F - np.eye(4)).max(),
                    np.abs(Nv - np.eye(4)).max())
    assert worst < 1e-10


def test_partition_of_unity(rng):
    for trial in range(20):
        verts = REGULAR_TET if trial % 2 else TRIRECT_TET
        mesh, cut = random_plane_cut(verts, rng)
        lb = build_local_basis(mesh, 0, cut, coeffs_of(37.0, 0.02))
        pts = rng.dirichlet(np.ones(4), size=8) @ verts
        for side in (1, -1):
            total = sum(nd.eval(pts, side) for nd in lb.nodal)
            assert np.abs(total - 1.0).max() < 1e-11


def test_barycentric_recovered_at_unit_beta(rng):
    mesh, cut = random_plane_cut(TRIRECT_TET, rng)
    lb = build_local_basis(mesh, 0, cut, coeffs_of(50.0, 1.0))
    frame = _frame(mesh, 0)
    pts = rng.dirichlet(np.ones(4), size=10) @ TRIRECT_TET
    lam = np.column_stack([frame.bary_consts[j] + pts @ frame.bary_grads[j]
                           for j in range(4)])
    for j in range(4):
        assert np.abs(lb.nodal[j].eval(pts, 1) - lam[:, j]).max() < 1e-12


def sample_plane_points(cut, rng, n=12):
    lam = rng.dirichlet(np.ones(len(cut.points)), size=n)
    return lam @ cut.points


def test_jump_conditions_all_bases(rng):
    worst = 0.0
    for trial in range(60):
        verts = REGULAR_TET if trial % 2 else TRIRECT_TET
        mesh, cut = random_plane_cut(verts, rng)
        at, bt = 10.0 ** rng.uniform(-3, 3, 2)
        co = coeffs_of(at, bt)
        lb = build_local_basis(mesh, 0, cut, co)
        n = cut.normal
        xs = sample_plane_points(cut, rng)
        xk = cut.x_K[None, :]
        for e in lb.edge:
            worst = max(worst, np.abs(np.cross(
                e.eval(xs, 1) - e.eval(xs, -1), n)).max())
            worst = max(worst, np.abs(np.cross(
                co.alpha_plus * e.curl(1) - co.alpha_minus * e.curl(-1),
                n)).max())
            worst = max(worst, abs(
                co.beta_plus * e.eval(xk, 1)[0] @ n
                - co.beta_minus * e.eval(xk, -1)[0] @ n))
        for f in lb.face:
            worst = max(worst, np.abs(
                (f.eval(xs, 1) - f.eval(xs, -1)) @ n).max())
            worst = max(worst, np.abs(np.cross(
                co.alpha_plus * f.eval(xk, 1)[0]
                - co.alpha_minus * f.eval(xk, -1)[0], n)).max())
        for nd in lb.nodal:
            worst = max(worst, np.abs(
                nd.eval(xs, 1) - nd.eval(xs, -1)).max())
            worst = max(worst, abs(
                co.beta_plus * nd.grad(1) @ n
                - co.beta_minus * nd.grad(-1) @ n))
    assert worst < 1e-10


def test_local_exact_sequence(rng):
    for trial in range(30):
        verts = REGULAR_TET if trial % 2 else TRIRECT_TET
        mesh, cut = random_plane_cut(verts, rng)
        at, bt = 10.0 ** rng.uniform(-2, 2, 2)
        co = coeffs_of(at, bt)
        maps = build_jump_maps(cut, co)
        lb = build_local_basis(mesh, 0, cut, co)
        for nd in lb.nodal:
            # gradients are valid edge-type constants tied by B
            assert np.abs(maps.B @ nd.grad(1) - nd.grad(-1)).max() < 1e-11
        for e in lb.edge:
            # curls are valid face-type constants tied by A, zero radial part
            assert np.abs(maps.A @ e.curl(1) - e.curl(-1)).max() < 1e-10
        for f in lb.face:
            assert f.div() == f.div()  # constant on both sides by type


def test_eval_identities(rng):
    mesh, cut = random_plane_cut(REGULAR_TET, rng)
    lb = build_local_basis(mesh, 0, cut, coeffs_of(3.0, 9.0))
    e = lb.edge[2]
    pts = rng.standard_normal((5, 3)) * 0.2 + cut.x_K
    # curl(a x (x - x_K)) = 2a
    h = 1e-6
    for side in (1, -1):
        J = np.zeros((3, 3))
        for d in range(3):
            dp = np.zeros(3)
            dp[d] = h
            J[:, d] = (e.eval(pts[:1] + dp, side)[0]
                       - e.eval(pts[:1] - dp, side)[0]) / (2 * h)
        curl_fd = np.array([J[2, 1] - J[1, 2], J[0, 2] - J[2, 0],
                            J[1, 0] - J[0, 1]])
        assert np.abs(curl_fd - e.curl(side)).max() < 1e-8
    # a = 0 gives a constant field
    from ife3d.ife_local import PiecewiseNedelec
    c = PiecewiseNedelec(a_plus=np.zeros(3), b_plus=np.array([1.0, 2, 3]),
                         x_K=cut.x_K)
    assert np.allclose(c.eval(pts), np.array([1.0, 2, 3]))


def test_dof_edge_integral_against_adaptive_quadrature(rng):
    # cut-edge circulation of a smooth discontinuous field vs scipy.quad
    from ife3d.analysis import ManufacturedSolution
    sol = ManufacturedSolution(coeffs=CoefficientPair(100.0, 1.0, 100.0, 1.0))
    m = build_background_mesh(4)
    ls = sol.levelset()
    phi, _ = interpolate_levelset(m, ls)
    cls = classify_elements(m, phi)
    k = int(cls.interface[3])
    cut = compute_cut(m, k, phi)
    le = next(iter(cut.edge_params))
    pairs = [(0, 1), (0, 2), (0, 3), (1, 2), (1, 3), (2, 3)]
    a, b = pairs[le]
    ga, gb = sorted((m.tets[k, a], m.tets[k, b]))
    p0, p1 = m.nodes[ga], m.nodes[gb]
    t = (p1 - p0) / np.linalg.norm(p1 - p0)

    def integrand(s):
        x = p0 + s * (p1 - p0)
        return float(sol.u(x[None, :])[0] @ t) * np.linalg.norm(p1 - p0)

    s_cross = ls.segment_roots(p0, p1)
    oracle = 0.0
    for lo, hi in zip([0.0] + s_cross, s_cross + [1.0]):
        oracle += quad(integrand, lo, hi, epsabs=1e-12, epsrel=1e-12)[0]

    from ife3d.derham import build_space, interpolate
    edge_space = build_space(m, "edge", cuts={k: cut})
    dofs = interpolate(edge_space, sol.u, levelset=ls, npts_edge=6)
    geidx = np.where((m.edges[:, 0] == ga) & (m.edges[:, 1] == gb))[0][0]
    assert dofs[geidx] == pytest.approx(oracle, abs=1e-9)


def test_shape_function_scaling_bounded():
    """h ||phi^e||_inf and h^2 ||curl phi^e||_inf are uniform in the mesh
    size: the same random-cut population on h-scaled elements produces
    comparable maxima at every level."""
    co = coeffs_of(100.0, 100.0)
    stats = []
    for h in (0.25, 0.125, 0.0625):
        rng = np.random.default_rng(5)   # same cut population per level
        worst_val = worst_curl = 0.0
        for trial in range(150):
            verts = (REGULAR_TET if trial % 2 else TRIRECT_TET) * h
            mesh, cut = random_plane_cut(verts, rng)
            lb = build_local_basis(mesh, 0, cut, co)
            samples = np.vstack([verts, verts.mean(axis=0)[None, :],
                                 cut.x_K])
            for e in lb.edge:
                for side in (1, -1):
                    worst_val = max(worst_val,
                                    np.abs(e.eval(samples, side)).max())
                    worst_curl = max(worst_curl, np.abs(e.curl(side)).max())
        stats.append((h * worst_val, h ** 2 * worst_curl))
    vals = [s[0] for s in stats]
    curls = [s[1] for s in stats]
    assert max(vals) / min(vals) < 4.0
    assert max(curls) / min(curls) < 4.0


def test_hdiv_requires_coeffs_on_cut():
    m = build_background_mesh(2)
    ls = SphereLevelSet((0, 0, 0), 0.6)
    phi, _ = interpolate_levelset(m, ls)
    k = int(classify_elements(m, phi).interface[0])
    cut = compute_cut(m, k, phi)
    with pytest.raises(ValueError):
        build_local_basis(m, k, cut, None)
