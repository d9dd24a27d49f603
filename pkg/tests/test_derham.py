import numpy as np
import pytest

from ife3d.analysis import ManufacturedSolution
from ife3d.assembly import IfeDiscretization
from ife3d.derham import (build_space, commutativity_check, complex_check,
                          curl_incidence, divergence_incidence,
                          exactness_check, gradient_incidence, interpolate,
                          interpolate_exact_sphere,
                          project_piecewise_constant)
from ife3d.geometry import SphereLevelSet
from ife3d.ife_local import CoefficientPair
from ife3d.mesh import build_background_mesh


@pytest.fixture(scope="module")
def mesh4():
    return build_background_mesh(4)


@pytest.fixture(scope="module")
def benchmark():
    return ManufacturedSolution(coeffs=CoefficientPair(100.0, 1.0,
                                                       100.0, 1.0))


@pytest.mark.parametrize("N", [1, 2, 3])
def test_complex_identities_exact(N):
    m = build_background_mesh(N)
    res = complex_check(m)
    assert res["CG_max"] == 0
    assert res["DC_max"] == 0


def test_complex_survives_relabeling():
    # renaming nodes permutes orientations; the identities are combinatorial
    m = build_background_mesh(2)
    rng = np.random.default_rng(3)
    perm = rng.permutation(m.num_nodes)
    from ife3d.mesh import _finish_mesh
    nodes = np.empty_like(m.nodes)
    nodes[perm] = m.nodes
    tets = perm[m.tets]
    m2 = _finish_mesh(nodes, tets, m.h, m.box)
    v = m2.nodes[m2.tets]
    flip = np.linalg.det(v[:, 1:] - v[:, :1]) < 0
    tets2 = m2.tets.copy()
    tets2[flip] = tets2[flip][:, [0, 1, 3, 2]]
    m2 = _finish_mesh(nodes, tets2, m.h, m.box)
    res = complex_check(m2)
    assert res["CG_max"] == 0 and res["DC_max"] == 0


@pytest.mark.parametrize("N,nullity", [(1, 7), (2, 26)])
def test_exactness_ranks(N, nullity):
    m = build_background_mesh(N)
    rep = exactness_check(m)
    assert rep["nullity_C"] == nullity == (N + 1) ** 3 - 1
    assert rep["rank_G"] == m.num_nodes - 1
    assert rep["rank_D"] == m.num_tets     # divergence is surjective


def test_boundary_masks(mesh4):
    for kind, expected in (("nodal", mesh4.node_boundary),
                           ("edge", mesh4.edge_boundary),
                           ("face", mesh4.face_boundary)):
        sp = build_space(mesh4, kind)
        assert np.array_equal(sp.boundary_dofs, expected)
    elem = build_space(mesh4, "elem")
    assert not elem.boundary_dofs.any()


def test_interpolate_constant_field(mesh4):
    c = np.array([0.3, -1.2, 0.7])
    sp = build_space(mesh4, "edge")
    dofs = interpolate(sp, lambda p: np.broadcast_to(c, p.shape).copy())
    d = mesh4.nodes[mesh4.edges[:, 1]] - mesh4.nodes[mesh4.edges[:, 0]]
    assert np.abs(dofs - d @ c).max() < 1e-13


def test_interpolate_gradient_telescopes(mesh4):
    # edge DoFs of a gradient equal endpoint differences
    a = np.array([0.2, 0.5, -1.0])
    u = lambda p: p @ a + 2.0
    gu = lambda p: np.broadcast_to(a, p.shape).copy()
    nodal = build_space(mesh4, "nodal")
    edge = build_space(mesh4, "edge")
    G = gradient_incidence(mesh4)
    r = G @ interpolate(nodal, u) - interpolate(edge, gu)
    assert np.abs(r).max() < 1e-13


def test_interpolate_face_and_elem_kinds(mesh4):
    c = np.array([1.0, 2.0, 3.0])
    face = build_space(mesh4, "face")
    dofs = interpolate(face, lambda p: np.broadcast_to(c, p.shape).copy())
    # flux of a constant through all faces of each tet sums to zero
    D = divergence_incidence(mesh4)
    assert np.abs(D @ dofs).max() < 1e-10
    elem = build_space(mesh4, "elem")
    means = interpolate(elem, lambda p: p[:, 0] ** 2)
    verts = mesh4.nodes[mesh4.tets]
    assert len(means) == mesh4.num_tets
    # sanity on one element against direct quadrature
    from ife3d.quadrature import tet_rule, map_rule
    pts, w = map_rule(tet_rule(5), verts[7])
    assert means[7] == pytest.approx((w @ pts[:, 0] ** 2)
                                     / w.sum(), rel=1e-12)


def test_interpolation_reproduces_benchmark_dofs(mesh4, benchmark):
    """Gamma_h-split interpolation agrees with the exact-sphere machinery
    away from tolerance of the geometric mismatch."""
    disc = IfeDiscretization(mesh4, benchmark.levelset(), benchmark.coeffs)
    edge = build_space(mesh4, "edge", cuts=disc.cuts)
    dofs = interpolate(edge, benchmark.u, levelset=benchmark.levelset(),
                       npts_edge=6)
    exact = interpolate_exact_sphere(edge, benchmark.u_sided,
                                     *benchmark.interface_sphere())
    assert np.abs(dofs - exact).max() < 1e-9


def test_commutativity_residuals(mesh4, benchmark):
    res = commutativity_check(mesh4, benchmark)
    assert res["grad"] < 1e-8
    assert res["curl"] < 1e-8
    assert res["div"] < 1e-8


def test_commutativity_curl_free_field(mesh4):
    # gradients are curl-free: every face circulation of I^e grad u vanishes
    a = np.array([0.4, -0.3, 0.9])
    gu = lambda p: np.broadcast_to(a, p.shape).copy()
    edge = build_space(mesh4, "edge")
    C = curl_incidence(mesh4)
    assert np.abs(C @ interpolate(edge, gu)).max() < 1e-12


def test_project_piecewise_constant(mesh4):
    r = 0.6
    pc = project_piecewise_constant(mesh4, 0.0, 1.0, np.zeros(3), r)
    vols = mesh4.volumes()
    ball = (pc * vols).sum()
    assert ball == pytest.approx(4.0 / 3.0 * np.pi * r ** 3, rel=1e-9)
    assert pc.min() >= 0.0 and pc.max() <= 1.0


def test_divergence_identity_for_div_class_field(mesh4, benchmark):
    """A normal-continuous field with matched tangential alpha-fluxes and
    constant divergence satisfies the flux identity on every element."""
    r1, r2 = benchmark.r1, benchmark.r2
    A = 0.7

    def v_sided(x, side):
        x = np.atleast_2d(x)
        s = np.einsum("ic,ic->i", x, x)
        g = (r1 ** 2 - s) * ((r2 ** 2 - s) if side > 0 else 1.0)
        return A * x + (2.0 * g)[:, None] * np.cross(x, np.ones(3))

    face = build_space(mesh4, "face")
    If_v = interpolate_exact_sphere(face, v_sided, np.zeros(3), r1)
    D = divergence_incidence(mesh4)
    assert np.abs(D @ If_v - 3 * A * mesh4.volumes()).max() < 1e-10


def test_ife_standard_isomorphism_roundtrip(mesh4, benchmark):
    """IFE and standard spaces share DoFs: applying the DoF functionals to
    an IFE expansion returns its own coefficients."""
    from ife3d.ife_local import dof_edge_integral
    disc = IfeDiscretization(mesh4, benchmark.levelset(), benchmark.coeffs)
    rng = np.random.default_rng(0)
    k, cut = next(iter(disc.cuts.items()))
    basis = disc.local_bases[k]
    coef = rng.standard_normal(6)

    class Expansion:
        def eval(self, x, side=1):
            return sum(c * e.eval(x, side) for c, e in zip(coef, basis.edge))

    back = np.array([dof_edge_integral(mesh4, k, Expansion(), j, cut)
                     for j in range(6)])
    assert np.abs(back - coef).max() < 1e-10


def test_exactness_guard():
    m = build_background_mesh(8)
    with pytest.raises(ValueError):
        exactness_check(m, max_edges=100)
