import math

import numpy as np
import pytest

from ife3d.geometry import PlaneLevelSet, compute_cut, interpolate_levelset
from ife3d.mesh import single_tet_mesh
from ife3d.quadrature import (integrate_face_piece, integrate_piece, map_rule,
                              tet_rule, tri_rule)

REF_TET = np.array([[0.0, 0, 0], [1, 0, 0], [0, 1, 0], [0, 0, 1]])
REF_TRI = np.array([[0.0, 0, 0], [1, 0, 0], [0, 1, 0]])


def tet_monomial(a, b, c):
    # int over the reference tet of x^a y^b z^c
    return (math.factorial(a) * math.factorial(b) * math.factorial(c)
            / math.factorial(a + b + c + 3))


def tri_monomial(a, b):
    return math.factorial(a) * math.factorial(b) / math.factorial(a + b + 2)


@pytest.mark.parametrize("degree", [2, 4, 5])
def test_tet_rule_exactness(degree):
    rule = tet_rule(degree)
    assert np.all(rule.weights > 0)
    pts, w = map_rule(rule, REF_TET)
    assert w.sum() == pytest.approx(1.0 / 6.0, rel=1e-14)
    for a in range(degree + 1):
        for b in range(degree + 1 - a):
            for c in range(degree + 1 - a - b):
                val = (w * pts[:, 0] ** a * pts[:, 1] ** b
                       * pts[:, 2] ** c).sum()
                assert val == pytest.approx(tet_monomial(a, b, c),
                                            rel=1e-12, abs=1e-15)


def test_tet_rule_example_values():
    pts, w = map_rule(tet_rule(5), REF_TET)
    assert (w * pts[:, 0] * pts[:, 1]).sum() == pytest.approx(1.0 / 120.0)


@pytest.mark.parametrize("degree", [2, 4])
def test_tri_rule_exactness(degree):
    rule = tri_rule(degree)
    assert np.all(rule.weights > 0)
    pts, w = map_rule(rule, REF_TRI)
    for a in range(degree + 1):
        for b in range(degree + 1 - a):
            val = (w * pts[:, 0] ** a * pts[:, 1] ** b).sum()
            assert val == pytest.approx(tri_monomial(a, b), rel=1e-12,
                                        abs=1e-15)


def test_tri_rule_x_squared():
    pts, w = map_rule(tri_rule(4), REF_TRI)
    assert (w * pts[:, 0] ** 2).sum() == pytest.approx(1.0 / 12.0)


def test_unsupported_degrees():
    with pytest.raises(ValueError):
        tet_rule(3)
    with pytest.raises(ValueError):
        tri_rule(7)


@pytest.fixture
def cut_tet():
    mesh = single_tet_mesh(REF_TET)
    ls = PlaneLevelSet((0.3, 0.1, 0.2), (0.6, 0.5, -0.4))
    phi, _ = interpolate_levelset(mesh, ls)
    return mesh, compute_cut(mesh, 0, phi)


def test_integrate_piece_measures(cut_tet):
    mesh, cut = cut_tet
    one = lambda p: np.ones(len(p))
    vp = integrate_piece(cut, 1, one)
    vm = integrate_piece(cut, -1, one)
    assert vp == pytest.approx(cut.volume_plus, rel=1e-13)
    assert vp + vm == pytest.approx(1.0 / 6.0, rel=1e-13)


def test_integrate_piece_linear_centroid(cut_tet):
    mesh, cut = cut_tet
    f = lambda p: p[:, 0]
    # centroid identity: integral of x over a piece = x-centroid * volume
    for side in (1, -1):
        subtets = cut.subtets_plus if side > 0 else cut.subtets_minus
        expected = 0.0
        for t in subtets:
            vol = abs(np.linalg.det(t[1:] - t[0])) / 6.0
            expected += t.mean(axis=0)[0] * vol
        assert integrate_piece(cut, side, f) == pytest.approx(expected,
                                                              rel=1e-13)


def test_piece_additivity_matches_plain_rule(cut_tet):
    mesh, cut = cut_tet
    f = lambda p: 1.0 + p[:, 0] * p[:, 1] - 3.0 * p[:, 2] ** 2
    whole = integrate_piece(cut, 1, f) + integrate_piece(cut, -1, f)
    pts, w = map_rule(tet_rule(2), REF_TET)
    assert whole == pytest.approx((w * f(pts)).sum(), rel=1e-12)


def test_face_piece_areas_and_moment(cut_tet):
    mesh, cut = cut_tet
    one = lambda p: np.ones(len(p))
    for lf in range(4):
        ap = integrate_face_piece(cut, lf, 1, one)
        am = integrate_face_piece(cut, lf, -1, one)
        assert ap == pytest.approx(cut.face_areas_plus[lf], abs=1e-14)
        assert am == pytest.approx(cut.face_areas_minus[lf], abs=1e-14)
    # full-face moment of (x - x_K) . n equals the centroid formula
    tri = REF_TET[[1, 2, 3]]     # local face 0
    nrm = np.cross(tri[1] - tri[0], tri[2] - tri[0])
    area = 0.5 * np.linalg.norm(nrm)
    n = nrm / np.linalg.norm(nrm)
    f = lambda p: (p - cut.x_K) @ n
    total = (integrate_face_piece(cut, 0, 1, f)
             + integrate_face_piece(cut, 0, -1, f))
    expected = np.dot(tri.mean(axis=0) - cut.x_K, n) * area
    assert total == pytest.approx(expected, rel=1e-12)
