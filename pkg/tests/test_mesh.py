import numpy as np
import pytest

from ife3d.mesh import (build_background_mesh, collect_entity_patch,
                        incidence_sign, single_tet_mesh)


def test_single_cube_counts():
    m = build_background_mesh(1)
    assert m.num_nodes == 8
    assert m.num_tets == 5
    assert m.num_edges == 18
    assert m.num_faces == 16
    assert m.num_nodes - m.num_edges + m.num_faces - m.num_tets == 1


def test_n2_counts_and_euler():
    m = build_background_mesh(2)
    assert m.num_nodes == 27
    assert m.num_tets == 40
    assert m.num_nodes - m.num_edges + m.num_faces - m.num_tets == 1


def test_positive_volumes_and_two_shapes():
    m = build_background_mesh(2)
    v = m.nodes[m.tets]
    det = np.linalg.det(v[:, 1:] - v[:, :1])
    assert np.all(det > 0)
    vols = m.volumes() / m.h ** 3
    # trirectangular corners: 1/6; central regular: 1/3
    assert set(np.round(vols, 12)) == {round(1 / 6, 12), round(1 / 3, 12)}
    assert m.volumes().sum() == pytest.approx(8.0, rel=1e-12)


def test_interior_faces_shared_by_two_tets():
    m = build_background_mesh(2)
    counts = np.zeros(m.num_faces, dtype=int)
    for fl in m.tet_faces:
        counts[fl] += 1
    assert set(counts[m.face_boundary]) == {1}
    assert set(counts[~m.face_boundary]) == {2}


def test_edges_deduplicated():
    m = build_background_mesh(2)
    assert len(np.unique(m.edges, axis=0)) == m.num_edges
    assert len(np.unique(m.faces, axis=0)) == m.num_faces
    for k in range(m.num_tets):
        assert len(set(m.tet_edges[k])) == 6
        assert len(set(m.tet_faces[k])) == 4


def test_incidence_sign_edges():
    m = build_background_mesh(2)
    local_edges = [(0, 1), (0, 2), (0, 3), (1, 2), (1, 3), (2, 3)]
    for k in range(0, m.num_tets, 7):
        for le, (a, b) in enumerate(local_edges):
            expect = 1 if m.tets[k, a] < m.tets[k, b] else -1
            assert incidence_sign(m, k, "edge", le) == expect


def test_interior_faces_opposite_signs():
    m = build_background_mesh(2)
    acc = {}
    for k in range(m.num_tets):
        for lf in range(4):
            acc.setdefault(m.tet_faces[k, lf], []).append(
                incidence_sign(m, k, "face", lf))
    for f, signs in acc.items():
        if not m.face_boundary[f]:
            assert sorted(signs) == [-1, 1]


def test_patch_contains_self_and_neighbors():
    m = build_background_mesh(3)
    # central tet of the interior cube (cubes are emitted central-first)
    interior_cube = (1 * 3 + 1) * 3 + 1
    k = 5 * interior_cube
    patch = collect_entity_patch(m, k)
    assert k in patch
    assert len(patch) > 5
    m1 = build_background_mesh(1)
    assert collect_entity_patch(m1, 1) == {0, 1, 2, 3, 4}


def test_deterministic_construction():
    a = build_background_mesh(2)
    b = build_background_mesh(2)
    assert np.array_equal(a.nodes, b.nodes)
    assert np.array_equal(a.tets, b.tets)
    assert np.array_equal(a.edges, b.edges)
    assert np.array_equal(a.faces, b.faces)


def test_type2_rejected():
    with pytest.raises(NotImplementedError):
        build_background_mesh(2, split_type=2)
    with pytest.raises(ValueError):
        build_background_mesh(2, split_type=7)


def test_invalid_boxes():
    with pytest.raises(ValueError):
        build_background_mesh(0)
    with pytest.raises(ValueError):
        build_background_mesh(2, box=((0, 0, 0), (1, 1, 0.5)))
    with pytest.raises(ValueError):
        build_background_mesh(2, box=((0, 0, 0), (-1, 1, 1)))


def test_single_tet_mesh_wraps_one_tet():
    verts = np.array([[0.0, 0, 0], [1, 0, 0], [0, 1, 0], [0, 0, 1]])
    m = single_tet_mesh(verts)
    assert m.num_tets == 1
    assert m.num_edges == 6
    assert m.num_faces == 4
    assert np.all(m.face_boundary)
