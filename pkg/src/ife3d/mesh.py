"""Uniform Cartesian background mesh on a box, split into tetrahedra.

Each cube is split into 5 tetrahedra (4 trirectangular corner tets and one
regular central tet).  The central tet of every cube uses the corners whose
global index parity (ix+iy+iz) is even, which mirrors the split between
adjacent cubes so that face triangulations agree.

Orientation conventions, fixed so incidence matrices are reproducible
integers:
  - global edge tangent points from the lower to the higher node index;
  - global face normal by the right-hand rule on ascending node indices.
"""

from dataclasses import dataclass, field

import numpy as np

__all__ = ["Mesh", "build_background_mesh", "incidence_sign",
           "collect_entity_patch", "single_tet_mesh"]


@dataclass
class Mesh:
    nodes: np.ndarray        # (V, 3)
    tets: np.ndarray         # (T, 4) node ids, positive signed volume
    edges: np.ndarray        # (E, 2) ascending node ids
    faces: np.ndarray        # (F, 3) ascending node ids
    tet_edges: np.ndarray    # (T, 6) edge ids, local pairs (01,02,03,12,13,23)
    tet_edge_signs: np.ndarray  # (T, 6) +1 if local traversal is low->high
    tet_faces: np.ndarray    # (T, 4) face ids, local face i is opposite vertex i
    tet_face_signs: np.ndarray  # (T, 4) +1 if global normal is outward
    node_boundary: np.ndarray   # (V,) bool
    edge_boundary: np.ndarray   # (E,) bool
    face_boundary: np.ndarray   # (F,) bool
    h: float
    box: tuple
    _node_to_tets: list = field(default=None, repr=False)

    @property
    def num_nodes(self):
        return len(self.nodes)

    @property
    def num_edges(self):
        return len(self.edges)

    @property
    def num_faces(self):
        return len(self.faces)

    @property
    def num_tets(self):
        return len(self.tets)

    def tet_coords(self, k):
        return self.nodes[self.tets[k]]

    def volumes(self):
        v = self.nodes[self.tets]
        return np.abs(np.linalg.det(v[:, 1:] - v[:, :1])) / 6.0

    def node_to_tets(self):
        if self._node_to_tets is None:
            adj = [[] for _ in range(self.num_nodes)]
            for k, tet in enumerate(self.tets):
                for n in tet:
                    adj[n].append(k)
            self._node_to_tets = adj
        return self._node_to_tets


_LOCAL_EDGES = np.array([(0, 1), (0, 2), (0, 3), (1, 2), (1, 3), (2, 3)])
# local face i lists the vertices opposite local vertex i
_LOCAL_FACES = np.array([(1, 2, 3), (0, 2, 3), (0, 1, 3), (0, 1, 2)])


def build_background_mesh(N, box=((-1.0, -1.0, -1.0), (1.0, 1.0, 1.0)),
                          split_type=1):
    """Build the N x N x N cube mesh with the 5-tet split of each cube.

    Only the 5-tet split is available: it produces exactly the trirectangular
    and regular tetrahedra for which the local IFE constructions are
    unisolvent.  The 24-tet split is rejected.
    """
    if split_type == 2:
        raise NotImplementedError(
            "24-tet cube splitting is not supported; the local basis "
            "constructions cover only the tetrahedron shapes of the 5-tet split")
    if split_type != 1:
        raise ValueError(f"unknown split_type {split_type}")
    if N < 1:
        raise ValueError("N must be >= 1")
    lo = np.asarray(box[0], dtype=float)
    hi = np.asarray(box[1], dtype=float)
    ext = hi - lo
    if np.any(ext <= 0):
        raise ValueError("box must have positive extents")
    if not np.allclose(ext, ext[0], rtol=1e-12, atol=0.0):
        raise ValueError("box must be cubic: the 5-tet split produces the "
                         "covered tetrahedron shapes only for cubic cells")
    h = ext[0] / N

    n1 = N + 1
    idx = np.arange(n1)
    gx, gy, gz = np.meshgrid(idx, idx, idx, indexing="ij")
    nodes = np.empty((n1 ** 3, 3))
    nodes[:, 0] = lo[0] + gx.ravel() * h
    nodes[:, 1] = lo[1] + gy.ravel() * h
    nodes[:, 2] = lo[2] + gz.ravel() * h

    def nid(i, j, k):
        return (i * n1 + j) * n1 + k

    tets = []
    for ci in range(N):
        for cj in range(N):
            for ck in range(N):
                corners = {}
                for di in (0, 1):
                    for dj in (0, 1):
                        for dk in (0, 1):
                            corners[(di, dj, dk)] = nid(ci + di, cj + dj,
                                                        ck + dk)
                # central tet: the 4 corners with even global parity
                central = [d for d in corners
                           if (ci + d[0] + cj + d[1] + ck + d[2]) % 2 == 0]
                others = [d for d in corners if d not in central]
                tets.append([corners[d] for d in central])
                for apex in others:
                    neigh = [d for d in central
                             if sum(abs(a - b) for a, b in zip(apex, d)) == 1]
                    assert len(neigh) == 3, "mirroring bug: corner tet " \
                        "does not see 3 central vertices"
                    tets.append([corners[apex]] + [corners[d] for d in neigh])
    tets = np.array(tets, dtype=np.int64)

    # enforce positive signed volume by swapping the last two vertices
    v = nodes[tets]
    det = np.linalg.det(v[:, 1:] - v[:, :1])
    flip = det < 0
    tets[flip] = tets[flip][:, [0, 1, 3, 2]]
    det = np.linalg.det(nodes[tets][:, 1:] - nodes[tets][:, :1])
    if np.any(det <= 0):
        raise RuntimeError("degenerate tetrahedron in cube split")

    mesh = _finish_mesh(nodes, tets, h, (tuple(lo), tuple(hi)))
    return mesh


def _finish_mesh(nodes, tets, h, box):
    all_edges = np.sort(tets[:, _LOCAL_EDGES], axis=2).reshape(-1, 2)
    edges, edge_inv = np.unique(all_edges, axis=0, return_inverse=True)
    tet_edges = edge_inv.reshape(-1, 6)

    all_faces = np.sort(tets[:, _LOCAL_FACES], axis=2).reshape(-1, 3)
    faces, face_inv, face_counts = np.unique(
        all_faces, axis=0, return_inverse=True, return_counts=True)
    tet_faces = face_inv.reshape(-1, 4)
    if np.any(face_counts > 2):
        raise RuntimeError("face shared by more than two tets: mismatched "
                           "cube splits")

    # edge signs: +1 when the local traversal (a -> b by local ordering)
    # goes from the lower to the higher global node id
    pair = tets[:, _LOCAL_EDGES]                       # (T, 6, 2)
    tet_edge_signs = np.where(pair[:, :, 0] < pair[:, :, 1], 1, -1).astype(
        np.int8)

    # face signs: +1 when the stored ascending-order normal points out of
    # the tet (away from the opposite vertex)
    fverts = nodes[faces[tet_faces]]                    # (T, 4, 3, 3)
    normals = np.cross(fverts[:, :, 1] - fverts[:, :, 0],
                       fverts[:, :, 2] - fverts[:, :, 0])
    centers = fverts.mean(axis=2)
    towards_opp = nodes[tets] - centers                 # (T, 4, 3)
    tet_face_signs = np.where(
        np.einsum("tfc,tfc->tf", normals, towards_opp) < 0, 1, -1).astype(
        np.int8)

    face_boundary = face_counts == 1
    node_boundary = np.zeros(len(nodes), dtype=bool)
    node_boundary[np.unique(faces[face_boundary])] = True
    edge_boundary = np.zeros(len(edges), dtype=bool)
    bf = faces[face_boundary]
    if len(bf):
        bedges = np.sort(bf[:, [(0, 1), (0, 2), (1, 2)]], axis=2).reshape(-1, 2)
        pos = np.searchsorted(
            edges[:, 0] * (len(nodes) + 1) + edges[:, 1],
            bedges[:, 0] * (len(nodes) + 1) + bedges[:, 1])
        edge_boundary[pos] = True

    return Mesh(nodes=nodes, tets=tets, edges=edges, faces=faces,
                tet_edges=tet_edges, tet_edge_signs=tet_edge_signs,
                tet_faces=tet_faces, tet_face_signs=tet_face_signs,
                node_boundary=node_boundary, edge_boundary=edge_boundary,
                face_boundary=face_boundary, h=float(h), box=box)


def single_tet_mesh(verts):
    """Wrap one tetrahedron as a Mesh, used for local-basis studies/tests."""
    verts = np.asarray(verts, dtype=float)
    tets = np.array([[0, 1, 2, 3]], dtype=np.int64)
    if np.linalg.det(verts[1:] - verts[0]) < 0:
        tets = np.array([[0, 1, 3, 2]], dtype=np.int64)
    h = float(np.max(np.linalg.norm(
        verts[_LOCAL_EDGES[:, 0]] - verts[_LOCAL_EDGES[:, 1]], axis=1)))
    return _finish_mesh(verts, tets, h, (tuple(verts.min(0)),
                                         tuple(verts.max(0))))


def incidence_sign(mesh, tet, kind, local_index):
    """Sign converting local orientation to the stored global orientation.

    kind='edge': local tangent along the local pair ordering vs the global
    low->high tangent.  kind='face': outward normal vs the stored
    right-hand-rule normal.
    """
    if kind == "edge":
        return int(mesh.tet_edge_signs[tet, local_index])
    if kind == "face":
        return int(mesh.tet_face_signs[tet, local_index])
    raise ValueError(f"kind must be 'edge' or 'face', got {kind!r}")


def collect_entity_patch(mesh, k):
    """All tets sharing at least one node with tet k (k included)."""
    adj = mesh.node_to_tets()
    patch = set()
    for n in mesh.tets[k]:
        patch.update(adj[n])
    return patch
