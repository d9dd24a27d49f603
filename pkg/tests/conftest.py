import numpy as np
import pytest

from ife3d.geometry import PlaneLevelSet, interpolate_levelset, compute_cut
from ife3d.mesh import single_tet_mesh

# the two tetrahedron shapes produced by the 5-tet cube split
REGULAR_TET = np.array([
    [0.0, 0.0, 0.0],
    [1.0, 0.0, 0.0],
    [0.5, np.sqrt(3.0) / 2.0, 0.0],
    [0.5, np.sqrt(3.0) / 6.0, np.sqrt(6.0) / 3.0],
])
TRIRECT_TET = np.array([
    [0.0, 0.0, 0.0],
    [1.0, 0.0, 0.0],
    [0.0, 1.0, 0.0],
    [0.0, 0.0, 1.0],
])


def random_plane_cut(verts, rng, min_dist=1e-6):
    """A single-tet mesh together with a random interface cut through it."""
    mesh = single_tet_mesh(verts)
    while True:
        n = rng.standard_normal(3)
        n /= np.linalg.norm(n)
        point = verts.T @ rng.dirichlet(np.ones(4))
        ls = PlaneLevelSet(point, n)
        phi, _ = interpolate_levelset(mesh, ls)
        vals = phi[mesh.tets[0]]
        if vals.min() * vals.max() < 0 and np.abs(vals).min() > min_dist:
            return mesh, compute_cut(mesh, 0, phi)


@pytest.fixture
def rng():
    return np.random.default_rng(20240817)
