"""Global spaces, interpolation operators, and the discrete de Rham
structure.

The grad/curl/div operators act on DoF vectors through signed integer
incidence matrices; with the orientation conventions of the mesh module the
rows follow fixed sign patterns, and C @ G = 0, D @ C = 0 hold exactly in
integer arithmetic.  Immersed and standard spaces share the same DoF
numbering, which realizes the isomorphism between them.
"""

from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp

from .exactgeom import (segment_sphere_quadrature, tet_ball_volume,
                        triangle_sphere_quadrature)
from .quadrature import map_rule, tet_rule, tri_rule, triangulate_polygon

__all__ = ["GlobalSpace", "build_space", "gradient_incidence",
           "curl_incidence", "divergence_incidence", "complex_check",
           "interpolate", "interpolate_exact_sphere",
           "project_piecewise_constant", "commutativity_check",
           "exactness_check"]


@dataclass
class GlobalSpace:
    kind: str                  # 'nodal' | 'edge' | 'face' | 'elem'
    flavor: str                # 'standard' | 'ife'
    mesh: object
    ndof: int
    element_dofs: np.ndarray   # (T, k) global DoF ids per element
    dof_signs: np.ndarray      # (T, k); identically +1: local bases are
                               # built directly in the global orientation
    boundary_dofs: np.ndarray  # (ndof,) bool
    local_bases: dict = field(default_factory=dict)  # tet -> LocalBasis
    cuts: dict = field(default_factory=dict)

    @property
    def interior_dofs(self):
        return np.where(~self.boundary_dofs)[0]


def build_space(mesh, kind, flavor="standard", cuts=None, local_bases=None):
    if kind == "nodal":
        ndof = mesh.num_nodes
        eldofs = mesh.tets.copy()
        bnd = mesh.node_boundary.copy()
    elif kind == "edge":
        ndof = mesh.num_edges
        eldofs = mesh.tet_edges.copy()
        bnd = mesh.edge_boundary.copy()
    elif kind == "face":
        ndof = mesh.num_faces
        eldofs = mesh.tet_faces.copy()
        bnd = mesh.face_boundary.copy()
    elif kind == "elem":
        ndof = mesh.num_tets
        eldofs = np.arange(ndof)[:, None]
        bnd = np.zeros(ndof, dtype=bool)
    else:
        raise ValueError(f"unknown space kind {kind!r}")
    if flavor not in ("standard", "ife"):
        raise ValueError(f"unknown flavor {flavor!r}")
    return GlobalSpace(kind=kind, flavor=flavor, mesh=mesh, ndof=ndof,
                       element_dofs=eldofs,
                       dof_signs=np.ones_like(eldofs, dtype=np.int8),
                       boundary_dofs=bnd,
                       local_bases=local_bases or {}, cuts=cuts or {})


def gradient_incidence(mesh):
    """G: edges x nodes with -1 at the lower and +1 at the higher node."""
    E = mesh.num_edges
    rows = np.repeat(np.arange(E), 2)
    cols = mesh.edges.ravel()
    data = np.tile(np.array([-1, 1], dtype=np.int64), E)
    return sp.csr_matrix((data, (rows, cols)), shape=(E, mesh.num_nodes))


def curl_incidence(mesh):
    """C: faces x edges; ascending triple (p,q,r) circulates +1,-1,+1 over
    the edges (p,q), (p,r), (q,r)."""
    F = mesh.num_faces
    f = mesh.faces
    pairs = np.stack([f[:, [0, 1]], f[:, [0, 2]], f[:, [1, 2]]], axis=1)
    keys = mesh.edges[:, 0].astype(np.int64) * (mesh.num_nodes + 1) \
        + mesh.edges[:, 1]
    want = pairs[:, :, 0].astype(np.int64) * (mesh.num_nodes + 1) \
        + pairs[:, :, 1]
    eidx = np.searchsorted(keys, want.ravel())
    rows = np.repeat(np.arange(F), 3)
    data = np.tile(np.array([1, -1, 1], dtype=np.int64), F)
    return sp.csr_matrix((data, (rows, eidx)), shape=(F, mesh.num_edges))


def divergence_incidence(mesh):
    """D: tets x faces with the outward sign of each stored face normal."""
    T = mesh.num_tets
    rows = np.repeat(np.arange(T), 4)
    cols = mesh.tet_faces.ravel()
    data = mesh.tet_face_signs.ravel().astype(np.int64)
    return sp.csr_matrix((data, (rows, cols)), shape=(T, mesh.num_faces))


def complex_check(mesh):
    """Max |C G| and |D C| as exact integers; both must vanish."""
    G = gradient_incidence(mesh)
    C = curl_incidence(mesh)
    D = divergence_incidence(mesh)
    cg = C @ G
    dc = D @ C
    cg_max = int(np.abs(cg.data).max()) if cg.nnz else 0
    dc_max = int(np.abs(dc.data).max()) if dc.nnz else 0
    return {"CG_max": cg_max, "DC_max": dc_max}


def _gauss_segment(n=5):
    from numpy.polynomial.legendre import leggauss
    x, w = leggauss(n)
    return 0.5 * (x + 1.0), 0.5 * w


def interpolate(space, fn, levelset=None, degree=5, npts_edge=5):
    """DoF vector of a callable: point values / edge circulations / face
    fluxes / element means.

    fn maps (n,3) points to (n,) scalars or (n,3) vectors and is expected to
    evaluate with exact-region signs for discontinuous data.  With a level
    set supplied, integrals along cut edges are split at the exact interface
    crossings; faces and element means split along the stored sub-polygons
    of the linear interface (the O(h^2) mismatch is accepted there).
    """
    mesh = space.mesh
    if space.kind == "nodal":
        return np.asarray(fn(mesh.nodes), dtype=float)

    if space.kind == "edge":
        xg, wg = _gauss_segment(npts_edge)
        p0 = mesh.nodes[mesh.edges[:, 0]]
        p1 = mesh.nodes[mesh.edges[:, 1]]
        tang = p1 - p0
        dofs = np.zeros(mesh.num_edges)
        cut_edges = set()
        if levelset is not None:
            s0 = np.asarray(levelset.phi(p0))
            s1 = np.asarray(levelset.phi(p1))
            cut_edges = set(np.where(s0 * s1 < 0)[0])
        plain = np.array(sorted(set(range(mesh.num_edges)) - cut_edges),
                         dtype=int)
        if len(plain):
            pts = p0[plain, None, :] + xg[None, :, None] * tang[plain, None, :]
            vals = np.asarray(fn(pts.reshape(-1, 3)), dtype=float)
            vals = vals.reshape(len(plain), len(xg), 3)
            dofs[plain] = np.einsum("g,egc,ec->e", wg, vals, tang[plain])
        for e in cut_edges:
            roots = levelset.segment_roots(p0[e], p1[e])
            ts = sorted([0.0] + roots + [1.0])
            acc = 0.0
            for i in range(len(ts) - 1):
                a, b = ts[i], ts[i + 1]
                if b - a < 1e-15:
                    continue
                pts = p0[e] + (a + (b - a) * xg)[:, None] * tang[e]
                vals = np.asarray(fn(pts), dtype=float)
                acc += (b - a) * np.einsum("g,gc,c->", wg, vals, tang[e])
            dofs[e] = acc
        return dofs

    if space.kind == "face":
        rule = tri_rule(4 if degree >= 4 else 2)
        f = mesh.faces
        verts = mesh.nodes[f]
        normals = np.cross(verts[:, 1] - verts[:, 0], verts[:, 2] - verts[:, 0])
        areas = 0.5 * np.linalg.norm(normals, axis=1)
        normals = normals / (2 * areas)[:, None]
        dofs = np.zeros(mesh.num_faces)
        # faces cut by the linear interface, when cut data is available
        cut_faces = {}
        for k, cut in space.cuts.items():
            for lf in range(4):
                pp, pm = cut.face_polys_plus[lf], cut.face_polys_minus[lf]
                if pp is not None and pm is not None:
                    cut_faces[mesh.tet_faces[k, lf]] = (pp, pm)
        plain = np.array(sorted(set(range(mesh.num_faces)) - set(cut_faces)),
                         dtype=int)
        if len(plain):
            pts = np.einsum("qb,fbc->fqc", rule.points, verts[plain])
            vals = np.asarray(fn(pts.reshape(-1, 3)), dtype=float)
            vals = vals.reshape(len(plain), len(rule.weights), 3)
            w = rule.weights / rule.weights.sum()
            dofs[plain] = areas[plain] * np.einsum(
                "q,fqc,fc->f", w, vals, normals[plain])
        for gf, (pp, pm) in cut_faces.items():
            acc = 0.0
            for poly in (pp, pm):
                for tri in triangulate_polygon(poly):
                    pts, w = map_rule(rule, tri)
                    vals = np.asarray(fn(pts), dtype=float)
                    acc += w @ (vals @ normals[gf])
            dofs[gf] = acc
        return dofs

    if space.kind == "elem":
        rule = tet_rule(5 if degree >= 4 else 2)
        vols = mesh.volumes()
        dofs = np.zeros(mesh.num_tets)
        plain = np.array(sorted(set(range(mesh.num_tets)) - set(space.cuts)),
                         dtype=int)
        if len(plain):
            verts = mesh.nodes[mesh.tets[plain]]
            pts = np.einsum("qb,fbc->fqc", rule.points, verts)
            vals = np.asarray(fn(pts.reshape(-1, 3)), dtype=float)
            vals = vals.reshape(len(plain), len(rule.weights))
            w = rule.weights / rule.weights.sum()
            dofs[plain] = np.einsum("q,fq->f", w, vals)
        for k, cut in space.cuts.items():
            acc = 0.0
            for sub in cut.subtets_plus + cut.subtets_minus:
                pts, w = map_rule(rule, sub)
                acc += w @ np.asarray(fn(pts), dtype=float)
            dofs[k] = acc / vols[k]
        return dofs

    raise ValueError(f"unsupported kind {space.kind!r}")


def interpolate_exact_sphere(space, fn_sided, center, radius, npts_edge=6):
    """DoF vector with integrals split exactly at a spherical interface.

    fn_sided(points, side) evaluates the one-sided formula regardless of
    position; side -1 is the ball interior.  Needed where integration error
    must stay below the geometric O(h^2) mismatch, e.g. verifying the
    commutativity identities.  Supports nodal, edge, and face DoFs.
    """
    mesh = space.mesh
    center = np.asarray(center, dtype=float)

    if space.kind == "nodal":
        side = np.where(np.linalg.norm(mesh.nodes - center, axis=1)
                        >= radius, 1, -1)
        out = np.empty(mesh.num_nodes)
        for s in (1, -1):
            m = side == s
            if m.any():
                out[m] = np.asarray(fn_sided(mesh.nodes[m], s), dtype=float)
        return out

    if space.kind == "edge":
        dofs = np.zeros(mesh.num_edges)
        for e, (a, b) in enumerate(mesh.edges):
            p0, p1 = mesh.nodes[a], mesh.nodes[b]
            t = (p1 - p0) / np.linalg.norm(p1 - p0)
            pts, w, sides = segment_sphere_quadrature(p0, p1, center, radius,
                                                      npts=npts_edge)
            acc = 0.0
            for s in (1, -1):
                m = sides == s
                if m.any():
                    vals = np.asarray(fn_sided(pts[m], s), dtype=float)
                    acc += (w[m] * (vals @ t)).sum()
            dofs[e] = acc
        return dofs

    if space.kind == "face":
        dofs = np.zeros(mesh.num_faces)
        for gf, tri in enumerate(mesh.faces):
            verts = mesh.nodes[tri]
            nrm = np.cross(verts[1] - verts[0], verts[2] - verts[0])
            n = nrm / np.linalg.norm(nrm)
            pin, win, pout, wout = triangle_sphere_quadrature(
                verts, n, center, radius)
            acc = 0.0
            if len(win):
                acc += win @ (np.asarray(fn_sided(pin, -1), float) @ n)
            if len(wout):
                acc += wout @ (np.asarray(fn_sided(pout, 1), float) @ n)
            dofs[gf] = acc
        return dofs

    raise ValueError("exact-sphere interpolation supports nodal, edge and "
                     "face DoFs; use project_piecewise_constant for means")


def project_piecewise_constant(mesh, value_plus, value_minus, center, radius):
    """Element means of a field that is constant on each side of a sphere."""
    vols = mesh.volumes()
    out = np.full(mesh.num_tets, float(value_plus))
    center = np.asarray(center, dtype=float)
    # only tets whose bounding ball can reach the sphere need exact volumes
    verts = mesh.nodes[mesh.tets]
    cen = verts.mean(axis=1)
    rad = np.linalg.norm(verts - cen[:, None, :], axis=2).max(axis=1)
    d = np.linalg.norm(cen - center, axis=1)
    for k in np.where(d - rad < radius)[0]:
        vin = tet_ball_volume(verts[k], center, radius)
        out[k] = (value_plus * (vols[k] - vin) + value_minus * vin) / vols[k]
    return out


def commutativity_check(mesh, sol, spaces=None):
    """Residuals of the three interpolation/differentiation identities.

    Each identity holds on its own jump class, so the three inputs are all
    derived from one benchmark field: its scalar companion (value- and
    flux-continuous) feeds the gradient identity, the field itself (curl
    class) the curl identity, and its curl (normal-continuous and
    divergence-free) the divergence identity.  sol provides the one-sided
    callbacks potential_sided / grad_potential_sided / u_sided /
    curl_u_sided and interface_sphere().
    """
    center, radius = sol.interface_sphere()
    if spaces is None:
        nodal = build_space(mesh, "nodal")
        edge = build_space(mesh, "edge")
        face = build_space(mesh, "face")
    else:
        nodal, edge, face = spaces
    G = gradient_incidence(mesh)
    C = curl_incidence(mesh)
    D = divergence_incidence(mesh)

    In_u = interpolate_exact_sphere(nodal, sol.potential_sided, center, radius)
    Ie_grad = interpolate_exact_sphere(edge, sol.grad_potential_sided,
                                       center, radius)
    r_grad = float(np.abs(G @ In_u - Ie_grad).max())

    Ie_u = interpolate_exact_sphere(edge, sol.u_sided, center, radius)
    If_curl = interpolate_exact_sphere(face, sol.curl_u_sided, center, radius)
    r_curl = float(np.abs(C @ Ie_u - If_curl).max())

    # div(curl u) = 0, so the element means of the projection vanish
    r_div = float(np.abs(D @ If_curl).max())

    return {"grad": r_grad, "curl": r_curl, "div": r_div}


def exactness_check(mesh, max_edges=6000):
    """Rank report of the incidence complex on a contractible mesh.

    nullity(C) = #nodes - 1 = rank(G) and rank(D) = #tets verify exactness;
    the IFE complex reduces to this combinatorial one through the DoF
    isomorphism.
    """
    if mesh.num_edges > max_edges:
        raise ValueError("exactness_check is a dense small-mesh diagnostic")
    G = gradient_incidence(mesh).toarray().astype(float)
    C = curl_incidence(mesh).toarray().astype(float)
    D = divergence_incidence(mesh).toarray().astype(float)
    rank_G = int(np.linalg.matrix_rank(G))
    rank_C = int(np.linalg.matrix_rank(C))
    rank_D = int(np.linalg.matrix_rank(D))
    report = {
        "rank_G": rank_G,
        "rank_C": rank_C,
        "rank_D": rank_D,
        "nullity_C": mesh.num_edges - rank_C,
        "nodes": mesh.num_nodes,
        "tets": mesh.num_tets,
    }
    ok = (report["nullity_C"] == mesh.num_nodes - 1
          and rank_G == mesh.num_nodes - 1
          and rank_D == mesh.num_tets)
    if not ok:
        raise RuntimeError(f"exactness violated: {report}")
    return report
