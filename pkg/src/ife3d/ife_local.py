"""Per-element construction of the three immersed bases on interface
tetrahedra, and of the matching standard bases on uncut ones.

All shape functions are represented in a center-anchored piecewise form

    scalar:  v(x)   = b . (x - x_K) + c          with b- = B b+
    edge:    v(x)   = a x (x - x_K) + b          with a- = A a+, b- = B b+
    face:    v(x)   = c (x - x_K) + a            with a- = A a+

where A and B are the 3x3 transmission matrices built from the cut plane
frame and the coefficient ratios.  Uncut elements use the same classes with
A = B = I, so a single representation serves the whole mesh.

Degrees of freedom are taken directly in the global mesh orientation (edge
tangents low->high node index, face normals by the right-hand rule on
ascending indices), so scatter into global systems needs no sign fixups.
"""

from dataclasses import dataclass

import numpy as np
from scipy.linalg import lu_factor, lu_solve

__all__ = ["CoefficientPair", "JumpMaps", "build_jump_maps",
           "PiecewiseNedelec", "PiecewiseRT", "PiecewiseAffine", "LocalBasis",
           "build_local_basis", "build_h1_basis", "build_hdiv_basis",
           "build_hcurl_basis", "hdiv_system_matrix",
           "dof_edge_integral", "dof_face_flux",
           "eval_field", "eval_curl", "eval_div"]

_LOCAL_EDGES = [(0, 1), (0, 2), (0, 3), (1, 2), (1, 3), (2, 3)]
_LOCAL_FACES = [(1, 2, 3), (0, 2, 3), (0, 1, 3), (0, 1, 2)]


@dataclass(frozen=True)
class CoefficientPair:
    """Piecewise-constant coefficients; alpha is the curl-term weight, beta
    the mass-term weight."""

    alpha_plus: float
    alpha_minus: float
    beta_plus: float
    beta_minus: float

    def __post_init__(self):
        if min(self.alpha_plus, self.alpha_minus,
               self.beta_plus, self.beta_minus) <= 0:
            raise ValueError("coefficients must be positive")

    @property
    def alpha_ratio(self):
        return self.alpha_plus / self.alpha_minus

    @property
    def beta_ratio(self):
        return self.beta_plus / self.beta_minus

    def alpha(self, side):
        return self.alpha_plus if side > 0 else self.alpha_minus

    def beta(self, side):
        return self.beta_plus if side > 0 else self.beta_minus


@dataclass(frozen=True)
class JumpMaps:
    A: np.ndarray
    B: np.ndarray
    T: np.ndarray


def build_jump_maps(cut, coeffs):
    """Transmission matrices tying '-'-side constants to '+'-side ones.

    A = T diag(1, a~, a~) T^t scales tangential components by a~ = a+/a-;
    B = T diag(b~, 1, 1) T^t scales the normal component by b~ = b+/b-.
    """
    T = cut.T_K
    at = coeffs.alpha_ratio
    bt = coeffs.beta_ratio
    A = T @ np.diag([1.0, at, at]) @ T.T
    B = T @ np.diag([bt, 1.0, 1.0]) @ T.T
    return JumpMaps(A=A, B=B, T=T)


class PiecewiseNedelec:
    """v(x) = a x (x - x_K) + b per side; curl v = 2 a (constant per side)."""

    __slots__ = ("a_plus", "a_minus", "b_plus", "b_minus", "x_K")

    def __init__(self, a_plus, b_plus, x_K, A=None, B=None,
                 a_minus=None, b_minus=None):
        self.a_plus = np.asarray(a_plus, dtype=float)
        self.b_plus = np.asarray(b_plus, dtype=float)
        self.x_K = np.asarray(x_K, dtype=float)
        self.a_minus = (np.asarray(a_minus, float) if a_minus is not None
                        else (A @ self.a_plus if A is not None
                              else self.a_plus.copy()))
        self.b_minus = (np.asarray(b_minus, float) if b_minus is not None
                        else (B @ self.b_plus if B is not None
                              else self.b_plus.copy()))

    def eval(self, x, side=1):
        x = np.asarray(x, dtype=float)
        a = self.a_plus if side > 0 else self.a_minus
        b = self.b_plus if side > 0 else self.b_minus
        return np.cross(a, x - self.x_K) + b

    def curl(self, side=1):
        return 2.0 * (self.a_plus if side > 0 else self.a_minus)


class PiecewiseRT:
    """v(x) = c (x - x_K) + a per side; div v = 3 c on both sides."""

    __slots__ = ("c", "a_plus", "a_minus", "x_K")

    def __init__(self, c, a_plus, x_K, A=None, a_minus=None):
        self.c = float(c)
        self.a_plus = np.asarray(a_plus, dtype=float)
        self.x_K = np.asarray(x_K, dtype=float)
        self.a_minus = (np.asarray(a_minus, float) if a_minus is not None
                        else (A @ self.a_plus if A is not None
                              else self.a_plus.copy()))

    def eval(self, x, side=1):
        x = np.asarray(x, dtype=float)
        a = self.a_plus if side > 0 else self.a_minus
        return self.c * (x - self.x_K) + a

    def div(self):
        return 3.0 * self.c


class PiecewiseAffine:
    """v(x) = b . (x - x_K) + c per side; grad v = b (constant per side)."""

    __slots__ = ("b_plus", "b_minus", "c", "x_K")

    def __init__(self, b_plus, c, x_K, B=None, b_minus=None):
        self.b_plus = np.asarray(b_plus, dtype=float)
        self.c = float(c)
        self.x_K = np.asarray(x_K, dtype=float)
        self.b_minus = (np.asarray(b_minus, float) if b_minus is not None
                        else (B @ self.b_plus if B is not None
                              else self.b_plus.copy()))

    def eval(self, x, side=1):
        x = np.asarray(x, dtype=float)
        b = self.b_plus if side > 0 else self.b_minus
        return (x - self.x_K) @ b + self.c

    def grad(self, side=1):
        return self.b_plus if side > 0 else self.b_minus


def eval_field(field, x, side=1):
    return field.eval(x, side)


def eval_curl(field, side=1):
    return field.curl(side)


def eval_div(field):
    return field.div()


@dataclass
class LocalBasis:
    """Shape functions of one element, dual to the global-orientation DoFs."""

    nodal: list       # 4 PiecewiseAffine, nodal[i](z_j) = delta_ij
    edge: list        # 6 PiecewiseNedelec, edge-tangential integral duality
    face: list        # 4 PiecewiseRT, face-normal flux duality
    verts: np.ndarray
    node_ids: np.ndarray
    outward_signs: np.ndarray   # +1 if the global face normal points outward
    cut: object = None          # CutConfig on interface elements
    hdiv_residual: float = 0.0  # flux equation residual on the check face


class _ElementFrame:
    """Cached per-element geometry shared by the three constructions."""

    def __init__(self, mesh, k):
        self.mesh = mesh
        self.k = k
        self.node_ids = mesh.tets[k]
        self.verts = mesh.nodes[self.node_ids]
        v = self.verts
        self.volume = abs(np.linalg.det(v[1:] - v[0])) / 6.0
        # gradients of barycentric coordinates
        M = np.hstack([np.ones((4, 1)), v])
        self.bary_grads = np.linalg.inv(M)[1:, :].T          # (4,3)
        self.bary_consts = np.linalg.inv(M)[0, :]            # lambda = c + g.x
        self.centroid = v.mean(axis=0)
        # per local face: global unit normal, outward sign, area, centroid
        self.face_normals = np.empty((4, 3))
        self.face_areas = np.empty(4)
        self.face_centroids = np.empty((4, 3))
        self.outward_signs = mesh.tet_face_signs[k].astype(float)
        for lf, tri in enumerate(_LOCAL_FACES):
            gids = np.sort(self.node_ids[list(tri)])
            p = mesh.nodes[gids]
            cr = np.cross(p[1] - p[0], p[2] - p[0])
            nrm = np.linalg.norm(cr)
            self.face_normals[lf] = cr / nrm
            self.face_areas[lf] = 0.5 * nrm
            self.face_centroids[lf] = p.mean(axis=0)
        # per local edge: global tangent direction and length
        self.edge_tangents = np.empty((6, 3))
        self.edge_lengths = np.empty(6)
        self.edge_lo = np.empty(6, dtype=int)   # local index of the lower id
        self.edge_hi = np.empty(6, dtype=int)
        for le, (a, b) in enumerate(_LOCAL_EDGES):
            if self.node_ids[a] < self.node_ids[b]:
                lo, hi = a, b
            else:
                lo, hi = b, a
            d = self.verts[hi] - self.verts[lo]
            self.edge_lengths[le] = np.linalg.norm(d)
            self.edge_tangents[le] = d / self.edge_lengths[le]
            self.edge_lo[le], self.edge_hi[le] = lo, hi


def _frame(mesh, k):
    return _ElementFrame(mesh, k)


def hdiv_system_matrix(frame, cut, maps, face_order):
    """M_K = Phi+ N + Phi- N A for the given ordered local faces.

    N rows are OUTWARD unit normals (the divergence identity fixing the
    radial coefficient requires outward fluxes); Phi+- hold the cut face-piece
    areas.  Returns (M, scale) with scale = product of face areas.
    """
    N = np.array([frame.outward_signs[lf] * frame.face_normals[lf]
                  for lf in face_order])
    ap = np.diag([cut.face_areas_plus[lf] for lf in face_order])
    am = np.diag([cut.face_areas_minus[lf] for lf in face_order])
    M = ap @ N + am @ N @ maps.A
    scale = float(np.prod([frame.face_areas[lf] for lf in face_order]))
    return M, scale


def build_hdiv_basis(mesh, k, cut, coeffs, face_order=None):
    """Face shape functions on an interface element.

    For each unit face-flux pattern, the radial coefficient follows from the
    divergence identity and the piecewise constant solves a 3x3 system over
    three faces; the fourth face's flux equation is kept as a residual check.
    face_order overrides the default largest-area selection (used by the
    determinant oracle, which fixes the faces through one vertex).
    """
    frame = _frame(mesh, k)
    maps = build_jump_maps(cut, coeffs)
    if face_order is None:
        face_order = sorted(range(4), key=lambda lf: (-frame.face_areas[lf],
                                                      lf))[:3]
    check_face = [lf for lf in range(4) if lf not in face_order][0]

    M, scale = hdiv_system_matrix(frame, cut, maps, face_order)
    if abs(np.linalg.det(M)) < 1e-13 * scale:
        raise RuntimeError(
            f"tet {k}: singular H(div) system (|det|={np.linalg.det(M):.3e},"
            f" scale={scale:.3e}); cut configuration outside the covered "
            "tetrahedron shapes")
    lu = lu_factor(M)

    volK = frame.volume
    x_K = cut.x_K
    # moment of (x - x_K) . n_out over each full face (linear -> centroid)
    face_moment = np.array([
        frame.outward_signs[lf]
        * np.dot(frame.face_centroids[lf] - x_K, frame.face_normals[lf])
        * frame.face_areas[lf] for lf in range(4)])

    basis = []
    residual = 0.0
    for j in range(4):
        dof = np.zeros(4)
        dof[j] = 1.0
        v_out = frame.outward_signs * dof        # fluxes w.r.t. outward normals
        v0 = v_out.sum()
        c = v0 / (3.0 * volK)
        rhs = np.array([v_out[lf] - c * face_moment[lf] for lf in face_order])
        a_plus = lu_solve(lu, rhs)
        phi = PiecewiseRT(c=c, a_plus=a_plus, x_K=x_K, A=maps.A)
        # residual of the unused face's flux equation
        lf = check_face
        nout = frame.outward_signs[lf] * frame.face_normals[lf]
        lhs = (cut.face_areas_plus[lf] * nout @ phi.a_plus
               + cut.face_areas_minus[lf] * nout @ phi.a_minus)
        residual = max(residual, abs(lhs - (v_out[lf] - c * face_moment[lf])))
        basis.append(phi)
    if residual > 1e-10:
        raise RuntimeError(f"tet {k}: H(div) check-face residual {residual:.3e}")
    return basis, residual


def build_h1_basis(mesh, k, cut, coeffs):
    """Nodal shape functions: 4x4 solve in (b+, c) with side-dependent rows."""
    frame = _frame(mesh, k)
    maps = build_jump_maps(cut, coeffs)
    rows = np.empty((4, 4))
    for j in range(4):
        d = frame.verts[j] - cut.x_K
        if cut.vertex_signs[j] > 0:
            rows[j, :3] = d
        else:
            rows[j, :3] = maps.B @ d        # (B b+).d = b+.(B d), B symmetric
        rows[j, 3] = 1.0
    try:
        sol = np.linalg.solve(rows, np.eye(4))
    except np.linalg.LinAlgError as exc:
        raise RuntimeError(f"tet {k}: singular nodal system") from exc
    return [PiecewiseAffine(b_plus=sol[:3, j], c=sol[3, j], x_K=cut.x_K,
                            B=maps.B) for j in range(4)]


# face incidence pattern for ascending-sorted triples (p,q,r): the boundary
# traversal p->q->r is counter-clockwise about the stored normal, so edges
# (p,q), (p,r), (q,r) enter the circulation with signs +1, -1, +1
_FACE_EDGE_SIGNS = {(0, 1): 1.0, (0, 2): -1.0, (1, 2): 1.0}


def _face_edge_circulation(frame, lf):
    """(local edge, sign) pairs giving the circulation about the face's
    stored global normal."""
    tri = _LOCAL_FACES[lf]
    order = sorted(range(3), key=lambda i: frame.node_ids[tri[i]])
    out = []
    for (i, j), sgn in _FACE_EDGE_SIGNS.items():
        a, b = tri[order[i]], tri[order[j]]
        le = _LOCAL_EDGES.index(tuple(sorted((a, b))))
        out.append((le, sgn))
    return out


def _edge_segments(frame, cut, le):
    """(midpoint, length, side) per straight piece of a possibly cut edge."""
    lo, hi = frame.edge_lo[le], frame.edge_hi[le]
    p0, p1 = frame.verts[lo], frame.verts[hi]
    length = frame.edge_lengths[le]
    if cut is not None and le in cut.edge_params:
        # the stored parameter runs along the local (a,b) ordering
        a, b = _LOCAL_EDGES[le]
        s = cut.edge_params[le]
        if a != lo:
            s = 1.0 - s
        cuts = [0.0, s, 1.0]
    else:
        cuts = [0.0, 1.0]
    segs = []
    for i in range(len(cuts) - 1):
        s0, s1 = cuts[i], cuts[i + 1]
        if s1 - s0 <= 0:
            continue
        mid = p0 + 0.5 * (s0 + s1) * (p1 - p0)
        side = 1 if cut is None else int(cut.side_of(mid[None, :])[0])
        segs.append((mid, (s1 - s0) * length, side))
    return segs


def build_hcurl_basis(mesh, k, cut, coeffs, nodal, face):
    """Edge shape functions assembled from the face and nodal bases.

    For each unit edge-circulation pattern: the face fluxes of the curl are
    the edge circulations of the target pattern, giving a divergence-free
    combination of face functions; a nodal correction then restores the
    three edge integrals at the anchor node.
    """
    frame = _frame(mesh, k)
    circ = [_face_edge_circulation(frame, lf) for lf in range(4)]

    # anchor: node opposite the face with the longest cut chord
    chord = np.zeros(4)
    for lf in range(4):
        pp = cut.face_polys_plus[lf]
        pm = cut.face_polys_minus[lf]
        if pp is None or pm is None:
            continue
        tri = _LOCAL_FACES[lf]
        les = [_LOCAL_EDGES.index(tuple(sorted((tri[i], tri[j]))))
               for i, j in ((0, 1), (0, 2), (1, 2))]
        xs = [le for le in les if le in cut.edge_params]
        if len(xs) == 2:
            a, b = xs
            pa = _edge_cut_point(frame, cut, a)
            pb = _edge_cut_point(frame, cut, b)
            chord[lf] = np.linalg.norm(pa - pb)
    anchor_face = int(np.argmax(chord))
    z4 = anchor_face  # local face lf is opposite local vertex lf
    others = [i for i in range(4) if i != z4]

    basis = []
    for i in range(6):
        v = np.zeros(6)
        v[i] = 1.0
        w = np.zeros(4)
        for lf in range(4):
            for le, sgn in circ[lf]:
                w[lf] += sgn * v[le]
        # Sigma over faces of outward flux must vanish (boundary of boundary)
        total_out = float(np.dot(frame.outward_signs, w))
        if abs(total_out) > 1e-12 * max(1.0, np.abs(w).max()):
            raise RuntimeError(f"tet {k}: face circulation signs inconsistent"
                               f" ({total_out:.2e})")
        c_comb = sum(w[lf] * face[lf].c for lf in range(4))
        a_plus = sum(w[lf] * face[lf].a_plus for lf in range(4))
        del c_comb  # identically cancelled by w summing to zero outward flux

        half_a = np.asarray(a_plus, dtype=float) / 2.0
        rot = PiecewiseNedelec(a_plus=half_a, b_plus=np.zeros(3), x_K=cut.x_K,
                               a_minus=(sum(w[lf] * face[lf].a_minus
                                            for lf in range(4)) / 2.0),
                               b_minus=np.zeros(3))

        # nodal correction at the three anchor edges
        coef = np.zeros(4)
        for zi in others:
            le = _LOCAL_EDGES.index(tuple(sorted((z4, zi))))
            d_i = 1.0 if frame.node_ids[z4] < frame.node_ids[zi] else -1.0
            J = 0.0
            t = frame.edge_tangents[le]
            for mid, ln, side in _edge_segments(frame, cut, le):
                J += np.dot(rot.eval(mid[None, :], side)[0], t) * ln
            coef[zi] = d_i * (v[le] - J)
        b_plus = sum(coef[zi] * nodal[zi].b_plus for zi in others)
        b_minus = sum(coef[zi] * nodal[zi].b_minus for zi in others)
        basis.append(PiecewiseNedelec(
            a_plus=rot.a_plus, b_plus=b_plus, x_K=cut.x_K,
            a_minus=rot.a_minus, b_minus=b_minus))
    return basis


def _edge_cut_point(frame, cut, le):
    a, b = _LOCAL_EDGES[le]
    s = cut.edge_params[le]
    return frame.verts[a] + s * (frame.verts[b] - frame.verts[a])


def _standard_basis(frame):
    """Whitney / RT0 / barycentric bases of an uncut element, DoF-dual to the
    global orientations, in the shared piecewise representation."""
    g = frame.bary_grads
    x_K = frame.centroid
    lam_c = frame.bary_consts + g @ x_K      # barycentric values at x_K

    nodal = [PiecewiseAffine(b_plus=g[j], c=lam_c[j], x_K=x_K)
             for j in range(4)]

    edge = []
    for le in range(6):
        lo, hi = frame.edge_lo[le], frame.edge_hi[le]
        a = np.cross(g[lo], g[hi])
        b = lam_c[lo] * g[hi] - lam_c[hi] * g[lo]
        edge.append(PiecewiseNedelec(a_plus=a, b_plus=b, x_K=x_K))

    face = []
    for lf in range(4):
        sgn = frame.outward_signs[lf]
        opp = frame.verts[lf]
        c = sgn / (3.0 * frame.volume)
        a = c * (x_K - opp)
        face.append(PiecewiseRT(c=c, a_plus=a, x_K=x_K))
    return nodal, edge, face


def build_local_basis(mesh, k, cut=None, coeffs=None):
    """All three bases of element k: immersed when cut, standard otherwise."""
    frame = _frame(mesh, k)
    if cut is None:
        nodal, edge, face = _standard_basis(frame)
        return LocalBasis(nodal=nodal, edge=edge, face=face,
                          verts=frame.verts, node_ids=frame.node_ids,
                          outward_signs=frame.outward_signs, cut=None)
    if coeffs is None:
        raise ValueError("coefficients required for an interface element")
    nodal = build_h1_basis(mesh, k, cut, coeffs)
    face, residual = build_hdiv_basis(mesh, k, cut, coeffs)
    edge = build_hcurl_basis(mesh, k, cut, coeffs, nodal, face)
    return LocalBasis(nodal=nodal, edge=edge, face=face,
                      verts=frame.verts, node_ids=frame.node_ids,
                      outward_signs=frame.outward_signs, cut=cut,
                      hdiv_residual=residual)


def dof_edge_integral(mesh, k, field, le, cut=None):
    """Edge-tangential integral of a piecewise field along local edge le,
    split exactly at the cut parameter (piecewise-linear integrand)."""
    frame = _frame(mesh, k)
    t = frame.edge_tangents[le]
    total = 0.0
    for mid, ln, side in _edge_segments(frame, cut, le):
        total += np.dot(field.eval(mid[None, :], side)[0], t) * ln
    return total


def dof_face_flux(mesh, k, field, lf, cut=None, degree=2):
    """Face-normal flux of a piecewise field through local face lf."""
    from .quadrature import tri_rule, map_rule, triangulate_polygon

    frame = _frame(mesh, k)
    n = frame.face_normals[lf]
    rule = tri_rule(degree)
    total = 0.0
    if cut is None:
        polys = [(frame.verts[list(_LOCAL_FACES[lf])], 1)]
    else:
        polys = []
        if cut.face_polys_plus[lf] is not None:
            polys.append((cut.face_polys_plus[lf], 1))
        if cut.face_polys_minus[lf] is not None:
            polys.append((cut.face_polys_minus[lf], -1))
    for poly, side in polys:
        for tri in triangulate_polygon(poly):
            pts, w = map_rule(rule, tri)
            vals = field.eval(pts, side)
            total += float(w @ (vals @ n))
    return total
