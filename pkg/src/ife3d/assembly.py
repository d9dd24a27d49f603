"""Assembly of the Petrov-Galerkin, Galerkin, and auxiliary nodal systems.

Trial and test flavors are independent: 'ife' uses immersed bases on
interface elements, 'standard' uses conforming bases everywhere.  Away from
the interface the two coincide, so those elements are assembled in one
vectorized sweep; interface elements integrate each side of the linear cut
with the side's coefficient over the sub-tetrahedra.

Curl-curl and mass integrands of the lowest-order bases are polynomials of
degree <= 2 per piece, so the degree-2 rule (and the closed forms used on
uncut elements) are exact; right-hand sides and error integrals over-
integrate with the degree-5 rule.
"""

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

from .geometry import classify_elements, compute_cut, interpolate_levelset
from .ife_local import build_local_basis
from .quadrature import map_rule, tet_rule
from .derham import gradient_incidence

__all__ = ["IfeDiscretization", "assemble_curlcurl", "assemble_nodal_aux",
           "build_transfers", "assemble_rhs", "dirichlet_edge_values",
           "ReducedSystem", "apply_dirichlet"]

_LOCAL_EDGES = np.array([(0, 1), (0, 2), (0, 3), (1, 2), (1, 3), (2, 3)])
_MASS_BARY = (np.ones((4, 4)) + np.eye(4)) / 20.0   # int lam_i lam_j / |K|


class IfeDiscretization:
    """Mesh + interface + coefficients, with cut geometry and local immersed
    bases built once and shared between assemblies."""

    def __init__(self, mesh, levelset, coeffs):
        self.mesh = mesh
        self.levelset = levelset
        self.coeffs = coeffs
        self.phi_nodes, self.snapped_nodes = interpolate_levelset(mesh,
                                                                  levelset)
        self.classification = classify_elements(mesh, self.phi_nodes)
        self.cuts = {int(k): compute_cut(mesh, int(k), self.phi_nodes)
                     for k in self.classification.interface}
        self.local_bases = {k: build_local_basis(mesh, k, cut, coeffs)
                            for k, cut in self.cuts.items()}
        self._std_cut_bases = None
        self._geom = None

    def standard_cut_bases(self):
        """Standard bases on interface elements (test side / FE matrices)."""
        if self._std_cut_bases is None:
            self._std_cut_bases = {k: build_local_basis(self.mesh, k)
                                   for k in self.cuts}
        return self._std_cut_bases

    def geom(self):
        if self._geom is None:
            self._geom = _StdGeometry(self.mesh)
        return self._geom


class _StdGeometry:
    """Vectorized per-element quantities of the standard bases."""

    def __init__(self, mesh):
        v = mesh.nodes[mesh.tets]                       # (T,4,3)
        self.vols = np.abs(np.linalg.det(v[:, 1:] - v[:, :1])) / 6.0
        M = np.concatenate([np.ones((len(v), 4, 1)), v], axis=2)
        inv = np.linalg.inv(M)
        self.grads = np.transpose(inv[:, 1:, :], (0, 2, 1))   # (T,4,3)
        self.consts = inv[:, 0, :]                            # (T,4)
        # per local edge, local indices of the lower/higher global node
        ids = mesh.tets[:, _LOCAL_EDGES]                      # (T,6,2)
        swap = ids[:, :, 0] > ids[:, :, 1]
        self.lo = np.where(swap, _LOCAL_EDGES[:, 1], _LOCAL_EDGES[:, 0])
        self.hi = np.where(swap, _LOCAL_EDGES[:, 0], _LOCAL_EDGES[:, 1])
        take = lambda idx: np.take_along_axis(
            self.grads, idx[:, :, None], axis=1)
        self.g_lo = take(self.lo)                             # (T,6,3)
        self.g_hi = take(self.hi)
        self.whitney_a = np.cross(self.g_lo, self.g_hi)       # curl/2

    def whitney_at(self, bary, elems):
        """Values of the 6 standard edge functions at barycentric points.

        Returns (len(elems), npts, 6, 3).
        """
        lam_lo = np.take_along_axis(
            np.broadcast_to(bary[None, :, :], (len(elems), len(bary), 4)),
            self.lo[elems][:, None, :], axis=2)               # (E,q,6)
        lam_hi = np.take_along_axis(
            np.broadcast_to(bary[None, :, :], (len(elems), len(bary), 4)),
            self.hi[elems][:, None, :], axis=2)
        return (lam_lo[..., None] * self.g_hi[elems][:, None, :, :]
                - lam_hi[..., None] * self.g_lo[elems][:, None, :, :])


def _coeff_tuple(value, default_pair):
    if value is None:
        return default_pair
    if np.isscalar(value):
        return (float(value), float(value))
    return (float(value[0]), float(value[1]))


def _curlcurl_standard_blocks(geom, elems, alpha_e, beta_e):
    """Exact 6x6 element matrices of the standard edge basis."""
    a = geom.whitney_a[elems]
    V = geom.vols[elems]
    stif = 4.0 * np.einsum("t,tic,tjc->tij", alpha_e * V, a, a)

    g = geom.grads[elems]
    phi = np.einsum("tic,tjc->tij", g, g)                 # (E,4,4)
    lo = geom.lo[elems]
    hi = geom.hi[elems]

    def gather(phi_mat, I, J):
        return phi_mat[np.arange(len(elems))[:, None, None], I[:, :, None],
                       J[:, None, :]]

    Mb = _MASS_BARY
    mass = (gather(phi, hi, hi) * Mb[lo[:, :, None], lo[:, None, :]]
            - gather(phi, hi, lo) * Mb[lo[:, :, None], hi[:, None, :]]
            - gather(phi, lo, hi) * Mb[hi[:, :, None], lo[:, None, :]]
            + gather(phi, lo, lo) * Mb[hi[:, :, None], hi[:, None, :]])
    mass *= (beta_e * V)[:, None, None]
    return stif + mass


def _curlcurl_cut_block(cut, trial, test, alpha, beta):
    """6x6 interface-element matrix, integrating each side separately."""
    rule = tet_rule(2)
    block = np.zeros((6, 6))
    for side, subtets in ((1, cut.subtets_plus), (-1, cut.subtets_minus)):
        al = alpha[0] if side > 0 else alpha[1]
        be = beta[0] if side > 0 else beta[1]
        ctr = np.array([2.0 * (f.a_plus if side > 0 else f.a_minus)
                        for f in trial.edge])
        cte = np.array([2.0 * (f.a_plus if side > 0 else f.a_minus)
                        for f in test.edge])
        vol = 0.0
        mass = np.zeros((6, 6))
        for verts in subtets:
            pts, w = map_rule(rule, verts)
            vol += w.sum()
            tv = np.stack([f.eval(pts, side) for f in trial.edge])  # (6,q,3)
            sv = np.stack([f.eval(pts, side) for f in test.edge])
            mass += np.einsum("q,iqc,jqc->ji", w, tv, sv)
        block += al * vol * (cte @ ctr.T) + be * mass
    return block


def assemble_curlcurl(disc, trial_flavor="ife", test_flavor="standard",
                      alpha=None, beta=None):
    """Edge-space matrix of (alpha curl u, curl v) + (beta u, v).

    trial/test flavor 'ife'/'standard' select the bases on interface
    elements; alpha/beta override the integration weights as (plus, minus)
    pairs (defaults: the discretization coefficients).
    """
    mesh = disc.mesh
    co = disc.coeffs
    alpha = _coeff_tuple(alpha, (co.alpha_plus, co.alpha_minus))
    beta = _coeff_tuple(beta, (co.beta_plus, co.beta_minus))
    geom = disc.geom()
    labels = disc.classification.labels

    rows, cols, vals = [], [], []

    uncut = np.where(labels != 0)[0]
    if len(uncut):
        alpha_e = np.where(labels[uncut] > 0, alpha[0], alpha[1])
        beta_e = np.where(labels[uncut] > 0, beta[0], beta[1])
        blocks = _curlcurl_standard_blocks(geom, uncut, alpha_e, beta_e)
        ed = mesh.tet_edges[uncut]
        rows.append(np.repeat(ed, 6, axis=1).ravel())
        cols.append(np.tile(ed, (1, 6)).ravel())
        vals.append(blocks.ravel())

    std = disc.standard_cut_bases() if "standard" in (trial_flavor,
                                                      test_flavor) else None
    for k, cut in disc.cuts.items():
        trial = disc.local_bases[k] if trial_flavor == "ife" else std[k]
        test = disc.local_bases[k] if test_flavor == "ife" else std[k]
        block = _curlcurl_cut_block(cut, trial, test, alpha, beta)
        ed = mesh.tet_edges[k]
        rows.append(np.repeat(ed, 6))
        cols.append(np.tile(ed, 6))
        vals.append(block.ravel())

    E = mesh.num_edges
    A = sp.coo_matrix((np.concatenate(vals),
                       (np.concatenate(rows), np.concatenate(cols))),
                      shape=(E, E)).tocsr()
    A.sum_duplicates()
    return A


def assemble_nodal_aux(disc, alpha=None, beta=None):
    """Auxiliary nodal matrices for the preconditioner.

    Returns (B_vec, B_scal): B_scal is the scalar (alpha grad u, grad v)
    stiffness; B_vec = kron(I3, stiffness + beta-mass) discretizes the
    componentwise vector form.  Both use the immersed nodal basis on
    interface elements and are reduced to interior DoFs by the caller.
    """
    mesh = disc.mesh
    co = disc.coeffs
    alpha = _coeff_tuple(alpha, (co.alpha_plus, co.alpha_minus))
    beta = _coeff_tuple(beta, (co.beta_plus, co.beta_minus))
    geom = disc.geom()
    labels = disc.classification.labels

    rows, cols, svals, mvals = [], [], [], []
    uncut = np.where(labels != 0)[0]
    if len(uncut):
        alpha_e = np.where(labels[uncut] > 0, alpha[0], alpha[1])
        beta_e = np.where(labels[uncut] > 0, beta[0], beta[1])
        g = geom.grads[uncut]
        V = geom.vols[uncut]
        stif = np.einsum("t,tic,tjc->tij", alpha_e * V, g, g)
        mass = (beta_e * V)[:, None, None] * _MASS_BARY[None, :, :]
        nd = mesh.tets[uncut]
        rows.append(np.repeat(nd, 4, axis=1).ravel())
        cols.append(np.tile(nd, (1, 4)).ravel())
        svals.append(stif.ravel())
        mvals.append(mass.ravel())

    rule = tet_rule(2)
    for k, cut in disc.cuts.items():
        nodal = disc.local_bases[k].nodal
        stif = np.zeros((4, 4))
        mass = np.zeros((4, 4))
        for side, subtets in ((1, cut.subtets_plus), (-1, cut.subtets_minus)):
            al = alpha[0] if side > 0 else alpha[1]
            be = beta[0] if side > 0 else beta[1]
            b = np.array([f.grad(side) for f in nodal])
            vol = 0.0
            msub = np.zeros((4, 4))
            for verts in subtets:
                pts, w = map_rule(rule, verts)
                vol += w.sum()
                fv = np.stack([f.eval(pts, side) for f in nodal])  # (4,q)
                msub += np.einsum("q,iq,jq->ij", w, fv, fv)
            stif += al * vol * (b @ b.T)
            mass += be * msub
        nd = mesh.tets[k]
        rows.append(np.repeat(nd, 4))
        cols.append(np.tile(nd, 4))
        svals.append(stif.ravel())
        mvals.append(mass.ravel())

    V = mesh.num_nodes
    r = np.concatenate(rows)
    c = np.concatenate(cols)
    B_scal = sp.coo_matrix((np.concatenate(svals), (r, c)),
                           shape=(V, V)).tocsr()
    full = sp.coo_matrix((np.concatenate(svals) + np.concatenate(mvals),
                          (r, c)), shape=(V, V)).tocsr()
    B_vec = sp.kron(sp.eye(3), full, format="csr")
    return B_vec, B_scal


def build_transfers(mesh):
    """Discrete gradient G and the nodal-to-edge averaging map P_curl.

    P_curl maps a nodal vector field (component-major layout, 3*V entries)
    to edge DoFs by integrating the endpoint average along the edge:
    dof_e = ((w_a + w_b)/2) . (z_b - z_a).
    """
    G = gradient_incidence(mesh).astype(float)
    E = mesh.num_edges
    V = mesh.num_nodes
    d = mesh.nodes[mesh.edges[:, 1]] - mesh.nodes[mesh.edges[:, 0]]
    rows = np.repeat(np.arange(E), 6)
    cols = np.empty((E, 6), dtype=np.int64)
    vals = np.empty((E, 6))
    for comp in range(3):
        cols[:, 2 * comp] = comp * V + mesh.edges[:, 0]
        cols[:, 2 * comp + 1] = comp * V + mesh.edges[:, 1]
        vals[:, 2 * comp] = 0.5 * d[:, comp]
        vals[:, 2 * comp + 1] = 0.5 * d[:, comp]
    P = sp.csr_matrix((vals.ravel(), (rows, cols.ravel())),
                      shape=(E, 3 * V))
    return G, P


def assemble_rhs(disc, f, degree=5):
    """Load vector (f, v) against the standard edge test space.

    f maps (n,3) points to (n,3) values and is responsible for evaluating
    with exact-region signs; cut elements integrate per sub-tetrahedron so
    quadrature points do not straddle the linear interface.
    """
    mesh = disc.mesh
    geom = disc.geom()
    rule = tet_rule(degree)
    labels = disc.classification.labels
    out = np.zeros(mesh.num_edges)

    uncut = np.where(labels != 0)[0]
    if len(uncut):
        verts = mesh.nodes[mesh.tets[uncut]]
        pts = np.einsum("qb,tbc->tqc", rule.points, verts)
        fv = np.asarray(f(pts.reshape(-1, 3)), dtype=float)
        fv = fv.reshape(len(uncut), len(rule.weights), 3)
        wh = geom.whitney_at(rule.points, uncut)          # (t,q,6,3)
        w = rule.weights / rule.weights.sum()
        contrib = np.einsum("q,tqec,tqc,t->te", w, wh, fv, geom.vols[uncut])
        np.add.at(out, mesh.tet_edges[uncut].ravel(), contrib.ravel())

    for k, cut in disc.cuts.items():
        test = disc.standard_cut_bases()[k]
        acc = np.zeros(6)
        for side, subtets in ((1, cut.subtets_plus), (-1, cut.subtets_minus)):
            for verts in subtets:
                pts, w = map_rule(rule, verts)
                fv = np.asarray(f(pts), dtype=float)
                sv = np.stack([e.eval(pts, side) for e in test.edge])
                acc += np.einsum("q,eqc,qc->e", w, sv, fv)
        np.add.at(out, mesh.tet_edges[k], acc)
    return out


def dirichlet_edge_values(disc, g, npts=5):
    """Tangential-line integrals of g on boundary edges (0 elsewhere).

    Cut boundary edges are split at the exact interface crossings.
    """
    from numpy.polynomial.legendre import leggauss
    mesh = disc.mesh
    xg, wg = leggauss(npts)
    xg = 0.5 * (xg + 1.0)
    wg = 0.5 * wg
    out = np.zeros(mesh.num_edges)
    bidx = np.where(mesh.edge_boundary)[0]
    p0 = mesh.nodes[mesh.edges[bidx, 0]]
    p1 = mesh.nodes[mesh.edges[bidx, 1]]
    s0 = np.asarray(disc.levelset.phi(p0))
    s1 = np.asarray(disc.levelset.phi(p1))
    cut = s0 * s1 < 0
    plain = bidx[~cut]
    if len(plain):
        t = p1[~cut] - p0[~cut]
        pts = p0[~cut][:, None, :] + xg[None, :, None] * t[:, None, :]
        gv = np.asarray(g(pts.reshape(-1, 3)), dtype=float)
        gv = gv.reshape(len(plain), npts, 3)
        out[plain] = np.einsum("q,eqc,ec->e", wg, gv, t)
    for e in bidx[cut]:
        a = mesh.nodes[mesh.edges[e, 0]]
        b = mesh.nodes[mesh.edges[e, 1]]
        roots = disc.levelset.segment_roots(a, b)
        ts = sorted([0.0] + roots + [1.0])
        acc = 0.0
        for i in range(len(ts) - 1):
            lo, hi = ts[i], ts[i + 1]
            pts = a + (lo + (hi - lo) * xg)[:, None] * (b - a)
            gv = np.asarray(g(pts), dtype=float)
            acc += (hi - lo) * np.einsum("q,qc,c->", wg, gv, b - a)
        out[e] = acc
    return out


@dataclass
class ReducedSystem:
    matrix: sp.csr_matrix        # interior x interior
    rhs: np.ndarray
    interior: np.ndarray         # global ids of kept DoFs
    boundary: np.ndarray
    boundary_values: np.ndarray  # values at `boundary`, in that order

    def expand(self, x_interior):
        n = len(self.interior) + len(self.boundary)
        full = np.zeros(n)
        full[self.interior] = x_interior
        full[self.boundary] = self.boundary_values
        return full


def apply_dirichlet(A, b, boundary_mask, boundary_values):
    """Eliminate constrained DoFs; trial and test use the same index set so
    a Petrov-Galerkin matrix stays square."""
    boundary = np.where(boundary_mask)[0]
    interior = np.where(~boundary_mask)[0]
    gB = np.asarray(boundary_values, dtype=float)[boundary]
    A_csr = A.tocsr()
    A_II = A_csr[interior][:, interior]
    A_IB = A_csr[interior][:, boundary]
    rhs = b[interior] - A_IB @ gB
    return ReducedSystem(matrix=A_II.tocsr(), rhs=rhs, interior=interior,
                         boundary=boundary, boundary_values=gB)
