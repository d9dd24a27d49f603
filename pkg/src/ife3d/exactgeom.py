"""Quadrature that resolves a spherical interface exactly.

Used where integration error must sit far below the O(h^2) geometric
mismatch between the exact interface and its piecewise-linear interpolant:
interpolating discontinuous exact data for the discrete de Rham identities,
and oracle integrals in tests.

Everything reduces to one construction: a triangle wedge (c, a, b) with c at
the circle center intersects the disk in an exact union of sub-triangles
(where the edge a-b runs inside the circle) and circular sectors (where it
runs outside).  Summing signed wedges over polygon edges handles arbitrary
polygon/disk overlap with no case analysis.
"""

import numpy as np
from numpy.polynomial.legendre import leggauss
from scipy.integrate import quad

__all__ = ["polygon_disk_area", "polygon_disk_quadrature",
           "triangle_sphere_quadrature", "tet_ball_volume",
           "segment_sphere_quadrature"]

_GAUSS = {}


def _gauss01(n):
    """Gauss-Legendre nodes/weights on [0, 1]."""
    if n not in _GAUSS:
        x, w = leggauss(n)
        _GAUSS[n] = (0.5 * (x + 1.0), 0.5 * w)
    return _GAUSS[n]


def _circle_crossings(a, b, c, r):
    """Parameters t in (0,1) where |a + t(b-a) - c| = r."""
    d = b - a
    m = a - c
    qa = d @ d
    qb = 2.0 * m @ d
    qc = m @ m - r * r
    disc = qb * qb - 4 * qa * qc
    if disc <= 0 or qa == 0:
        return []
    sq = np.sqrt(disc)
    return [t for t in ((-qb - sq) / (2 * qa), (-qb + sq) / (2 * qa))
            if 1e-14 < t < 1.0 - 1e-14]


def _wedge_pieces(a, b, c, r):
    """Decompose wedge (c,a,b) cap disk into ('tri', p, q) / ('sec', t0, t1).

    Pieces are signed by the traversal a->b.  Edges subtending an angle of
    nearly pi at c are split at the perpendicular foot to keep the wrapped
    angle unambiguous.
    """
    ra = a - c
    rb = b - c
    dth = np.arctan2(ra[0] * rb[1] - ra[1] * rb[0], ra @ rb)
    if abs(dth) > np.pi - 1e-9:
        d = b - a
        t = np.clip(-(a - c) @ d / (d @ d), 1e-12, 1 - 1e-12)
        mid = a + t * d
        return _wedge_pieces(a, mid, c, r) + _wedge_pieces(mid, b, c, r)
    ts = sorted([0.0] + _circle_crossings(a, b, c, r) + [1.0])
    pieces = []
    for i in range(len(ts) - 1):
        t0, t1 = ts[i], ts[i + 1]
        if t1 - t0 < 1e-15:
            continue
        p = a + t0 * (b - a)
        q = a + t1 * (b - a)
        mid = a + 0.5 * (t0 + t1) * (b - a)
        if np.linalg.norm(mid - c) <= r:
            pieces.append(("tri", p, q))
        else:
            th0 = np.arctan2(p[1] - c[1], p[0] - c[0])
            rp = p - c
            rq = q - c
            d = np.arctan2(rp[0] * rq[1] - rp[1] * rq[0], rp @ rq)
            pieces.append(("sec", th0, th0 + d))
    return pieces


def polygon_disk_area(poly, c, r):
    """Area of polygon cap disk; signed by the polygon orientation."""
    poly = np.asarray(poly, dtype=float)
    c = np.asarray(c, dtype=float)
    if r <= 0:
        return 0.0
    area = 0.0
    n = len(poly)
    for i in range(n):
        a, b = poly[i], poly[(i + 1) % n]
        for piece in _wedge_pieces(a, b, c, r):
            if piece[0] == "tri":
                _, p, q = piece
                area += 0.5 * ((p[0] - c[0]) * (q[1] - c[1])
                               - (p[1] - c[1]) * (q[0] - c[0]))
            else:
                _, t0, t1 = piece
                area += 0.5 * r * r * (t1 - t0)
    return area


_TRI_DUFFY = {}


def _tri_rule_2d(n=7):
    """Duffy-transform tensor rule on the reference triangle; exact for
    polynomials of degree <= n - 1 (weights normalized to area 1)."""
    if n not in _TRI_DUFFY:
        x, wx = _gauss01(n)
        X, Y = np.meshgrid(x, x, indexing="ij")
        W = np.outer(wx, wx) * (1.0 - Y)
        bx = (X * (1.0 - Y)).ravel()
        by = Y.ravel()
        bary = np.column_stack([1.0 - bx - by, bx, by])
        _TRI_DUFFY[n] = (bary, 2.0 * W.ravel())
    return _TRI_DUFFY[n]


def _tri_quad(p0, p1, p2):
    bary, w = _tri_rule_2d()
    pts = bary @ np.array([p0, p1, p2])
    signed = 0.5 * ((p1[0] - p0[0]) * (p2[1] - p0[1])
                    - (p1[1] - p0[1]) * (p2[0] - p0[0]))
    return pts, w * signed


def polygon_disk_quadrature(poly, c, r, n_theta=24, n_rho=7):
    """Signed quadrature for the region polygon cap disk.

    Exact in the radial direction for polynomial integrands of degree
    <= 2*n_rho - 2; spectrally accurate in the angular direction.  Returns
    (points (m,2), weights) whose signs follow the polygon orientation.
    """
    poly = np.asarray(poly, dtype=float)
    c = np.asarray(c, dtype=float)
    pts_list, w_list = [], []
    if r <= 0:
        return np.zeros((0, 2)), np.zeros(0)
    xt, wt = _gauss01(n_theta)
    xr, wr = _gauss01(n_rho)
    n = len(poly)
    for i in range(n):
        a, b = poly[i], poly[(i + 1) % n]
        for piece in _wedge_pieces(a, b, c, r):
            if piece[0] == "tri":
                _, p, q = piece
                pp, ww = _tri_quad(c, p, q)
                pts_list.append(pp)
                w_list.append(ww)
            else:
                _, t0, t1 = piece
                th = t0 + (t1 - t0) * xt
                rho = r * xr
                # tensor grid in (theta, rho); jacobian rho
                TH, RH = np.meshgrid(th, rho, indexing="ij")
                P = np.stack([c[0] + RH * np.cos(TH),
                              c[1] + RH * np.sin(TH)], axis=-1)
                W = np.outer(wt * (t1 - t0), wr * r) * RH
                pts_list.append(P.reshape(-1, 2))
                w_list.append(W.ravel())
    if not pts_list:
        return np.zeros((0, 2)), np.zeros(0)
    return np.vstack(pts_list), np.concatenate(w_list)


def _polygon_quadrature(poly):
    """Signed fan quadrature of a full polygon."""
    poly = np.asarray(poly, dtype=float)
    pts_list, w_list = [], []
    for i in range(1, len(poly) - 1):
        pp, ww = _tri_quad(poly[0], poly[i], poly[i + 1])
        pts_list.append(pp)
        w_list.append(ww)
    return np.vstack(pts_list), np.concatenate(w_list)


def triangle_sphere_quadrature(verts, normal, center, radius,
                               n_theta=24, n_rho=7):
    """Quadrature for one planar triangle in 3D split exactly by a sphere.

    Returns (pts_in, w_in, pts_out, w_out) where 'in' is the sphere interior
    (the '-' region).  The plane cap sphere is a circle, so the split is a
    polygon/disk problem in in-plane coordinates.
    """
    verts = np.asarray(verts, dtype=float)
    n = np.asarray(normal, dtype=float)
    e1 = verts[1] - verts[0]
    e1 = e1 - (e1 @ n) * n
    e1 /= np.linalg.norm(e1)
    e2 = np.cross(n, e1)
    origin = verts[0]

    def to2d(p):
        d = p - origin
        return np.column_stack([d @ e1, d @ e2])

    def to3d(p2):
        return origin + p2[:, :1] * e1 + p2[:, 1:2] * e2

    tri2 = to2d(verts)
    # enforce counter-clockwise orientation in the (e1, e2) frame
    u, v = tri2[1] - tri2[0], tri2[2] - tri2[0]
    if u[0] * v[1] - u[1] * v[0] < 0:
        tri2 = tri2[::-1]

    qc = np.asarray(center, dtype=float) - origin
    dist = qc @ n
    rp2 = radius ** 2 - dist ** 2
    if rp2 <= 0:
        # the plane misses the sphere: the whole triangle is outside the ball
        pts, w = _polygon_quadrature(tri2)
        return np.zeros((0, 3)), np.zeros(0), to3d(pts), w
    c2 = np.array([qc @ e1, qc @ e2])
    r2 = np.sqrt(rp2)

    pin, win = polygon_disk_quadrature(tri2, c2, r2, n_theta, n_rho)
    pall, wall = _polygon_quadrature(tri2)
    pts_out = np.vstack([pall, pin])
    w_out = np.concatenate([wall, -win])
    return to3d(pin), win, to3d(pts_out), w_out


def _cross_section(verts, z):
    """Cross-section polygon of a tet at height z, CCW in the xy-plane."""
    pts = []
    for i in range(4):
        for j in range(i + 1, 4):
            zi, zj = verts[i, 2], verts[j, 2]
            if (zi - z) * (zj - z) < 0:
                t = (z - zi) / (zj - zi)
                p = verts[i] + t * (verts[j] - verts[i])
                pts.append(p[:2])
    if len(pts) < 3:
        return None
    pts = np.array(pts)
    cen = pts.mean(axis=0)
    ang = np.arctan2(pts[:, 1] - cen[1], pts[:, 0] - cen[0])
    return pts[np.argsort(ang)]


def tet_ball_volume(verts, center, radius, tol=1e-12):
    """Volume of tetrahedron cap ball, via adaptive slicing.

    Each z-slice is a polygon/disk intersection, for which the area is in
    closed form; the z-integral is done adaptively with breakpoints at the
    tet vertices and the ball poles.
    """
    verts = np.asarray(verts, dtype=float)
    center = np.asarray(center, dtype=float)
    z0 = max(verts[:, 2].min(), center[2] - radius)
    z1 = min(verts[:, 2].max(), center[2] + radius)
    if z1 <= z0:
        return 0.0

    def slice_area(z):
        rz2 = radius ** 2 - (z - center[2]) ** 2
        if rz2 <= 0:
            return 0.0
        poly = _cross_section(verts, z)
        if poly is None:
            return 0.0
        a = polygon_disk_area(poly, center[:2], np.sqrt(rz2))
        return abs(a)

    pts = sorted({z0, z1, *[z for z in verts[:, 2] if z0 < z < z1],
                  *[z for z in (center[2] - radius, center[2] + radius)
                    if z0 < z < z1]})
    total = 0.0
    for i in range(len(pts) - 1):
        val, _ = quad(slice_area, pts[i], pts[i + 1], epsabs=tol,
                      epsrel=tol, limit=200)
        total += val
    return total


def segment_sphere_quadrature(p0, p1, center, radius, npts=6):
    """Gauss points along a segment split at its sphere crossings.

    Returns (points (m,3), weights summing to the length, sides (m,)) with
    side -1 inside the ball.
    """
    p0 = np.asarray(p0, dtype=float)
    p1 = np.asarray(p1, dtype=float)
    roots = _circle_crossings(p0, p1, np.asarray(center, float), radius)
    ts = sorted([0.0] + roots + [1.0])
    x, w = _gauss01(npts)
    length = np.linalg.norm(p1 - p0)
    pts, ws, sides = [], [], []
    for i in range(len(ts) - 1):
        t0, t1 = ts[i], ts[i + 1]
        if t1 - t0 < 1e-15:
            continue
        tq = t0 + (t1 - t0) * x
        seg_pts = p0[None, :] + tq[:, None] * (p1 - p0)[None, :]
        mid = p0 + 0.5 * (t0 + t1) * (p1 - p0)
        side = -1 if np.linalg.norm(mid - center) < radius else 1
        pts.append(seg_pts)
        ws.append(w * (t1 - t0) * length)
        sides.append(np.full(npts, side, dtype=int))
    return np.vstack(pts), np.concatenate(ws), np.concatenate(sides)
