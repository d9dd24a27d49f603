"""Fixed-degree quadrature on tetrahedra and triangles, plus composite rules
over the sub-decompositions of cut elements.

Reference weights sum to the reference measure (1/6 for the unit tetrahedron,
1/2 for the unit triangle), so that mapping to a physical simplex only needs
a multiplication by |K| / |K_ref|.
"""

from dataclasses import dataclass

import numpy as np

__all__ = [
    "QuadRule",
    "tet_rule",
    "tri_rule",
    "map_rule",
    "integrate_piece",
    "integrate_face_piece",
    "triangulate_polygon",
]


@dataclass(frozen=True)
class QuadRule:
    """Symmetric positive-weight rule in barycentric coordinates."""

    points: np.ndarray   # (n, d+1) barycentric coordinates
    weights: np.ndarray  # (n,) sums to the reference measure
    degree: int


def _orbit(bary, mult_weight, n_coords):
    """All distinct permutations of a barycentric point, each with the weight."""
    from itertools import permutations

    pts = sorted(set(permutations(bary)))
    return [(np.array(p[:n_coords + 1]), mult_weight) for p in pts]


def _build(orbits, degree, dim, ref_measure):
    pts, ws = [], []
    for bary, w in orbits:
        for p, wi in _orbit(bary, w, dim):
            pts.append(p)
            ws.append(wi)
    points = np.array(pts)
    weights = np.array(ws)
    weights *= ref_measure / weights.sum()
    return QuadRule(points=points, weights=weights, degree=degree)


# Tetrahedron: 4-point degree-2 rule.
_TET_A2 = 0.5854101966249685
_TET_B2 = 0.1381966011250105

# Tetrahedron: 14-point degree-5 rule (all weights positive).
_TET5_ORBITS = [
    ((0.0673422422100982, 0.3108859192633005, 0.3108859192633005,
      0.3108859192633005), 0.1126879257180162),
    ((0.7217942490673264, 0.0927352503108912, 0.0927352503108912,
      0.0927352503108912), 0.0734930431163619),
    ((0.4544962958743503, 0.4544962958743503, 0.0455037041256497,
      0.0455037041256497), 0.0425460207770812),
]

# Triangle: degree-2 (3 interior points) and degree-4 (6 points, Dunavant).
_TRI2_ORBITS = [((2.0 / 3.0, 1.0 / 6.0, 1.0 / 6.0), 1.0 / 3.0)]
_TRI4_ORBITS = [
    ((0.108103018168070, 0.445948490915965, 0.445948490915965),
     0.223381589678011),
    ((0.816847572980459, 0.091576213509771, 0.091576213509771),
     0.109951743655322),
]

_RULES = {}


def tet_rule(degree):
    """Quadrature rule on the reference tetrahedron, degree in {2, 4, 5}.

    Degree 4 returns the 14-point degree-5 rule: the classical 11-point
    degree-4 rule carries a negative weight, which we exclude.
    """
    if degree not in (2, 4, 5):
        raise ValueError(f"unsupported tetrahedron quadrature degree {degree}")
    key = ("tet", degree)
    if key not in _RULES:
        if degree == 2:
            orbits = [((_TET_A2, _TET_B2, _TET_B2, _TET_B2), 0.25)]
            _RULES[key] = _build(orbits, 2, 3, 1.0 / 6.0)
        else:
            _RULES[key] = _build(_TET5_ORBITS, 5, 3, 1.0 / 6.0)
    return _RULES[key]


def tri_rule(degree):
    """Quadrature rule on the reference triangle, degree in {2, 4}."""
    if degree not in (2, 4):
        raise ValueError(f"unsupported triangle quadrature degree {degree}")
    key = ("tri", degree)
    if key not in _RULES:
        orbits = _TRI2_ORBITS if degree == 2 else _TRI4_ORBITS
        _RULES[key] = _build(orbits, degree, 2, 0.5)
    return _RULES[key]


def _simplex_measure(verts):
    verts = np.asarray(verts, dtype=float)
    if verts.shape[0] == 4:
        return abs(np.linalg.det(verts[1:] - verts[0])) / 6.0
    e1, e2 = verts[1] - verts[0], verts[2] - verts[0]
    return 0.5 * np.linalg.norm(np.cross(e1, e2))


def map_rule(rule, verts):
    """Map a reference rule to a physical simplex (tet or triangle in 3D).

    Returns (points (n,3), weights (n,)) with weights summing to the measure.
    """
    verts = np.asarray(verts, dtype=float)
    pts = rule.points @ verts
    meas = _simplex_measure(verts)
    ref = rule.weights.sum()
    return pts, rule.weights * (meas / ref)


def triangulate_polygon(poly):
    """Fan-triangulate a planar convex polygon given as an (m,3) array."""
    poly = np.asarray(poly, dtype=float)
    return [poly[[0, i, i + 1]] for i in range(1, len(poly) - 1)]


def integrate_piece(cut, side, f, degree=2):
    """Integrate f over one side of a cut element via its sub-tetrahedra.

    f maps an (n,3) point array to shape (n,) or (n,k); the weighted sum over
    points is returned.  Exact for polynomials up to `degree` on each piece.
    """
    rule = tet_rule(degree)
    subtets = cut.subtets_plus if side > 0 else cut.subtets_minus
    total = None
    for verts in subtets:
        pts, w = map_rule(rule, verts)
        vals = np.asarray(f(pts), dtype=float)
        contrib = np.tensordot(w, vals, axes=(0, 0))
        total = contrib if total is None else total + contrib
    if total is None:
        return 0.0
    return total


def integrate_face_piece(cut, face, side, f, degree=2):
    """Integrate f over the clipped piece of local face `face` on one side."""
    rule = tri_rule(degree)
    polys = cut.face_polys_plus if side > 0 else cut.face_polys_minus
    poly = polys[face]
    total = None
    if poly is not None and len(poly) >= 3:
        for tri in triangulate_polygon(poly):
            pts, w = map_rule(rule, tri)
            vals = np.asarray(f(pts), dtype=float)
            contrib = np.tensordot(w, vals, axes=(0, 0))
            total = contrib if total is None else total + contrib
    if total is None:
        return 0.0
    return total
