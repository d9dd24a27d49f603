"""Output writers: legacy ASCII VTK, CSV tables, and coordinate-format
sparse matrices."""

import csv

import numpy as np

__all__ = ["write_vtk", "write_interface_vtk", "write_csv", "write_coo",
           "cell_field_from_edge_dofs"]


def write_vtk(path, mesh, cell_vectors=None, cell_scalars=None,
              title="ife3d mesh"):
    """Legacy ASCII unstructured-grid file (tetrahedra, cell type 10)."""
    cell_vectors = cell_vectors or {}
    cell_scalars = cell_scalars or {}
    for name, arr in list(cell_vectors.items()) + list(cell_scalars.items()):
        if len(arr) != mesh.num_tets:
            raise ValueError(f"cell field {name!r} has {len(arr)} entries "
                             f"for {mesh.num_tets} cells")
    try:
        f = open(path, "w", newline="\n")
    except OSError as exc:
        raise OSError(f"cannot write VTK file {path}: {exc}") from exc
    with f:
        f.write("# vtk DataFile Version 3.0\n")
        f.write(f"{title}\n")
        f.write("ASCII\n")
        f.write("DATASET UNSTRUCTURED_GRID\n")
        f.write(f"POINTS {mesh.num_nodes} double\n")
        for p in mesh.nodes:
            f.write(f"{p[0]:.16g} {p[1]:.16g} {p[2]:.16g}\n")
        T = mesh.num_tets
        f.write(f"CELLS {T} {5 * T}\n")
        for tet in mesh.tets:
            f.write(f"4 {tet[0]} {tet[1]} {tet[2]} {tet[3]}\n")
        f.write(f"CELL_TYPES {T}\n")
        for _ in range(T):
            f.write("10\n")
        if cell_vectors or cell_scalars:
            f.write(f"CELL_DATA {T}\n")
            for name, arr in cell_scalars.items():
                f.write(f"SCALARS {name} double\nLOOKUP_TABLE default\n")
                for v in arr:
                    f.write(f"{v:.16g}\n")
            for name, arr in cell_vectors.items():
                f.write(f"VECTORS {name} double\n")
                for v in arr:
                    f.write(f"{v[0]:.16g} {v[1]:.16g} {v[2]:.16g}\n")


def write_interface_vtk(path, cuts, title="interface polygons"):
    """Polygon soup of the per-element interface pieces, triangulated."""
    pts = []
    tris = []
    for cut in cuts.values():
        poly = cut.points
        base = len(pts)
        pts.extend(poly)
        for i in range(1, len(poly) - 1):
            tris.append((base, base + i, base + i + 1))
    try:
        f = open(path, "w", newline="\n")
    except OSError as exc:
        raise OSError(f"cannot write VTK file {path}: {exc}") from exc
    with f:
        f.write("# vtk DataFile Version 3.0\n")
        f.write(f"{title}\nASCII\nDATASET UNSTRUCTURED_GRID\n")
        f.write(f"POINTS {len(pts)} double\n")
        for p in pts:
            f.write(f"{p[0]:.16g} {p[1]:.16g} {p[2]:.16g}\n")
        f.write(f"CELLS {len(tris)} {4 * len(tris)}\n")
        for t in tris:
            f.write(f"3 {t[0]} {t[1]} {t[2]}\n")
        f.write(f"CELL_TYPES {len(tris)}\n")
        for _ in tris:
            f.write("5\n")


def write_csv(path, header, rows):
    """CSV with a header row, '.' decimals, LF line endings."""
    try:
        f = open(path, "w", newline="")
    except OSError as exc:
        raise OSError(f"cannot write CSV file {path}: {exc}") from exc
    with f:
        w = csv.writer(f, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([repr(v) if isinstance(v, float) else v for v in row])


def write_coo(path, A):
    """Sparse matrix in 'row col value' coordinate text format."""
    coo = A.tocoo()
    try:
        f = open(path, "w", newline="\n")
    except OSError as exc:
        raise OSError(f"cannot write matrix file {path}: {exc}") from exc
    with f:
        f.write(f"% {coo.shape[0]} {coo.shape[1]} {coo.nnz}\n")
        for i, j, v in zip(coo.row, coo.col, coo.data):
            f.write(f"{i} {j} {v:.16e}\n")


def cell_field_from_edge_dofs(disc, u_dofs):
    """Per-tet vector field: the discrete solution averaged over sub-tet
    centroids (single centroid on uncut elements)."""
    mesh = disc.mesh
    geom = disc.geom()
    out = np.zeros((mesh.num_tets, 3))
    centro = np.full((1, 4), 0.25)
    for k in range(mesh.num_tets):
        coef = u_dofs[mesh.tet_edges[k]]
        if k in disc.local_bases:
            basis = disc.local_bases[k]
            cut = disc.cuts[k]
            vals = []
            for side, subtets in ((1, cut.subtets_plus),
                                  (-1, cut.subtets_minus)):
                for verts in subtets:
                    c = verts.mean(axis=0)[None, :]
                    vals.append(sum(ci * e.eval(c, side)[0]
                                    for ci, e in zip(coef, basis.edge)))
            out[k] = np.mean(vals, axis=0)
        else:
            wh = geom.whitney_at(centro, np.array([k]))[0, 0]   # (6,3)
            out[k] = coef @ wh
    return out
