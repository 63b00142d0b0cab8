"""
One level of Catmull-Clark solid subdivision.

New vertices are numbered vertex points first, then edge points, face
points and cell points, each block in the order of the coarse entity
tables. Child ``l`` of cell ``e`` is cell ``8 e + l`` and sits at local
corner ``l`` of its parent.

The subdivision matrix ``C`` maps coarse control points to fine ones,
``P_fine = C @ P_coarse``. Rows are convex combinations.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

from ..mesh import HEX_CORNER_IJK, HEX_EDGES, HEX_FACES, HexMesh
from ..quality import FeatureSet, VertexClass, _features, no_features


def _lattice_table():
    """For each of the 27 lattice positions: (kind, local entity)."""
    kind = np.zeros(27, dtype=np.int64)  # 0 vertex, 1 edge, 2 face, 3 cell
    ent = np.zeros(27, dtype=np.int64)
    for p in range(27):
        q = np.array([p % 3, (p // 3) % 3, p // 9])
        odd = q == 1
        kind[p] = int(odd.sum())
        even = np.flatnonzero(~odd)
        if kind[p] == 0:
            ent[p] = int(np.flatnonzero((HEX_CORNER_IJK == q // 2).all(axis=1))[0])
        elif kind[p] == 1:
            ent[p] = next(e for e, (a, b) in enumerate(HEX_EDGES)
                          if all(HEX_CORNER_IJK[a, x] * 2 == q[x] and HEX_CORNER_IJK[b, x] * 2 == q[x] for x in even))
        elif kind[p] == 2:
            x = even[0]
            ent[p] = next(f for f, face in enumerate(HEX_FACES) if np.all(HEX_CORNER_IJK[face, x] * 2 == q[x]))
    return kind, ent


LATTICE_KIND, LATTICE_ENTITY = _lattice_table()
# CHILD_LATTICE[l, n]: lattice position of corner n of child l
CHILD_LATTICE = np.array([[int(np.dot(HEX_CORNER_IJK[l] + HEX_CORNER_IJK[n], [1, 3, 9])) for n in range(8)]
                          for l in range(8)])


def _avg(rows: np.ndarray, cols: np.ndarray, n_rows: int, n_cols: int, weight=None) -> sp.csr_matrix:
    """Row-normalized incidence: each row averages its listed columns."""
    w = np.ones(len(rows)) if weight is None else weight
    M = sp.csr_matrix((w, (rows, cols)), shape=(n_rows, n_cols))
    s = np.asarray(M.sum(axis=1)).ravel()
    s[s == 0] = 1.0
    return sp.diags(1.0 / s) @ M


@dataclass
class Subdivision:
    mesh: HexMesh
    matrix: sp.csr_matrix      # (V_fine, V_coarse)
    features: FeatureSet


def subdivide(mesh: HexMesh, features: FeatureSet | None = None) -> Subdivision:
    """Refine every cell into 8 and return the fine mesh, ``C`` and fine features."""
    features = features if features is not None else no_features(mesh)
    V, Cn = mesh.n_vertices, mesh.n_cells
    cells = mesh.cells
    faces, face_inv, face_counts = mesh.face_table
    edges, edge_inv, edge_val = mesh.edge_table
    F, E = len(faces), len(edges)
    bface = face_counts == 1
    bedge = mesh.boundary_edge_mask
    bvert = mesh.boundary_vertex_mask

    ar = np.arange
    Cc = _avg(np.repeat(ar(Cn), 8), cells.ravel(), Cn, V)               # cell centroids
    Fm = _avg(np.repeat(ar(F), 4), faces.ravel(), F, V)                 # face centroids
    Em = _avg(np.repeat(ar(E), 2), edges.ravel(), E, V)                 # edge midpoints
    Id = sp.identity(V, format="csr")

    # face -> cells
    FC = _avg(face_inv.ravel(), np.repeat(ar(Cn), 6), F, Cn)
    face_pt = sp.diags(np.where(bface, 1.0, 0.5)) @ Fm + sp.diags(np.where(bface, 0.0, 0.5)) @ (FC @ Cc)

    # face -> edges, from the ordered face cycles
    cyc = cells[:, HEX_FACES].reshape(-1, 4)
    fid = face_inv.ravel()
    a, b = cyc, np.roll(cyc, -1, axis=1)
    lo, hi = np.minimum(a, b).ravel(), np.maximum(a, b).ravel()
    eid = np.searchsorted(edges[:, 0] * V + edges[:, 1], lo * V + hi)
    fe = np.unique(np.stack([np.repeat(fid, 4), eid], axis=1), axis=0)  # (face, edge) pairs

    # edge points
    EC = _avg(edge_inv.ravel(), np.repeat(ar(Cn), 12), E, Cn)
    EF_int = _avg(fe[:, 1], fe[:, 0], E, F)
    bsel = bface[fe[:, 0]]
    EF_bnd = _avg(fe[bsel, 1], fe[bsel, 0], E, F)
    n = edge_val.astype(np.float64)
    interior_edge = (EC @ Cc + 2.0 * (EF_int @ Fm) + sp.diags(n - 3.0) @ Em)
    interior_edge = sp.diags(1.0 / n) @ interior_edge
    boundary_edge = 0.5 * Em + 0.5 * (EF_bnd @ Fm)
    sharp = np.zeros(E, dtype=bool)
    if len(features.sharp_edges):
        sk = features.sharp_edges[:, 0] * V + features.sharp_edges[:, 1]
        sharp = np.isin(edges[:, 0] * V + edges[:, 1], sk)
    w_int = (~bedge).astype(float)
    w_bnd = (bedge & ~sharp).astype(float)
    w_shp = sharp.astype(float)
    edge_pt = sp.diags(w_int) @ interior_edge + sp.diags(w_bnd) @ boundary_edge + sp.diags(w_shp) @ Em

    # vertex points
    VC = _avg(cells.ravel(), np.repeat(ar(Cn), 8), V, Cn)
    VF = _avg(faces.ravel(), np.repeat(ar(F), 4), V, F)
    VE = _avg(edges.ravel(), np.repeat(ar(E), 2), V, E)
    interior_v = (VC @ Cc + 3.0 * (VF @ Fm) + 3.0 * (VE @ Em) + Id) / 8.0
    bf = np.flatnonzero(bface)
    VFb = _avg(faces[bf].ravel(), np.repeat(bf, 4), V, F)
    be = np.flatnonzero(bedge)
    VEb = _avg(edges[be].ravel(), np.repeat(be, 2), V, E)
    nb = np.bincount(edges[be].ravel(), minlength=V).astype(np.float64)
    nb_safe = np.where(nb > 0, nb, 1.0)
    boundary_v = sp.diags(1.0 / nb_safe) @ (VFb @ Fm + 2.0 * (VEb @ Em) + sp.diags(nb - 3.0) @ Id)
    cls = features.vertex_class
    rows, cols, vals = [], [], []
    for v, (p, q) in features.curve_neighbors.items():
        rows += [v, v, v]
        cols += [p, v, q]
        vals += [0.125, 0.75, 0.125]
    curve_v = sp.csr_matrix((vals, (rows, cols)), shape=(V, V))
    is_corner = cls == VertexClass.CORNER
    is_curve = cls == VertexClass.CURVE
    w_in = (~bvert & ~is_corner & ~is_curve).astype(float)
    w_bd = (bvert & ~is_corner & ~is_curve).astype(float)
    vert_pt = (sp.diags(w_in) @ interior_v + sp.diags(w_bd) @ boundary_v
               + sp.diags(is_corner.astype(float)) @ Id + curve_v)

    Cmat = sp.vstack([vert_pt, edge_pt, face_pt, Cc]).tocsr()
    Cmat.eliminate_zeros()
    Cmat.sum_duplicates()

    # child connectivity
    glob = np.empty((Cn, 27), dtype=np.int64)
    for p in range(27):
        k, le = LATTICE_KIND[p], LATTICE_ENTITY[p]
        if k == 0:
            glob[:, p] = cells[:, le]
        elif k == 1:
            glob[:, p] = V + edge_inv[:, le]
        elif k == 2:
            glob[:, p] = V + E + face_inv[:, le]
        else:
            glob[:, p] = V + E + F + ar(Cn)
    child_cells = glob[:, CHILD_LATTICE].reshape(-1, 8)
    fine = HexMesh(Cmat @ mesh.vertices, child_cells)

    # features carry over: each sharp edge splits at its edge point
    if len(features.sharp_edges):
        se = features.sharp_edges
        k = V + np.searchsorted(edges[:, 0] * V + edges[:, 1], se[:, 0] * V + se[:, 1])
        fine_sharp = np.concatenate([np.stack([se[:, 0], k], 1), np.stack([k, se[:, 1]], 1)])
    else:
        fine_sharp = np.zeros((0, 2), dtype=np.int64)
    return Subdivision(fine, Cmat, _features(fine, fine_sharp))
