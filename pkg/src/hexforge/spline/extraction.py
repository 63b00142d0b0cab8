"""
Bezier extraction of tricubic blending functions on an unstructured hex mesh.

Every cell carries 64 Bezier points ``Q_e = M_e P``. They are built from
three kinds of source points:

* body points: the point of cell ``e`` nearest its corner ``v`` is the
  trilinear blend of the cell's 8 vertices with per-axis weights 2/3
  (near side) and 1/3 (far side);
* interior face, edge and corner points: the average of the body points
  nearest the same vertex over all cells sharing the face, edge or vertex;
* boundary face, edge and corner points: the same construction applied
  to the boundary quad mesh alone, with bicubic weights 4/9, 2/9, 2/9, 1/9.

Sharp features override boundary points: a pinned corner is interpolated,
a point on a sharp edge is ``(2 v + w) / 3`` and a corner point on a sharp
curve follows the cubic B-spline curve rule ``(a + 4 v + b) / 6``.

All source rows are convex combinations of mesh vertices, so every row of
``M_e`` is non-negative and sums to one.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property

import numpy as np
import scipy.sparse as sp

from ..errors import MissingNeighbor
from ..mesh import HEX_CORNER_IJK, HEX_EDGES, HEX_FACES, HexMesh, boundary_surface
from ..quality import FeatureSet, VertexClass, no_features
from .bernstein import bernstein3, bernstein3_grad

# ---------------------------------------------------------------------------
# static per-cell tables over the 64 Bezier points


def _bezier_tables():
    kind = np.zeros(64, dtype=np.int64)      # 0 corner, 1 edge, 2 face, 3 body
    near = np.zeros(64, dtype=np.int64)      # nearest local corner
    entity = np.full(64, -1, dtype=np.int64)  # local face / edge index
    for r in range(64):
        ijk = np.array([r % 4, (r // 4) % 4, r // 16])
        inner = (ijk == 1) | (ijk == 2)
        kind[r] = int(inner.sum())
        corner = (ijk >= 2).astype(int)
        near[r] = int(np.flatnonzero((HEX_CORNER_IJK == corner).all(axis=1))[0])
        fixed = np.flatnonzero(~inner)
        if kind[r] == 2:
            a = fixed[0]
            entity[r] = next(f for f, face in enumerate(HEX_FACES)
                             if np.all(HEX_CORNER_IJK[face, a] == corner[a]))
        elif kind[r] == 1:
            entity[r] = next(e for e, (p, q) in enumerate(HEX_EDGES)
                             if all(HEX_CORNER_IJK[p, a] == corner[a] and HEX_CORNER_IJK[q, a] == corner[a]
                                    for a in fixed))
    return kind, near, entity


KIND, NEAR, ENTITY = _bezier_tables()
BODY_WEIGHTS = np.prod(
    np.where(HEX_CORNER_IJK[:, None, :] == HEX_CORNER_IJK[None, :, :], 2.0 / 3.0, 1.0 / 3.0), axis=2
)  # (8 near corners, 8 vertices)
QUAD_WEIGHTS = np.array([4.0, 2.0, 1.0, 2.0]) / 9.0  # self, next, opposite, previous


def _keyed_average(keys: np.ndarray, rows: np.ndarray, n_cols: int):
    """Sparse operator averaging ``rows`` within equal ``keys``.

    Returns ``(unique keys, (n_unique, n_cols) csr)``.
    """
    uniq, inv = np.unique(keys, return_inverse=True)
    counts = np.bincount(inv, minlength=len(uniq)).astype(np.float64)
    A = sp.csr_matrix((1.0 / counts[inv], (inv, rows)), shape=(len(uniq), n_cols))
    return uniq, A


def _lookup(uniq: np.ndarray, keys: np.ndarray) -> np.ndarray:
    idx = np.searchsorted(uniq, keys)
    if np.any(idx >= len(uniq)) or np.any(uniq[np.minimum(idx, len(uniq) - 1)] != keys):
        raise KeyError("missing extraction source")
    return idx


@dataclass(eq=False)
class BezierElement:
    cell: int
    indices: np.ndarray     # global vertex ids of the local control net
    matrix: np.ndarray      # (64, len(indices))

    def bezier_points(self, P: np.ndarray) -> np.ndarray:
        return self.matrix @ P[self.indices]

    def basis(self, uvw) -> np.ndarray:
        """Blending function values ``M^T b`` at one or more parameter points."""
        return bernstein3(uvw) @ self.matrix


class Extraction:
    """Extraction operators for every cell of a hex mesh."""

    def __init__(self, mesh: HexMesh, features: FeatureSet | None = None):
        self.mesh = mesh
        self.features = features if features is not None else no_features(mesh)
        self._build()

    def _build(self):
        mesh, feat = self.mesh, self.features
        C, V = mesh.n_cells, mesh.n_vertices
        cells = mesh.cells
        faces, face_inv, face_counts = mesh.face_table
        edges, edge_inv, _ = mesh.edge_table
        bedge = mesh.boundary_edge_mask
        bvert = mesh.boundary_vertex_mask
        surf = boundary_surface(mesh)
        blocks, offsets = [], [0]

        def push(M):
            blocks.append(sp.csr_matrix(M))
            offsets.append(offsets[-1] + M.shape[0])
            return offsets[-2]

        # body points: row 8 e + m
        r = np.repeat(np.arange(8 * C), 8)
        c = np.repeat(cells, 8, axis=0).ravel()
        w = np.tile(BODY_WEIGHTS.ravel(), C)
        Bd = sp.csr_matrix((w, (r, c)), shape=(8 * C, V))
        o_body = push(Bd)
        body_row = np.arange(8 * C).reshape(C, 8)
        vid = cells  # (C, 8)

        # interior face points keyed by (face, vertex)
        fe, fl = np.meshgrid(np.arange(C), np.arange(6), indexing="ij")
        fe, fl = np.repeat(fe.ravel(), 4), np.repeat(fl.ravel(), 4)
        fm = HEX_FACES[fl % 6, np.tile(np.arange(4), 6 * C)]
        fkey = face_inv[fe, fl].astype(np.int64) * V + vid[fe, fm]
        f_uniq, Af = _keyed_average(fkey, body_row[fe, fm], 8 * C)
        o_face = push(Af @ Bd)

        # interior edge points keyed by (edge, vertex)
        ee, el = np.meshgrid(np.arange(C), np.arange(12), indexing="ij")
        ee, el = np.repeat(ee.ravel(), 2), np.repeat(el.ravel(), 2)
        em = HEX_EDGES[el, np.tile(np.arange(2), 12 * C)]
        ekey = edge_inv[ee, el].astype(np.int64) * V + vid[ee, em]
        e_uniq, Ae = _keyed_average(ekey, body_row[ee, em], 8 * C)
        o_edge = push(Ae @ Bd)

        # interior corner points keyed by vertex
        v_uniq, Av = _keyed_average(vid.ravel().astype(np.int64), body_row.ravel(), 8 * C)
        o_vert = push(Av @ Bd)

        # boundary quad face points: row 4 q + k near quad corner k
        Q = surf.n_quads
        quads = surf.quads
        if Q:
            qr = np.repeat(np.arange(4 * Q), 4)
            qc = quads[:, (np.arange(4)[:, None] + np.arange(4)[None, :]) % 4]  # [q, k, j] = quads[q, k + j]
            Fq = sp.csr_matrix((np.tile(QUAD_WEIGHTS, 4 * Q), (qr, qc.ravel())), shape=(4 * Q, V))
        else:
            Fq = sp.csr_matrix((0, V))
        o_quad = push(Fq)
        quad_of = {(int(cc), int(ff)): q for q, (cc, ff) in enumerate(zip(surf.cells, surf.local_faces))}

        # boundary edge / corner points: averages of quad face points
        if Q:
            # map quad sides to global edge ids
            side_a = quads
            side_b = np.roll(quads, -1, axis=1)
            gid = np.searchsorted(edges[:, 0] * V + edges[:, 1],
                                  np.minimum(side_a, side_b) * V + np.maximum(side_a, side_b))
            qq = np.repeat(np.arange(Q), 4)
            keys_a = gid.ravel() * V + side_a.ravel()
            keys_b = gid.ravel() * V + side_b.ravel()
            rows_a = 4 * qq + np.tile(np.arange(4), Q)
            rows_b = 4 * qq + (np.tile(np.arange(4), Q) + 1) % 4
            be_uniq, Abe = _keyed_average(np.concatenate([keys_a, keys_b]), np.concatenate([rows_a, rows_b]), 4 * Q)
            bv_uniq, Abv = _keyed_average(quads.ravel().astype(np.int64), np.arange(4 * Q), 4 * Q)
            o_bedge = push(Abe @ Fq)
            o_bvert = push(Abv @ Fq)
        else:
            be_uniq = bv_uniq = np.zeros(0, dtype=np.int64)
            o_bedge = push(sp.csr_matrix((0, V)))
            o_bvert = push(sp.csr_matrix((0, V)))

        # sharp feature rows
        rows, cols, vals = [], [], []
        sharp_keys = []
        nrow = 0
        for a, b in feat.sharp_edges:
            for v, other in ((int(a), int(b)), (int(b), int(a))):
                sharp_keys.append(v * V + other)
                rows += [nrow, nrow]
                cols += [v, other]
                vals += [2.0 / 3.0, 1.0 / 3.0]
                nrow += 1
        sharp_keys = np.array(sharp_keys, dtype=np.int64)
        order = np.argsort(sharp_keys)
        remap = np.empty(len(order), dtype=np.int64)
        remap[order] = np.arange(len(order))
        rows = [remap[r] for r in rows]
        sharp_keys = sharp_keys[order]
        pinned = {}
        for v in np.flatnonzero(feat.vertex_class == VertexClass.CORNER):
            pinned[int(v)] = nrow
            rows.append(nrow), cols.append(int(v)), vals.append(1.0)
            nrow += 1
        curve = {}
        for v, (a, b) in sorted(feat.curve_neighbors.items()):
            curve[int(v)] = nrow
            rows += [nrow] * 3
            cols += [int(a), int(v), int(b)]
            vals += [1.0 / 6.0, 4.0 / 6.0, 1.0 / 6.0]
            nrow += 1
        H = sp.csr_matrix((vals, (rows, cols)), shape=(nrow, V))
        o_sharp = push(H)

        S = sp.vstack(blocks).tocsr()
        S.sum_duplicates()

        # row of S for every (cell, Bezier point)
        R = np.empty((C, 64), dtype=np.int64)
        ar = np.arange(C)
        cls = feat.vertex_class
        for p in range(64):
            m = NEAR[p]
            v = cells[:, m]
            if KIND[p] == 3:
                R[:, p] = o_body + body_row[:, m]
            elif KIND[p] == 2:
                lf = ENTITY[p]
                F = face_inv[:, lf]
                inner = face_counts[F] == 2
                out = np.empty(C, dtype=np.int64)
                out[inner] = o_face + _lookup(f_uniq, F[inner].astype(np.int64) * V + v[inner])
                for e in np.flatnonzero(~inner):
                    q = quad_of[(int(e), int(lf))]
                    k = int(np.flatnonzero(quads[q] == v[e])[0])
                    out[e] = o_quad + 4 * q + k
                R[:, p] = out
            elif KIND[p] == 1:
                le = ENTITY[p]
                E = edge_inv[:, le]
                a, b = HEX_EDGES[le]
                w_other = np.where(cells[:, a] == v, cells[:, b], cells[:, a])
                out = np.empty(C, dtype=np.int64)
                skey = v.astype(np.int64) * V + w_other
                is_sharp = np.isin(skey, sharp_keys) if len(sharp_keys) else np.zeros(C, dtype=bool)
                on_b = bedge[E] & ~is_sharp
                inner = ~bedge[E] & ~is_sharp
                if is_sharp.any():
                    out[is_sharp] = o_sharp + np.searchsorted(sharp_keys, skey[is_sharp])
                if on_b.any():
                    out[on_b] = o_bedge + _lookup(be_uniq, E[on_b].astype(np.int64) * V + v[on_b])
                out[inner] = o_edge + _lookup(e_uniq, E[inner].astype(np.int64) * V + v[inner])
                R[:, p] = out
            else:
                out = np.empty(C, dtype=np.int64)
                for e in ar:
                    vv = int(v[e])
                    if cls[vv] == VertexClass.CORNER:
                        out[e] = o_sharp + pinned[vv]
                    elif cls[vv] == VertexClass.CURVE:
                        out[e] = o_sharp + curve[vv]
                    elif bvert[vv]:
                        out[e] = o_bvert + int(np.searchsorted(bv_uniq, vv))
                    else:
                        out[e] = o_vert + int(np.searchsorted(v_uniq, vv))
                R[:, p] = out
        self.S = S
        self.rows = R

    # -----------------------------------------------------------------------

    def element(self, cell: int) -> BezierElement:
        M = self.S[self.rows[cell]]
        cols = np.unique(M.indices)
        return BezierElement(int(cell), cols, M[:, cols].toarray())

    def stacked(self, cells=None) -> sp.csr_matrix:
        """``(64 * len(cells), V)`` extraction rows of the given cells."""
        cells = np.arange(self.mesh.n_cells) if cells is None else np.asarray(cells)
        return self.S[self.rows[cells].ravel()]

    @cached_property
    def support_pattern(self) -> sp.csr_matrix:
        """``(C, V)`` boolean pattern: vertex function is non-zero on cell."""
        C = self.mesh.n_cells
        rows = self.stacked()
        G = sp.csr_matrix((np.ones(64 * C), (np.repeat(np.arange(C), 64), np.arange(64 * C))), shape=(C, 64 * C))
        pat = G @ (rows != 0).astype(np.float64)
        pat.data[:] = 1.0
        return pat.tocsr()

    def bezier_points(self, cell: int, P: np.ndarray | None = None) -> np.ndarray:
        P = self.mesh.vertices if P is None else P
        return self.S[self.rows[cell]] @ P

    def evaluate(self, cell: int, uvw, P: np.ndarray | None = None) -> np.ndarray:
        return bernstein3(uvw) @ self.bezier_points(cell, P)

    def jacobian(self, cell: int, uvw, P: np.ndarray | None = None) -> np.ndarray:
        """``(m, 3, 3)`` parametric Jacobian: ``J[i, a] = d x_i / d u_a``."""
        Q = self.bezier_points(cell, P)
        g = bernstein3_grad(uvw)
        return np.einsum("mra,ri->mia", g, Q)


def interior_extraction(mesh: HexMesh, cell: int, extraction: Extraction | None = None) -> BezierElement:
    """Extraction of a cell that does not touch the boundary."""
    if mesh.boundary_vertex_mask[mesh.cells[cell]].any():
        raise MissingNeighbor(f"cell {cell} touches the boundary; its one-ring is incomplete")
    return (extraction or Extraction(mesh)).element(cell)


def boundary_extraction(mesh: HexMesh, cell: int, features: FeatureSet | None = None) -> BezierElement:
    return Extraction(mesh, features).element(cell)
