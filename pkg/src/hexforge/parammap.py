"""
Harmonic patch parameterization and lattice sampling of polycube cells.

Each surface patch is mapped to the unit square with a cotangent-weight
Laplace solve, the four patch sides pinned to the square edges by chord
length. Each polycube cell is then sampled on a ``(2^s + 1)^3`` lattice:

* corners come from the structure,
* edges on the surface are read back through the inverse map of one owning
  patch, interior edges are straight,
* boundary faces are inverse mapped, interior faces are Coons patches of
  their four edge curves,
* the cell interior is the transfinite (Coons volume) blend of its faces.

Every corner, edge and face is sampled once and shared by all cells that
use it, so the assembled hex mesh is conforming by construction.
"""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp
from scipy.sparse.linalg import spsolve

from .errors import FlippedTriangles, LocationFailure, SolveFailure, ValidationError
from .mesh import HEX_CORNER_IJK, HEX_FACES, HexMesh, TriMesh
from .polycube import PolycubeStructure, face_key
from .segmentation import patch_boundary_loops

COT_CLAMP = 1e-10
BARY_TOL = 1e-12
SQUARE = np.array([[0.0, 0.0], [1.0, 0.0], [1.0, 1.0], [0.0, 1.0]])


@dataclass
class PatchParam:
    patch: int
    vertex_ids: np.ndarray       # global vertex index of each local vertex
    xyz: np.ndarray              # (n, 3)
    uv: np.ndarray               # (n, 2)
    triangles: np.ndarray        # (t, 3) local indices
    corners: tuple               # 4 global corner ids mapped to SQUARE in order
    weights: str = "cotangent"
    orientation: int = 1         # sign of parametric triangle areas
    _locator: "_BucketGrid | None" = None

    def corner_uv(self, corner_id: int) -> np.ndarray:
        return SQUARE[list(self.corners).index(int(corner_id))]

    def flipped(self) -> int:
        """Count of inverted parametric triangles.

        Triangles with all three vertices on one square side have zero area;
        they are degenerate, not inverted, and are not counted.
        """
        a = self.orientation * _uv_areas(self.uv, self.triangles)
        return int(np.sum(a < -1e-14))


def _uv_areas(uv, tris):
    a, b, c = uv[tris[:, 0]], uv[tris[:, 1]], uv[tris[:, 2]]
    return 0.5 * ((b[:, 0] - a[:, 0]) * (c[:, 1] - a[:, 1]) - (b[:, 1] - a[:, 1]) * (c[:, 0] - a[:, 0]))


def cotangent_weights(xyz: np.ndarray, tris: np.ndarray, clamp: float = COT_CLAMP) -> sp.csr_matrix:
    """Symmetric edge weights ``(cot alpha + cot beta) / 2``, clamped below."""
    n = len(xyz)
    rows, cols, vals = [], [], []
    for k in range(3):
        i, j, o = tris[:, (k + 1) % 3], tris[:, (k + 2) % 3], tris[:, k]
        u = xyz[i] - xyz[o]
        v = xyz[j] - xyz[o]
        cot = np.einsum("ij,ij->i", u, v) / np.linalg.norm(np.cross(u, v), axis=1)
        rows += [i, j]
        cols += [j, i]
        vals += [0.5 * cot, 0.5 * cot]
    W = sp.coo_matrix((np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))), shape=(n, n)).tocsr()
    W.sum_duplicates()
    W.data = np.maximum(W.data, clamp)
    return W


def uniform_weights(tris: np.ndarray, n: int) -> sp.csr_matrix:
    rows = np.concatenate([tris[:, k] for k in range(3)] + [tris[:, (k + 1) % 3] for k in range(3)])
    cols = np.concatenate([tris[:, (k + 1) % 3] for k in range(3)] + [tris[:, k] for k in range(3)])
    W = sp.coo_matrix((np.ones(len(rows)), (rows, cols)), shape=(n, n)).tocsr()
    W.data[:] = 1.0
    return W


def _solve_dirichlet(W: sp.csr_matrix, fixed: np.ndarray, values: np.ndarray) -> np.ndarray:
    n = W.shape[0]
    L = sp.diags(np.asarray(W.sum(axis=1)).ravel()) - W
    free = np.setdiff1d(np.arange(n), fixed)
    out = np.zeros((n, values.shape[1]))
    out[fixed] = values
    if len(free):
        A = L[free][:, free].tocsc()
        rhs = -(L[free][:, fixed] @ values)
        with np.errstate(all="ignore"):
            sol = spsolve(A, rhs)
        sol = np.asarray(sol).reshape(len(free), -1)
        if not np.all(np.isfinite(sol)):
            raise SolveFailure("singular Laplace system")
        out[free] = sol
    return out


def _chord_params(xyz: np.ndarray, chain: list[int]) -> np.ndarray:
    p = xyz[chain]
    seg = np.linalg.norm(np.diff(p, axis=0), axis=1)
    t = np.concatenate([[0.0], np.cumsum(seg)])
    t /= t[-1]
    t[-1] = 1.0
    return t


def harmonic_parameterize(mesh: TriMesh, labels, patch: int, corners) -> PatchParam:
    """Map one disk-like patch onto the unit square.

    Parameters
    ----------
    mesh : TriMesh
    labels : array of per-triangle patch labels
    patch : int
        Label of the patch to map.
    corners : sequence of 4 vertex ids
        Sent to (0,0), (1,0), (1,1), (0,1) in this order. They must appear
        in this cyclic order (either direction) along the patch boundary.

    Raises
    ------
    FlippedTriangles
        If inverted triangles remain after the uniform-weight retry.
    """
    labels = np.asarray(labels)
    tris_g = mesh.triangles[labels == patch]
    if not len(tris_g):
        raise ValidationError(f"patch {patch} has no triangles")
    vids, local = np.unique(tris_g, return_inverse=True)
    tris = local.reshape(-1, 3)
    xyz = mesh.vertices[vids]
    loops = patch_boundary_loops(mesh, labels, patch)
    if len(loops) != 1:
        raise ValidationError(f"patch {patch} is not a disk ({len(loops)} boundary loops)")
    loop = loops[0]
    corners = [int(c) for c in corners]
    try:
        pos = [loop.index(c) for c in corners]
    except ValueError:
        raise ValidationError(f"patch {patch}: corner not on the boundary loop") from None
    n = len(loop)
    steps = [(pos[(k + 1) % 4] - pos[k]) % n for k in range(4)]
    if sum(steps) == n:
        direction = 1
    else:
        steps = [(pos[k] - pos[(k + 1) % 4]) % n for k in range(4)]
        if sum(steps) != n:
            raise ValidationError(f"patch {patch}: corners are not in boundary order")
        direction = -1
    to_local = {int(v): i for i, v in enumerate(vids)}
    fixed, values = [], []
    for k in range(4):
        chain = [loop[(pos[k] + direction * s) % n] for s in range(steps[k] + 1)]
        t = _chord_params(mesh.vertices, chain)
        a, b = SQUARE[k], SQUARE[(k + 1) % 4]
        for v, tt in zip(chain[:-1], t[:-1]):
            fixed.append(to_local[v])
            values.append(a + tt * (b - a))
    fixed = np.array(fixed)
    values = np.array(values)
    # square edges are axis aligned: snap the constant coordinate exactly
    values = np.where(np.isclose(values, 0.0, atol=1e-15), 0.0, values)
    values = np.where(np.isclose(values, 1.0, rtol=0, atol=1e-15), 1.0, values)

    param = PatchParam(int(patch), vids, xyz, None, tris, tuple(corners), orientation=direction)
    param.uv = _solve_dirichlet(cotangent_weights(xyz, tris), fixed, values)
    if param.flipped():
        param.uv = _solve_dirichlet(uniform_weights(tris, len(xyz)), fixed, values)
        param.weights = "uniform"
        bad = param.flipped()
        if bad:
            raise FlippedTriangles(patch, bad)
    return param


class _BucketGrid:
    """Uniform bucket grid over [0,1]^2 for point location in a triangulation."""

    def __init__(self, uv: np.ndarray, tris: np.ndarray):
        self.uv, self.tris = uv, tris
        self.n = max(1, int(np.sqrt(len(tris))))
        p = uv[tris]
        lo = np.clip(np.floor((p.min(axis=1) - 1e-9) * self.n).astype(int), 0, self.n - 1)
        hi = np.clip(np.floor((p.max(axis=1) + 1e-9) * self.n).astype(int), 0, self.n - 1)
        self.buckets: dict[tuple[int, int], list[int]] = {}
        for t in range(len(tris)):
            for i in range(lo[t, 0], hi[t, 0] + 1):
                for j in range(lo[t, 1], hi[t, 1] + 1):
                    self.buckets.setdefault((i, j), []).append(t)

    def locate(self, q: np.ndarray):
        i, j = (min(self.n - 1, max(0, int(np.floor(c * self.n)))) for c in q)
        cand = np.array(self.buckets.get((i, j), []), dtype=np.int64)
        if not len(cand):
            return None
        a, b, c = (self.uv[self.tris[cand, k]] for k in range(3))
        det = (b[:, 0] - a[:, 0]) * (c[:, 1] - a[:, 1]) - (b[:, 1] - a[:, 1]) * (c[:, 0] - a[:, 0])
        with np.errstate(divide="ignore", invalid="ignore"):
            # zero-area triangles give NaN and drop out of the test below
            l1, l2 = self._bary(q, a, b, c, det)
        l0 = 1.0 - l1 - l2
        ok = (l0 >= -BARY_TOL) & (l1 >= -BARY_TOL) & (l2 >= -BARY_TOL)
        if not ok.any():
            return None
        k = int(np.flatnonzero(ok)[0])  # candidates ascend, so this is the lowest triangle
        return int(cand[k]), np.array([l0[k], l1[k], l2[k]])

    @staticmethod
    def _bary(q, a, b, c, det):
        l1 = ((q[0] - a[:, 0]) * (c[:, 1] - a[:, 1]) - (q[1] - a[:, 1]) * (c[:, 0] - a[:, 0])) / det
        l2 = ((b[:, 0] - a[:, 0]) * (q[1] - a[:, 1]) - (b[:, 1] - a[:, 1]) * (q[0] - a[:, 0])) / det
        return l1, l2


def inverse_map(param: PatchParam, uv) -> np.ndarray:
    """Physical point(s) for parameter(s) ``uv`` by barycentric interpolation.

    Accepts one ``(2,)`` point or an ``(m, 2)`` array.
    """
    if param._locator is None:
        param._locator = _BucketGrid(param.uv, param.triangles)
    q = np.asarray(uv, dtype=np.float64)
    single = q.ndim == 1
    q = q.reshape(-1, 2)
    out = np.empty((len(q), 3))
    for i, point in enumerate(q):
        hit = param._locator.locate(point)
        if hit is None:
            raise LocationFailure(f"patch {param.patch}: parameter {tuple(point)} is outside the map")
        t, bary = hit
        tri = param.triangles[t]
        # exact reproduction at parametric vertices
        hot = np.flatnonzero(bary == 1.0)
        out[i] = param.xyz[tri[hot[0]]] if len(hot) else bary @ param.xyz[tri]
    return out[0] if single else out


def sample_boundary_face(param: PatchParam, level: int) -> np.ndarray:
    """``(n+1, n+1, 3)`` grid of ``f^-1(i/n, j/n)`` with ``n = 2^level``."""
    n = 2 ** level
    t = np.arange(n + 1) / n
    U, V = np.meshgrid(t, t, indexing="ij")
    pts = inverse_map(param, np.column_stack([U.ravel(), V.ravel()]))
    return pts.reshape(n + 1, n + 1, 3)


def coons_patch(b0, b1, c0, c1) -> np.ndarray:
    """Bilinear Coons patch from four boundary curves.

    ``b0[s]`` / ``b1[s]`` run along t = 0 / t = 1, ``c0[t]`` / ``c1[t]`` along
    s = 0 / s = 1; corners must agree. Returns ``(n+1, n+1, 3)`` indexed [s, t].
    """
    n = len(b0) - 1
    s = (np.arange(n + 1) / n)[:, None, None]
    t = (np.arange(n + 1) / n)[None, :, None]
    ruled_s = (1 - s) * c0[None, :, :] + s * c1[None, :, :]
    ruled_t = (1 - t) * b0[:, None, :] + t * b1[:, None, :]
    bil = ((1 - s) * (1 - t) * b0[0] + s * (1 - t) * b0[-1] + (1 - s) * t * b1[0] + s * t * b1[-1])
    grid = ruled_s + ruled_t - bil
    grid[:, 0], grid[:, -1], grid[0, :], grid[-1, :] = b0, b1, c0, c1
    return grid


def interior_face_grid(edge_curves) -> np.ndarray:
    """Coons grid for an interior face from its curves ``(b0, b1, c0, c1)``."""
    return coons_patch(*edge_curves)


def cell_volume_grid(lattice: np.ndarray) -> np.ndarray:
    """Fill the interior of an ``(n+1)^3`` lattice whose six faces are set.

    Transfinite interpolation: face blends minus edge blends plus the
    trilinear corner term. Face layers are returned unchanged.
    """
    L = np.array(lattice, dtype=np.float64, copy=True)
    n = L.shape[0] - 1
    if n < 2:
        return L
    r = np.arange(n + 1) / n
    u = r[:, None, None, None]
    v = r[None, :, None, None]
    w = r[None, None, :, None]
    Pu = (1 - u) * L[0][None] + u * L[n][None]
    Pv = (1 - v) * L[:, 0][:, None] + v * L[:, n][:, None]
    Pw = (1 - w) * L[:, :, 0][:, :, None] + w * L[:, :, n][:, :, None]
    Puv = ((1 - u) * (1 - v) * L[0, 0][None, None] + u * (1 - v) * L[n, 0][None, None]
           + (1 - u) * v * L[0, n][None, None] + u * v * L[n, n][None, None])
    Pvw = ((1 - v) * (1 - w) * L[:, 0, 0][:, None, None] + v * (1 - w) * L[:, n, 0][:, None, None]
           + (1 - v) * w * L[:, 0, n][:, None, None] + v * w * L[:, n, n][:, None, None])
    Puw = ((1 - u) * (1 - w) * L[0, :, 0][None, :, None] + u * (1 - w) * L[n, :, 0][None, :, None]
           + (1 - u) * w * L[0, :, n][None, :, None] + u * w * L[n, :, n][None, :, None])
    Puvw = sum(
        ((u if a else 1 - u) * (v if b else 1 - v) * (w if c else 1 - w)) * L[a * n, b * n, c * n]
        for a in (0, 1) for b in (0, 1) for c in (0, 1)
    )
    full = Pu + Pv + Pw - Puv - Pvw - Puw + Puvw
    L[1:n, 1:n, 1:n] = full[1:n, 1:n, 1:n]
    return L


# ---------------------------------------------------------------------------
# assembly

@dataclass
class _Entities:
    corners: dict          # id -> xyz
    edges: dict            # (a, b), a < b -> (n+1, 3) samples from a to b
    faces: dict            # face key -> (n+1, n+1, 3), [s, t] from key[0] along key[1] / key[3]


def _edge_curve(edges, a, b):
    if a < b:
        return edges[(a, b)]
    return edges[(b, a)][::-1]


def _local_corner(cell, corner_id):
    return HEX_CORNER_IJK[list(int(c) for c in cell).index(int(corner_id))]


def _sample_entities(structure: PolycubeStructure, params: dict, level: int) -> _Entities:
    n = 2 ** level
    t = np.arange(n + 1) / n
    corners = {int(c): structure.corner_xyz[i] for i, c in enumerate(structure.corner_ids)}

    # boundary face grids, then edges owned by the lowest patch that has them
    face_grids = {}
    edge_owner = {}
    for q, lab in sorted(zip(map(tuple, structure.quads), structure.quad_patches), key=lambda x: x[1]):
        param = params[int(lab)]
        key = face_key(q)
        c0, c1, c3 = key[0], key[1], key[3]
        U0, U1, U3 = param.corner_uv(c0), param.corner_uv(c1), param.corner_uv(c3)
        S, T = np.meshgrid(t, t, indexing="ij")
        uv = U0 + S[..., None] * (U1 - U0) + T[..., None] * (U3 - U0)
        grid = inverse_map(param, uv.reshape(-1, 2)).reshape(n + 1, n + 1, 3)
        face_grids[key] = grid
        for k in range(4):
            a, b = int(q[k]), int(q[(k + 1) % 4])
            edge_owner.setdefault((min(a, b), max(a, b)), (param, key))

    edges = {}
    for (a, b), (param, _) in sorted(edge_owner.items()):
        Ua, Ub = param.corner_uv(a), param.corner_uv(b)
        curve = inverse_map(param, Ua + t[:, None] * (Ub - Ua))
        curve[0], curve[-1] = corners[a], corners[b]
        edges[(a, b)] = curve
    for cell in structure.cells:
        for a, b in ((cell[i], cell[j]) for i, j in
                     ((0, 1), (1, 2), (3, 2), (0, 3), (4, 5), (5, 6), (7, 6), (4, 7), (0, 4), (1, 5), (2, 6), (3, 7))):
            key = (int(min(a, b)), int(max(a, b)))
            if key not in edges:
                pa, pb = corners[key[0]], corners[key[1]]
                curve = pa + t[:, None] * (pb - pa)
                curve[0], curve[-1] = pa, pb
                edges[key] = curve

    # face grids take their border rows from the shared edge samples
    for key, grid in face_grids.items():
        c0, c1, c2, c3 = key
        grid[:, 0] = _edge_curve(edges, c0, c1)
        grid[:, n] = _edge_curve(edges, c3, c2)
        grid[0, :] = _edge_curve(edges, c0, c3)
        grid[n, :] = _edge_curve(edges, c1, c2)
    for cell in structure.cells:
        for lf in HEX_FACES:
            key = face_key(cell[lf])
            if key not in face_grids:
                c0, c1, c2, c3 = key
                face_grids[key] = interior_face_grid((
                    _edge_curve(edges, c0, c1), _edge_curve(edges, c3, c2),
                    _edge_curve(edges, c0, c3), _edge_curve(edges, c1, c2),
                ))
    return _Entities(corners, edges, face_grids)


def _cell_lattice(cell, ent: _Entities, n: int, fill=None):
    """Scatter shared entity samples (or ids) into one cell's lattice."""
    shape = (n + 1, n + 1, n + 1)
    L = np.zeros(shape + (3,)) if fill is None else np.full(shape, -1, dtype=np.int64)
    src = ent if fill is None else fill
    r = np.arange(n + 1)
    for k, c in enumerate(cell):
        i, j, l = HEX_CORNER_IJK[k] * n
        L[i, j, l] = src.corners[int(c)]
    for lf in HEX_FACES:
        key = face_key(cell[lf])
        o, d1, d3 = (_local_corner(cell, key[m]) for m in (0, 1, 3))
        S, T = np.meshgrid(r, r, indexing="ij")
        ijk = n * o + S[..., None] * (d1 - o) + T[..., None] * (d3 - o)
        L[ijk[..., 0], ijk[..., 1], ijk[..., 2]] = src.faces[key]
    return L


def assemble_hex_mesh(structure: PolycubeStructure, ent: _Entities, level: int) -> HexMesh:
    """Glue cell lattices into one hex mesh with shared entities numbered once.

    Numbering: corners (ascending id), then edge interiors, face interiors and
    cell interiors, each in sorted key order.
    """
    n = 2 ** level
    used_corners = sorted({int(c) for c in structure.cells.ravel()})
    used_edges = sorted({(int(min(a, b)), int(max(a, b))) for cell in structure.cells
                         for a, b in ((cell[i], cell[j]) for i, j in
                                      ((0, 1), (1, 2), (3, 2), (0, 3), (4, 5), (5, 6), (7, 6), (4, 7),
                                       (0, 4), (1, 5), (2, 6), (3, 7)))})
    used_faces = sorted({face_key(cell[lf]) for cell in structure.cells for lf in HEX_FACES})

    points = [ent.corners[c] for c in used_corners]
    ids = _Entities({c: i for i, c in enumerate(used_corners)}, {}, {})
    nxt = len(points)
    for key in used_edges:
        curve = ent.edges[key]
        idx = np.empty(n + 1, dtype=np.int64)
        idx[0], idx[n] = ids.corners[key[0]], ids.corners[key[1]]
        idx[1:n] = np.arange(nxt, nxt + n - 1)
        nxt += n - 1
        points.extend(curve[1:n])
        ids.edges[key] = idx
    for key in used_faces:
        grid = ent.faces[key]
        idx = np.empty((n + 1, n + 1), dtype=np.int64)
        c0, c1, c2, c3 = key
        idx[:, 0] = _edge_curve(ids.edges, c0, c1)
        idx[:, n] = _edge_curve(ids.edges, c3, c2)
        idx[0, :] = _edge_curve(ids.edges, c0, c3)
        idx[n, :] = _edge_curve(ids.edges, c1, c2)
        m = (n - 1) ** 2
        idx[1:n, 1:n] = np.arange(nxt, nxt + m).reshape(n - 1, n - 1)
        nxt += m
        points.extend(grid[1:n, 1:n].reshape(-1, 3))
        ids.faces[key] = idx

    cells_out = []
    for cell in structure.cells:
        lattice = cell_volume_grid(_cell_lattice(cell, ent, n))
        index = _cell_lattice(cell, None, n, fill=ids)
        m = (n - 1) ** 3
        # interior points in (i, j, k) order with i fastest
        interior = lattice[1:n, 1:n, 1:n].transpose(2, 1, 0, 3).reshape(-1, 3)
        index[1:n, 1:n, 1:n] = np.arange(nxt, nxt + m).reshape(n - 1, n - 1, n - 1).transpose(2, 1, 0)
        nxt += m
        points.extend(interior)
        kk, jj, ii = np.meshgrid(np.arange(n), np.arange(n), np.arange(n), indexing="ij")
        ii, jj, kk = ii.ravel(), jj.ravel(), kk.ravel()
        cells_out.append(np.column_stack([index[ii + a, jj + b, kk + c] for a, b, c in HEX_CORNER_IJK]))
    verts = np.array(points, dtype=np.float64).reshape(-1, 3)
    cells = np.concatenate(cells_out) if cells_out else np.zeros((0, 8), dtype=np.int64)
    return HexMesh(verts, cells)


def parameterize_patches(mesh: TriMesh, labels, structure: PolycubeStructure, threads: int = 1) -> dict:
    """Harmonic map for every boundary quad's patch, solved in parallel."""
    jobs = [(int(lab), tuple(int(v) for v in q)) for q, lab in zip(structure.quads, structure.quad_patches)]

    def run(job):
        lab, q = job
        return lab, harmonic_parameterize(mesh, labels, lab, q)

    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            results = list(pool.map(run, jobs))
    else:
        results = [run(j) for j in jobs]
    return dict(results)


def map_structure(mesh: TriMesh, labels, structure: PolycubeStructure, level: int, threads: int = 1) -> HexMesh:
    """All-hex mesh of the polycube cells at octree level ``level``."""
    if level < 0:
        raise ValueError("level must be non-negative")
    if not len(structure.cells):
        raise ValidationError("polycube structure has no cells")
    params = parameterize_patches(mesh, labels, structure, threads)
    ent = _sample_entities(structure, params, level)
    return assemble_hex_mesh(structure, ent, level)
