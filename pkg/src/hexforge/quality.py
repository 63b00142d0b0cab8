"""
Hex mesh quality: scaled Jacobian, pillowing, feature-aware smoothing and
worst-element optimization.

Smoothing and optimization only accept a vertex move when the minimum
scaled Jacobian of the cells around that vertex strictly improves, so the
global minimum can never decrease.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field

import numpy as np

from .mesh import HEX_CORNER_FRAMES, HEX_EDGES, HexMesh, boundary_surface, hex_volumes


class VertexClass(enum.IntEnum):
    INTERIOR = 0
    SURFACE = 1
    CURVE = 2      # on a sharp edge, two sharp neighbours
    CORNER = 3     # pinned: one or three-plus sharp edges


# ---------------------------------------------------------------------------
# metrics

def corner_jacobians(vertices: np.ndarray, cells: np.ndarray) -> np.ndarray:
    """(C, 8) normalized corner determinants; -1 where an edge has zero length."""
    p = vertices[np.asarray(cells).reshape(-1, 8)]
    origin = p[:, :, None, :]
    nb = p[:, HEX_CORNER_FRAMES]                  # (C, 8, 3, 3)
    e = nb - origin
    det = np.linalg.det(e)
    lens = np.linalg.norm(e, axis=3).prod(axis=2)
    with np.errstate(divide="ignore", invalid="ignore"):
        sj = det / lens
    sj = np.where(lens > 0, sj, -1.0)
    return np.clip(sj, -1.0, 1.0)


def scaled_jacobian(mesh_or_vertices, cells=None) -> np.ndarray:
    """Per-cell minimum of the eight corner scaled Jacobians."""
    if isinstance(mesh_or_vertices, HexMesh):
        vertices, cells = mesh_or_vertices.vertices, mesh_or_vertices.cells
    else:
        vertices = np.asarray(mesh_or_vertices, dtype=np.float64)
    return corner_jacobians(vertices, cells).min(axis=1)


@dataclass
class QualityReport:
    per_cell: np.ndarray
    histogram: tuple
    minimum: float
    maximum: float
    mean: float
    n_nonpositive: int

    def __str__(self) -> str:
        counts, edges = self.histogram
        lines = [f"cells: {len(self.per_cell)}",
                 f"scaled Jacobian min {self.minimum:.6f} max {self.maximum:.6f} mean {self.mean:.6f}",
                 f"non-positive cells: {self.n_nonpositive}"]
        lines += [f"  [{lo:+.1f}, {hi:+.1f}) {c}" for lo, hi, c in zip(edges[:-1], edges[1:], counts)]
        return "\n".join(lines)


def quality_report(mesh: HexMesh, bins: int = 10) -> QualityReport:
    sj = scaled_jacobian(mesh)
    hist = np.histogram(sj, bins=bins, range=(-1.0, 1.0))
    return QualityReport(sj, hist, float(sj.min()), float(sj.max()), float(sj.mean()), int(np.sum(sj <= 0)))


# ---------------------------------------------------------------------------
# pillowing

def _shortest_incident_edge(mesh: HexMesh) -> np.ndarray:
    edges = mesh.edge_table[0]
    lens = np.linalg.norm(mesh.vertices[edges[:, 0]] - mesh.vertices[edges[:, 1]], axis=1)
    out = np.full(mesh.n_vertices, np.inf)
    np.minimum.at(out, edges[:, 0], lens)
    np.minimum.at(out, edges[:, 1], lens)
    return out


def pillow(mesh: HexMesh, layers: int = 1, fraction: float = 0.3) -> HexMesh:
    """Insert ``layers`` boundary sheets.

    Each boundary vertex gets an inner copy moved inward by ``fraction`` of
    its shortest incident edge; the old cells are re-pointed to the copies
    and every boundary quad gains one cell joining copy and original.
    """
    for _ in range(layers):
        surf = boundary_surface(mesh)
        bverts = surf.vertex_indices
        n = mesh.n_vertices
        new_id = np.full(n, -1, dtype=np.int64)
        new_id[bverts] = n + np.arange(len(bverts))
        inward = np.zeros((n, 3))
        np.add.at(inward, surf.quads.ravel(), -np.repeat(surf.normals, 4, axis=0))
        norm = np.linalg.norm(inward[bverts], axis=1)
        direction = inward[bverts] / np.where(norm > 0, norm, 1.0)[:, None]
        offset = fraction * _shortest_incident_edge(mesh)[bverts]
        inner = mesh.vertices[bverts] + offset[:, None] * direction
        cells = mesh.cells.copy()
        on_b = new_id[cells] >= 0
        cells[on_b] = new_id[cells[on_b]]
        layer = np.column_stack([new_id[surf.quads], surf.quads])
        mesh = HexMesh(np.concatenate([mesh.vertices, inner]), np.concatenate([cells, layer]))
    return mesh


# ---------------------------------------------------------------------------
# sharp features

@dataclass
class FeatureSet:
    sharp_edges: np.ndarray                       # (k, 2) sorted vertex pairs
    vertex_class: np.ndarray                      # VertexClass per vertex
    curve_neighbors: dict = field(default_factory=dict)

    @property
    def sharp_vertices(self) -> np.ndarray:
        return np.unique(self.sharp_edges) if len(self.sharp_edges) else np.zeros(0, dtype=np.int64)

    @property
    def corners(self) -> np.ndarray:
        return np.flatnonzero(self.vertex_class == VertexClass.CORNER)

    def is_sharp_edge(self, a: int, b: int) -> bool:
        return (min(a, b), max(a, b)) in self._edge_set

    @property
    def _edge_set(self):
        return {(int(a), int(b)) for a, b in self.sharp_edges}


def _features(mesh: HexMesh, sharp_edges: np.ndarray) -> FeatureSet:
    sharp_edges = np.unique(np.sort(np.asarray(sharp_edges, dtype=np.int64).reshape(-1, 2), axis=1), axis=0)
    cls = np.where(mesh.boundary_vertex_mask, VertexClass.SURFACE, VertexClass.INTERIOR).astype(np.int8)
    nbrs: dict[int, list[int]] = {}
    for a, b in sharp_edges:
        nbrs.setdefault(int(a), []).append(int(b))
        nbrs.setdefault(int(b), []).append(int(a))
    curve = {}
    for v, nb in nbrs.items():
        if len(nb) == 2:
            cls[v] = VertexClass.CURVE
            curve[v] = tuple(sorted(nb))
        else:
            cls[v] = VertexClass.CORNER
    return FeatureSet(sharp_edges, cls, curve)


def no_features(mesh: HexMesh) -> FeatureSet:
    return _features(mesh, np.zeros((0, 2), dtype=np.int64))


def detect_sharp(mesh: HexMesh, tol: float = 0.8) -> FeatureSet:
    """Boundary edges whose two quad normals have ``dot < tol`` are sharp."""
    surf = boundary_surface(mesh)
    edges, inv = surf.edge_table
    owner = np.repeat(np.arange(surf.n_quads), 4)
    order = np.argsort(inv.ravel(), kind="stable")
    e_sorted, q_sorted = inv.ravel()[order], owner[order]
    counts = np.bincount(e_sorted, minlength=len(edges))
    start = np.concatenate([[0], np.cumsum(counts)[:-1]])
    sharp = []
    normals = surf.normals
    for e in range(len(edges)):
        qs = q_sorted[start[e]:start[e] + counts[e]]
        if len(qs) != 2:
            sharp.append(e)  # non-manifold boundary edge
        elif float(normals[qs[0]] @ normals[qs[1]]) < tol:
            sharp.append(e)
    return _features(mesh, edges[sharp])


def features_from_vertices(mesh: HexMesh, vertices) -> FeatureSet:
    """Manual features: boundary edges whose endpoints are both listed."""
    listed = np.zeros(mesh.n_vertices, dtype=bool)
    listed[np.asarray(vertices, dtype=np.int64)] = True
    edges = boundary_surface(mesh).edges
    keep = listed[edges[:, 0]] & listed[edges[:, 1]]
    return _features(mesh, edges[keep])


# ---------------------------------------------------------------------------
# smoothing and optimization

class _Local:
    """Per-vertex incidence tables used by the relocation loops."""

    def __init__(self, mesh: HexMesh):
        self.mesh = mesh
        owner = np.repeat(np.arange(mesh.n_cells), 8)
        flat = mesh.cells.ravel()
        order = np.argsort(flat, kind="stable")
        counts = np.bincount(flat, minlength=mesh.n_vertices)
        bounds = np.concatenate([[0], np.cumsum(counts)])
        cells_sorted = owner[order]
        self.vertex_cells = [np.unique(cells_sorted[bounds[v]:bounds[v + 1]]) for v in range(mesh.n_vertices)]
        surf = boundary_surface(mesh)
        self.quads = surf.quads
        qowner = np.repeat(np.arange(surf.n_quads), 4)
        qflat = surf.quads.ravel()
        qorder = np.argsort(qflat, kind="stable")
        qcounts = np.bincount(qflat, minlength=mesh.n_vertices)
        qb = np.concatenate([[0], np.cumsum(qcounts)])
        qs = qowner[qorder]
        self.vertex_quads = [qs[qb[v]:qb[v + 1]] for v in range(mesh.n_vertices)]
        e = mesh.cells[:, HEX_EDGES].reshape(-1, 2)
        self.edges = np.unique(np.sort(e, axis=1), axis=0)
        eo = np.concatenate([self.edges[:, 0], self.edges[:, 1]])
        en = np.concatenate([self.edges[:, 1], self.edges[:, 0]])
        o = np.argsort(eo, kind="stable")
        ec = np.bincount(eo, minlength=mesh.n_vertices)
        eb = np.concatenate([[0], np.cumsum(ec)])
        ns = en[o]
        self.vertex_nbrs = [ns[eb[v]:eb[v + 1]] for v in range(mesh.n_vertices)]

    def local_min(self, V: np.ndarray, v: int) -> float:
        cells = self.mesh.cells[self.vertex_cells[v]]
        return float(corner_jacobians(V, cells).min())

    def local_min_at(self, V: np.ndarray, v: int, x: np.ndarray) -> float:
        old = V[v].copy()
        V[v] = x
        val = self.local_min(V, v)
        V[v] = old
        return val

    def shortest_edge(self, V, v) -> float:
        nb = self.vertex_nbrs[v]
        return float(np.linalg.norm(V[nb] - V[v], axis=1).min()) if len(nb) else 0.0

    def surface_normal(self, V, v) -> np.ndarray:
        q = V[self.quads[self.vertex_quads[v]]]
        n = np.cross(q[:, 2] - q[:, 0], q[:, 3] - q[:, 1]).sum(axis=0)
        norm = np.linalg.norm(n)
        return n / norm if norm > 0 else n


def _target(loc: _Local, V, v, cls, features: FeatureSet):
    if cls == VertexClass.CURVE:
        a, b = features.curve_neighbors[v]
        return 0.5 * (V[a] + V[b])
    if cls == VertexClass.SURFACE:
        q = V[loc.quads[loc.vertex_quads[v]]]
        area = 0.5 * np.linalg.norm(np.cross(q[:, 2] - q[:, 0], q[:, 3] - q[:, 1]), axis=1)
        if area.sum() <= 0:
            return None
        return (area[:, None] * q.mean(axis=1)).sum(axis=0) / area.sum()
    cells = loc.mesh.cells[loc.vertex_cells[v]]
    vol = np.abs(hex_volumes(V, cells))
    if vol.sum() <= 0:
        return None
    return (vol[:, None] * V[cells].mean(axis=1)).sum(axis=0) / vol.sum()


def smooth(mesh: HexMesh, features: FeatureSet | None = None, step: float = 0.001, iterations: int = 50) -> HexMesh:
    """Gauss-Seidel relocation toward feature-aware targets.

    Curve vertices move toward the midpoint of their two curve neighbours,
    surface vertices toward the area-weighted centre of their boundary quads
    and interior vertices toward the volume-weighted centre of their cells.
    Pinned corners never move. A move of ``step`` times the distance to the
    target is kept only if the local minimum scaled Jacobian increases.
    """
    if not 0 < step <= 1:
        raise ValueError("step must lie in (0, 1]")
    features = features or no_features(mesh)
    out = mesh.copy()
    V = out.vertices
    loc = _Local(out)
    for _ in range(iterations):
        moved = 0
        for v in range(out.n_vertices):
            cls = features.vertex_class[v]
            if cls == VertexClass.CORNER or not len(loc.vertex_cells[v]):
                continue
            target = _target(loc, V, v, cls, features)
            if target is None:
                continue
            cand = V[v] + step * (target - V[v])
            if np.array_equal(cand, V[v]):
                continue
            if loc.local_min_at(V, v, cand) > loc.local_min(V, v):
                V[v] = cand
                moved += 1
        if not moved:
            break
    return out


def _project(loc, V, v, cls, features, g):
    if cls == VertexClass.CURVE:
        a, b = features.curve_neighbors[v]
        t = V[b] - V[a]
        n = np.linalg.norm(t)
        return (g @ t) * t / n ** 2 if n > 0 else np.zeros(3)
    if cls == VertexClass.SURFACE:
        n = loc.surface_normal(V, v)
        return g - (g @ n) * n
    return g


def optimize(mesh: HexMesh, features: FeatureSet | None = None, step: float = 0.001, iterations: int = 15,
             fd_scale: float = 1e-4) -> HexMesh:
    """Gradient ascent on the local minimum scaled Jacobian.

    Each iteration visits the vertices of inverted cells, then the vertices
    of the worst cell. The gradient is a central finite difference with
    spacing ``fd_scale`` times the shortest incident edge; the move has
    length ``step`` times that edge and is kept only if it improves.
    """
    if not 0 < step <= 1:
        raise ValueError("step must lie in (0, 1]")
    features = features or no_features(mesh)
    out = mesh.copy()
    V = out.vertices
    loc = _Local(out)
    for _ in range(iterations):
        sj = scaled_jacobian(V, out.cells)
        order = list(np.unique(out.cells[sj < 0]))
        worst = out.cells[int(np.argmin(sj))]
        order += [int(v) for v in worst if v not in set(order)]
        moved = 0
        for v in order:
            cls = features.vertex_class[v]
            if cls == VertexClass.CORNER:
                continue
            ell = loc.shortest_edge(V, v)
            if ell <= 0:
                continue
            h = fd_scale * ell
            g = np.zeros(3)
            for k in range(3):
                d = np.zeros(3)
                d[k] = h
                g[k] = (loc.local_min_at(V, v, V[v] + d) - loc.local_min_at(V, v, V[v] - d)) / (2 * h)
            g = _project(loc, V, v, cls, features, g)
            gn = np.linalg.norm(g)
            if gn == 0 or not np.isfinite(gn):
                continue
            cand = V[v] + step * ell * g / gn
            if loc.local_min_at(V, v, cand) > loc.local_min(V, v):
                V[v] = cand
                moved += 1
        if not moved:
            break
    return out
