"""
Normal-space clustering of a closed triangle surface into six axis regions.

Two passes run back to back. The first is a classical centroidal Voronoi
tessellation of the unit normals with generators seeded at the six
principal axes. The second adds a boundary-enhancing neighbourhood term
that pulls each triangle toward the label its edge neighbours prefer,
which removes zig-zag region borders and single-triangle islands.

The module also applies user overrides and checks the labeling against
the three polycube constraints (no opposite-axis adjacency, corners shared
by three or more patches, four-sided patches).
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field, replace

import numpy as np
import scipy.sparse as sp
from scipy.sparse.csgraph import connected_components

from .errors import EmptyRegionWarning, IndexOutOfRange, ValidationError
from .formats import OverrideList
from .mesh import TriMesh
from .report import ValidationReport

AXES = np.array(
    [[1, 0, 0], [-1, 0, 0], [0, 1, 0], [0, -1, 0], [0, 0, 1], [0, 0, -1]], dtype=np.float64
)
AXIS_NAMES = ("+X", "-X", "+Y", "-Y", "+Z", "-Z")


def initial_generators() -> np.ndarray:
    return AXES.copy()


@dataclass
class CvtParams:
    max_iter: int = 100
    tol: float = 1e-6


@dataclass
class HbeParams(CvtParams):
    omega: float = 0.1

    def __post_init__(self):
        if not self.omega >= 0:
            raise ValueError(f"omega must be non-negative, got {self.omega}")


@dataclass
class Segmentation:
    """Per-triangle region ids (0..5) and the generators that produced them."""

    labels: np.ndarray
    generators: np.ndarray
    energy: list[float] = field(default_factory=list)
    iterations: int = 0
    converged: bool = False

    def part_ids(self) -> np.ndarray:
        """Labels shifted to 1-based part ids for keyword output."""
        return self.labels + 1


# ---------------------------------------------------------------------------
# neighbourhoods

def triangle_adjacency(mesh: TriMesh) -> sp.csr_matrix:
    """Symmetric 0/1 matrix of edge-adjacent triangle pairs."""
    _, inv = mesh.edge_table
    flat = inv.ravel()
    owner = np.repeat(np.arange(mesh.n_triangles), 3)
    order = np.argsort(flat, kind="stable")
    e_sorted, t_sorted = flat[order], owner[order]
    same = e_sorted[1:] == e_sorted[:-1]
    a, b = t_sorted[:-1][same], t_sorted[1:][same]
    n = mesh.n_triangles
    adj = sp.coo_matrix((np.ones(len(a)), (a, b)), shape=(n, n))
    adj = (adj + adj.T).tocsr()
    adj.data[:] = 1.0
    return adj


def _neighbour_mean(mesh: TriMesh) -> sp.csr_matrix:
    adj = triangle_adjacency(mesh)
    deg = np.asarray(adj.sum(axis=1)).ravel()
    inv = np.divide(1.0, deg, out=np.zeros_like(deg), where=deg > 0)
    return sp.diags(inv) @ adj


# ---------------------------------------------------------------------------
# CVT iterations

def _classical_distance(normals, generators):
    return ((normals[:, None, :] - generators[None, :, :]) ** 2).sum(axis=2)


def _lloyd(mesh, generators, params, distance_fn, pull_fn):
    areas = mesh.areas
    g = np.array(generators, dtype=np.float64)
    trace: list[float] = []
    labels = None
    converged = False
    it = 0
    for it in range(1, params.max_iter + 1):
        d = distance_fn(g)
        labels = np.argmin(d, axis=1)  # first minimum: lowest generator wins ties
        e = float(np.dot(areas, d[np.arange(len(labels)), labels]))
        if trace:
            prev = trace[-1]
            if abs(prev - e) <= params.tol * max(abs(prev), 1e-300) or e == 0.0:
                trace.append(e)
                converged = True
                break
        trace.append(e)
        if e == 0.0:
            converged = True
            break
        g = _update_generators(labels, pull_fn(), areas, g)
    return labels, g, trace, it, converged


def _update_generators(labels, pull, areas, old):
    g = old.copy()
    sums = np.zeros_like(old)
    np.add.at(sums, labels, areas[:, None] * pull)
    for j in range(len(old)):
        if not np.any(labels == j):
            warnings.warn(f"generator {AXIS_NAMES[j]} has no members; keeping it", EmptyRegionWarning, stacklevel=4)
            continue
        norm = np.linalg.norm(sums[j])
        if norm > 0:
            g[j] = sums[j] / norm
    return g


def classical_cvt(mesh: TriMesh, generators=None, params: CvtParams | None = None) -> Segmentation:
    """Cluster triangle normals around unit generators.

    Parameters
    ----------
    mesh : TriMesh
        Closed surface; triangle normals drive the clustering.
    generators : (6, 3) array, optional
        Initial generators, default the six principal axes.
    params : CvtParams, optional
        Iteration cap and relative energy tolerance.

    Returns
    -------
    Segmentation
        Labels from the final assignment, the generators used for it and the
        per-iteration energy ``sum_i a_i |n_i - g_{L(i)}|^2``.
    """
    params = params or CvtParams()
    normals = mesh.normals
    g0 = initial_generators() if generators is None else np.asarray(generators, dtype=np.float64)
    labels, g, trace, it, conv = _lloyd(
        mesh, g0, params,
        lambda g: _classical_distance(normals, g),
        lambda: normals,
    )
    return Segmentation(labels, g, trace, it, conv)


def hbe_distance(mesh: TriMesh, generators, omega: float, mean_op=None) -> np.ndarray:
    """``|n_i - g_j|^2 + omega * mean_k |n_k - g_j|^2`` over edge neighbours ``k``."""
    mean_op = _neighbour_mean(mesh) if mean_op is None else mean_op
    d = _classical_distance(mesh.normals, generators)
    return d + omega * (mean_op @ d)


def hbe_cvt(mesh: TriMesh, seg: Segmentation, params: HbeParams | None = None) -> Segmentation:
    """Boundary-enhanced pass started from a classical result.

    The generator update maximizes ``g . sum a_i (n_i + omega * nbar_i)``
    over the region, which is the exact minimizer of the enhanced energy
    for unit generators, so the energy trace cannot increase.
    """
    params = params or HbeParams()
    mean_op = _neighbour_mean(mesh)
    normals = mesh.normals
    pull = normals + params.omega * (mean_op @ normals)
    labels, g, trace, it, conv = _lloyd(
        mesh, seg.generators, params,
        lambda g: hbe_distance(mesh, g, params.omega, mean_op),
        lambda: pull,
    )
    return Segmentation(labels, g, trace, it, conv)


def segment(mesh: TriMesh, omega: float = 0.1, max_iter: int = 100, tol: float = 1e-6) -> Segmentation:
    """Classical pass followed by the boundary-enhanced pass."""
    first = classical_cvt(mesh, params=CvtParams(max_iter, tol))
    return hbe_cvt(mesh, first, HbeParams(max_iter, tol, omega))


# ---------------------------------------------------------------------------
# overrides

def apply_overrides(labels, overrides: OverrideList):
    """Relabel exactly the listed triangles; accepts a label array or a Segmentation."""
    if isinstance(labels, Segmentation):
        return replace(labels, labels=apply_overrides(labels.labels, overrides))
    out = np.array(labels, dtype=np.int64, copy=True)
    elems = np.asarray(overrides.elements, dtype=np.int64)
    if len(elems) and (elems.min() < 0 or elems.max() >= len(out)):
        bad = elems[(elems < 0) | (elems >= len(out))][0]
        raise IndexOutOfRange(f"override element {bad} outside 0..{len(out) - 1}")
    out[elems] = overrides.targets
    return out


# ---------------------------------------------------------------------------
# islands and patch boundaries

def islands(mesh: TriMesh, labels) -> list[tuple[int, int, int]]:
    """Connected pieces of each label other than the largest one.

    Returns ``(label, seed triangle, size)`` tuples sorted by seed.
    """
    labels = np.asarray(labels)
    adj = triangle_adjacency(mesh).tocoo()
    keep = labels[adj.row] == labels[adj.col]
    n = mesh.n_triangles
    same = sp.coo_matrix((np.ones(keep.sum()), (adj.row[keep], adj.col[keep])), shape=(n, n))
    n_comp, comp = connected_components(same, directed=False)
    sizes = np.bincount(comp, minlength=n_comp)
    seeds = np.full(n_comp, n)
    np.minimum.at(seeds, comp, np.arange(n))
    comp_label = labels[seeds]
    out = []
    for lab in np.unique(labels):
        cs = np.flatnonzero(comp_label == lab)
        if len(cs) <= 1:
            continue
        # largest keeps the label; ties go to the lowest seed
        main = cs[np.lexsort((seeds[cs], -sizes[cs]))[0]]
        out.extend((int(lab), int(seeds[c]), int(sizes[c])) for c in cs if c != main)
    return sorted(out, key=lambda x: x[1])


def vertex_patch_counts(mesh: TriMesh, labels) -> np.ndarray:
    """Number of distinct labels around each vertex."""
    labels = np.asarray(labels)
    pairs = np.column_stack([mesh.triangles.ravel(), np.repeat(labels, 3)])
    uniq = np.unique(pairs, axis=0)
    return np.bincount(uniq[:, 0], minlength=mesh.n_vertices)


def patch_boundary_loops(mesh: TriMesh, labels, patch) -> list[list[int]]:
    """Closed vertex loops bounding ``patch``, following triangle orientation.

    Each loop starts at its lowest vertex. Loops are sorted by that vertex.
    """
    labels = np.asarray(labels)
    tris = np.flatnonzero(labels == patch)
    _, inv = mesh.edge_table
    owner_count = np.zeros(int(inv.max()) + 1 if inv.size else 0, dtype=np.int64)
    np.add.at(owner_count, inv[tris].ravel(), 1)
    nxt: dict[int, list[int]] = {}
    for t in tris:
        tri = mesh.triangles[t]
        for k in range(3):
            if owner_count[inv[t, k]] == 1:
                nxt.setdefault(int(tri[k]), []).append(int(tri[(k + 1) % 3]))
    for v in nxt:
        nxt[v].sort()
    loops = []
    while nxt:
        start = min(nxt)
        loop = [start]
        cur = start
        while True:
            succ = nxt[cur].pop(0)
            if not nxt[cur]:
                del nxt[cur]
            if succ == start:
                break
            loop.append(succ)
            cur = succ
            if cur not in nxt:
                break  # open chain; only possible on a non-closed mesh
        loops.append(loop)
    return loops


def patch_axes(mesh: TriMesh, labels) -> dict[int, int]:
    """Closest signed axis (0..5) to the area-weighted mean normal of each patch."""
    labels = np.asarray(labels)
    out = {}
    weighted = mesh.normals * mesh.areas[:, None]
    for lab in np.unique(labels):
        m = weighted[labels == lab].sum(axis=0)
        out[int(lab)] = int(np.argmax(AXES @ m))
    return out


def _adjacent_patch_pairs(mesh: TriMesh, labels) -> dict[tuple[int, int], int]:
    """Adjacent label pairs with one shared edge (vertex) as a witness location."""
    adj = sp.triu(triangle_adjacency(mesh)).tocoo()
    la, lb = labels[adj.row], labels[adj.col]
    diff = la != lb
    pairs = {}
    for a, b, t in zip(la[diff], lb[diff], adj.row[diff]):
        key = (int(min(a, b)), int(max(a, b)))
        pairs.setdefault(key, int(t))
    return pairs


def validate_polycube_constraints(mesh: TriMesh, labels) -> ValidationReport:
    """Check a labeling against the three polycube constraints.

    1. Two patches with opposite axes must not share a border.
    2. A vertex where three or more axis directions meet must be shared by
       at least three patches (otherwise the corner is missing).
    3. Every patch has a single boundary loop carrying exactly four corners.
    """
    labels = np.asarray(labels, dtype=np.int64)
    report = ValidationReport()
    if labels.size == 0:
        report.add(0, "empty labeling")
        return report
    axes = patch_axes(mesh, labels)
    for (a, b), tri in sorted(_adjacent_patch_pairs(mesh, labels).items()):
        if axes[a] // 2 == axes[b] // 2 and axes[a] != axes[b]:
            report.add(1, f"patches {a} ({AXIS_NAMES[axes[a]]}) and {b} ({AXIS_NAMES[axes[b]]}) "
                          f"share a border near triangle {tri}", (a, b, tri))

    counts = vertex_patch_counts(mesh, labels)
    tri_axis = np.argmax(mesh.normals @ AXES.T, axis=1)
    pairs = np.unique(np.column_stack([mesh.triangles.ravel(), np.repeat(tri_axis, 3)]), axis=0)
    axis_counts = np.bincount(pairs[:, 0], minlength=mesh.n_vertices)
    for v in np.flatnonzero((axis_counts >= 3) & (counts <= 2)):
        report.add(2, f"vertex {v} joins {axis_counts[v]} axis directions but only {counts[v]} patches", (int(v),))

    is_corner = counts >= 3
    for lab in np.unique(labels):
        loops = patch_boundary_loops(mesh, labels, lab)
        n_corners = sum(int(is_corner[loop].sum()) for loop in loops)
        if len(loops) != 1 or n_corners != 4:
            report.add(3, f"patch {lab} has {len(loops)} boundary loop(s) with {n_corners} corners, expected 1 loop and 4",
                       (int(lab),))
    return report


def patch_report(mesh: TriMesh, labels) -> str:
    """Plain-text table: triangles, area, border length and corners per patch, then islands."""
    labels = np.asarray(labels, dtype=np.int64)
    if labels.size == 0:
        return "error: empty label set\n"
    if len(labels) != mesh.n_triangles:
        raise ValidationError("one label per triangle required")
    counts = vertex_patch_counts(mesh, labels)
    rows = [f"{'patch':>6} {'tris':>6} {'area':>12} {'border':>12} {'loops':>5} {'corners':>7}"]
    for lab in np.unique(labels):
        sel = labels == lab
        loops = patch_boundary_loops(mesh, labels, lab)
        length = 0.0
        for loop in loops:
            p = mesh.vertices[loop]
            length += float(np.linalg.norm(p - np.roll(p, -1, axis=0), axis=1).sum())
        corners = sum(int((counts[loop] >= 3).sum()) for loop in loops)
        rows.append(f"{lab:>6} {int(sel.sum()):>6} {mesh.areas[sel].sum():>12.6g} {length:>12.6g} {len(loops):>5} {corners:>7}")
    isl = islands(mesh, labels)
    rows.append(f"islands: {len(isl)}")
    rows.extend(f"  island of patch {lab}: {size} triangle(s), seed element {seed}" for lab, seed, size in isl)
    return "\n".join(rows) + "\n"
