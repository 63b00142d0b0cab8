"""
Polycube structure: corners, one boundary quad per surface patch, and the
user-supplied cells that split the volume into topological cubes.

Corner ids are 0-based vertex indices of the segmented triangle mesh.
Interior corners, which do not exist on the surface, carry synthetic ids at
or above the vertex count.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.sparse import coo_matrix
from scipy.sparse.csgraph import connected_components

from .errors import NonConformal, PatchCornerCount, UncoveredBoundary, UnknownCorner, ValidationError
from .formats import KeywordDoc, read_keyword, write_keyword
from .mesh import HEX_EDGES, HEX_FACES, TriMesh
from .report import ValidationReport
from .segmentation import patch_boundary_loops, vertex_patch_counts


def canonical_cycle(quad) -> tuple[int, ...]:
    """Rotate a 4-cycle so the lowest id comes first, keeping its direction."""
    q = [int(v) for v in quad]
    k = q.index(min(q))
    return tuple(q[k:] + q[:k])


def face_key(quad) -> tuple[int, ...]:
    """Orientation-free key: lowest id first, then its smaller neighbour."""
    q = canonical_cycle(quad)
    if q[3] < q[1]:
        q = (q[0], q[3], q[2], q[1])
    return q


@dataclass
class PolycubeStructure:
    corner_ids: np.ndarray
    corner_xyz: np.ndarray
    quads: np.ndarray                      # (P, 4) boundary quads, outward counter-clockwise
    quad_patches: np.ndarray               # (P,) patch label of each boundary quad
    cells: np.ndarray = field(default_factory=lambda: np.zeros((0, 8), dtype=np.int64))
    interior_quads: np.ndarray = field(default_factory=lambda: np.zeros((0, 4), dtype=np.int64))

    def __post_init__(self):
        self.corner_ids = np.asarray(self.corner_ids, dtype=np.int64).reshape(-1)
        self.corner_xyz = np.asarray(self.corner_xyz, dtype=np.float64).reshape(-1, 3)
        self.quads = np.asarray(self.quads, dtype=np.int64).reshape(-1, 4)
        self.quad_patches = np.asarray(self.quad_patches, dtype=np.int64).reshape(-1)
        self.cells = np.asarray(self.cells, dtype=np.int64).reshape(-1, 8)
        self.interior_quads = np.asarray(self.interior_quads, dtype=np.int64).reshape(-1, 4)

    @property
    def edges(self) -> np.ndarray:
        """Unique sorted corner pairs along boundary quad sides."""
        if not len(self.quads):
            return np.zeros((0, 2), dtype=np.int64)
        pairs = np.stack([self.quads, np.roll(self.quads, -1, axis=1)], axis=2).reshape(-1, 2)
        return np.unique(np.sort(pairs, axis=1), axis=0)

    def corner_lookup(self) -> dict[int, int]:
        return {int(c): i for i, c in enumerate(self.corner_ids)}

    def position(self, corner_id: int) -> np.ndarray:
        return self.corner_xyz[self.corner_lookup()[int(corner_id)]]

    def cell_faces(self) -> dict[tuple, list[tuple[int, int]]]:
        """Face key -> list of (cell, local face)."""
        out: dict = {}
        for c, cell in enumerate(self.cells):
            for f, lf in enumerate(HEX_FACES):
                out.setdefault(face_key(cell[lf]), []).append((c, f))
        return out


def detect_corners(mesh: TriMesh, labels) -> tuple[np.ndarray, np.ndarray]:
    """Vertices touched by three or more patch labels, ascending, with coordinates."""
    ids = np.flatnonzero(vertex_patch_counts(mesh, labels) >= 3)
    return ids, mesh.vertices[ids]


def build_boundary_quads(mesh: TriMesh, labels, corner_ids=None):
    """One quad per patch from the corners on its boundary loop.

    Corners follow the loop in the direction induced by the triangles, so
    they run counter-clockwise around the outward normal of a positively
    oriented surface (the loop is reversed for inward-facing meshes).

    Returns
    -------
    quads : (P, 4) int array
    patches : (P,) int array, sorted ascending
    edges : (E, 2) int array of unique sorted corner pairs
    """
    labels = np.asarray(labels, dtype=np.int64)
    if corner_ids is None:
        corner_ids, _ = detect_corners(mesh, labels)
    is_corner = np.zeros(mesh.n_vertices, dtype=bool)
    is_corner[np.asarray(corner_ids, dtype=np.int64)] = True
    flip = mesh.signed_volume() < 0
    quads, patches = [], []
    for lab in np.unique(labels):
        loops = patch_boundary_loops(mesh, labels, lab)
        found = [v for loop in loops for v in loop if is_corner[v]]
        if len(loops) != 1 or len(found) != 4:
            raise PatchCornerCount(int(lab), len(found))
        q = found[::-1] if flip else found
        quads.append(canonical_cycle(q))
        patches.append(int(lab))
    quads = np.array(quads, dtype=np.int64).reshape(-1, 4)
    pairs = np.stack([quads, np.roll(quads, -1, axis=1)], axis=2).reshape(-1, 2)
    edges = np.unique(np.sort(pairs, axis=1), axis=0) if len(pairs) else np.zeros((0, 2), dtype=np.int64)
    return quads, np.array(patches, dtype=np.int64), edges


def extract_structure(mesh: TriMesh, labels) -> PolycubeStructure:
    """Boundary-only structure (no cells yet) from a valid labeling."""
    ids, xyz = detect_corners(mesh, labels)
    quads, patches, _ = build_boundary_quads(mesh, labels, ids)
    return PolycubeStructure(ids, xyz, quads, patches)


def assemble_polycube(boundary: PolycubeStructure, cells, extra_ids=None, extra_xyz=None) -> PolycubeStructure:
    """Attach cells (8 corner ids each, hexahedron order) to a boundary structure.

    ``extra_ids`` / ``extra_xyz`` add interior corners that are not on the
    surface. Faces with two cells become interior quads.

    Raises
    ------
    UnknownCorner
        A cell references an id that is neither a surface nor an added corner.
    NonConformal
        A face is shared by three or more cells.
    UncoveredBoundary
        A boundary quad is not a face of any cell.
    """
    ids = boundary.corner_ids
    xyz = boundary.corner_xyz
    if extra_ids is not None and len(extra_ids):
        extra_ids = np.asarray(extra_ids, dtype=np.int64)
        clash = np.intersect1d(ids, extra_ids)
        if len(clash):
            raise ValidationError(f"interior corner id {clash[0]} already used by a surface corner")
        ids = np.concatenate([ids, extra_ids])
        xyz = np.concatenate([xyz, np.asarray(extra_xyz, dtype=np.float64).reshape(-1, 3)])
        order = np.argsort(ids, kind="stable")
        ids, xyz = ids[order], xyz[order]
    cells = np.asarray(cells, dtype=np.int64).reshape(-1, 8)
    known = set(int(i) for i in ids)
    for c, cell in enumerate(cells):
        for v in cell:
            if int(v) not in known:
                raise UnknownCorner(f"cell {c} references unknown corner {int(v)}")
    out = PolycubeStructure(ids, xyz, boundary.quads, boundary.quad_patches, cells)
    faces = out.cell_faces()
    for key, users in faces.items():
        if len(users) > 2:
            raise NonConformal(f"face {key} is shared by {len(users)} cells")
    for q, lab in zip(boundary.quads, boundary.quad_patches):
        users = faces.get(face_key(q), [])
        if len(users) != 1:
            raise UncoveredBoundary(
                f"boundary quad {tuple(int(v) for v in q)} (patch {lab}) is not a face of any cell; "
                "supply a cell file that covers every patch"
            )
    interior = [cells[u[0][0]][HEX_FACES[u[0][1]]] for key, u in sorted(faces.items()) if len(u) == 2]
    out.interior_quads = np.array([canonical_cycle(q) for q in interior], dtype=np.int64).reshape(-1, 4)
    return out


def validate_polycube(structure: PolycubeStructure) -> ValidationReport:
    """Report-only checks on an assembled structure."""
    report = ValidationReport()
    cells = structure.cells
    if not len(cells):
        report.add("cells", "structure has no cells")
        return report
    for c, cell in enumerate(cells):
        if len(set(int(v) for v in cell)) != 8:
            report.add("distinct", f"cell {c} repeats a corner", (c,))
        edges = {tuple(sorted((int(cell[a]), int(cell[b])))) for a, b in HEX_EDGES}
        faces = {face_key(cell[f]) for f in HEX_FACES}
        if len(edges) != 12 or len(faces) != 6:
            report.add("faces", f"cell {c} does not have 6 distinct faces and 12 edges", (c,))
    faces = structure.cell_faces()
    shared = [u for u in faces.values() if len(u) == 2]
    if len(cells) > 1:
        a = [u[0][0] for u in shared]
        b = [u[1][0] for u in shared]
        graph = coo_matrix((np.ones(len(a)), (a, b)), shape=(len(cells), len(cells)))
        n_comp, _ = connected_components(graph, directed=False)
        if n_comp != 1:
            report.add("connected", f"cells form {n_comp} face-connected groups")
    for key, users in faces.items():
        if len(users) > 2:
            report.add("conformal", f"face {key} shared by {len(users)} cells", key)
    complex_boundary = {k for k, u in faces.items() if len(u) == 1}
    quad_keys = {face_key(q) for q in structure.quads}
    for k in sorted(complex_boundary - quad_keys):
        report.add("boundary", f"cell face {k} is on the boundary but is not a patch quad", k)
    for k in sorted(quad_keys - complex_boundary):
        report.add("boundary", f"patch quad {k} is not a boundary face of the cells", k)
    return report


# ---------------------------------------------------------------------------
# keyword round trip: node id = corner id + 1, shells = boundary quads, solids = cells

def write_structure(structure: PolycubeStructure, path) -> None:
    nid = structure.corner_ids + 1
    lookup = structure.corner_lookup()

    def to_nodes(arr):
        return np.array([[nid[lookup[int(v)]] for v in row] for row in arr], dtype=np.int64).reshape(-1, arr.shape[1])

    doc = KeywordDoc(
        node_ids=nid, nodes=structure.corner_xyz,
        shell_ids=np.arange(1, len(structure.quads) + 1), shell_parts=structure.quad_patches,
        shells=to_nodes(structure.quads),
    )
    if len(structure.cells):
        doc.solid_ids = np.arange(1, len(structure.cells) + 1)
        doc.solid_parts = np.ones(len(structure.cells), dtype=np.int64)
        doc.solids = to_nodes(structure.cells)
    write_keyword(path, doc, title="hexforge polycube structure")


def read_structure(path) -> PolycubeStructure:
    doc = read_keyword(path)
    boundary = PolycubeStructure(doc.node_ids - 1, doc.nodes, doc.shells - 1, doc.shell_parts)
    if len(doc.solids):
        return assemble_polycube(boundary, doc.solids - 1)
    return boundary
