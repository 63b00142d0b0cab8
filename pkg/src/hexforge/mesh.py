"""
Core mesh containers and topology queries.

Hexahedra use the VTK corner ordering throughout::

        7-------6
       /|      /|
      4-------5 |        w
      | 3-----|-2        |  v
      |/      |/         | /
      0-------1          |/___ u

Corner ``c`` sits at the lattice position ``HEX_CORNER_IJK[c]`` of the unit cube.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field
from functools import cached_property

import numpy as np

from .errors import DegenerateTriangle, IndexOutOfRange, NonManifold, ValidationError

HEX_CORNER_IJK = np.array(
    [[0, 0, 0], [1, 0, 0], [1, 1, 0], [0, 1, 0],
     [0, 0, 1], [1, 0, 1], [1, 1, 1], [0, 1, 1]],
    dtype=np.int64,
)

# outward-oriented (counter-clockwise seen from outside)
HEX_FACES = np.array(
    [[0, 3, 2, 1],   # w = 0
     [4, 5, 6, 7],   # w = 1
     [0, 1, 5, 4],   # v = 0
     [1, 2, 6, 5],   # u = 1
     [2, 3, 7, 6],   # v = 1
     [3, 0, 4, 7]],  # u = 0
    dtype=np.int64,
)

HEX_EDGES = np.array(
    [[0, 1], [1, 2], [3, 2], [0, 3],
     [4, 5], [5, 6], [7, 6], [4, 7],
     [0, 4], [1, 5], [2, 6], [3, 7]],
    dtype=np.int64,
)

# for each corner: the three edge-adjacent corners, forming a right-handed frame
HEX_CORNER_FRAMES = np.array(
    [[1, 3, 4], [2, 0, 5], [3, 1, 6], [0, 2, 7],
     [7, 5, 0], [4, 6, 1], [5, 7, 2], [6, 4, 3]],
    dtype=np.int64,
)


def hex_corner_index(ijk) -> int:
    """Local VTK corner index of the unit-cube corner ``ijk`` (entries 0/1)."""
    i, j, k = (int(x) for x in ijk)
    return int(np.flatnonzero((HEX_CORNER_IJK == (i, j, k)).all(axis=1))[0])


class ElementClass(enum.Enum):
    BOUNDARY = "boundary"
    INTERIOR_REGULAR = "interior_regular"
    INTERIOR_IRREGULAR = "interior_irregular"


def _unique_rows(keys: np.ndarray):
    """Unique rows of an integer array, with the inverse map."""
    if len(keys) == 0:
        return keys.reshape(0, keys.shape[1] if keys.ndim == 2 else 0), np.zeros(0, dtype=np.int64)
    uniq, inverse = np.unique(keys, axis=0, return_inverse=True)
    return uniq, inverse.reshape(-1)


def _group(inverse: np.ndarray, values: np.ndarray, n_groups: int) -> list[np.ndarray]:
    order = np.lexsort((values, inverse))
    bounds = np.searchsorted(inverse[order], np.arange(n_groups + 1))
    vals = values[order]
    return [vals[bounds[g]:bounds[g + 1]] for g in range(n_groups)]


@dataclass(eq=False)
class TriMesh:
    """Triangle surface mesh.

    ``node_ids`` / ``elem_ids`` keep the external (keyword file) identifiers
    when the mesh was read from disk, so it can be written back unchanged.
    """

    vertices: np.ndarray
    triangles: np.ndarray
    node_ids: np.ndarray | None = None
    elem_ids: np.ndarray | None = None

    def __post_init__(self):
        self.vertices = np.asarray(self.vertices, dtype=np.float64).reshape(-1, 3)
        self.triangles = np.asarray(self.triangles, dtype=np.int64).reshape(-1, 3)
        if not np.all(np.isfinite(self.vertices)):
            raise ValidationError("non-finite vertex coordinate")
        if self.triangles.size and (self.triangles.min() < 0 or self.triangles.max() >= len(self.vertices)):
            raise IndexOutOfRange("triangle references a vertex out of range")

    @property
    def n_vertices(self) -> int:
        return len(self.vertices)

    @property
    def n_triangles(self) -> int:
        return len(self.triangles)

    @cached_property
    def _cross(self) -> np.ndarray:
        p = self.vertices[self.triangles]
        return np.cross(p[:, 1] - p[:, 0], p[:, 2] - p[:, 0])

    @cached_property
    def areas(self) -> np.ndarray:
        return 0.5 * np.linalg.norm(self._cross, axis=1)

    @cached_property
    def normals(self) -> np.ndarray:
        """Unit normal of every triangle."""
        n = np.linalg.norm(self._cross, axis=1)
        with np.errstate(invalid="ignore", divide="ignore"):
            return self._cross / n[:, None]

    @cached_property
    def edges(self) -> np.ndarray:
        """Unique undirected edges, sorted."""
        return self.edge_table[0]

    @cached_property
    def edge_table(self):
        """(edges, triangle-edge -> edge id) with triangle edge k = (t[k], t[k+1])."""
        t = self.triangles
        pairs = np.stack([t, np.roll(t, -1, axis=1)], axis=2).reshape(-1, 2)
        uniq, inv = _unique_rows(np.sort(pairs, axis=1))
        return uniq, inv.reshape(-1, 3)

    def bbox_diagonal(self) -> float:
        if not len(self.vertices):
            return 0.0
        return float(np.linalg.norm(self.vertices.max(axis=0) - self.vertices.min(axis=0)))

    def check_degenerate(self, rel_tol: float = 1e-12) -> None:
        """Reject triangles whose area is below ``rel_tol`` times the squared bbox diagonal."""
        limit = rel_tol * self.bbox_diagonal() ** 2
        bad = np.flatnonzero(self.areas <= limit)
        if len(bad):
            raise DegenerateTriangle(f"{len(bad)} degenerate triangles, first index {bad[0]}")

    def is_closed(self) -> bool:
        counts = np.bincount(self.edge_table[1].ravel(), minlength=len(self.edges))
        return bool(np.all(counts == 2))

    def euler(self) -> int:
        used = np.unique(self.triangles)
        return len(used) - len(self.edges) + self.n_triangles

    def genus(self) -> int:
        return (2 - self.euler()) // 2

    def signed_volume(self) -> float:
        p = self.vertices[self.triangles]
        return float(np.einsum("ij,ij->i", p[:, 0], np.cross(p[:, 1], p[:, 2])).sum() / 6.0)


@dataclass(eq=False)
class QuadSurface:
    """Boundary quads of a hex mesh, outward oriented, in global vertex indices."""

    vertices: np.ndarray
    quads: np.ndarray
    cells: np.ndarray
    local_faces: np.ndarray

    @property
    def n_quads(self) -> int:
        return len(self.quads)

    @cached_property
    def vertex_indices(self) -> np.ndarray:
        return np.unique(self.quads)

    @cached_property
    def normals(self) -> np.ndarray:
        p = self.vertices[self.quads]
        n = np.cross(p[:, 2] - p[:, 0], p[:, 3] - p[:, 1])
        return n / np.linalg.norm(n, axis=1)[:, None]

    @cached_property
    def areas(self) -> np.ndarray:
        p = self.vertices[self.quads]
        return 0.5 * np.linalg.norm(np.cross(p[:, 2] - p[:, 0], p[:, 3] - p[:, 1]), axis=1)

    @cached_property
    def edge_table(self):
        """(edges, quad-side -> edge id); side k joins quad corners k and k+1."""
        q = self.quads
        pairs = np.stack([q, np.roll(q, -1, axis=1)], axis=2).reshape(-1, 2)
        uniq, inv = _unique_rows(np.sort(pairs, axis=1))
        return uniq, inv.reshape(-1, 4)

    @property
    def edges(self) -> np.ndarray:
        return self.edge_table[0]


@dataclass(eq=False)
class HexMesh:
    vertices: np.ndarray
    cells: np.ndarray

    def __post_init__(self):
        self.vertices = np.asarray(self.vertices, dtype=np.float64).reshape(-1, 3)
        self.cells = np.asarray(self.cells, dtype=np.int64).reshape(-1, 8)
        if not np.all(np.isfinite(self.vertices)):
            raise ValidationError("non-finite vertex coordinate")
        if self.cells.size and (self.cells.min() < 0 or self.cells.max() >= len(self.vertices)):
            raise IndexOutOfRange("cell references a vertex out of range")

    @property
    def n_vertices(self) -> int:
        return len(self.vertices)

    @property
    def n_cells(self) -> int:
        return len(self.cells)

    def copy(self) -> "HexMesh":
        return HexMesh(self.vertices.copy(), self.cells.copy())

    @cached_property
    def face_table(self):
        """(faces as sorted keys, cell-face -> face id, face -> incident count)."""
        f = self.cells[:, HEX_FACES].reshape(-1, 4)
        uniq, inv = _unique_rows(np.sort(f, axis=1))
        counts = np.bincount(inv, minlength=len(uniq))
        return uniq, inv.reshape(-1, 6), counts

    @cached_property
    def edge_table(self):
        """(edges sorted, cell-edge -> edge id, edge valence)."""
        e = self.cells[:, HEX_EDGES].reshape(-1, 2)
        uniq, inv = _unique_rows(np.sort(e, axis=1))
        counts = np.bincount(inv, minlength=len(uniq))
        return uniq, inv.reshape(-1, 12), counts

    @cached_property
    def boundary_face_mask(self) -> np.ndarray:
        """(n_cells, 6) bool: cell face lies on the boundary."""
        _, inv, counts = self.face_table
        if np.any(counts > 2):
            raise NonManifold(f"{int(np.sum(counts > 2))} quad faces shared by 3+ cells")
        return counts[inv] == 1

    @cached_property
    def boundary_vertex_mask(self) -> np.ndarray:
        mask = np.zeros(self.n_vertices, dtype=bool)
        bf = self.boundary_face_mask
        c, f = np.nonzero(bf)
        mask[self.cells[c[:, None], HEX_FACES[f]].ravel()] = True
        return mask

    @cached_property
    def boundary_edge_mask(self) -> np.ndarray:
        """Per unique edge: lies on a boundary quad."""
        edges, _, _ = self.edge_table
        surf = boundary_surface(self)
        mask = np.zeros(len(edges), dtype=bool)
        if surf.n_quads:
            se = surf.edges
            idx = np.searchsorted(_row_view(edges), _row_view(se))
            mask[idx] = True
        return mask


def _row_view(a: np.ndarray) -> np.ndarray:
    """View an (n, k) int64 array as a 1D structured array (for sorted searches)."""
    a = np.ascontiguousarray(a, dtype=np.int64)
    return a.view([("", np.int64)] * a.shape[1]).ravel()


@dataclass
class AdjacencyTables:
    vertex_elements: list[np.ndarray]
    neighbors: np.ndarray
    edges: np.ndarray
    edge_elements: list[np.ndarray]
    facets: np.ndarray = field(default_factory=lambda: np.zeros((0, 0), dtype=np.int64))
    facet_elements: list[np.ndarray] = field(default_factory=list)

    def boundary_facets(self) -> np.ndarray:
        return np.array([i for i, el in enumerate(self.facet_elements) if len(el) == 1], dtype=np.int64)


def build_adjacency(mesh: TriMesh | HexMesh) -> AdjacencyTables:
    """Vertex->element, element->neighbor and edge->element tables.

    For triangle meshes the facets are the edges; for hex meshes they are
    the quad faces. ``neighbors[e, k]`` is the element across local facet
    ``k`` or -1 on the boundary.
    """
    if isinstance(mesh, TriMesh):
        elems = mesh.triangles
        n_vert = mesh.n_vertices
        edges, e_inv = mesh.edge_table
        e_inv = e_inv.reshape(-1)
        owner = np.repeat(np.arange(len(elems)), 3)
        edge_elements = _group(e_inv, owner, len(edges))
        if any(len(x) > 2 for x in edge_elements):
            raise NonManifold("an edge is shared by more than two triangles")
        facets, f_inv, facet_elements = edges, e_inv.reshape(-1, 3), edge_elements
    elif isinstance(mesh, HexMesh):
        elems = mesh.cells
        n_vert = mesh.n_vertices
        edges, e_inv, _ = mesh.edge_table
        owner = np.repeat(np.arange(len(elems)), 12)
        edge_elements = _group(e_inv.reshape(-1), owner, len(edges))
        facets, f_inv, counts = mesh.face_table
        if np.any(counts > 2):
            raise NonManifold("a quad face is shared by more than two cells")
        facet_elements = _group(f_inv.reshape(-1), np.repeat(np.arange(len(elems)), 6), len(facets))
    else:
        raise TypeError(f"unsupported mesh type {type(mesh).__name__}")

    owner_v = np.repeat(np.arange(len(elems)), elems.shape[1])
    vertex_elements = [np.unique(x) for x in _group(elems.reshape(-1), owner_v, n_vert)]

    neighbors = np.full(f_inv.shape, -1, dtype=np.int64)
    for e in range(len(elems)):
        for k, f in enumerate(f_inv[e]):
            for other in facet_elements[f]:
                if other != e:
                    neighbors[e, k] = other
    return AdjacencyTables(vertex_elements, neighbors, edges, edge_elements, facets, facet_elements)


def boundary_surface(mesh: HexMesh) -> QuadSurface:
    """Boundary quads with outward orientation (cells ordered by index)."""
    c, f = np.nonzero(mesh.boundary_face_mask)
    quads = mesh.cells[c[:, None], HEX_FACES[f]] if len(c) else np.zeros((0, 4), dtype=np.int64)
    return QuadSurface(mesh.vertices, quads.reshape(-1, 4), c, f)


def classify_elements(mesh: HexMesh) -> list[ElementClass]:
    """Boundary if the cell touches a boundary vertex; otherwise irregular when
    one of its edges has a valence other than four."""
    bv = mesh.boundary_vertex_mask
    _, e_inv, valence = mesh.edge_table
    on_boundary = bv[mesh.cells].any(axis=1)
    irregular = (valence[e_inv] != 4).any(axis=1)
    out = []
    for b, irr in zip(on_boundary, irregular):
        if b:
            out.append(ElementClass.BOUNDARY)
        elif irr:
            out.append(ElementClass.INTERIOR_IRREGULAR)
        else:
            out.append(ElementClass.INTERIOR_REGULAR)
    return out


def hex_volumes(vertices: np.ndarray, cells: np.ndarray) -> np.ndarray:
    """Signed cell volumes from six tetrahedra sharing the 0-6 diagonal."""
    p = vertices[cells]
    tets = ((0, 1, 2, 6), (0, 2, 3, 6), (0, 3, 7, 6), (0, 7, 4, 6), (0, 4, 5, 6), (0, 5, 1, 6))
    vol = np.zeros(len(cells))
    for a, b, c, d in tets:
        vol += np.einsum(
            "ij,ij->i", p[:, b] - p[:, a], np.cross(p[:, c] - p[:, a], p[:, d] - p[:, a])
        ) / 6.0
    return vol
