"""
Truncated hierarchical splines over nested Catmull-Clark levels.

Each level ``k`` is a full, globally subdivided mesh. The domain
``Omega^k`` holds the level-``k`` cells that are children of cells refined
at level ``k - 1`` (all cells at level 0). Refinement at level ``k`` picks
cells ``R^k`` inside ``Omega^k``; leaves are domain cells that are not
refined.

Functions are identified by (level, vertex). Level-``k`` candidates are
vertex functions whose support lies in ``Omega^k``. A candidate is dropped
when its support lies inside ``R^k`` and every fine function in its
refinement relation is a level ``k + 1`` candidate; requiring the second
condition keeps the partition of unity on unstructured meshes where the
subdivision mask reaches farther than the support.

``T^k`` expresses every active function (all levels up to ``k``) in the
level-``k`` vertex basis::

    T^0 = I[:, A^0]
    T^k = [Z_{X^k} C^{k-1} T^{k-1}, I[:, A^k]]

where ``Z_X`` zeroes rows of level-``k`` candidates (truncation).
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp

from ..errors import InactiveElement, InvalidRefineList
from ..mesh import HexMesh
from ..quality import FeatureSet, no_features
from .bernstein import bernstein3, bernstein3_grad
from .extraction import Extraction
from .subdivision import subdivide

CHOP = 1e-14


def _chop(M: sp.csr_matrix) -> sp.csr_matrix:
    M = M.tocsr()
    M.data[np.abs(M.data) < CHOP] = 0.0
    M.eliminate_zeros()
    return M


@dataclass(eq=False)
class Level:
    mesh: HexMesh
    features: FeatureSet
    domain: np.ndarray                 # bool per cell
    refined: np.ndarray                # bool per cell
    extraction: Extraction | None = None
    candidates: np.ndarray | None = None   # bool per vertex
    active: np.ndarray | None = None       # vertex ids, ascending
    subdivision: sp.csr_matrix | None = None  # C to level k + 1


@dataclass(eq=False)
class HierarchicalSpline:
    levels: list
    T: list
    function_level: np.ndarray
    function_vertex: np.ndarray
    leaves: np.ndarray                 # (n, 2) rows (level, cell), level-major
    _leaf_index: dict = field(default_factory=dict, repr=False)

    def __post_init__(self):
        self._leaf_index = {(int(k), int(e)): i for i, (k, e) in enumerate(self.leaves)}

    @property
    def n_functions(self) -> int:
        return len(self.function_level)

    @property
    def n_elements(self) -> int:
        return len(self.leaves)

    @property
    def control_points(self) -> np.ndarray:
        out = np.empty((self.n_functions, 3))
        for k, lev in enumerate(self.levels):
            sel = self.function_level == k
            out[sel] = lev.mesh.vertices[self.function_vertex[sel]]
        return out

    def leaf_id(self, level: int, cell: int) -> int:
        try:
            return self._leaf_index[(int(level), int(cell))]
        except KeyError:
            raise InactiveElement(f"cell {cell} at level {level} is not an active element") from None

    def element(self, level: int, cell: int):
        """Function ids and ``(64, n)`` Bernstein coefficient matrix of a leaf."""
        self.leaf_id(level, cell)
        lev = self.levels[level]
        el = lev.extraction.element(cell)
        B = sp.csr_matrix(el.matrix) @ self.T[level][el.indices]
        B = _chop(B)
        funcs = np.unique(B.indices)
        return funcs, B[:, funcs].toarray()

    def bezier_points(self, level: int, cell: int) -> np.ndarray:
        funcs, B = self.element(level, cell)
        return B @ self.control_points[funcs]

    def basis(self, level: int, cell: int, uvw):
        funcs, B = self.element(level, cell)
        return funcs, bernstein3(uvw) @ B

    def evaluate(self, level: int, cell: int, uvw) -> np.ndarray:
        return bernstein3(uvw) @ self.bezier_points(level, cell)

    def jacobian(self, level: int, cell: int, uvw) -> np.ndarray:
        Q = self.bezier_points(level, cell)
        return np.einsum("mra,ri->mia", bernstein3_grad(uvw), Q)


def _as_levels(refine) -> dict[int, np.ndarray]:
    if refine is None:
        return {}
    levels = getattr(refine, "levels", refine)
    if not isinstance(levels, dict):
        levels = {0: levels}
    return {int(k): np.unique(np.asarray(v, dtype=np.int64)) for k, v in levels.items() if len(v)}


def build_hierarchy(mesh: HexMesh, features: FeatureSet | None = None, refine=None,
                    global_level: int = 0) -> HierarchicalSpline:
    """Build the hierarchy from per-level refine lists.

    Parameters
    ----------
    refine : RefineList, dict or array, optional
        Level-``k`` cell indices to refine. A bare array means level 0.
    global_level : int
        Every cell is refined at levels ``k < global_level``.

    Raises
    ------
    InvalidRefineList
        A listed cell is out of range or not in the level's domain.
    """
    features = features if features is not None else no_features(mesh)
    requested = _as_levels(refine)
    depth = max([global_level] + [k + 1 for k in requested])
    levels = [Level(mesh, features, np.ones(mesh.n_cells, dtype=bool), np.zeros(mesh.n_cells, dtype=bool))]
    for k in range(depth):
        lev = levels[k]
        if k < global_level:
            lev.refined = lev.domain.copy()
        else:
            cells = requested.get(k, np.zeros(0, dtype=np.int64))
            if len(cells) and (cells.min() < 0 or cells.max() >= lev.mesh.n_cells):
                raise InvalidRefineList(f"level {k}: cell index out of range 0..{lev.mesh.n_cells - 1}")
            if len(cells) and not lev.domain[cells].all():
                bad = cells[~lev.domain[cells]]
                raise InvalidRefineList(f"level {k}: cells {bad[:5].tolist()} are not in the level-{k} domain")
            lev.refined[cells] = True
        if not lev.refined.any():
            bad = [j for j in requested if j > k]
            if bad:
                raise InvalidRefineList(f"level {min(bad)} has cells but level {k} refines nothing")
            break
        sub = subdivide(lev.mesh, lev.features)
        lev.subdivision = sub.matrix
        levels.append(Level(sub.mesh, sub.features, np.repeat(lev.refined, 8),
                            np.zeros(sub.mesh.n_cells, dtype=bool)))

    # candidates per level
    for lev in levels:
        lev.extraction = Extraction(lev.mesh, lev.features)
        pat = lev.extraction.support_pattern
        outside = np.asarray(pat[~lev.domain].sum(axis=0)).ravel()
        inside = np.asarray(pat[lev.domain].sum(axis=0)).ravel()
        lev.candidates = (outside == 0) & (inside > 0)

    # active sets
    for k, lev in enumerate(levels):
        if k + 1 < len(levels):
            pat = lev.extraction.support_pattern
            unrefined = np.asarray(pat[~lev.refined].sum(axis=0)).ravel()
            C = lev.subdivision.tocsc()
            fine_ok = levels[k + 1].candidates
            children_ok = np.array([fine_ok[C.indices[C.indptr[b]:C.indptr[b + 1]]].all()
                                    for b in range(C.shape[1])], dtype=bool)
            dropped = lev.candidates & (unrefined == 0) & children_ok
        else:
            dropped = np.zeros(lev.mesh.n_vertices, dtype=bool)
        lev.active = np.flatnonzero(lev.candidates & ~dropped)

    # truncated coefficient matrices
    T = []
    for k, lev in enumerate(levels):
        V = lev.mesh.n_vertices
        I = sp.identity(V, format="csc")[:, lev.active]
        if k == 0:
            T.append(I.tocsr())
            continue
        coarse = levels[k - 1].subdivision @ T[k - 1]
        coarse = sp.diags((~lev.candidates).astype(float)) @ coarse
        T.append(_chop(sp.hstack([coarse, I]).tocsr()))

    f_level = np.concatenate([np.full(len(l.active), k) for k, l in enumerate(levels)]).astype(np.int64)
    f_vertex = np.concatenate([l.active for l in levels]).astype(np.int64)
    leaves = np.array([(k, e) for k, l in enumerate(levels) for e in np.flatnonzero(l.domain & ~l.refined)],
                      dtype=np.int64).reshape(-1, 2)
    return HierarchicalSpline(levels, T, f_level, f_vertex, leaves)
