"""Export a hierarchical spline as BEXT and as a Bezier control-lattice mesh."""

from __future__ import annotations

import numpy as np

from ..formats import BextDoc, BextElement, write_bext, write_vtk_hex
from ..mesh import HexMesh
from .hierarchy import HierarchicalSpline

# 27 sub-hexes of the 4x4x4 Bezier lattice, VTK corner order
_SUB = np.array([
    [(i + a) + 4 * (j + b) + 16 * (k + c)
     for (a, b, c) in ((0, 0, 0), (1, 0, 0), (1, 1, 0), (0, 1, 0), (0, 0, 1), (1, 0, 1), (1, 1, 1), (0, 1, 1))]
    for k in range(3) for j in range(3) for i in range(3)
])


def to_bext(spline: HierarchicalSpline) -> BextDoc:
    """Control points (weight 1) and one element per leaf, in leaf order."""
    P = spline.control_points
    cps = np.hstack([P, np.ones((len(P), 1))])
    elements = []
    for k, e in spline.leaves:
        funcs, B = spline.element(k, e)
        elements.append(BextElement(funcs, B.T.copy()))
    return BextDoc(cps, elements)


def bezier_mesh(spline: HierarchicalSpline):
    """Hex mesh of the Bezier control lattices (27 cells per element).

    Returns the mesh and cell data with ``level`` and ``element`` arrays.
    """
    pts, cells = [], []
    for i, (k, e) in enumerate(spline.leaves):
        pts.append(spline.bezier_points(k, e))
        cells.append(_SUB + 64 * i)
    n = spline.n_elements
    mesh = HexMesh(np.vstack(pts) if pts else np.zeros((0, 3)),
                   np.vstack(cells) if cells else np.zeros((0, 8), dtype=np.int64))
    data = {"level": np.repeat(spline.leaves[:, 0], 27), "element": np.repeat(np.arange(n), 27)}
    return mesh, data


def write_spline(spline: HierarchicalSpline, bext_path, vtk_path=None) -> BextDoc:
    doc = to_bext(spline)
    write_bext(doc, bext_path)
    if vtk_path is not None:
        mesh, data = bezier_mesh(spline)
        write_vtk_hex(mesh, vtk_path, data, title="hexforge bezier lattice")
    return doc
