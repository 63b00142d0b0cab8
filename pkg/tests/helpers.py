"""Fixture builders shared by several test modules."""

import numpy as np

from hexforge.generators import axis_labels, cube_surface, icosphere, stacked_cubes_surface
from hexforge.mesh import HEX_CORNER_IJK
from hexforge.polycube import assemble_polycube, extract_structure
from hexforge.segmentation import segment


def _by_position(boundary):
    return {tuple(float(x) for x in p): int(i) for i, p in zip(boundary.corner_ids, boundary.corner_xyz)}


def cube_case(n=4):
    """Cube surface, its axis labels (1..6) and the one-cell polycube."""
    mesh = cube_surface(n)
    labels = axis_labels(mesh) + 1
    boundary = extract_structure(mesh, labels)
    pos = _by_position(boundary)
    cell = [pos[tuple(float(v) for v in ijk)] for ijk in HEX_CORNER_IJK]
    return mesh, labels, assemble_polycube(boundary, [cell]), [cell]


def two_cell_case():
    """1 x 1 x 2 box split into two stacked unit cells."""
    mesh, labels = stacked_cubes_surface()
    boundary = extract_structure(mesh, labels)
    pos = _by_position(boundary)
    cells = [[pos[(float(i), float(j), float(k + z))] for i, j, k in HEX_CORNER_IJK] for z in (0, 1)]
    return mesh, labels, assemble_polycube(boundary, cells), cells


def sphere_case(subdivisions=3):
    mesh = icosphere(subdivisions)
    labels = segment(mesh).part_ids()
    boundary = extract_structure(mesh, labels)
    cell = [int(boundary.corner_ids[np.argmax(boundary.corner_xyz @ (2 * ijk - 1))]) for ijk in HEX_CORNER_IJK]
    return mesh, labels, assemble_polycube(boundary, [cell]), [cell]


def pipeline_case(root, n=4, refine=True):
    """Write a cube surface, its cell file and a pipeline config under ``root``.

    Returns the config path.
    """
    import json

    from hexforge.formats import write_keyword_tri

    mesh, labels, _, cells = cube_case(n)
    write_keyword_tri(mesh, np.ones(mesh.n_triangles, dtype=int), root / "cube.k")
    (root / "cells.txt").write_text("".join(" ".join(map(str, c)) + "\n" for c in cells))
    cfg = {
        "input": "cube.k",
        "workdir": "work",
        "name": "cube",
        "segment": {"omega": 0.1},
        "polycube": {"cells": "cells.txt"},
        "map": {"level": 2},
        "quality": {"sharp": 1, "steps": [{"mode": "pillow", "n": 1}, {"mode": "smooth", "n": 5, "p": 0.01}]},
        "spline": {"sharp": 1},
    }
    if refine:
        (root / "refine.txt").write_text("0\n5\n")
        cfg["spline"]["refine"] = ["refine.txt"]
    path = root / "pipeline.json"
    path.write_text(json.dumps(cfg, indent=2))
    return path
