import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from hexforge.errors import NonConformal, PatchCornerCount, UncoveredBoundary, UnknownCorner
from hexforge.generators import axis_labels, cube_surface, l_prism_surface
from hexforge.mesh import TriMesh
from hexforge.polycube import (
    canonical_cycle, detect_corners, extract_structure, face_key, read_structure, validate_polycube,
    write_structure, assemble_polycube,
)
from helpers import cube_case, two_cell_case


def test_cube_corners_and_quads():
    mesh = cube_surface(3)
    ids, xyz = detect_corners(mesh, axis_labels(mesh))
    assert len(ids) == 8
    assert sorted(map(tuple, np.round(xyz).astype(int).tolist())) == sorted(
        (i, j, k) for i in (0, 1) for j in (0, 1) for k in (0, 1))
    s = extract_structure(mesh, axis_labels(mesh))
    assert s.quads.shape == (6, 4) and len(s.edges) == 12


def test_quads_are_outward():
    mesh, labels, structure, _ = cube_case(2)
    centre = np.full(3, 0.5)
    for q in structure.quads:
        p = np.array([structure.position(v) for v in q])
        n = np.cross(p[1] - p[0], p[3] - p[0])
        assert np.dot(n, p.mean(axis=0) - centre) > 0


def test_corner_detection_independent_of_vertex_order():
    mesh = cube_surface(2)
    labels = axis_labels(mesh)
    perm = np.random.default_rng(0).permutation(mesh.n_vertices)
    inv = np.argsort(perm)
    shuffled = TriMesh(mesh.vertices[perm], inv[mesh.triangles])
    _, a = detect_corners(mesh, labels)
    _, b = detect_corners(shuffled, labels)
    key = lambda x: sorted(map(tuple, x.tolist()))
    assert key(a) == key(b)


@given(st.permutations(range(4)), st.booleans())
def test_face_key_is_orientation_free(perm, rev):
    q = [10, 3, 7, 5]
    cyc = [q[(perm[0] + k) % 4] for k in range(4)]  # any rotation
    if rev:
        cyc = cyc[::-1]
    assert face_key(cyc) == face_key(q)
    assert canonical_cycle(cyc)[0] == 3


def test_wrong_corner_count():
    mesh = cube_surface(2)
    labels = axis_labels(mesh)
    labels[labels == 1] = 0  # merge +X and -X: one patch, two loops
    with pytest.raises(PatchCornerCount):
        extract_structure(mesh, labels)


def test_l_prism_needs_further_segmentation():
    # the two L-shaped caps are six-sided, so they must be split before a polycube exists
    mesh, labels = l_prism_surface()
    ids, _ = detect_corners(mesh, labels)
    assert len(ids) == 12
    with pytest.raises(PatchCornerCount) as info:
        extract_structure(mesh, labels)
    assert info.value.count == 6


def test_unknown_corner():
    mesh, labels, structure, cells = cube_case(2)
    bad = list(cells[0])
    bad[0] = 10 ** 6
    with pytest.raises(UnknownCorner):
        assemble_polycube(structure, [bad])


def test_uncovered_boundary():
    mesh, labels, structure, _ = cube_case(2)
    with pytest.raises(UncoveredBoundary):
        assemble_polycube(structure, np.zeros((0, 8), dtype=int))


def test_non_conformal_triple_face():
    mesh, labels, structure, cells = cube_case(2)
    with pytest.raises(NonConformal):
        assemble_polycube(structure, [cells[0]] * 3)


def test_two_cells_share_interior_quad():
    _, _, structure, _ = two_cell_case()
    assert len(structure.cells) == 2 and len(structure.interior_quads) == 1
    assert validate_polycube(structure).ok


def test_validate_repeated_corner():
    mesh, labels, structure, cells = cube_case(2)
    bad = list(cells[0])
    bad[1] = bad[0]
    s = structure
    s.cells = np.array([bad])
    rep = validate_polycube(s)
    assert rep.by_rule("distinct") and not rep.ok


def test_structure_round_trip(tmp_path):
    _, _, structure, _ = two_cell_case()
    write_structure(structure, tmp_path / "s.k")
    back = read_structure(tmp_path / "s.k")
    assert np.array_equal(back.corner_ids, structure.corner_ids)
    assert np.array_equal(back.quads, structure.quads)
    assert np.array_equal(back.cells, structure.cells)
    assert np.array_equal(back.quad_patches, structure.quad_patches)
