import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from hexforge.errors import InactiveElement, InvalidRefineList, MissingNeighbor
from hexforge.generators import l_block, structured_hex_grid, valence3_mesh
from hexforge.mesh import HEX_CORNER_IJK
from hexforge.quality import detect_sharp
from hexforge.spline import (
    Extraction, bernstein, bernstein3, bernstein3_grad, bezier_mesh, build_hierarchy, interior_extraction,
    subdivide, write_spline,
)
from oracles import bernstein_closed, knot_insertion_1d, uniform_extraction_1d, uniform_extraction_3d


def _grid_cell(mesh, n, i, j, k):
    lo = mesh.vertices[mesh.cells].min(axis=1)
    return int(np.flatnonzero(np.all(np.isclose(lo, np.array([i, j, k]) / n), axis=1))[0])


def _vid(n, i, j, k):
    return i + (n + 1) * (j + (n + 1) * k)


def _pou(spline, n_points=200, seed=0):
    rng = np.random.default_rng(seed)
    err = 0.0
    for k, e in spline.leaves:
        _, N = spline.basis(k, e, rng.random((n_points, 3)))
        err = max(err, np.abs(N.sum(axis=1) - 1).max())
    return err


# Bernstein ---------------------------------------------------------------

@given(st.lists(st.floats(0, 1), min_size=1, max_size=20))
def test_bernstein_matches_closed_form(t):
    assert np.allclose(bernstein(t), bernstein_closed(t), atol=1e-15)


def test_bernstein_derivative_by_differences():
    t = np.linspace(0.1, 0.9, 7)
    h = 1e-6
    fd = (bernstein(t + h) - bernstein(t - h)) / (2 * h)
    assert np.allclose(bernstein(t, deriv=1), fd, atol=1e-8)


def test_bernstein3_index_order():
    uvw = np.array([[0.2, 0.5, 0.7]])
    b = [bernstein_closed([x])[0] for x in uvw[0]]
    ref = np.einsum("k,j,i->kji", b[2], b[1], b[0]).ravel()  # index i + 4j + 16k
    assert np.allclose(bernstein3(uvw)[0], ref, atol=1e-15)
    assert bernstein3_grad(uvw).shape == (1, 64, 3)
    assert np.allclose(bernstein3_grad(uvw).sum(axis=1), 0.0, atol=1e-14)


# Extraction --------------------------------------------------------------

def test_uniform_oracle_sanity():
    M = uniform_extraction_1d()
    ref = np.array([[1, 4, 1, 0], [0, 4, 2, 0], [0, 2, 4, 0], [0, 1, 4, 1]]) / 6
    assert np.allclose(M, ref, atol=1e-12)


def test_interior_element_matches_tensor_oracle():
    n = 5
    mesh = structured_hex_grid(n, n, n)
    ex = Extraction(mesh)
    ref = uniform_extraction_3d()
    for ijk in [(1, 1, 1), (2, 2, 2), (3, 1, 2)]:
        el = interior_extraction(mesh, _grid_cell(mesh, n, *ijk), ex)
        col = {_vid(n, ijk[0] - 1 + a, ijk[1] - 1 + b, ijk[2] - 1 + c): a + 4 * b + 16 * c
               for c in range(4) for b in range(4) for a in range(4)}
        dense = np.zeros((64, 64))
        dense[:, [col[v] for v in el.indices]] = el.matrix
        assert np.abs(dense - ref).max() < 1e-12


def test_boundary_cell_is_not_interior():
    mesh = structured_hex_grid(3, 3, 3)
    with pytest.raises(MissingNeighbor):
        interior_extraction(mesh, _grid_cell(mesh, 3, 0, 0, 0))


@pytest.mark.parametrize("mesh", [structured_hex_grid(2, 2, 2), valence3_mesh(1, 2), l_block(1)])
def test_extraction_rows_are_convex(mesh):
    S = Extraction(mesh, detect_sharp(mesh)).S
    assert S.data.min() >= 0
    assert np.allclose(np.asarray(S.sum(axis=1)).ravel(), 1.0, atol=1e-14)


def test_valence3_body_point_uses_its_own_cell():
    mesh = valence3_mesh(1, 3)
    ex = Extraction(mesh)
    for e in range(mesh.n_cells):
        Q = ex.bezier_points(e)
        # body Bezier points stay inside the hull of the owning cell's lattice
        body = Q[[1 + 4 + 16, 2 + 8 + 32]]
        lo, hi = mesh.vertices.min(axis=0), mesh.vertices.max(axis=0)
        assert np.all(body >= lo - 1e-12) and np.all(body <= hi + 1e-12)


def test_featured_cube_is_trilinear():
    mesh = structured_hex_grid(1, 1, 1)
    ex = Extraction(mesh, detect_sharp(mesh))
    uvw = np.random.default_rng(1).random((50, 3))
    assert np.allclose(ex.evaluate(0, uvw), uvw, atol=1e-14)


# Subdivision -------------------------------------------------------------

def test_vertex_mask_is_knot_insertion_product():
    n = 5
    mesh = structured_hex_grid(n, n, n)
    C = subdivide(mesh).matrix.tocsr()
    v = _vid(n, 2, 2, 2)
    w = {}
    for c in range(-1, 2):
        for b in range(-1, 2):
            for a in range(-1, 2):
                w[_vid(n, 2 + a, 2 + b, 2 + c)] = np.prod([(6 if d == 0 else 1) / 8 for d in (a, b, c)])
    row = C[v].toarray().ravel()
    assert set(np.flatnonzero(row)) == set(w)
    for u, x in w.items():
        assert row[u] == pytest.approx(x, abs=1e-15)
    assert row[v] == 27 / 64
    assert row[_vid(n, 3, 2, 2)] == 9 / 128
    assert row[_vid(n, 3, 3, 2)] == 3 / 256
    assert row[_vid(n, 3, 3, 3)] == 1 / 512


def test_knot_insertion_oracle_columns():
    S = knot_insertion_1d()
    col = S[:, 4]
    nz = col[np.abs(col) > 0]
    assert np.allclose(nz, np.array([1, 4, 6, 4, 1]) / 8, atol=1e-12)


def test_subdivision_reproduces_linear_geometry():
    mesh = valence3_mesh(1, 2)
    sub = subdivide(mesh)
    # interior vertices of a linear field stay on the field
    fine = sub.matrix @ mesh.vertices
    assert fine.shape == (sub.mesh.n_vertices, 3)
    inner = ~sub.mesh.boundary_vertex_mask
    assert np.allclose(fine[inner], sub.mesh.vertices[inner], atol=1e-12)
    assert sub.mesh.n_cells == 8 * mesh.n_cells


def test_sharp_corners_survive_subdivision():
    mesh = structured_hex_grid(1, 1, 1)
    f = detect_sharp(mesh)
    sub = subdivide(mesh, f)
    C = sub.matrix.tocsr()
    for c in f.corners:
        row = C[c].toarray().ravel()
        assert row[c] == 1.0 and row.sum() == 1.0


# Hierarchy ---------------------------------------------------------------

@pytest.mark.parametrize("case", ["cube", "grid", "valence3", "l_block", "refined"])
def test_partition_of_unity(case):
    if case == "cube":
        mesh, refine = structured_hex_grid(1, 1, 1), None
    elif case == "grid":
        mesh, refine = structured_hex_grid(2, 2, 2), None
    elif case == "valence3":
        mesh, refine = valence3_mesh(1, 2), None
    elif case == "l_block":
        mesh, refine = l_block(1), None
    else:
        mesh, refine = structured_hex_grid(2, 2, 2), {0: [0], 1: [0]}
    s = build_hierarchy(mesh, detect_sharp(mesh), refine)
    assert _pou(s) < 1e-10


def test_refined_hierarchy_levels_and_nonnegativity():
    mesh = structured_hex_grid(2, 2, 2)
    s = build_hierarchy(mesh, detect_sharp(mesh), {0: [0]})
    assert set(s.leaves[:, 0].tolist()) == {0, 1}
    assert s.n_elements == 7 + 8
    for k, e in s.leaves:
        _, B = s.element(k, e)
        assert B.min() >= 0


def test_refinement_keeps_geometry():
    mesh = structured_hex_grid(2, 2, 2)
    mesh.vertices[13] += 0.05
    f = detect_sharp(mesh)
    coarse = build_hierarchy(mesh, f)
    fine = build_hierarchy(mesh, f, {0: [0, 3]})
    uvw = np.random.default_rng(2).random((20, 3))
    # a non-refined coarse leaf evaluates the same in both spaces
    assert np.allclose(coarse.evaluate(0, 7, uvw), fine.evaluate(0, 7, uvw), atol=1e-12)


def test_global_level_equals_plain_subdivision():
    mesh = structured_hex_grid(1, 1, 1)
    s = build_hierarchy(mesh, detect_sharp(mesh), global_level=1)
    assert s.n_elements == 8 and set(s.leaves[:, 0].tolist()) == {1}
    assert _pou(s) < 1e-10


def test_inactive_element():
    mesh = structured_hex_grid(2, 2, 2)
    s = build_hierarchy(mesh, None, {0: [0]})
    with pytest.raises(InactiveElement):
        s.element(0, 0)


@pytest.mark.parametrize("refine", [{0: [99]}, {1: [0]}, {0: [-1]}])
def test_invalid_refine_list(refine):
    mesh = structured_hex_grid(2, 2, 2)
    with pytest.raises(InvalidRefineList):
        build_hierarchy(mesh, None, refine)


# Emit --------------------------------------------------------------------

def test_bext_round_trip_and_bezier_mesh(tmp_path):
    mesh = structured_hex_grid(2, 1, 1)
    s = build_hierarchy(mesh, detect_sharp(mesh))
    doc = write_spline(s, tmp_path / "a.bext", tmp_path / "a_bezier.vtk")
    lines = (tmp_path / "a.bext").read_text().splitlines()
    assert lines[1:3] == [f"nodeN {s.n_functions}", "elemN 2"]
    gi = np.array([[float(x) for x in l.split()[1:]] for l in lines if l.startswith("gi ")])
    assert np.array_equal(gi, doc.control_points)
    assert sum(l.startswith("belem ") for l in lines) == 2
    bm, data = bezier_mesh(s)
    assert bm.n_cells == 27 * 2 and len(data["level"]) == bm.n_cells
    assert (tmp_path / "a_bezier.vtk").exists()


def test_truncation_is_idempotent():
    mesh = structured_hex_grid(3, 3, 3)
    s = build_hierarchy(mesh, detect_sharp(mesh), {0: [0, 1, 13], 1: [0]})
    for k in range(1, len(s.levels)):
        T = s.T[k].tocsr()
        coarse = np.flatnonzero(s.function_level[: T.shape[1]] < k)
        cand = s.levels[k].candidates
        # coarse columns already vanish on level-k candidates, so truncating again is a no-op
        assert T[cand][:, coarse].nnz == 0
        again = T[:, coarse].toarray()
        again[cand] = 0.0
        assert np.array_equal(again, T[:, coarse].toarray())


@pytest.mark.parametrize("cell", [(1, 1, 1), (2, 1, 2)])
def test_nested_spaces_on_interior_cells(cell):
    n = 4
    mesh = structured_hex_grid(n, n, n)
    rng = np.random.default_rng(3)
    mesh.vertices += rng.normal(scale=0.02, size=mesh.vertices.shape)
    coarse = build_hierarchy(mesh)
    fine = build_hierarchy(mesh, global_level=1)
    e = _grid_cell(structured_hex_grid(n, n, n), n, *cell)
    uvw = rng.random((30, 3)) * 0.5
    for l, ijk in enumerate(HEX_CORNER_IJK):
        a = coarse.evaluate(0, e, uvw + ijk / 2)
        b = fine.evaluate(1, 8 * e + l, uvw * 2)
        assert np.abs(a - b).max() < 1e-10
