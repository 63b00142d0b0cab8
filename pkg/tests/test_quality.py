import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from hexforge.generators import perturbed_grid, structured_hex_grid
from hexforge.mesh import HexMesh, boundary_surface
from hexforge.quality import (
    VertexClass, corner_jacobians, detect_sharp, features_from_vertices, optimize, pillow, quality_report, scaled_jacobian, smooth,
)


def _cube():
    return structured_hex_grid(1, 1, 1)


def test_unit_cube_is_one():
    assert scaled_jacobian(_cube()).tolist() == [1.0]


def test_coplanar_corner_is_zero():
    m = _cube()
    # push corner 4 (0,0,1) into the plane spanned by the edges at corner 0
    m.vertices[4] = [0.5, 0.5, 0.0]
    assert corner_jacobians(m.vertices, m.cells)[0, 0] == pytest.approx(0.0, abs=1e-15)


def test_inverted_cube_is_negative():
    m = _cube()
    cells = m.cells.copy()
    cells[0, [0, 1]] = cells[0, [1, 0]]
    assert scaled_jacobian(m.vertices, cells)[0] < 0


def test_zero_length_edge_is_minus_one():
    m = _cube()
    m.vertices[1] = m.vertices[0]
    assert scaled_jacobian(m)[0] == -1.0


@given(st.floats(0.2, 5.0), st.floats(0.2, 5.0), st.floats(0.2, 5.0))
def test_scale_invariance(a, b, c):
    m = structured_hex_grid(2, 1, 1, size=(a, b, c))
    assert np.allclose(scaled_jacobian(m), 1.0)


def test_report():
    r = quality_report(perturbed_grid())
    assert r.n_nonpositive == 0
    assert -1 <= r.minimum <= r.mean <= r.maximum <= 1
    assert sum(r.histogram[0]) == 27


@pytest.mark.parametrize("n", [1, 2, 3])
def test_pillow_counts(n):
    m = structured_hex_grid(n, n, n)
    quads = boundary_surface(m).n_quads
    p = pillow(m, 1)
    assert p.n_cells == m.n_cells + quads
    assert p.n_vertices == m.n_vertices + int(m.boundary_vertex_mask.sum())
    # no cell keeps two boundary faces
    assert p.boundary_face_mask.sum(axis=1).max() == 1
    # the outer shell is the old boundary
    outer = np.unique(boundary_surface(p).quads)
    assert np.array_equal(np.sort(p.vertices[outer], axis=0), np.sort(m.vertices[m.boundary_vertex_mask], axis=0))
    assert scaled_jacobian(p).min() > 0


def test_single_cube_pillow():
    p = pillow(_cube(), 1)
    assert (p.n_cells, p.n_vertices) == (7, 16)


def test_two_layers():
    m = structured_hex_grid(2, 2, 2)
    p = pillow(m, 2)
    assert p.n_cells == 8 + 24 + 24


def test_detect_sharp_cube():
    m = structured_hex_grid(2, 2, 2)
    f = detect_sharp(m, 0.8)
    assert len(f.sharp_edges) == 24  # 12 cube edges, each split in two
    assert len(f.corners) == 8
    assert len(detect_sharp(m, -1.0).sharp_edges) == 0
    assert (f.vertex_class == VertexClass.CURVE).sum() == 12


def test_flat_interior_edges_not_sharp():
    m = structured_hex_grid(3, 3, 1)
    f = detect_sharp(m, 0.99)
    x, y, z = m.vertices.T
    mid = (x > 0) & (x < 1) & (y > 0) & (y < 1) & (z == 1.0)
    assert mid.sum() == 4
    assert not np.isin(np.flatnonzero(mid), f.sharp_vertices).any()


def test_manual_features():
    m = structured_hex_grid(2, 2, 2)
    ids = [0, 1, 2, 3]  # bottom front row plus one off-row vertex
    f = features_from_vertices(m, ids)
    assert {tuple(e) for e in f.sharp_edges.tolist()} == {(0, 1), (1, 2), (0, 3)}


def test_smooth_fixed_point_on_uniform_grid():
    m = structured_hex_grid(3, 3, 3)
    s = smooth(m, None, 0.5, 5)
    assert np.array_equal(s.vertices, m.vertices)


def test_smooth_improves_perturbed_vertex():
    m = perturbed_grid()
    before = scaled_jacobian(m).min()
    after = scaled_jacobian(smooth(m, None, 0.1, 20)).min()
    assert after > before


def test_smooth_keeps_pinned_corners():
    m = perturbed_grid(3, (0, 0, 0), (0.0, 0.0, 0.0))
    m.vertices[1] += [0.0, 0.05, 0.02]
    f = detect_sharp(m)
    s = smooth(m, f, 0.5, 10)
    assert np.array_equal(s.vertices[f.corners], m.vertices[f.corners])


@given(st.integers(0, 1000))
def test_min_jacobian_never_decreases(seed):
    rng = np.random.default_rng(seed)
    m = structured_hex_grid(3, 3, 3)
    m.vertices += rng.normal(scale=0.05, size=m.vertices.shape)
    f = detect_sharp(m, 0.8)
    before = scaled_jacobian(m).min()
    s = smooth(m, f, 0.2, 3)
    mid = scaled_jacobian(s).min()
    o = optimize(s, f, 0.05, 2)
    assert before <= mid <= scaled_jacobian(o).min()


def test_optimize_noop_on_perfect_mesh():
    m = structured_hex_grid(2, 2, 2)
    assert np.array_equal(optimize(m, None, 0.01, 3).vertices, m.vertices)


def test_optimize_untangles_single_inverted_cell():
    m = perturbed_grid(3, (1, 1, 1), (0.45, 0.45, 0.45))
    assert (scaled_jacobian(m) <= 0).sum() == 1
    o = optimize(m, None, 0.01, 50)
    assert (scaled_jacobian(o) <= 0).sum() == 0
