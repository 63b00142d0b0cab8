import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from hexforge.errors import LocationFailure
from hexforge.generators import hemisphere_patch, square_patch
from hexforge.mesh import hex_volumes
from hexforge.parammap import (
    SQUARE, cell_volume_grid, coons_patch, cotangent_weights, harmonic_parameterize, inverse_map,
    map_structure, sample_boundary_face,
)
from hexforge.polycube import extract_structure
from helpers import cube_case, sphere_case, two_cell_case


def _flat_labels(mesh):
    return np.zeros(mesh.n_triangles, dtype=int)


def test_cotangent_weights_symmetric_and_positive_on_regular_grid():
    mesh = square_patch(4)
    W = cotangent_weights(mesh.vertices, mesh.triangles)
    assert abs(W - W.T).max() < 1e-14
    assert W.data.min() >= 0


def test_flat_square_maps_to_itself():
    mesh = square_patch(6)
    corners = [0, 6, 48, 42]
    p = harmonic_parameterize(mesh, _flat_labels(mesh), 0, corners)
    assert p.flipped() == 0
    assert np.allclose(p.uv, mesh.vertices[p.vertex_ids, :2], atol=1e-12)
    for c, uv in zip(corners, SQUARE):
        assert np.array_equal(p.corner_uv(c), uv)


def test_hemisphere_has_no_flips():
    mesh, corners = hemisphere_patch(10)
    p = harmonic_parameterize(mesh, _flat_labels(mesh), 0, corners)
    assert p.flipped() == 0
    assert p.uv.min() >= -1e-12 and p.uv.max() <= 1 + 1e-12


@given(st.floats(0, 1), st.floats(0, 1))
def test_inverse_map_reproduces_vertices_and_stays_on_surface(u, v):
    mesh, corners = hemisphere_patch(8)
    p = harmonic_parameterize(mesh, _flat_labels(mesh), 0, corners)
    x = inverse_map(p, [u, v])
    assert np.linalg.norm(x) <= 1.0 + 1e-12
    k = 5
    assert np.array_equal(inverse_map(p, p.uv[k]), p.xyz[k])


def test_inverse_map_outside():
    mesh = square_patch(3)
    p = harmonic_parameterize(mesh, _flat_labels(mesh), 0, [0, 3, 15, 12])
    with pytest.raises(LocationFailure):
        inverse_map(p, [1.5, 0.5])


def test_coons_patch_reproduces_bilinear():
    P = np.array([[0, 0, 0], [1, 0, 0.2], [0, 1, 0.1], [1, 1, 0.7]], dtype=float)
    n = 4
    t = np.linspace(0, 1, n + 1)[:, None]
    b0 = (1 - t) * P[0] + t * P[1]
    b1 = (1 - t) * P[2] + t * P[3]
    c0 = (1 - t) * P[0] + t * P[2]
    c1 = (1 - t) * P[1] + t * P[3]
    g = coons_patch(b0, b1, c0, c1)
    s = t[:, None]
    tt = t[None, :]
    ref = (1 - s) * (1 - tt) * P[0] + s * (1 - tt) * P[1] + (1 - s) * tt * P[2] + s * tt * P[3]
    assert np.allclose(g, ref, atol=1e-14)


def test_volume_grid_reproduces_trilinear():
    n = 4
    r = np.linspace(0, 1, n + 1)
    U, V, W = np.meshgrid(r, r, r, indexing="ij")
    L = np.stack([U + 0.1 * V * W, V, W + 0.2 * U * V], axis=-1)
    shell = L.copy()
    shell[1:-1, 1:-1, 1:-1] = 0.0
    assert np.allclose(cell_volume_grid(shell), L, atol=1e-14)


@pytest.mark.parametrize("level, nv, nc", [(0, 8, 1), (1, 27, 8), (2, 125, 64)])
def test_cube_counts(level, nv, nc):
    mesh, labels, structure, _ = cube_case(4)
    h = map_structure(mesh, labels, structure, level)
    assert (h.n_vertices, h.n_cells) == (nv, nc)
    assert hex_volumes(h.vertices, h.cells).sum() == pytest.approx(1.0)


def test_nested_levels():
    mesh, labels, structure, _ = cube_case(4)
    a = map_structure(mesh, labels, structure, 1)
    b = map_structure(mesh, labels, structure, 2)
    keys = {tuple(np.round(p, 12)) for p in b.vertices}
    assert all(tuple(np.round(p, 12)) in keys for p in a.vertices)


def test_two_cells_conforming():
    mesh, labels, structure, _ = two_cell_case()
    h = map_structure(mesh, labels, structure, 1)
    assert (h.n_vertices, h.n_cells) == (45, 16)
    assert h.face_table[2].max() == 2


def test_sphere_map_valid_and_threads_agree():
    mesh, labels, structure, _ = sphere_case(2)
    a = map_structure(mesh, labels, structure, 2, threads=1)
    b = map_structure(mesh, labels, structure, 2, threads=4)
    assert np.array_equal(a.vertices, b.vertices) and np.array_equal(a.cells, b.cells)
    assert hex_volumes(a.vertices, a.cells).min() > 0
    # boundary vertices lie on the input surface (unit sphere up to chord error)
    r = np.linalg.norm(a.vertices[a.boundary_vertex_mask], axis=1)
    assert r.max() <= 1.0 + 1e-12 and r.min() > 0.9
