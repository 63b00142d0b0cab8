import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from scipy.spatial.transform import Rotation

from hexforge.errors import EmptyRegionWarning, IndexOutOfRange
from hexforge.formats import OverrideList
from hexforge.generators import axis_labels, cube_surface, icosphere, noisy_cube
from hexforge.mesh import TriMesh
from hexforge.segmentation import (
    CvtParams, HbeParams, apply_overrides, classical_cvt, hbe_cvt, hbe_distance, initial_generators,
    islands, patch_boundary_loops, patch_report, segment, validate_polycube_constraints,
)


def test_cube_gives_axis_labels():
    m = cube_surface(3)
    seg = classical_cvt(m)
    assert np.array_equal(seg.labels, axis_labels(m))
    assert seg.converged
    assert seg.energy[-1] == pytest.approx(0.0, abs=1e-20)


def test_hbe_distance_zero_omega_is_classical():
    m = noisy_cube(4)
    g = initial_generators()
    d = hbe_distance(m, g, 0.0)
    ref = ((m.normals[:, None, :] - g[None]) ** 2).sum(axis=2)
    assert np.array_equal(d, ref)


def test_negative_omega_rejected():
    with pytest.raises(ValueError):
        HbeParams(omega=-0.1)


@given(st.integers(0, 50), st.sampled_from([0.0, 0.1, 0.5]))
def test_energy_never_increases(seed, omega):
    m = noisy_cube(4, degrees=8.0, seed=seed)
    first = classical_cvt(m)
    assert np.all(np.diff(first.energy) <= 1e-12 * max(first.energy[0], 1.0))
    second = hbe_cvt(m, first, HbeParams(omega=omega))
    assert np.all(np.diff(second.energy) <= 1e-12 * max(second.energy[0], 1.0))


@given(st.integers(0, 2 ** 31 - 1))
def test_labels_follow_rotation(seed):
    m = noisy_cube(4, degrees=5.0, seed=3)
    R = Rotation.random(random_state=seed).as_matrix()
    a = segment(m)
    rotated = TriMesh(m.vertices @ R.T, m.triangles)
    first = classical_cvt(rotated, initial_generators() @ R.T)
    b = hbe_cvt(rotated, first)
    assert np.array_equal(a.labels, b.labels)
    assert np.allclose(a.generators @ R.T, b.generators, atol=1e-9)


def test_empty_region_warns_and_keeps_generator():
    m = cube_surface(1)
    g = initial_generators()
    g = np.vstack([g[:5], g[4]])  # two generators on +Z, the second never wins
    with pytest.warns(EmptyRegionWarning):
        seg = classical_cvt(m, g, CvtParams(max_iter=3))
    assert np.array_equal(seg.generators[5], g[5])


def test_noisy_cube_has_no_islands_after_hbe():
    m = noisy_cube()
    seg = segment(m, omega=0.1)
    assert islands(m, seg.labels) == []
    assert len(np.unique(seg.labels)) == 6


@given(st.lists(st.tuples(st.integers(0, 47), st.integers(1, 6)), max_size=10, unique_by=lambda t: t[0]))
def test_overrides_idempotent(pairs):
    m = cube_surface(2)
    labels = axis_labels(m) + 1
    ov = OverrideList(np.array([p[0] for p in pairs], dtype=np.int64), np.array([p[1] for p in pairs], dtype=np.int64))
    once = apply_overrides(labels, ov)
    assert np.array_equal(apply_overrides(once, ov), once)
    untouched = np.setdiff1d(np.arange(len(labels)), ov.elements)
    assert np.array_equal(once[untouched], labels[untouched])


def test_override_out_of_range():
    m = cube_surface(1)
    with pytest.raises(IndexOutOfRange):
        apply_overrides(np.zeros(m.n_triangles, dtype=int), OverrideList(np.array([99]), np.array([1])))


def test_boundary_loops_on_cube_face():
    m = cube_surface(2)
    labels = axis_labels(m)
    loops = patch_boundary_loops(m, labels, 0)
    assert len(loops) == 1 and len(loops[0]) == 8
    assert loops[0][0] == min(loops[0])


def test_islands_found():
    m = cube_surface(3)
    labels = axis_labels(m)
    centres = m.vertices[m.triangles].mean(axis=1)
    middle = np.flatnonzero((labels == 0) & (np.abs(centres[:, 1] - 0.5) < 0.2) & (np.abs(centres[:, 2] - 0.5) < 0.2))
    labels[middle[0]] = 2
    isl = islands(m, labels)
    assert len(isl) == 1 and isl[0][0] == 2 and isl[0][2] == 1


def test_patch_report_lists_every_patch():
    m = cube_surface(2)
    text = patch_report(m, axis_labels(m) + 1)
    assert text.count("\n") == 1 + 6 + 1
    assert "islands: 0" in text
    assert patch_report(m, np.zeros(0, dtype=int)).startswith("error")


def test_cube_labels_satisfy_constraints():
    m = cube_surface(2)
    assert validate_polycube_constraints(m, axis_labels(m)).ok
