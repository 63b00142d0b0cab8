import numpy as np
import pytest

from hexforge import cli
from hexforge.formats import read_keyword_tri, read_vtk_hex, write_keyword_tri, write_vtk_hex
from hexforge.generators import perturbed_grid
from helpers import cube_case, pipeline_case


@pytest.fixture
def cube_files(tmp_path):
    mesh, labels, _, cells = cube_case(4)
    write_keyword_tri(mesh, np.ones(mesh.n_triangles, dtype=int), tmp_path / "in.k")
    (tmp_path / "cells.txt").write_text(" ".join(map(str, cells[0])) + "\n")
    return tmp_path


def test_full_chain(cube_files):
    d = cube_files
    assert cli.run(["segment", "-i", str(d / "in.k"), "-o", str(d / "seg.k"), "-q"]) == 0
    _, parts = read_keyword_tri(d / "seg.k")
    assert len(np.unique(parts)) == 6
    assert cli.run(["polycube", "-i", str(d / "seg.k"), "-o", str(d / "s.k"), "-c", "1",
                    "--cells", str(d / "cells.txt"), "-q"]) == 0
    assert (d / "s_corner.txt").exists() and (d / "s_face.txt").exists()
    assert cli.run(["map", "-i", str(d / "seg.k"), "-p", str(d / "s.k"), "-o", str(d / "h.vtk"), "-s", "2", "-q"]) == 0
    h = read_vtk_hex(d / "h.vtk")
    assert (h.n_vertices, h.n_cells) == (125, 64)
    assert cli.run(["quality", "-i", str(d / "h.vtk"), "-o", str(d / "p.vtk"), "-m", "1", "-q"]) == 0
    assert read_vtk_hex(d / "p.vtk").n_cells == 64 + 96
    assert cli.run(["spline", "-i", str(d / "h.vtk"), "-o", str(d / "h.bext"), "-s", "1", "-q"]) == 0
    assert (d / "h.bext").read_text().startswith("type plain\nnodeN 125\nelemN 64\n")
    assert (d / "h_bezier.vtk").exists()


def test_spline_local_refinement(cube_files, tmp_path):
    mesh = perturbed_grid(2, (1, 1, 1), (0.0, 0.0, 0.0))
    write_vtk_hex(mesh, tmp_path / "g.vtk")
    (tmp_path / "r0.txt").write_text("0\n")
    code = cli.run(["spline", "-i", str(tmp_path / "g.vtk"), "-o", str(tmp_path / "g.bext"), "-s", "1", "-l",
                    "--rfid", str(tmp_path / "r0.txt"), "-q"])
    assert code == 0
    assert "elemN 15" in (tmp_path / "g.bext").read_text()


def test_missing_required_option_is_usage_error(cube_files, capsys):
    d = cube_files
    assert cli.run(["map", "-i", str(d / "in.k"), "-o", str(d / "x.vtk")]) == 2
    assert "usage" in capsys.readouterr().err.lower()


@pytest.mark.parametrize("argv", [
    ["quality", "-i", "a.vtk", "-o", "b.vtk", "-m", "2", "-p", "0"],
    ["quality", "-i", "a.vtk", "-o", "b.vtk", "-m", "2", "-p", "1.5"],
    ["map", "-i", "a.k", "-p", "b.k", "-o", "c.vtk", "-s", "-1"],
    ["segment", "-i", "a.k", "-o", "b.k", "-l", "-0.5"],
    ["spline", "-i", "a.vtk", "-o", "b.bext", "-g", "1", "-l"],
    ["frobnicate"],
])
def test_bad_arguments(argv):
    assert cli.run(argv) == 2


def test_missing_input_file_is_runtime_error(tmp_path, capsys):
    assert cli.run(["segment", "-i", str(tmp_path / "nope.k"), "-o", str(tmp_path / "o.k")]) == 1
    assert capsys.readouterr().err


def test_pipeline_subcommand(tmp_path):
    cfg = pipeline_case(tmp_path, refine=False)
    assert cli.run(["pipeline", str(cfg), "--stop-after", "map", "-q"]) == 0
    assert (tmp_path / "work" / "cube.map.vtk").exists()
    assert not (tmp_path / "work" / "cube.quality.vtk").exists()


def test_module_entry_point():
    import subprocess
    import sys
    out = subprocess.run([sys.executable, "-m", "hexforge", "--help"], capture_output=True, text=True)
    assert out.returncode == 0 and "spline" in out.stdout
