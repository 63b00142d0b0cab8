"""
Stage functions shared by the command line and the ``pipeline`` runner.

A pipeline config is a JSON file::

    {
      "input": "rod_tri.k",
      "workdir": "build",
      "name": "rod",
      "segment":  {"omega": 0.1, "overrides": "rod_manual.txt"},
      "polycube": {"cells": "rod_cells.txt", "interior_corners": null},
      "map":      {"level": 2},
      "quality":  {"steps": [{"mode": "pillow", "n": 1},
                             {"mode": "smooth", "n": 50, "p": 0.001},
                             {"mode": "optimize", "n": 15, "p": 0.001}],
                   "sharp": 1, "tol": 0.8, "sharp_file": null},
      "spline":   {"global_level": 0, "refine": ["lev0.txt"], "sharp": 1, "tol": 0.8}
    }

Relative paths resolve against the config file's directory. Each stage
writes ``<name>.<stage>.<ext>`` plus a ``.stamp`` file recording the hashes
of everything it consumed; a stage whose stamp still matches is skipped.
"""

from __future__ import annotations

import hashlib
import json
import logging
from pathlib import Path

import numpy as np

from .errors import StageError, UsageError
from .formats import (
    read_cell_file, read_corner_file, read_keyword_tri, read_override, read_refine, read_sharp,
    read_vtk_hex, write_keyword_tri, write_polycube_files, write_vtk_hex,
)
from .mesh import HexMesh
from .parammap import map_structure
from .polycube import assemble_polycube, extract_structure, read_structure, validate_polycube, write_structure
from .quality import detect_sharp, features_from_vertices, no_features, optimize, pillow, quality_report, smooth
from .segmentation import apply_overrides, patch_report, segment, validate_polycube_constraints
from .spline import build_hierarchy, write_spline

log = logging.getLogger("hexforge")

STAGES = ("segment", "polycube", "map", "quality", "spline")
QUALITY_MODES = {1: "pillow", 2: "smooth", 3: "optimize"}


def sha256(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


def log_inputs(stage: str, paths: dict, params: dict) -> None:
    for key, p in paths.items():
        if p is not None:
            log.info("%s: %s %s sha256=%s", stage, key, p, sha256(p))
    log.info("%s: parameters %s", stage, json.dumps(params, sort_keys=True, default=str))


# ---------------------------------------------------------------------------
# stages


def run_segment(input_path, output_path, overrides=None, omega: float = 0.1,
                max_iter: int = 100, tol: float = 1e-6) -> np.ndarray:
    log_inputs("segment", {"input": input_path, "overrides": overrides},
               {"omega": omega, "max_iter": max_iter, "tol": tol})
    mesh, _ = read_keyword_tri(input_path)
    mesh.check_degenerate()
    seg = segment(mesh, omega=omega, max_iter=max_iter, tol=tol)
    log.info("segment: %d iterations, converged=%s", seg.iterations, seg.converged)
    labels = seg.part_ids()
    if overrides is not None:
        labels = apply_overrides(labels, read_override(overrides))
    report = validate_polycube_constraints(mesh, labels)
    if not report.ok:
        log.warning("segment: constraint violations (edit part ids or add overrides):\n%s", report)
    log.info("segment: patches\n%s", patch_report(mesh, labels).rstrip())
    write_keyword_tri(mesh, labels, output_path)
    return labels


def _polycube_files(output_path) -> tuple[Path, Path, Path]:
    out = Path(output_path)
    stem = out.with_suffix("")
    return (Path(f"{stem}_corner.txt"), Path(f"{stem}_edge.txt"), Path(f"{stem}_face.txt"))


def run_polycube(input_path, output_path, cells=None, interior_corners=None, write_files: bool = False):
    log_inputs("polycube", {"input": input_path, "cells": cells, "interior_corners": interior_corners},
               {"c": int(write_files)})
    mesh, labels = read_keyword_tri(input_path)
    boundary = extract_structure(mesh, labels)
    if write_files:
        paths = _polycube_files(output_path)
        write_polycube_files(boundary, *paths)
        log.info("polycube: wrote %s", ", ".join(str(p) for p in paths))
    extra_ids = extra_xyz = None
    if interior_corners is not None:
        extra_ids, extra_xyz = read_corner_file(interior_corners)
    cell_rows = read_cell_file(cells) if cells is not None else np.zeros((0, 8), dtype=np.int64)
    structure = assemble_polycube(boundary, cell_rows, extra_ids, extra_xyz)
    report = validate_polycube(structure)
    if not report.ok:
        log.warning("polycube: structure problems:\n%s", report)
    write_structure(structure, output_path)
    if write_files and interior_corners is not None:
        write_polycube_files(structure, *_polycube_files(output_path))
    return structure


def run_map(input_path, structure_path, output_path, level: int, threads: int = 1) -> HexMesh:
    log_inputs("map", {"input": input_path, "structure": structure_path}, {"s": level, "threads": threads})
    mesh, labels = read_keyword_tri(input_path)
    structure = read_structure(structure_path)
    hexes = map_structure(mesh, labels, structure, level, threads=threads)
    log.info("map: %d vertices, %d cells", hexes.n_vertices, hexes.n_cells)
    write_vtk_hex(hexes, output_path)
    return hexes


def features_for(mesh: HexMesh, sharp: int, tol: float = 0.8, sharp_file=None):
    if sharp == 0:
        return no_features(mesh)
    if sharp == 1:
        return detect_sharp(mesh, tol)
    if sharp_file is None:
        raise UsageError("sharp mode 2 needs a sharp vertex file (--sharp)")
    return features_from_vertices(mesh, read_sharp(sharp_file))


def apply_quality(mesh: HexMesh, mode: int, n: int, p: float, features) -> HexMesh:
    if mode == 1:
        return pillow(mesh, n)
    if mode == 2:
        return smooth(mesh, features, step=p, iterations=n)
    return optimize(mesh, features, step=p, iterations=n)


def run_quality(input_path, output_path, steps, sharp: int = 0, tol: float = 0.8, sharp_file=None) -> HexMesh:
    """``steps`` is a list of ``(mode, n, p)`` with mode 1 pillow, 2 smooth, 3 optimize."""
    log_inputs("quality", {"input": input_path, "sharp": sharp_file},
               {"steps": steps, "s": sharp, "t": tol})
    mesh = read_vtk_hex(input_path)
    before = quality_report(mesh)
    for mode, n, p in steps:
        features = features_for(mesh, sharp, tol, sharp_file) if mode != 1 else None
        mesh = apply_quality(mesh, mode, n, p, features)
    after = quality_report(mesh)
    log.info("quality: min scaled Jacobian %.6g -> %.6g, %d non-positive cells",
             before.minimum, after.minimum, after.n_nonpositive)
    write_vtk_hex(mesh, output_path)
    return mesh


def bezier_path(output_path) -> Path:
    out = Path(output_path)
    return out.with_name(out.stem + "_bezier.vtk")


def run_spline(input_path, output_path, sharp: int = 0, tol: float = 0.8, sharp_file=None,
               global_level: int = 0, refine_files=()):
    log_inputs("spline", {"input": input_path, "sharp": sharp_file,
                          **{f"rfid{i}": f for i, f in enumerate(refine_files)}},
               {"s": sharp, "t": tol, "g": global_level})
    mesh = read_vtk_hex(input_path)
    features = features_for(mesh, sharp, tol, sharp_file)
    refine = None
    for i, f in enumerate(refine_files):
        r = read_refine(f, level=i)
        refine = r if refine is None else refine.merged(r)
    spline = build_hierarchy(mesh, features, refine, global_level)
    log.info("spline: %d levels, %d functions, %d elements",
             len(spline.levels), spline.n_functions, spline.n_elements)
    write_spline(spline, output_path, bezier_path(output_path))
    return spline


# ---------------------------------------------------------------------------
# config-driven runner


def _resolve(base: Path, p):
    if p is None:
        return None
    p = Path(p)
    return p if p.is_absolute() else base / p


def _quality_steps(cfg: dict) -> list[tuple[int, int, float]]:
    names = {v: k for k, v in QUALITY_MODES.items()}
    defaults = {1: 1, 2: 50, 3: 15}
    steps = []
    for step in cfg.get("steps", []):
        mode = step["mode"]
        mode = names[mode] if isinstance(mode, str) else int(mode)
        steps.append((mode, int(step.get("n", defaults[mode])), float(step.get("p", 0.001))))
    return steps


class Pipeline:
    """Resumable segment -> polycube -> map -> quality -> spline run."""

    def __init__(self, config_path, threads: int = 1):
        self.config_path = Path(config_path)
        try:
            self.cfg = json.loads(self.config_path.read_text())
        except (OSError, json.JSONDecodeError) as exc:
            raise UsageError(f"cannot read pipeline config {config_path}: {exc}") from exc
        if "input" not in self.cfg:
            raise UsageError("pipeline config needs an 'input' entry")
        self.base = self.config_path.parent
        self.workdir = _resolve(self.base, self.cfg.get("workdir", "."))
        self.name = self.cfg.get("name", Path(self.cfg["input"]).stem)
        self.threads = threads
        self.executed: list[str] = []

    def artifact(self, stage: str) -> Path:
        ext = {"segment": "k", "polycube": "k", "map": "vtk", "quality": "vtk", "spline": "bext"}[stage]
        return self.workdir / f"{self.name}.{stage}.{ext}"

    def _stamp(self, stage: str, inputs: dict, params: dict) -> str:
        digest = {k: (sha256(v) if v is not None else None) for k, v in sorted(inputs.items())}
        return json.dumps({"stage": stage, "inputs": digest, "params": params}, sort_keys=True, default=str)

    def _stage(self, stage: str, inputs: dict, params: dict, fn) -> Path:
        out = self.artifact(stage)
        stamp_path = out.with_name(out.name + ".stamp")
        missing = [k for k, v in inputs.items() if v is not None and not Path(v).exists()]
        if missing:
            raise StageError(stage, str(inputs[missing[0]]), FileNotFoundError(f"missing input '{missing[0]}'"))
        stamp = self._stamp(stage, inputs, params)
        if out.exists() and stamp_path.exists() and stamp_path.read_text() == stamp:
            log.info("%s: up to date, skipping", stage)
            return out
        try:
            fn(out)
        except (UsageError, StageError):
            raise
        except Exception as exc:  # any stage failure halts with its name and artifact
            raise StageError(stage, str(out), exc) from exc
        stamp_path.write_text(stamp)
        self.executed.append(stage)
        return out

    def run(self, stop_after: str | None = None) -> Path:
        cfg, base = self.cfg, self.base
        self.workdir.mkdir(parents=True, exist_ok=True)
        src = _resolve(base, cfg["input"])

        c = cfg.get("segment", {})
        ov = _resolve(base, c.get("overrides"))
        seg_params = {"omega": c.get("omega", 0.1), "max_iter": c.get("max_iter", 100), "tol": c.get("tol", 1e-6)}
        seg = self._stage("segment", {"input": src, "overrides": ov}, seg_params,
                          lambda out: run_segment(src, out, ov, **seg_params))
        if stop_after == "segment":
            return seg

        c = cfg.get("polycube", {})
        cells = _resolve(base, c.get("cells"))
        interior = _resolve(base, c.get("interior_corners"))
        poly = self._stage("polycube", {"input": seg, "cells": cells, "interior": interior}, {},
                           lambda out: run_polycube(seg, out, cells, interior, bool(c.get("write_files", False))))
        if stop_after == "polycube":
            return poly

        level = int(cfg.get("map", {}).get("level", 1))
        hexes = self._stage("map", {"input": seg, "structure": poly}, {"s": level},
                            lambda out: run_map(seg, poly, out, level, self.threads))
        if stop_after == "map":
            return hexes

        c = cfg.get("quality", {})
        steps = _quality_steps(c)
        q_sharp = int(c.get("sharp", 0))
        q_tol = float(c.get("tol", 0.8))
        q_file = _resolve(base, c.get("sharp_file"))
        qual = self._stage("quality", {"input": hexes, "sharp": q_file}, {"steps": steps, "s": q_sharp, "t": q_tol},
                           lambda out: run_quality(hexes, out, steps, q_sharp, q_tol, q_file))
        if stop_after == "quality":
            return qual

        c = cfg.get("spline", {})
        refine = [_resolve(base, f) for f in c.get("refine", [])]
        s_sharp = int(c.get("sharp", 0))
        s_tol = float(c.get("tol", 0.8))
        s_file = _resolve(base, c.get("sharp_file"))
        g = int(c.get("global_level", 0))
        inputs = {"input": qual, "sharp": s_file, **{f"rfid{i}": f for i, f in enumerate(refine)}}
        return self._stage("spline", inputs, {"s": s_sharp, "t": s_tol, "g": g},
                           lambda out: run_spline(qual, out, s_sharp, s_tol, s_file, g, refine))
