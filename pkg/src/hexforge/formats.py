"""
Readers and writers for every file the pipeline touches.

* keyword (``.k``) subset: ``*NODE``, ``*ELEMENT_SHELL``, ``*ELEMENT_SOLID``
* legacy ASCII VTK unstructured grids of hexahedra (cell type 12)
* integer list files: segmentation overrides, sharp vertices, refinement lists
* polycube corner / edge / face / cell files
* BEXT extraction files

Text inputs accept commas and/or whitespace as separators.
"""

from __future__ import annotations

import re
import warnings
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import MixedElementError, ParseError, UnsupportedCellType, ValidationError
from .mesh import HexMesh, TriMesh

VTK_HEXAHEDRON = 12
BEXT_SPARSE_LIMIT = 20

_SPLIT = re.compile(r"[,\s]+")


def _tokens(line: str) -> list[str]:
    return [t for t in _SPLIT.split(line.strip()) if t]


def format_coord(x: float) -> str:
    """Shortest round-tripping positional decimal, e.g. ``4.06622`` or ``0.0052``."""
    return np.format_float_positional(float(x), unique=True, trim="-")


# ---------------------------------------------------------------------------
# keyword files

@dataclass
class KeywordDoc:
    node_ids: np.ndarray = field(default_factory=lambda: np.zeros(0, dtype=np.int64))
    nodes: np.ndarray = field(default_factory=lambda: np.zeros((0, 3)))
    shell_ids: np.ndarray = field(default_factory=lambda: np.zeros(0, dtype=np.int64))
    shell_parts: np.ndarray = field(default_factory=lambda: np.zeros(0, dtype=np.int64))
    shells: np.ndarray = field(default_factory=lambda: np.zeros((0, 4), dtype=np.int64))
    solid_ids: np.ndarray = field(default_factory=lambda: np.zeros(0, dtype=np.int64))
    solid_parts: np.ndarray = field(default_factory=lambda: np.zeros(0, dtype=np.int64))
    solids: np.ndarray = field(default_factory=lambda: np.zeros((0, 8), dtype=np.int64))

    def node_index(self) -> dict[int, int]:
        return {int(n): i for i, n in enumerate(self.node_ids)}


def _fixed(line: str, widths: list[int]) -> list[str]:
    out, pos = [], 0
    for w in widths:
        chunk = line[pos:pos + w].strip()
        pos += w
        if chunk:
            out.append(chunk)
    return out


def _parse_node(line: str):
    toks = _tokens(line)
    try:
        return int(toks[0]), float(toks[1]), float(toks[2]), float(toks[3])
    except (ValueError, IndexError):
        toks = _fixed(line, [8, 16, 16, 16])
        return int(toks[0]), float(toks[1]), float(toks[2]), float(toks[3])


def _parse_ints(line: str, min_count: int, width: int = 8) -> list[int]:
    toks = _tokens(line)
    try:
        vals = [int(t) for t in toks]
        if len(vals) >= min_count:
            return vals
    except ValueError:
        pass
    toks = _fixed(line, [width] * (len(line) // width + 1))
    return [int(t) for t in toks]


def read_keyword(path) -> KeywordDoc:
    """Parse the node and element cards of a keyword file; other cards are skipped."""
    path = Path(path)
    section = None
    nodes, shells, solids = [], [], []
    with path.open() as fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.rstrip("\n")
            stripped = line.strip()
            if not stripped or stripped.startswith("$"):
                continue
            if stripped.startswith("*"):
                card = stripped.split()[0].upper()
                if card == "*NODE":
                    section = "node"
                elif card.startswith("*ELEMENT_SHELL"):
                    section = "shell"
                elif card.startswith("*ELEMENT_SOLID"):
                    section = "solid"
                else:
                    section = None
                continue
            if section is None:
                continue
            try:
                if section == "node":
                    nodes.append(_parse_node(line))
                elif section == "shell":
                    vals = _parse_ints(line, 5)
                    if len(vals) == 5:
                        vals.append(vals[-1])
                    if len(vals) < 6:
                        raise ValueError("shell record needs id, part and 3-4 nodes")
                    shells.append((lineno, vals[:6]))
                else:
                    vals = _parse_ints(line, 10)
                    if len(vals) < 10:
                        raise ValueError("solid record needs id, part and 8 nodes")
                    solids.append((lineno, vals[:10]))
            except (ValueError, IndexError) as exc:
                raise ParseError(str(exc) or "malformed record", path, lineno) from None

    doc = KeywordDoc()
    if nodes:
        arr = np.array(nodes, dtype=np.float64)
        doc.node_ids = arr[:, 0].astype(np.int64)
        doc.nodes = arr[:, 1:4]
        if len(np.unique(doc.node_ids)) != len(doc.node_ids):
            raise ParseError("duplicate node id", path)
    if shells:
        arr = np.array([v for _, v in shells], dtype=np.int64)
        doc.shell_ids, doc.shell_parts, doc.shells = arr[:, 0], arr[:, 1], arr[:, 2:6]
        if len(np.unique(doc.shell_ids)) != len(doc.shell_ids):
            raise ParseError("duplicate shell element id", path)
    if solids:
        arr = np.array([v for _, v in solids], dtype=np.int64)
        doc.solid_ids, doc.solid_parts, doc.solids = arr[:, 0], arr[:, 1], arr[:, 2:10]
        if len(np.unique(doc.solid_ids)) != len(doc.solid_ids):
            raise ParseError("duplicate solid element id", path)
    known = doc.node_index()
    for (lineno, vals) in shells + solids:
        for n in vals[2:]:
            if n != 0 and n not in known:
                raise ParseError(f"unknown node id {n}", path, lineno)
    return doc


def write_keyword(path, doc: KeywordDoc, title: str = "hexforge") -> None:
    """Free-format (comma separated) cards; coordinates use the shortest exact repr."""
    if len(doc.nodes) == 0 or (len(doc.shells) == 0 and len(doc.solids) == 0):
        raise ValidationError("refusing to write an empty mesh")
    lines = ["*KEYWORD", "*TITLE", title, "*NODE"]
    for nid, (x, y, z) in zip(doc.node_ids, doc.nodes):
        lines.append(f"{int(nid)},{float(x)!r},{float(y)!r},{float(z)!r}")
    if len(doc.shells):
        lines.append("*ELEMENT_SHELL")
        for eid, pid, n in zip(doc.shell_ids, doc.shell_parts, doc.shells):
            lines.append(",".join(str(int(v)) for v in (eid, pid, *n)))
    if len(doc.solids):
        lines.append("*ELEMENT_SOLID")
        for eid, pid, n in zip(doc.solid_ids, doc.solid_parts, doc.solids):
            lines.append(",".join(str(int(v)) for v in (eid, pid, *n)))
    lines.append("*END")
    Path(path).write_text("\n".join(lines) + "\n")


def read_keyword_tri(path) -> tuple[TriMesh, np.ndarray]:
    """Triangle surface plus per-triangle part ids (patch labels).

    Node and element ids are remapped to dense 0-based indices; the original
    ids stay on the mesh as ``node_ids`` / ``elem_ids``.
    """
    doc = read_keyword(path)
    if len(doc.solids):
        raise MixedElementError("solid elements in a surface mesh file", path)
    shells = doc.shells
    is_tri = (shells[:, 3] == shells[:, 2]) | (shells[:, 3] == 0)
    if not np.all(is_tri):
        raise MixedElementError("quadrilateral shells in a triangle mesh file", path)
    index = doc.node_index()
    tris = np.array([[index[int(n)] for n in row[:3]] for row in shells], dtype=np.int64).reshape(-1, 3)
    mesh = TriMesh(doc.nodes, tris, node_ids=doc.node_ids.copy(), elem_ids=doc.shell_ids.copy())
    return mesh, doc.shell_parts.copy()


def write_keyword_tri(mesh: TriMesh, labels, path) -> None:
    if mesh.n_vertices == 0 or mesh.n_triangles == 0:
        raise ValidationError("refusing to write an empty mesh")
    labels = np.asarray(labels, dtype=np.int64)
    if len(labels) != mesh.n_triangles:
        raise ValidationError("one label per triangle required")
    node_ids = mesh.node_ids if mesh.node_ids is not None else np.arange(1, mesh.n_vertices + 1)
    elem_ids = mesh.elem_ids if mesh.elem_ids is not None else np.arange(1, mesh.n_triangles + 1)
    t = node_ids[mesh.triangles]
    doc = KeywordDoc(
        node_ids=node_ids, nodes=mesh.vertices,
        shell_ids=elem_ids, shell_parts=labels,
        shells=np.column_stack([t, t[:, 2]]),
    )
    write_keyword(path, doc)


def write_keyword_quads(path, vertices, quads, part_ids=None, node_ids=None, solids=None) -> None:
    """Quad shells (and optional hex solids) over ``vertices``.

    Node ids default to index + 1.
    """
    vertices = np.asarray(vertices, dtype=np.float64).reshape(-1, 3)
    quads = np.asarray(quads, dtype=np.int64).reshape(-1, 4)
    node_ids = np.arange(1, len(vertices) + 1) if node_ids is None else np.asarray(node_ids)
    part_ids = np.ones(len(quads), dtype=np.int64) if part_ids is None else np.asarray(part_ids)
    doc = KeywordDoc(
        node_ids=node_ids, nodes=vertices,
        shell_ids=np.arange(1, len(quads) + 1), shell_parts=part_ids, shells=node_ids[quads] if len(quads) else quads,
    )
    if solids is not None and len(solids):
        solids = np.asarray(solids, dtype=np.int64).reshape(-1, 8)
        doc.solid_ids = np.arange(1, len(solids) + 1)
        doc.solid_parts = np.ones(len(solids), dtype=np.int64)
        doc.solids = node_ids[solids]
    write_keyword(path, doc)


# ---------------------------------------------------------------------------
# legacy VTK

def write_vtk_hex(mesh: HexMesh, path, cell_data: dict | None = None,
                  title: str = "hexforge hex mesh") -> None:
    lines = ["# vtk DataFile Version 3.0", title, "ASCII", "DATASET UNSTRUCTURED_GRID"]
    lines.append(f"POINTS {mesh.n_vertices} double")
    lines.extend(" ".join(f"{v:.17g}" for v in p) for p in mesh.vertices)
    lines.append(f"CELLS {mesh.n_cells} {9 * mesh.n_cells}")
    lines.extend("8 " + " ".join(str(int(i)) for i in c) for c in mesh.cells)
    lines.append(f"CELL_TYPES {mesh.n_cells}")
    lines.extend([str(VTK_HEXAHEDRON)] * mesh.n_cells)
    if cell_data:
        lines.append(f"CELL_DATA {mesh.n_cells}")
        for name, values in cell_data.items():
            values = np.asarray(values)
            kind = "int" if np.issubdtype(values.dtype, np.integer) else "double"
            lines.append(f"SCALARS {name} {kind} 1")
            lines.append("LOOKUP_TABLE default")
            if kind == "int":
                lines.extend(str(int(v)) for v in values)
            else:
                lines.extend(f"{float(v):.17g}" for v in values)
    Path(path).write_text("\n".join(lines) + "\n")


def read_vtk_hex(path, return_cell_data: bool = False):
    """Read a legacy ASCII unstructured grid made of hexahedra."""
    path = Path(path)
    text = path.read_text().splitlines()
    if len(text) < 4 or not text[0].lower().startswith("# vtk datafile"):
        raise ParseError("not a legacy VTK file", path, 1)
    if text[2].strip().upper() != "ASCII":
        raise ParseError("only ASCII legacy VTK is supported", path, 3)
    tokens: list[tuple[str, int]] = []
    for lineno, line in enumerate(text[3:], start=4):
        tokens.extend((t, lineno) for t in line.split())
    pos = 0

    def take(n=1):
        nonlocal pos
        if pos + n > len(tokens):
            raise ParseError("unexpected end of file", path, tokens[-1][1] if tokens else None)
        out = tokens[pos:pos + n]
        pos += n
        return out

    points = cells = types = None
    cell_data = {}
    while pos < len(tokens):
        word, lineno = take()[0]
        key = word.upper()
        try:
            if key == "DATASET":
                kind = take()[0][0].upper()
                if kind != "UNSTRUCTURED_GRID":
                    raise ParseError(f"dataset {kind} is not an unstructured grid", path, lineno)
            elif key == "POINTS":
                n = int(take()[0][0])
                take()
                points = np.array([float(t) for t, _ in take(3 * n)]).reshape(n, 3)
            elif key == "CELLS":
                n, size = int(take()[0][0]), int(take()[0][0])
                raw = [int(t) for t, _ in take(size)]
                conn, i = [], 0
                for _ in range(n):
                    k = raw[i]
                    if k != 8:
                        raise UnsupportedCellType(f"cell with {k} points", path, lineno)
                    conn.append(raw[i + 1:i + 9])
                    i += k + 1
                cells = np.array(conn, dtype=np.int64).reshape(-1, 8)
            elif key == "CELL_TYPES":
                n = int(take()[0][0])
                types = np.array([int(t) for t, _ in take(n)])
                bad = np.flatnonzero(types != VTK_HEXAHEDRON)
                if len(bad):
                    raise UnsupportedCellType(f"cell type {types[bad[0]]} (only 12 = hexahedron)", path, lineno)
            elif key == "CELL_DATA":
                n = int(take()[0][0])
                while pos < len(tokens) and tokens[pos][0].upper() == "SCALARS":
                    take()
                    name, dtype = take()[0][0], take()[0][0]
                    if pos < len(tokens) and tokens[pos][0].isdigit():
                        take()
                    if pos < len(tokens) and tokens[pos][0].upper() == "LOOKUP_TABLE":
                        take(2)
                    vals = [t for t, _ in take(n)]
                    if dtype.lower() in ("int", "long", "short", "unsigned_int", "unsigned_long"):
                        cell_data[name] = np.array([int(v) for v in vals], dtype=np.int64)
                    else:
                        cell_data[name] = np.array([float(v) for v in vals])
            elif key in ("POINT_DATA", "FIELD", "METADATA"):
                break
        except ParseError:
            raise
        except ValueError as exc:
            raise ParseError(str(exc), path, lineno) from None
    if points is None or cells is None:
        raise ParseError("missing POINTS or CELLS section", path)
    if types is not None and len(types) != len(cells):
        raise ParseError("CELL_TYPES count differs from CELLS", path)
    mesh = HexMesh(points, cells)
    return (mesh, cell_data) if return_cell_data else mesh


# ---------------------------------------------------------------------------
# integer list files

def _read_int_rows(path) -> list[tuple[int, list[int]]]:
    rows = []
    with Path(path).open() as fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            try:
                rows.append((lineno, [int(t) for t in _tokens(line)]))
            except ValueError:
                raise ParseError(f"expected integers, got {line!r}", path, lineno) from None
    return rows


@dataclass
class OverrideList:
    elements: np.ndarray
    targets: np.ndarray

    def __len__(self):
        return len(self.elements)


def read_override(path) -> OverrideList:
    """Rows of ``element target_patch``."""
    seen: dict[int, int] = {}
    for lineno, vals in _read_int_rows(path):
        if len(vals) != 2:
            raise ParseError(f"override rows need 2 values, got {len(vals)}", path, lineno)
        elem, target = vals
        if elem in seen:
            msg = f"{path}:{lineno}: element {elem} listed more than once"
            if seen[elem] != target:
                msg += f"; keeping the later target {target}"
            warnings.warn(msg, stacklevel=2)
        seen[elem] = target
    elems = np.array(list(seen.keys()), dtype=np.int64)
    return OverrideList(elems, np.array([seen[int(e)] for e in elems], dtype=np.int64))


def _read_index_list(path, what: str) -> np.ndarray:
    values = [v for _, vals in _read_int_rows(path) for v in vals]
    uniq, first = np.unique(np.array(values, dtype=np.int64), return_index=True)
    if len(uniq) != len(values):
        warnings.warn(f"{path}: {len(values) - len(uniq)} duplicate {what} indices dropped", stacklevel=3)
    return np.array(values, dtype=np.int64)[np.sort(first)]


def read_sharp(path) -> np.ndarray:
    """Vertex indices on sharp features (0-based point ids)."""
    return _read_index_list(path, "sharp vertex")


@dataclass
class RefineList:
    levels: dict[int, np.ndarray] = field(default_factory=dict)

    def merged(self, other: "RefineList") -> "RefineList":
        out = dict(self.levels)
        for lev, cells in other.levels.items():
            prev = out.get(lev, np.zeros(0, dtype=np.int64))
            out[lev] = np.unique(np.concatenate([prev, cells]))
        return RefineList(out)

    @property
    def max_level(self) -> int:
        return max(self.levels) if self.levels else -1


def read_refine(path, level: int = 0) -> RefineList:
    """Cells to refine.

    A row with one value is a cell index at ``level``; a row with two values
    is ``level cell``, so one file can describe several levels.
    """
    per_level: dict[int, list[int]] = {}
    for lineno, vals in _read_int_rows(path):
        if len(vals) == 1:
            lev, cell = int(level), vals[0]
        elif len(vals) == 2:
            lev, cell = vals
        else:
            raise ParseError(f"refine rows need 1 or 2 values, got {len(vals)}", path, lineno)
        if lev < 0:
            raise ParseError(f"negative level {lev}", path, lineno)
        per_level.setdefault(lev, []).append(cell)
    out = {}
    for lev, cells in sorted(per_level.items()):
        arr = np.array(cells, dtype=np.int64)
        uniq = np.unique(arr)
        if len(uniq) != len(arr):
            warnings.warn(f"{path}: {len(arr) - len(uniq)} duplicate cell indices dropped at level {lev}", stacklevel=2)
        out[lev] = uniq
    return RefineList(out)


# ---------------------------------------------------------------------------
# polycube files

def write_polycube_files(structure, corner_path, edge_path, face_path) -> None:
    """Corner rows ``id x y z``, edge rows ``a,b``, face rows ``a,b,c,d``."""
    Path(corner_path).write_text("".join(
        f"{int(i)} {format_coord(p[0])} {format_coord(p[1])} {format_coord(p[2])}\n"
        for i, p in zip(structure.corner_ids, structure.corner_xyz)
    ))
    Path(edge_path).write_text("".join(f"{int(a)},{int(b)}\n" for a, b in structure.edges))
    Path(face_path).write_text("".join(",".join(str(int(v)) for v in q) + "\n" for q in structure.quads))


def read_corner_file(path) -> tuple[np.ndarray, np.ndarray]:
    ids, xyz = [], []
    with Path(path).open() as fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            toks = _tokens(line)
            if len(toks) != 4:
                raise ParseError(f"corner rows need 4 values, got {len(toks)}", path, lineno)
            try:
                ids.append(int(toks[0]))
                xyz.append([float(t) for t in toks[1:]])
            except ValueError:
                raise ParseError(f"malformed corner row {line!r}", path, lineno) from None
    return np.array(ids, dtype=np.int64), np.array(xyz, dtype=np.float64).reshape(-1, 3)


def _read_fixed_rows(path, width: int, what: str) -> np.ndarray:
    rows = []
    for lineno, vals in _read_int_rows(path):
        if len(vals) != width:
            raise ParseError(f"{what} rows need {width} values, got {len(vals)}", path, lineno)
        rows.append(vals)
    return np.array(rows, dtype=np.int64).reshape(-1, width)


def read_edge_file(path) -> np.ndarray:
    return _read_fixed_rows(path, 2, "edge")


def read_face_file(path) -> np.ndarray:
    return _read_fixed_rows(path, 4, "face")


def read_cell_file(path) -> np.ndarray:
    """Polycube cells, 8 corner ids per row in hexahedron order."""
    return _read_fixed_rows(path, 8, "cell")


# ---------------------------------------------------------------------------
# BEXT

@dataclass
class BextElement:
    indices: np.ndarray   # global control point index per matrix row
    matrix: np.ndarray    # (len(indices), 64): Bernstein coefficients of each function


@dataclass
class BextDoc:
    control_points: np.ndarray  # (n, 4): x, y, z, weight
    elements: list[BextElement] = field(default_factory=list)
    degree: tuple[int, int, int] = (3, 3, 3)


def _num(v: float) -> str:
    return f"{float(v):.16e}"


def bext_row(row: np.ndarray) -> str:
    """One extraction row: ``s <nnz> (col val)*`` if it has fewer than 20 non-zeros, else ``d val*``."""
    nz = np.flatnonzero(row)
    if len(nz) < BEXT_SPARSE_LIMIT:
        return "s " + str(len(nz)) + "".join(f" {int(c)} {_num(row[c])}" for c in nz)
    return "d " + " ".join(_num(v) for v in row)


def write_bext(doc: BextDoc, path) -> None:
    """Write the BEXT grammar::

        type plain
        nodeN <n>
        elemN <m>
        gi <x> <y> <z> <w>                 (n rows)
        belem <k> <p> <q> <r>              (per element)
        <k global control point indices, 0-based>
        <k extraction rows>
    """
    cps = np.asarray(doc.control_points, dtype=np.float64).reshape(-1, 4)
    if not np.all(np.isfinite(cps)):
        raise ValidationError("non-finite control point")
    p, q, r = doc.degree
    lines = ["type plain", f"nodeN {len(cps)}", f"elemN {len(doc.elements)}"]
    lines.extend("gi " + " ".join(_num(v) for v in cp) for cp in cps)
    for el in doc.elements:
        idx = np.asarray(el.indices, dtype=np.int64)
        mat = np.asarray(el.matrix, dtype=np.float64)
        if mat.shape != (len(idx), (p + 1) * (q + 1) * (r + 1)):
            raise ValidationError(f"extraction matrix shape {mat.shape} does not match {len(idx)} functions")
        if not np.all(np.isfinite(mat)):
            raise ValidationError("non-finite extraction coefficient")
        if len(idx) and (idx.min() < 0 or idx.max() >= len(cps)):
            raise ValidationError("element references an unknown control point")
        lines.append(f"belem {len(idx)} {p} {q} {r}")
        lines.append(" ".join(str(int(i)) for i in idx))
        lines.extend(bext_row(row) for row in mat)
    Path(path).write_text("\n".join(lines) + "\n")
