"""Synthetic meshes used as fixtures by the tests, the examples and the CLI demo."""

from __future__ import annotations

import numpy as np

from .mesh import HEX_CORNER_IJK, HexMesh, TriMesh, boundary_surface


def structured_hex_grid(nx: int, ny: int, nz: int, size=(1.0, 1.0, 1.0), origin=(0.0, 0.0, 0.0)) -> HexMesh:
    """Axis-aligned box split into ``nx * ny * nz`` cells.

    Vertex ``(i, j, k)`` has index ``i + (nx+1) * (j + (ny+1) * k)``; cells are
    numbered with ``i`` fastest.
    """
    xs = np.linspace(0.0, size[0], nx + 1) + origin[0]
    ys = np.linspace(0.0, size[1], ny + 1) + origin[1]
    zs = np.linspace(0.0, size[2], nz + 1) + origin[2]
    Z, Y, X = np.meshgrid(zs, ys, xs, indexing="ij")
    verts = np.column_stack([X.ravel(), Y.ravel(), Z.ravel()])

    def vid(i, j, k):
        return i + (nx + 1) * (j + (ny + 1) * k)

    k, j, i = np.meshgrid(np.arange(nz), np.arange(ny), np.arange(nx), indexing="ij")
    i, j, k = i.ravel(), j.ravel(), k.ravel()
    cells = np.column_stack([vid(i + a, j + b, k + c) for a, b, c in HEX_CORNER_IJK])
    return HexMesh(verts, cells)


def _compact(vertices, elems):
    used, inv = np.unique(elems, return_inverse=True)
    return vertices[used], inv.reshape(elems.shape)


def quads_to_triangles(quads: np.ndarray) -> np.ndarray:
    return np.concatenate([quads[:, [0, 1, 2]], quads[:, [0, 2, 3]]]).reshape(2, -1, 3).transpose(1, 0, 2).reshape(-1, 3)


def hex_boundary_triangles(mesh: HexMesh) -> TriMesh:
    """Outward triangulated boundary of a hex mesh (two triangles per quad)."""
    surf = boundary_surface(mesh)
    verts, quads = _compact(mesh.vertices, surf.quads)
    return TriMesh(verts, quads_to_triangles(quads))


def cube_surface(n: int = 1, size: float = 1.0) -> TriMesh:
    """Closed outward triangulation of ``[0, size]^3`` with ``n x n`` quads per face.

    ``n = 1`` gives the classic 8-vertex, 12-triangle cube.
    """
    return hex_boundary_triangles(structured_hex_grid(n, n, n, (size, size, size)))


def box_surface(nx, ny, nz, size=(1.0, 1.0, 1.0)) -> TriMesh:
    return hex_boundary_triangles(structured_hex_grid(nx, ny, nz, size))


def axis_labels(mesh: TriMesh) -> np.ndarray:
    """Region id 0..5 (+X, -X, +Y, -Y, +Z, -Z) of the closest axis to each normal."""
    n = mesh.normals
    axis = np.argmax(np.abs(n), axis=1)
    sign = np.take_along_axis(n, axis[:, None], axis=1)[:, 0] < 0
    return 2 * axis + sign.astype(np.int64)


def noisy_cube(n: int = 6, degrees: float = 5.0, seed: int = 0) -> TriMesh:
    """Cube surface whose vertices are jittered so face normals tilt by a few degrees."""
    mesh = cube_surface(n)
    rng = np.random.default_rng(seed)
    h = 1.0 / n
    amp = 0.33 * h * np.tan(np.radians(degrees))
    v = mesh.vertices.copy()
    on_face = np.isclose(v, 0.0) | np.isclose(v, 1.0)
    # move only along the directions the vertex is free in, so faces stay faces
    for axis in range(3):
        free = ~on_face[:, axis]
        v[free, axis] += rng.uniform(-amp, amp, size=free.sum())
    fixed_count = on_face.sum(axis=1)
    for axis in range(3):
        move = on_face[:, axis] & (fixed_count == 1)
        v[move, axis] += rng.uniform(-amp, amp, size=move.sum())
    return TriMesh(v, mesh.triangles)


def icosphere(subdivisions: int = 2, radius: float = 1.0) -> TriMesh:
    t = (1.0 + 5 ** 0.5) / 2.0
    verts = [(-1, t, 0), (1, t, 0), (-1, -t, 0), (1, -t, 0), (0, -1, t), (0, 1, t),
             (0, -1, -t), (0, 1, -t), (t, 0, -1), (t, 0, 1), (-t, 0, -1), (-t, 0, 1)]
    faces = [(0, 11, 5), (0, 5, 1), (0, 1, 7), (0, 7, 10), (0, 10, 11), (1, 5, 9), (5, 11, 4),
             (11, 10, 2), (10, 7, 6), (7, 1, 8), (3, 9, 4), (3, 4, 2), (3, 2, 6), (3, 6, 8),
             (3, 8, 9), (4, 9, 5), (2, 4, 11), (6, 2, 10), (8, 6, 7), (9, 8, 1)]
    verts = [np.array(v, dtype=float) / np.linalg.norm(v) for v in verts]
    for _ in range(subdivisions):
        cache: dict = {}
        new_faces = []

        def mid(a, b):
            key = (min(a, b), max(a, b))
            if key not in cache:
                m = verts[a] + verts[b]
                verts.append(m / np.linalg.norm(m))
                cache[key] = len(verts) - 1
            return cache[key]

        for a, b, c in faces:
            ab, bc, ca = mid(a, b), mid(b, c), mid(c, a)
            new_faces += [(a, ab, ca), (b, bc, ab), (c, ca, bc), (ab, bc, ca)]
        faces = new_faces
    return TriMesh(radius * np.array(verts), np.array(faces))


def square_patch(n: int = 8, size: float = 1.0) -> TriMesh:
    """Flat ``[0, size]^2`` patch in the z = 0 plane, counter-clockwise triangles."""
    xs = np.linspace(0.0, size, n + 1)
    Y, X = np.meshgrid(xs, xs, indexing="ij")
    verts = np.column_stack([X.ravel(), Y.ravel(), np.zeros(X.size)])
    j, i = np.meshgrid(np.arange(n), np.arange(n), indexing="ij")
    v0 = (i + (n + 1) * j).ravel()
    quads = np.column_stack([v0, v0 + 1, v0 + n + 2, v0 + n + 1])
    return TriMesh(verts, quads_to_triangles(quads))


def hemisphere_patch(n: int = 12, radius: float = 1.0) -> tuple[TriMesh, list[int]]:
    """Upper hemisphere as a square grid pushed onto the sphere.

    Returns the mesh and its four corner vertices (on the equator, at 45 degree
    offsets) in counter-clockwise order seen from above.
    """
    flat = square_patch(n, 2.0)
    u = flat.vertices[:, 0] - 1.0
    v = flat.vertices[:, 1] - 1.0
    # square -> disk, then lift to the sphere
    x = u * np.sqrt(1.0 - v ** 2 / 2.0)
    y = v * np.sqrt(1.0 - u ** 2 / 2.0)
    r2 = np.clip(x ** 2 + y ** 2, 0.0, 1.0)
    z = np.sqrt(1.0 - r2)
    verts = radius * np.column_stack([x, y, z])
    corners = [0, n, (n + 1) * (n + 1) - 1, n * (n + 1)]
    return TriMesh(verts, flat.triangles), corners


def l_block(n: int = 2) -> HexMesh:
    """L-shaped block: a ``2n x 2n x n`` grid with one ``n x n x n`` quadrant removed."""
    grid = structured_hex_grid(2 * n, 2 * n, n, (2.0, 2.0, 1.0))
    centers = grid.vertices[grid.cells].mean(axis=1)
    keep = ~((centers[:, 0] > 1.0) & (centers[:, 1] > 1.0))
    verts, cells = _compact(grid.vertices, grid.cells[keep])
    return HexMesh(verts, cells)


def l_prism_surface() -> tuple[TriMesh, np.ndarray]:
    """Triangulated L-shaped prism with one label per planar face (8 faces)."""
    block = l_block(1)
    surf = hex_boundary_triangles(block)
    n = surf.normals
    c = surf.vertices[surf.triangles].mean(axis=1)
    keys = []
    for normal, centre in zip(n, c):
        axis = int(np.argmax(np.abs(normal)))
        keys.append((axis, round(float(np.sign(normal[axis])), 0), round(float(centre[axis]), 6)))
    uniq = sorted(set(keys))
    labels = np.array([uniq.index(k) + 1 for k in keys], dtype=np.int64)
    return surf, labels


def valence3_mesh(splits: int = 2, layers: int = 5, height: float = 1.0) -> HexMesh:
    """Extruded 2D mesh with one valence-3 interior vertex.

    A triangle is cut into three quads around its centroid; each quad is split
    into a ``2^splits`` square grid and the result is extruded in ``layers``
    layers. The vertical edges through the centroid are shared by three cells.
    """
    tri = np.array([[0.0, 0.0], [1.0, 0.0], [0.5, np.sqrt(3.0) / 2.0]])
    cen = tri.mean(axis=0)
    m = 2 ** splits
    pts: dict = {}
    quads2d = []

    def pid(p):
        key = (round(p[0], 12), round(p[1], 12))
        if key not in pts:
            pts[key] = len(pts)
        return pts[key]

    for a in range(3):
        b, c = (a + 1) % 3, (a + 2) % 3
        # quad: corner a, midpoint ab, centroid, midpoint ca (counter-clockwise)
        q = np.array([tri[a], (tri[a] + tri[b]) / 2, cen, (tri[a] + tri[c]) / 2])
        for j in range(m):
            for i in range(m):
                def bil(s, t):
                    return (1 - s) * (1 - t) * q[0] + s * (1 - t) * q[1] + s * t * q[2] + (1 - s) * t * q[3]
                corners = [bil(i / m, j / m), bil((i + 1) / m, j / m), bil((i + 1) / m, (j + 1) / m), bil(i / m, (j + 1) / m)]
                quads2d.append([pid(p) for p in corners])
    xy = np.zeros((len(pts), 2))
    for key, idx in pts.items():
        xy[idx] = key
    quads2d = np.array(quads2d)
    nv = len(xy)
    zs = np.linspace(0.0, height, layers + 1)
    verts = np.concatenate([np.column_stack([xy, np.full(nv, z)]) for z in zs])
    cells = []
    for l in range(layers):
        lo, hi = l * nv, (l + 1) * nv
        for q in quads2d:
            cells.append([*(q + lo), *(q + hi)])
    return HexMesh(verts, np.array(cells))


def stacked_cubes_surface(n: int = 2) -> tuple[TriMesh, np.ndarray]:
    """``1 x 1 x 2`` box whose side faces are split at ``z = 1``: ten planar patches."""
    surf = box_surface(n, n, 2 * n, (1.0, 1.0, 2.0))
    region = axis_labels(surf)
    zc = surf.vertices[surf.triangles][:, :, 2].mean(axis=1)
    side = region < 4
    labels = region + 1
    labels[side & (zc > 1.0)] = region[side & (zc > 1.0)] + 7
    # relabel to 1..10 in sorted order
    uniq = np.unique(labels)
    return surf, np.searchsorted(uniq, labels) + 1


def perturbed_grid(n: int = 3, vertex=(1, 1, 1), offset=(0.3, 0.3, 0.3)) -> HexMesh:
    """``n^3`` grid with one vertex displaced by ``offset`` (in cell widths)."""
    grid = structured_hex_grid(n, n, n)
    i, j, k = vertex
    vid = i + (n + 1) * (j + (n + 1) * k)
    grid.vertices[vid] += np.asarray(offset) / n
    return grid
