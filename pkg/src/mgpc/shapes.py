"""Synthetic benchmark meshes: icospheres and planar rectangles."""
from __future__ import annotations

import numpy as np

from .mesh import TriangleMesh


def icosahedron() -> TriangleMesh:
    """Regular icosahedron inscribed in the unit sphere."""
    phi = (1.0 + np.sqrt(5.0)) / 2.0
    verts = np.array(
        [
            [-1, phi, 0], [1, phi, 0], [-1, -phi, 0], [1, -phi, 0],
            [0, -1, phi], [0, 1, phi], [0, -1, -phi], [0, 1, -phi],
            [phi, 0, -1], [phi, 0, 1], [-phi, 0, -1], [-phi, 0, 1],
        ],
        dtype=np.float64,
    )
    verts /= np.linalg.norm(verts, axis=1)[:, None]
    tris = np.array(
        [
            [0, 11, 5], [0, 5, 1], [0, 1, 7], [0, 7, 10], [0, 10, 11],
            [1, 5, 9], [5, 11, 4], [11, 10, 2], [10, 7, 6], [7, 1, 8],
            [3, 9, 4], [3, 4, 2], [3, 2, 6], [3, 6, 8], [3, 8, 9],
            [4, 9, 5], [2, 4, 11], [6, 2, 10], [8, 6, 7], [9, 8, 1],
        ],
        dtype=np.int64,
    )
    return TriangleMesh(verts, tris)


def icosphere(subdivisions: int, radius: float = 1.0) -> TriangleMesh:
    """Icosahedron subdivided ``subdivisions`` times, projected to a sphere.

    Vertex count is 10 * 4**subdivisions + 2 (level 4 gives 2562).
    """
    if subdivisions < 0:
        raise ValueError("subdivisions must be >= 0")
    base = icosahedron()
    verts = [v for v in base.vertices]
    tris = base.triangles.tolist()
    for _ in range(subdivisions):
        midpoint_cache: dict[tuple[int, int], int] = {}

        def midpoint(i: int, j: int) -> int:
            key = (i, j) if i < j else (j, i)
            idx = midpoint_cache.get(key)
            if idx is None:
                m = 0.5 * (verts[i] + verts[j])
                m = m / np.linalg.norm(m)
                verts.append(m)
                idx = len(verts) - 1
                midpoint_cache[key] = idx
            return idx

        new_tris = []
        for a, b, c in tris:
            ab = midpoint(a, b)
            bc = midpoint(b, c)
            ca = midpoint(c, a)
            new_tris.extend(
                [[a, ab, ca], [b, bc, ab], [c, ca, bc], [ab, bc, ca]]
            )
        tris = new_tris
    vertices = np.asarray(verts) * radius
    return TriangleMesh(vertices, np.asarray(tris, dtype=np.int64))


def rectangle_grid(nx: int, ny: int, width: float = 1.0,
                   height: float = 1.0) -> TriangleMesh:
    """Planar rectangle in the z=0 plane, (nx+1)*(ny+1) vertices.

    Each grid cell is split along a consistent diagonal.
    """
    if nx < 1 or ny < 1:
        raise ValueError("nx and ny must be >= 1")
    xs = np.linspace(0.0, width, nx + 1)
    ys = np.linspace(0.0, height, ny + 1)
    gx, gy = np.meshgrid(xs, ys, indexing="ij")
    verts = np.column_stack([gx.ravel(), gy.ravel(), np.zeros(gx.size)])

    def vid(i: int, j: int) -> int:
        return i * (ny + 1) + j

    tris = []
    for i in range(nx):
        for j in range(ny):
            v00, v10 = vid(i, j), vid(i + 1, j)
            v01, v11 = vid(i, j + 1), vid(i + 1, j + 1)
            tris.append([v00, v10, v11])
            tris.append([v00, v11, v01])
    return TriangleMesh(verts, np.asarray(tris, dtype=np.int64))
