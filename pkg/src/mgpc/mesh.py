"""Triangulated 2-manifold container and file IO.

Meshes are loaded from OFF or ASCII PLY files, validated (index range,
degenerate triangles, manifold edge condition) and enriched with the
per-vertex lumped areas and boundary flags that every downstream module
relies on.
"""
from __future__ import annotations

import logging
from typing import Iterable, Optional

import numpy as np

from .errors import (
    DegenerateGeometryError,
    MeshFormatError,
    MeshValidationError,
)

_LOGGER = logging.getLogger(__name__)

_AREA_EPS = 1e-14


class TriangleMesh:
    """Immutable triangle surface mesh.

    Attributes
    ----------
    vertices : (n, 3) float array
        Vertex coordinates (dimensionless after normalization).
    triangles : (m, 3) int array
        Vertex index triples.
    vertex_areas : (n,) float array
        Barycentric lumped areas: one third of the incident triangle areas.
    boundary_mask : (n,) bool array
        True for vertices lying on an edge with exactly one incident triangle.
    """

    def __init__(self, vertices, triangles):
        vertices = np.asarray(vertices, dtype=np.float64)
        triangles = np.asarray(triangles, dtype=np.int64)
        if vertices.ndim != 2 or vertices.shape[1] != 3:
            raise MeshValidationError(
                f"vertices must be (n, 3), got {vertices.shape}"
            )
        if triangles.ndim != 2 or triangles.shape[1] != 3:
            raise MeshValidationError(
                f"triangles must be (m, 3), got {triangles.shape}"
            )

        n = vertices.shape[0]
        if triangles.size:
            if triangles.min() < 0 or triangles.max() >= n:
                bad = int(np.flatnonzero(
                    (triangles < 0).any(axis=1) | (triangles >= n).any(axis=1)
                )[0])
                raise MeshValidationError(
                    f"triangle {bad} references a vertex outside [0, {n})"
                )

        areas = _triangle_areas(vertices, triangles)
        degenerate = np.flatnonzero(areas <= _AREA_EPS)
        if degenerate.size:
            raise MeshValidationError(
                f"degenerate (zero-area) triangle {int(degenerate[0])}"
            )

        edges, counts = _edge_counts(triangles)
        over = np.flatnonzero(counts > 2)
        if over.size:
            a, b = edges[over[0]]
            raise MeshValidationError(
                f"non-manifold edge ({int(a)}, {int(b)}) shared by "
                f"{int(counts[over[0]])} triangles"
            )

        vertex_areas = np.zeros(n, dtype=np.float64)
        for k in range(3):
            np.add.at(vertex_areas, triangles[:, k], areas / 3.0)

        boundary_mask = np.zeros(n, dtype=bool)
        boundary_edges = edges[counts == 1]
        if boundary_edges.size:
            boundary_mask[np.unique(boundary_edges)] = True

        for arr in (vertices, triangles, areas, vertex_areas, boundary_mask):
            arr.setflags(write=False)

        self.vertices = vertices
        self.triangles = triangles
        self.triangle_areas = areas
        self.vertex_areas = vertex_areas
        self.boundary_mask = boundary_mask
        self._edges = edges
        self._edge_counts = counts

    @property
    def n_vertices(self) -> int:
        return self.vertices.shape[0]

    @property
    def n_triangles(self) -> int:
        return self.triangles.shape[0]

    @property
    def total_area(self) -> float:
        return float(self.triangle_areas.sum())

    @property
    def edges(self) -> np.ndarray:
        """Unique undirected edges, (e, 2) int array, each row sorted."""
        return self._edges

    @property
    def is_closed(self) -> bool:
        return not bool(self.boundary_mask.any())

    def mean_edge_length(self) -> float:
        seg = self.vertices[self._edges[:, 0]] - self.vertices[self._edges[:, 1]]
        return float(np.linalg.norm(seg, axis=1).mean())

    def with_vertices(self, vertices) -> "TriangleMesh":
        """New mesh with replaced coordinates, same connectivity."""
        return TriangleMesh(vertices, self.triangles)

    def __repr__(self) -> str:
        return (
            f"TriangleMesh(n_vertices={self.n_vertices}, "
            f"n_triangles={self.n_triangles}, closed={self.is_closed})"
        )


def _triangle_areas(vertices: np.ndarray, triangles: np.ndarray) -> np.ndarray:
    a = vertices[triangles[:, 0]]
    u = vertices[triangles[:, 1]] - a
    v = vertices[triangles[:, 2]] - a
    return 0.5 * np.linalg.norm(np.cross(u, v), axis=1)


def _edge_counts(triangles: np.ndarray):
    """Unique undirected edges and their triangle incidence counts."""
    if triangles.size == 0:
        return np.zeros((0, 2), dtype=np.int64), np.zeros(0, dtype=np.int64)
    raw = np.concatenate(
        [triangles[:, [0, 1]], triangles[:, [1, 2]], triangles[:, [2, 0]]]
    )
    raw.sort(axis=1)
    edges, counts = np.unique(raw, axis=0, return_counts=True)
    return edges, counts


# ---------------------------------------------------------------------------
# File readers / writers
# ---------------------------------------------------------------------------

def load_mesh(path, fmt: Optional[str] = None) -> TriangleMesh:
    """Load and validate a mesh from an OFF or ASCII PLY file.

    Parameters
    ----------
    path : str or Path
        Input file.
    fmt : {"off", "ply", None}
        File format; inferred from the extension when None.
    """
    mesh, _ = load_mesh_with_attributes(path, fmt=fmt)
    return mesh


def load_mesh_with_attributes(path, fmt: Optional[str] = None):
    """Like :func:`load_mesh` but also returns per-vertex scalar attributes.

    OFF files have no attributes; PLY files return every float vertex
    property beyond x, y, z keyed by property name.
    """
    fmt = _resolve_format(path, fmt)
    if fmt == "off":
        verts, tris = _read_off(path)
        attrs: dict[str, np.ndarray] = {}
    else:
        verts, tris, attrs = _read_ply_ascii(path)
    return TriangleMesh(verts, tris), attrs


def _resolve_format(path, fmt: Optional[str]) -> str:
    if fmt is not None:
        fmt = fmt.lower()
        if fmt not in ("off", "ply"):
            raise ValueError(f"unknown mesh format {fmt!r}")
        return fmt
    name = str(path).lower()
    if name.endswith(".off"):
        return "off"
    if name.endswith(".ply"):
        return "ply"
    raise ValueError(
        f"cannot infer mesh format from {path!r}; pass fmt='off' or 'ply'"
    )


def _data_lines(path):
    """Yield (line_number, stripped_line) skipping blanks and comments."""
    with open(path, "r") as fh:
        for lineno, line in enumerate(fh, start=1):
            stripped = line.strip()
            if not stripped or stripped.startswith("#"):
                continue
            yield lineno, stripped


def _read_off(path):
    lines = _data_lines(path)
    try:
        lineno, first = next(lines)
    except StopIteration:
        raise MeshFormatError("empty OFF file", line=1) from None

    # Header keyword may share the line with the counts ("OFF 8 12 0").
    tokens = first.split()
    if tokens[0].upper() != "OFF":
        raise MeshFormatError(f"expected OFF header, got {tokens[0]!r}", line=lineno)
    tokens = tokens[1:]
    if not tokens:
        try:
            lineno, counts_line = next(lines)
        except StopIteration:
            raise MeshFormatError("missing OFF count line", line=lineno) from None
        tokens = counts_line.split()
    if len(tokens) < 2:
        raise MeshFormatError("OFF count line needs vertex and face counts", line=lineno)
    try:
        n_verts, n_faces = int(tokens[0]), int(tokens[1])
    except ValueError:
        raise MeshFormatError(
            f"invalid OFF counts {tokens[:3]}", line=lineno
        ) from None

    verts = np.empty((n_verts, 3), dtype=np.float64)
    for i in range(n_verts):
        try:
            lineno, line = next(lines)
        except StopIteration:
            raise MeshFormatError(
                f"expected {n_verts} vertices, file ended after {i}", line=lineno
            ) from None
        parts = line.split()
        if len(parts) < 3:
            raise MeshFormatError(f"vertex line has {len(parts)} fields", line=lineno)
        try:
            verts[i] = [float(parts[0]), float(parts[1]), float(parts[2])]
        except ValueError:
            raise MeshFormatError(f"bad vertex coordinates {parts[:3]}", line=lineno) from None

    tris = np.empty((n_faces, 3), dtype=np.int64)
    for i in range(n_faces):
        try:
            lineno, line = next(lines)
        except StopIteration:
            raise MeshFormatError(
                f"expected {n_faces} faces, file ended after {i}", line=lineno
            ) from None
        parts = line.split()
        try:
            arity = int(parts[0])
        except (ValueError, IndexError):
            raise MeshFormatError(f"bad face line {line!r}", line=lineno) from None
        if arity != 3:
            raise MeshFormatError(
                f"only triangles supported, face has {arity} vertices", line=lineno
            )
        if len(parts) < 4:
            raise MeshFormatError("face line truncated", line=lineno)
        try:
            tris[i] = [int(parts[1]), int(parts[2]), int(parts[3])]
        except ValueError:
            raise MeshFormatError(f"bad face indices {parts[1:4]}", line=lineno) from None

    return verts, tris


def _read_ply_ascii(path):
    lines = _data_lines(path)
    lineno, magic = next(lines, (1, ""))
    if magic != "ply":
        raise MeshFormatError(f"expected 'ply' magic, got {magic!r}", line=lineno)
    lineno, fmt_line = next(lines, (lineno, ""))
    if not fmt_line.startswith("format ascii"):
        raise MeshFormatError(
            f"only ASCII PLY supported, got {fmt_line!r}", line=lineno
        )

    # Header: ordered elements, each with an ordered property list.
    elements: list[tuple[str, int, list[tuple[str, bool]]]] = []
    while True:
        try:
            lineno, line = next(lines)
        except StopIteration:
            raise MeshFormatError("PLY header not terminated", line=lineno) from None
        parts = line.split()
        if parts[0] == "comment":
            continue
        if parts[0] == "element":
            if len(parts) != 3:
                raise MeshFormatError(f"bad element line {line!r}", line=lineno)
            elements.append((parts[1], int(parts[2]), []))
        elif parts[0] == "property":
            if not elements:
                raise MeshFormatError("property before any element", line=lineno)
            is_list = parts[1] == "list"
            elements[-1][2].append((parts[-1], is_list))
        elif parts[0] == "end_header":
            break
        else:
            raise MeshFormatError(f"unexpected header token {parts[0]!r}", line=lineno)

    names = [e[0] for e in elements]
    if "vertex" not in names or "face" not in names:
        raise MeshFormatError("PLY must declare vertex and face elements", line=lineno)

    verts = None
    tris = None
    attrs: dict[str, np.ndarray] = {}
    for elem_name, count, props in elements:
        if elem_name == "vertex":
            prop_names = [p for p, is_list in props if not is_list]
            for needed in ("x", "y", "z"):
                if needed not in prop_names:
                    raise MeshFormatError(
                        f"vertex element lacks property {needed!r}", line=lineno
                    )
            rows = np.empty((count, len(prop_names)), dtype=np.float64)
            for i in range(count):
                try:
                    lineno, line = next(lines)
                except StopIteration:
                    raise MeshFormatError(
                        f"expected {count} vertices, file ended after {i}",
                        line=lineno,
                    ) from None
                parts = line.split()
                if len(parts) < len(prop_names):
                    raise MeshFormatError(
                        f"vertex line has {len(parts)} fields, need {len(prop_names)}",
                        line=lineno,
                    )
                try:
                    rows[i] = [float(p) for p in parts[: len(prop_names)]]
                except ValueError:
                    raise MeshFormatError(f"bad vertex row {line!r}", line=lineno) from None
            cols = {name: rows[:, k] for k, name in enumerate(prop_names)}
            verts = np.column_stack([cols["x"], cols["y"], cols["z"]])
            attrs = {
                name: col for name, col in cols.items() if name not in ("x", "y", "z")
            }
        elif elem_name == "face":
            tris = np.empty((count, 3), dtype=np.int64)
            for i in range(count):
                try:
                    lineno, line = next(lines)
                except StopIteration:
                    raise MeshFormatError(
                        f"expected {count} faces, file ended after {i}", line=lineno
                    ) from None
                parts = line.split()
                try:
                    arity = int(parts[0])
                except (ValueError, IndexError):
                    raise MeshFormatError(f"bad face line {line!r}", line=lineno) from None
                if arity != 3:
                    raise MeshFormatError(
                        f"only triangles supported, face has {arity} vertices",
                        line=lineno,
                    )
                try:
                    tris[i] = [int(parts[1]), int(parts[2]), int(parts[3])]
                except (ValueError, IndexError):
                    raise MeshFormatError(f"bad face indices in {line!r}", line=lineno) from None
        else:
            # Unknown element: skip its rows.
            for _ in range(count):
                next(lines, None)

    if verts is None or tris is None:
        raise MeshFormatError("PLY missing vertex or face data", line=lineno)
    return verts, tris, attrs


def write_ply(path, mesh: TriangleMesh, attributes: Optional[dict] = None) -> None:
    """Write an ASCII PLY with one float property per vertex attribute."""
    attributes = attributes or {}
    for name, values in attributes.items():
        values = np.asarray(values)
        if values.shape != (mesh.n_vertices,):
            raise ValueError(
                f"attribute {name!r} has shape {values.shape}, "
                f"expected ({mesh.n_vertices},)"
            )
    with open(path, "w") as fh:
        fh.write("ply\nformat ascii 1.0\n")
        fh.write(f"element vertex {mesh.n_vertices}\n")
        fh.write("property float x\nproperty float y\nproperty float z\n")
        for name in attributes:
            fh.write(f"property float {name}\n")
        fh.write(f"element face {mesh.n_triangles}\n")
        fh.write("property list uchar int vertex_indices\n")
        fh.write("end_header\n")
        cols = [mesh.vertices]
        if attributes:
            cols.append(np.column_stack([np.asarray(v, dtype=np.float64)
                                         for v in attributes.values()]))
        table = np.column_stack(cols)
        for row in table:
            fh.write(" ".join(repr(float(v)) for v in row) + "\n")
        for tri in mesh.triangles:
            fh.write(f"3 {tri[0]} {tri[1]} {tri[2]}\n")


def write_off(path, mesh: TriangleMesh) -> None:
    with open(path, "w") as fh:
        fh.write("OFF\n")
        fh.write(f"{mesh.n_vertices} {mesh.n_triangles} 0\n")
        for v in mesh.vertices:
            fh.write(f"{float(v[0])!r} {float(v[1])!r} {float(v[2])!r}\n")
        for tri in mesh.triangles:
            fh.write(f"3 {tri[0]} {tri[1]} {tri[2]}\n")


# ---------------------------------------------------------------------------
# Geometry operations
# ---------------------------------------------------------------------------

def normalize_coordinates(mesh: TriangleMesh) -> TriangleMesh:
    """Center at the origin and scale by the largest per-axis std.

    The standard deviation uses the population convention (divide by N).
    Applying the map twice is the identity to within round-off.
    """
    if mesh.n_vertices < 2:
        raise DegenerateGeometryError("normalization needs at least 2 vertices")
    centered = mesh.vertices - mesh.vertices.mean(axis=0)
    scale = float(centered.std(axis=0).max())
    if scale <= 0.0:
        raise DegenerateGeometryError("all vertices coincide; cannot normalize")
    return mesh.with_vertices(centered / scale)


def average_pairwise_geodesic(mesh: TriangleMesh, points, solver) -> float:
    """Mean geodesic distance over all unordered pairs of design points.

    ``solver`` provides per-source distance fields (see
    :class:`mgpc.geodesic.HeatGeodesicSolver`); the field sourced at the
    lower-indexed point of each pair is the one evaluated.
    """
    points = np.asarray(points, dtype=np.int64)
    if points.size < 2:
        raise ValueError("need at least 2 points")
    if np.unique(points).size != points.size:
        raise ValueError("duplicate vertex indices in point set")
    total = 0.0
    count = 0
    for i in range(points.size - 1):
        field = solver.field(int(points[i]))
        rest = points[i + 1:]
        total += float(field.distances[rest].sum())
        count += rest.size
    return total / count
