import numpy as np
import pytest

import mgpc
from mgpc import shapes
from mgpc.errors import DegenerateGeometryError, MeshFormatError, MeshValidationError
from mgpc.mesh import TriangleMesh, load_mesh, load_mesh_with_attributes, write_off, write_ply


def test_single_triangle_geometry(right_triangle):
    assert right_triangle.n_vertices == 3
    assert right_triangle.n_triangles == 1
    assert right_triangle.total_area == pytest.approx(0.5)
    np.testing.assert_allclose(right_triangle.vertex_areas, [1 / 6] * 3)
    assert right_triangle.boundary_mask.all()


def test_vertex_areas_sum_to_total_area(sphere2):
    assert sphere2.vertex_areas.sum() == pytest.approx(
        sphere2.total_area, rel=1e-10)
    assert (sphere2.vertex_areas > 0).all()


def test_closed_mesh_has_empty_boundary(sphere2):
    assert not sphere2.boundary_mask.any()
    assert sphere2.is_closed


def test_rectangle_boundary(rectangle):
    assert rectangle.boundary_mask.any()
    # Interior vertices of a grid are not flagged.
    assert not rectangle.boundary_mask.all()


def test_out_of_range_index_rejected():
    with pytest.raises(MeshValidationError, match="outside"):
        TriangleMesh(np.zeros((10, 3)) + np.arange(30).reshape(10, 3),
                     [[0, 1, 999]])


def test_degenerate_triangle_rejected():
    verts = [[0, 0, 0], [1, 0, 0], [2, 0, 0]]  # collinear
    with pytest.raises(MeshValidationError, match="degenerate"):
        TriangleMesh(verts, [[0, 1, 2]])


def test_non_manifold_edge_rejected():
    verts = [[0, 0, 0], [1, 0, 0], [0, 1, 0], [0, 0, 1], [0, -1, 0]]
    tris = [[0, 1, 2], [0, 1, 3], [0, 1, 4]]  # edge (0,1) used 3 times
    with pytest.raises(MeshValidationError, match="non-manifold"):
        TriangleMesh(verts, tris)


def test_off_roundtrip(tmp_path, sphere2):
    path = tmp_path / "sphere.off"
    write_off(path, sphere2)
    again = load_mesh(path)
    np.testing.assert_allclose(again.vertices, sphere2.vertices)
    np.testing.assert_array_equal(again.triangles, sphere2.triangles)


def test_off_icosahedron_counts(tmp_path, icosa):
    path = tmp_path / "icosa.off"
    write_off(path, icosa)
    mesh = load_mesh(path)
    assert mesh.n_vertices == 12
    assert mesh.n_triangles == 20
    assert not mesh.boundary_mask.any()


def test_off_bad_index_reports_line(tmp_path):
    path = tmp_path / "bad.off"
    path.write_text("OFF\n3 1 0\n0 0 0\n1 0 0\n0 1 0\n3 0 1 999\n")
    with pytest.raises(MeshValidationError):
        load_mesh(path)


def test_off_parse_error_carries_line_number(tmp_path):
    path = tmp_path / "bad.off"
    path.write_text("OFF\n3 1 0\n0 0 zzz\n1 0 0\n0 1 0\n3 0 1 2\n")
    with pytest.raises(MeshFormatError, match="line 3"):
        load_mesh(path)


def test_off_quad_face_rejected(tmp_path):
    path = tmp_path / "quad.off"
    path.write_text(
        "OFF\n4 1 0\n0 0 0\n1 0 0\n1 1 0\n0 1 0\n4 0 1 2 3\n")
    with pytest.raises(MeshFormatError, match="triangles"):
        load_mesh(path)


def test_ply_roundtrip_with_attributes(tmp_path, rectangle):
    path = tmp_path / "rect.ply"
    prob = np.linspace(0, 1, rectangle.n_vertices)
    write_ply(path, rectangle, {"prob": prob})
    mesh, attrs = load_mesh_with_attributes(path)
    np.testing.assert_allclose(mesh.vertices, rectangle.vertices)
    np.testing.assert_array_equal(mesh.triangles, rectangle.triangles)
    np.testing.assert_allclose(attrs["prob"], prob)


def test_ply_rejects_binary(tmp_path):
    path = tmp_path / "bin.ply"
    path.write_text("ply\nformat binary_little_endian 1.0\nend_header\n")
    with pytest.raises(MeshFormatError, match="ASCII"):
        load_mesh(path)


def test_format_inference_unknown_extension(tmp_path):
    with pytest.raises(ValueError, match="infer"):
        load_mesh(tmp_path / "mesh.stl")


# -- normalize_coordinates ---------------------------------------------------

def test_normalize_two_points():
    # Bare point pair: centroid (1,0,0), x-std 1 under the population rule.
    mesh = TriangleMesh([[0, 0, 0], [2, 0, 0]], np.zeros((0, 3), dtype=int))
    out = mgpc.normalize_coordinates(mesh)
    np.testing.assert_allclose(out.vertices,
                               [[-1, 0, 0], [1, 0, 0]], atol=1e-15)


def test_normalize_idempotent(sphere2):
    once = mgpc.normalize_coordinates(sphere2)
    twice = mgpc.normalize_coordinates(once)
    np.testing.assert_allclose(twice.vertices, once.vertices, atol=1e-12)


def test_normalize_scale_invariance(sphere2):
    a = mgpc.normalize_coordinates(sphere2)
    b = mgpc.normalize_coordinates(sphere2.with_vertices(sphere2.vertices * 10))
    np.testing.assert_allclose(a.vertices, b.vertices, atol=1e-12)


def test_normalize_coincident_vertices_error():
    mesh_ok = shapes.icosphere(0)
    collapsed = mesh_ok.vertices * 0 + 1.0
    with pytest.raises(MeshValidationError):
        # degenerate triangles are rejected before normalization can run
        TriangleMesh(collapsed, mesh_ok.triangles)
    with pytest.raises(DegenerateGeometryError):
        mgpc.normalize_coordinates(_coincident_pair())


def _coincident_pair():
    # Bypass triangle validation: two coincident vertices, no triangles.
    return TriangleMesh(np.ones((2, 3)), np.zeros((0, 3), dtype=int))


# -- average_pairwise_geodesic ------------------------------------------------

def test_average_pairwise_antipodal(sphere3):
    solver = mgpc.HeatGeodesicSolver(sphere3)
    north = int(np.argmax(sphere3.vertices[:, 2]))
    south = int(np.argmin(sphere3.vertices[:, 2]))
    value = mgpc.average_pairwise_geodesic(sphere3, [north, south], solver)
    assert value == pytest.approx(np.pi, rel=0.05)


def test_average_pairwise_equidistant_triple(sphere2, sphere2_solver):
    # Any equilateral triple: mean of equal values is that value.
    north = int(np.argmax(sphere2.vertices[:, 2]))
    field = sphere2_solver.field(north)
    ring = np.argsort(np.abs(field.distances - 1.0))[:3]
    d = field.distances[ring]
    value = mgpc.average_pairwise_geodesic(sphere2, [north, int(ring[0])],
                                           sphere2_solver)
    assert value == pytest.approx(d[0], rel=0.05)


def test_average_pairwise_rejects_duplicates(sphere2, sphere2_solver):
    with pytest.raises(ValueError, match="duplicate"):
        mgpc.average_pairwise_geodesic(sphere2, [3, 3], sphere2_solver)


def test_average_pairwise_needs_two_points(sphere2, sphere2_solver):
    with pytest.raises(ValueError, match="2 points"):
        mgpc.average_pairwise_geodesic(sphere2, [3], sphere2_solver)
