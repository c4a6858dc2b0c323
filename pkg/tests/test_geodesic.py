import numpy as np
import pytest

import mgpc
from mgpc import shapes
from mgpc.errors import DisconnectedMeshError
from mgpc.geodesic import HeatGeodesicSolver, heat_geodesics
from mgpc.mesh import TriangleMesh


@pytest.fixture(scope="module")
def big_sphere():
    return shapes.icosphere(5)  # 10242 vertices


def test_source_distance_zero(sphere2, sphere2_solver):
    field = sphere2_solver.field(17)
    assert field.source == 17
    assert field.distances[17] == 0.0
    assert (field.distances >= 0).all()
    assert np.isfinite(field.distances).all()


def test_antipodal_distance_on_sphere(big_sphere):
    solver = HeatGeodesicSolver(big_sphere)
    src = int(np.argmax(big_sphere.vertices[:, 2]))
    anti = int(np.argmin(big_sphere.vertices @ big_sphere.vertices[src]))
    field = solver.field(src)
    assert field.distances[anti] == pytest.approx(np.pi, rel=0.05)


def test_flat_rectangle_median_error():
    mesh = shapes.rectangle_grid(60, 40, 3.0, 2.0)
    solver = HeatGeodesicSolver(mesh)
    src = int(np.argmin(np.linalg.norm(mesh.vertices - [1.5, 1.0, 0], axis=1)))
    field = solver.field(src)
    exact = np.linalg.norm(mesh.vertices - mesh.vertices[src], axis=1)
    mask = exact > 0.05
    rel = np.abs(field.distances[mask] - exact[mask]) / exact[mask]
    assert np.median(rel) < 0.03


def test_symmetry_approximation(sphere3):
    solver = HeatGeodesicSolver(sphere3)
    rng = np.random.default_rng(0)
    for _ in range(5):
        a, b = rng.integers(0, sphere3.n_vertices, 2)
        if a == b:
            continue
        d_ab = solver.field(int(a)).distances[b]
        d_ba = solver.field(int(b)).distances[a]
        assert abs(d_ab - d_ba) / max(d_ab, d_ba) < 0.05


def test_scale_covariance(sphere2):
    base = HeatGeodesicSolver(sphere2).field(3).distances
    scaled_mesh = sphere2.with_vertices(sphere2.vertices * 7.5)
    scaled = HeatGeodesicSolver(scaled_mesh).field(3).distances
    np.testing.assert_allclose(scaled, 7.5 * base,
                               atol=1e-6 * 7.5 * base.max())


def test_triangle_inequality_sanity(sphere2, sphere2_solver):
    field = sphere2_solver.field(0)
    edges = sphere2.edges
    lengths = np.linalg.norm(
        sphere2.vertices[edges[:, 0]] - sphere2.vertices[edges[:, 1]], axis=1)
    lhs = field.distances[edges[:, 0]]
    rhs = field.distances[edges[:, 1]] + lengths
    assert (lhs <= rhs * 1.05 + 1e-12).all()


def test_disconnected_component_error():
    a = shapes.icosphere(0)
    b = shapes.icosphere(0)
    verts = np.vstack([a.vertices, b.vertices + [10.0, 0, 0]])
    tris = np.vstack([a.triangles, b.triangles + a.n_vertices])
    mesh = TriangleMesh(verts, tris)
    solver = HeatGeodesicSolver(mesh)
    with pytest.raises(DisconnectedMeshError, match="unreachable"):
        solver.field(0)


def test_one_shot_function_matches_solver(sphere2, sphere2_solver):
    np.testing.assert_array_equal(
        heat_geodesics(sphere2, 5).distances,
        sphere2_solver.field(5).distances)


def test_invalid_inputs(sphere2):
    with pytest.raises(ValueError):
        HeatGeodesicSolver(sphere2, t_factor=0.0)
    solver = HeatGeodesicSolver(sphere2)
    with pytest.raises(ValueError):
        solver.field(sphere2.n_vertices)


def test_field_cache(sphere2):
    solver = HeatGeodesicSolver(sphere2)
    f1 = solver.field(3, cache=False)
    assert 3 not in solver._cache
    f2 = solver.field(3)
    assert solver.field(3) is f2
    np.testing.assert_array_equal(f1.distances, f2.distances)
