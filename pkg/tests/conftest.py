import numpy as np
import pytest

import mgpc
from mgpc import shapes


@pytest.fixture(scope="session")
def icosa():
    return shapes.icosahedron()


@pytest.fixture(scope="session")
def sphere2():
    """162-vertex unit icosphere."""
    return shapes.icosphere(2)


@pytest.fixture(scope="session")
def sphere3():
    """642-vertex unit icosphere."""
    return shapes.icosphere(3)


@pytest.fixture(scope="session")
def rectangle():
    return shapes.rectangle_grid(30, 20, 1.5, 1.0)


@pytest.fixture(scope="session")
def sphere2_basis(sphere2):
    return mgpc.build_basis(sphere2, 100)


@pytest.fixture(scope="session")
def sphere3_basis(sphere3):
    return mgpc.build_basis(sphere3, 256)


@pytest.fixture(scope="session")
def icosa_basis(icosa):
    """Full 12-mode spectrum of the icosahedron."""
    return mgpc.build_basis(icosa, 12)


@pytest.fixture(scope="session")
def sphere2_solver(sphere2):
    return mgpc.HeatGeodesicSolver(sphere2)


def single_triangle_mesh():
    return mgpc.TriangleMesh(
        [[0.0, 0.0, 0.0], [1.0, 0.0, 0.0], [0.0, 1.0, 0.0]],
        [[0, 1, 2]],
    )


@pytest.fixture
def right_triangle():
    return single_triangle_mesh()
