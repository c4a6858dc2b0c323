import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

import mgpc
from mgpc.kernel import (
    KernelParams,
    gram_matrix,
    kernel_diag,
    matern_euclidean,
    matern_manifold,
    normalization_constant,
    spectral_weights,
)


def test_params_validation():
    with pytest.raises(ValueError):
        KernelParams(eta=0.0, ell=1.0)
    with pytest.raises(ValueError):
        KernelParams(eta=1.0, ell=-2.0)
    with pytest.raises(ValueError):
        KernelParams(eta=1.0, ell=1.0, kappa_convention="bogus")


def test_kappa_conventions():
    p = KernelParams(eta=1.0, ell=0.5, nu=1.5)
    assert p.kappa_squared == pytest.approx(4.0)
    p = KernelParams(eta=1.0, ell=0.5, nu=1.5, kappa_convention="spde")
    assert p.kappa_squared == pytest.approx(12.0)


# -- Euclidean closed form -----------------------------------------------------

def test_euclidean_diagonal_limit():
    p = KernelParams(eta=2.5, ell=0.7)
    assert matern_euclidean([1, 2, 3], [1, 2, 3], p) == pytest.approx(2.5 ** 2)


def test_euclidean_half_integer_forms():
    # nu = 1/2: exp(-r/ell); nu = 3/2: (1 + sqrt3 r/ell) exp(-sqrt3 r/ell)
    p12 = KernelParams(eta=1.0, ell=1.0, nu=0.5)
    assert matern_euclidean([0, 0, 0], [1, 0, 0], p12) == pytest.approx(
        math.exp(-1.0), rel=1e-12)
    p32 = KernelParams(eta=1.0, ell=1.0, nu=1.5)
    expected = (1 + math.sqrt(3)) * math.exp(-math.sqrt(3))
    assert matern_euclidean([0, 0, 0], [1, 0, 0], p32) == pytest.approx(
        expected, rel=1e-12)


def test_euclidean_broadcasts():
    p = KernelParams(eta=1.0, ell=1.0)
    xs = np.zeros((5, 3))
    ys = np.column_stack([np.linspace(0, 2, 5), np.zeros((5, 2))])
    vals = matern_euclidean(xs, ys, p)
    assert vals.shape == (5,)
    assert vals[0] == pytest.approx(1.0)
    assert (np.diff(vals) < 0).all()


# -- Normalization --------------------------------------------------------------

def test_area_weighted_mean_diagonal_is_eta_squared(sphere2, sphere2_basis):
    p = KernelParams(eta=1.7, ell=0.5)
    diag = kernel_diag(np.arange(sphere2.n_vertices), sphere2_basis, p)
    mean = diag @ sphere2.vertex_areas / sphere2.total_area
    assert mean == pytest.approx(1.7 ** 2, rel=1e-10)


def test_norm_constant_independent_of_eta(sphere2_basis):
    c1 = normalization_constant(sphere2_basis, KernelParams(1.0, 0.4))
    c2 = normalization_constant(sphere2_basis, KernelParams(2.0, 0.4))
    assert c1 == c2


def test_doubling_eta_quadruples_entries(sphere2_basis):
    k1 = matern_manifold(3, 17, sphere2_basis, KernelParams(1.0, 0.4))
    k2 = matern_manifold(3, 17, sphere2_basis, KernelParams(2.0, 0.4))
    assert k2 == pytest.approx(4.0 * k1, rel=1e-12)


def test_norm_constant_brute_force_oracle(icosa, icosa_basis):
    # Direct double loop over vertices and eigenpairs on a 12-vertex mesh.
    p = KernelParams(eta=1.0, ell=0.8)
    s = spectral_weights(icosa_basis.eigenvalues, p)
    acc = 0.0
    for v in range(icosa.n_vertices):
        for i in range(icosa_basis.n_eig):
            acc += icosa.vertex_areas[v] * s[i] * icosa_basis.eigenvectors[i, v] ** 2
    oracle = acc / icosa.total_area
    assert normalization_constant(icosa_basis, p) == pytest.approx(
        oracle, rel=1e-12)


def test_norm_constant_custom_areas_matches_default(sphere2, sphere2_basis):
    p = KernelParams(eta=1.0, ell=0.6)
    assert normalization_constant(sphere2_basis, p, areas=sphere2.vertex_areas) \
        == pytest.approx(normalization_constant(sphere2_basis, p), rel=1e-12)


# -- Manifold kernel -------------------------------------------------------------

def test_manifold_diagonal_positive(sphere2_basis):
    p = KernelParams(eta=1.0, ell=0.5)
    diag = kernel_diag(np.arange(20), sphere2_basis, p)
    assert (diag > 0).all()


def test_manifold_symmetry(sphere2_basis):
    p = KernelParams(eta=1.0, ell=0.5)
    assert matern_manifold(5, 40, sphere2_basis, p) == \
        matern_manifold(40, 5, sphere2_basis, p)


def test_manifold_matches_brute_force(icosa_basis):
    p = KernelParams(eta=1.3, ell=0.9)
    s = spectral_weights(icosa_basis.eigenvalues, p)
    c = normalization_constant(icosa_basis, p)
    i, j = 2, 7
    oracle = p.eta ** 2 / c * sum(
        s[k] * icosa_basis.eigenvectors[k, i] * icosa_basis.eigenvectors[k, j]
        for k in range(icosa_basis.n_eig)
    )
    assert matern_manifold(i, j, icosa_basis, p) == pytest.approx(
        oracle, rel=1e-12)


def test_sphere_kernel_depends_on_geodesic_distance(sphere3, sphere3_basis):
    # Pairs at (nearly) equal great-circle distance get (nearly) equal k.
    p = KernelParams(eta=1.0, ell=0.5)
    north = int(np.argmax(sphere3.vertices[:, 2]))
    cosines = sphere3.vertices @ sphere3.vertices[north]
    band = np.flatnonzero(np.abs(np.arccos(np.clip(cosines, -1, 1)) - 1.0) < 0.02)
    values = [matern_manifold(north, int(v), sphere3_basis, p) for v in band]
    spread = (max(values) - min(values)) / abs(np.mean(values))
    assert spread < 0.04  # 2% relative about the mean


def test_gram_single_vertex(sphere2_basis):
    p = KernelParams(eta=1.0, ell=0.5)
    g = gram_matrix([7], [7], sphere2_basis, p)
    assert g.shape == (1, 1)
    assert g[0, 0] == pytest.approx(matern_manifold(7, 7, sphere2_basis, p))


def test_gram_psd_random_subsets(sphere2_basis):
    rng = np.random.default_rng(1)
    p = KernelParams(eta=1.0, ell=0.3)
    for _ in range(10):
        idx = rng.choice(sphere2_basis.n_vertices, 50, replace=False)
        g = gram_matrix(idx, idx, sphere2_basis, p)
        np.testing.assert_allclose(g, g.T, atol=1e-12)
        w = np.linalg.eigvalsh(g)
        assert w.min() >= -1e-8 * np.trace(g) / 50


def test_gram_rank_bounded_by_n_eig(icosa, icosa_basis):
    basis = icosa_basis.truncate(5)
    p = KernelParams(eta=1.0, ell=0.5)
    g = gram_matrix(np.arange(12), np.arange(12), basis, p)
    w = np.linalg.eigvalsh(g)
    assert (np.sort(w)[: 12 - 5] < 1e-10 * w.max()).all()


def test_correlation_monotone_in_ell(sphere3_basis):
    i = 0
    j = 5  # a nearby vertex
    prev = -np.inf
    for ell in (0.2, 0.4, 0.8, 1.6):
        p = KernelParams(eta=1.0, ell=ell)
        corr = matern_manifold(i, j, sphere3_basis, p) / \
            matern_manifold(i, i, sphere3_basis, p)
        assert corr > prev
        prev = corr


def test_truncation_convergence(sphere3, sphere3_basis):
    i, j = 0, 100
    p = KernelParams(eta=1.0, ell=0.5)
    vals = [matern_manifold(i, j, sphere3_basis.truncate(n), p)
            for n in (64, 128, 256)]
    d1 = abs(vals[1] - vals[0])
    d2 = abs(vals[2] - vals[1])
    assert d2 < d1


# hypothesis does not mix with session fixtures directly; use a local basis.
_local_mesh = mgpc.shapes.icosphere(1)
_local_basis = mgpc.build_basis(_local_mesh, 30)


@settings(max_examples=20, deadline=None)
@given(eta=st.floats(0.2, 3.0), ell=st.floats(0.3, 2.0))
def test_diag_mean_property_hypothesis(eta, ell):
    p = KernelParams(eta=eta, ell=ell)
    diag = kernel_diag(np.arange(_local_mesh.n_vertices), _local_basis, p)
    mean = diag @ _local_mesh.vertex_areas / _local_mesh.total_area
    assert mean == pytest.approx(eta ** 2, rel=1e-9)
