import math

import numpy as np
import pytest

from wavelod.coarse import (build_moment_map, flat_index, lambda_eval, legendre,
                            multi_index, project, _reference_moments)
from wavelod.mesh import build_hierarchy


def test_legendre_against_numpy():
    t = np.linspace(-1, 1, 17)
    for p in range(6):
        coeffs = np.zeros(p + 1)
        coeffs[p] = 1.0
        np.testing.assert_allclose(legendre(p, t),
                                   np.polynomial.legendre.legval(t, coeffs),
                                   atol=1e-14)
    with pytest.raises(ValueError):
        legendre(-1, t)


def test_index_roundtrip():
    for p in range(4):
        for j0 in range((p + 1) ** 2):
            p1, p2 = multi_index(j0, p)
            assert flat_index(p1, p2, p) == j0
    with pytest.raises(ValueError):
        multi_index(4, 1)


@pytest.fixture
def mesh():
    return build_hierarchy(2, 2, 5)


def test_lambda_orthonormality_by_quadrature(mesh):
    # int_K Lambda_i Lambda_j dx = delta_ij, via dense Gauss quadrature
    p = 2
    K = 5
    kx, ky = mesh.coarse_cell_coords(K)
    gx, gw = np.polynomial.legendre.leggauss(6)
    s = 0.5 * (gx + 1.0)
    w = 0.5 * gw
    H = mesh.H
    X, Y = np.meshgrid((kx + s) * H, (ky + s) * H)
    WX, WY = np.meshgrid(w, w)
    pts = np.column_stack([X.ravel(), Y.ravel()])
    weights = (WX * WY).ravel() * H * H
    M = (p + 1) ** 2
    G = np.zeros((M, M))
    vals = [np.asarray(lambda_eval(mesh, p, K, j0, pts)) for j0 in range(M)]
    for i in range(M):
        for j in range(M):
            G[i, j] = np.sum(weights * vals[i] * vals[j])
    np.testing.assert_allclose(G, np.eye(M), atol=1e-12)


def test_lambda_eval_rejects_outside(mesh):
    with pytest.raises(ValueError):
        lambda_eval(mesh, 1, 0, 0, [[0.9, 0.9]])  # element 0 is [0,0.25]^2


def test_reference_moments_quadrature_exactness(mesh):
    # the assembled 1D integrals are exact: compare with much higher order
    import wavelod.coarse as coarse

    p = 2
    ref = _reference_moments(mesh, p)
    orig = np.polynomial.legendre.leggauss

    def high_order(q):
        return orig(q + 6)

    try:
        np.polynomial.legendre.leggauss = high_order
        ref_hi = _reference_moments(mesh, p)
    finally:
        np.polynomial.legendre.leggauss = orig
    np.testing.assert_allclose(ref, ref_hi, atol=1e-15)


def test_project_constant(mesh):
    # projection of 1: constant-mode moment is H (= int_K (1/H) dx), rest 0
    for p in (0, 1, 2):
        mmap = build_moment_map(mesh, p)
        c = project(mmap, np.ones(mesh.n_fine_vertices))
        M = mmap.modes_per_element
        c = c.reshape(mesh.n_coarse_cells, M)
        np.testing.assert_allclose(c[:, 0], mesh.H, atol=1e-13)
        np.testing.assert_allclose(c[:, 1:], 0.0, atol=1e-13)


def test_project_linear(mesh):
    # v = x1 is piecewise bilinear, so its Q1 interpolant is exact; the
    # mode-(1,0) moment on element (kx, ky) is int_K x1 sqrt(3)(2 x1hat - 1)/H
    # = H^2 sqrt(3)/6, and the mode-(0,0) moment is int_K x1 / H = H^2 (kx + 1/2)
    p = 1
    mmap = build_moment_map(mesh, p)
    v = mesh.fine_vertex_positions()[:, 0]
    c = project(mmap, v).reshape(mesh.n_coarse_cells, 4)
    H = mesh.H
    for K in range(mesh.n_coarse_cells):
        kx, _ = mesh.coarse_cell_coords(K)
        assert c[K, flat_index(0, 0, p)] == pytest.approx(H * H * (kx + 0.5))
        assert c[K, flat_index(1, 0, p)] == pytest.approx(H * H * math.sqrt(3) / 6)
        assert c[K, flat_index(0, 1, p)] == pytest.approx(0.0, abs=1e-14)
        assert c[K, flat_index(1, 1, p)] == pytest.approx(0.0, abs=1e-14)


def test_projection_reproduces_interpolated_polynomials(mesh):
    # for v the Q1 interpolant of Lambda_{K,j0} extended by its polynomial
    # formula, the moment map must return the moments of that interpolant,
    # which for p <= r-linear exactness equals quadrature of the interpolant
    p = 1
    mmap = build_moment_map(mesh, p)
    pos = mesh.fine_vertex_positions()
    K = 10
    inside = np.zeros(mesh.n_fine_vertices, dtype=bool)
    inside[mesh.fine_vertices_of_coarse(K)] = True
    v = np.zeros(mesh.n_fine_vertices)
    v[inside] = lambda_eval(mesh, p, K, flat_index(1, 0, p), pos[inside])
    c = project(mmap, v)
    # the interpolant of a function linear in x1 and constant in x2 is exact,
    # so the (1,0) moment of element K must be 1 (orthonormality)
    assert c[K * 4 + flat_index(1, 0, p)] == pytest.approx(1.0, abs=1e-12)


def test_moment_map_shape(mesh):
    for p in (0, 1):
        mmap = build_moment_map(mesh, p)
        M = (p + 1) ** 2
        assert mmap.matrix.shape == (mesh.n_coarse_cells * M, mesh.n_fine_vertices)
        assert mmap.n_rows == mesh.n_coarse_cells * M
