"""Discontinuous coarse polynomial space and its element-wise L2 projection.

Each coarse element carries M = (p+1)^2 tensor-product shifted Legendre
polynomials, normalized to be L2-orthonormal on the element (the extra
|K|^{-1/2} factor makes projection coefficients equal raw moments).  The
moment map is the sparse matrix sending fine nodal vectors to those
moments; its entries are computed with tensor Gauss quadrature that is
exact for the Q1-times-degree-p integrand.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp

from .mesh import MeshHierarchy


def legendre(p: int, t):
    """Legendre polynomial L_p on [-1, 1] by the three-term recurrence."""
    if p < 0:
        raise ValueError("degree must be nonnegative")
    t = np.asarray(t, dtype=float)
    prev = np.ones_like(t)
    if p == 0:
        return prev
    cur = t.copy()
    for k in range(1, p):
        prev, cur = cur, ((2 * k + 1) * t * cur - k * prev) / (k + 1)
    return cur


def multi_index(j0: int, p: int) -> tuple[int, int]:
    """Flat mode index (0-based, 0 is the constant) to degrees (p1, p2)."""
    if not 0 <= j0 < (p + 1) ** 2:
        raise ValueError("mode index out of range")
    return j0 // (p + 1), j0 % (p + 1)


def flat_index(p1: int, p2: int, p: int) -> int:
    return p1 * (p + 1) + p2


def lambda_eval(mesh: MeshHierarchy, p: int, K: int, j0: int, x) -> np.ndarray:
    """Orthonormal basis polynomial of mode j0 on element K at points x."""
    x = np.atleast_2d(np.asarray(x, dtype=float))
    kx, ky = mesh.coarse_cell_coords(K)
    H = mesh.H
    xhat = (x - np.array([kx * H, ky * H])) / H
    if np.any(xhat < -1e-12) or np.any(xhat > 1 + 1e-12):
        raise ValueError("point outside the closed element")
    p1, p2 = multi_index(j0, p)
    val = (math.sqrt(2 * p1 + 1) * legendre(p1, 2 * xhat[:, 0] - 1)
           * math.sqrt(2 * p2 + 1) * legendre(p2, 2 * xhat[:, 1] - 1)) / H
    return val if val.size > 1 else float(val[0])


def _reference_moments(mesh: MeshHierarchy, p: int) -> np.ndarray:
    """Moments of the local fine Q1 hat functions against the element basis.

    Returns an (M, (r+1)^2) matrix for one coarse element (all elements are
    translates of each other), local fine vertices row-major.
    """
    r = mesh.fine_per_coarse
    H = mesh.H
    q = math.ceil((p + 2) / 2) + 1
    gx, gw = np.polynomial.legendre.leggauss(q)

    # 1D building block: integrals of the two hat pieces on fine interval a
    # against sqrt(2d+1) L_d(2s-1), s in coarse-local coordinates.
    I = np.zeros((r, 2, p + 1))
    for a in range(r):
        s = (a + 0.5 * (gx + 1.0)) / r  # quadrature points in [a/r,(a+1)/r]
        w = gw / (2.0 * r)  # ds weights
        phi0 = (a + 1) - r * s
        phi1 = r * s - a
        for d in range(p + 1):
            Ld = math.sqrt(2 * d + 1) * legendre(d, 2.0 * s - 1.0)
            I[a, 0, d] = H * np.sum(w * phi0 * Ld)
            I[a, 1, d] = H * np.sum(w * phi1 * Ld)

    M = (p + 1) ** 2
    out = np.zeros((M, (r + 1) ** 2))
    # cell (a,b): local vertices (a+i1, b+i2); |K|^{-1/2} = 1/H in 2D
    for b in range(r):
        for a in range(r):
            for i2 in range(2):
                for i1 in range(2):
                    v = (b + i2) * (r + 1) + (a + i1)
                    for p1 in range(p + 1):
                        for p2 in range(p + 1):
                            out[flat_index(p1, p2, p), v] += \
                                I[a, i1, p1] * I[b, i2, p2] / H
    return out


@dataclass(frozen=True)
class MomentMap:
    mesh: MeshHierarchy
    p: int
    matrix: sp.csr_matrix = field(repr=False)  # (n_coarse*M) x n_fine_vertices
    reference_block: np.ndarray = field(repr=False)

    @property
    def modes_per_element(self) -> int:
        return (self.p + 1) ** 2

    @property
    def n_rows(self) -> int:
        return self.mesh.n_coarse_cells * self.modes_per_element


def build_moment_map(mesh: MeshHierarchy, p: int) -> MomentMap:
    ref = _reference_moments(mesh, p)
    M = (p + 1) ** 2
    nc2 = mesh.n_coarse_cells
    nloc = ref.shape[1]

    rows = np.empty(nc2 * M * nloc, dtype=np.int64)
    cols = np.empty_like(rows)
    data = np.empty(nc2 * M * nloc)
    pos = 0
    for K in range(nc2):
        verts = mesh.fine_vertices_of_coarse(K)
        block = M * nloc
        rows[pos:pos + block] = np.repeat(K * M + np.arange(M), nloc)
        cols[pos:pos + block] = np.tile(verts, M)
        data[pos:pos + block] = ref.ravel()
        pos += block
    mat = sp.coo_matrix((data, (rows, cols)),
                        shape=(nc2 * M, mesh.n_fine_vertices)).tocsr()
    return MomentMap(mesh=mesh, p=p, matrix=mat, reference_block=ref)


def project(momentmap: MomentMap, v_fine: np.ndarray) -> np.ndarray:
    """Coarse moment coefficients of the element-wise L2 projection of v."""
    return momentmap.matrix @ np.asarray(v_fine, dtype=float)
