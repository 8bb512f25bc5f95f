"""Nested uniform Cartesian meshes of the unit square and element patches.

Three nested dyadic levels live on Omega = (0,1)^2: a coarse mesh (the
polynomial/multiscale level), an oscillation mesh (the scale on which rough
coefficients vary) and a fine mesh (the conforming Q1 level).  All index
maps are row-major: a cell or vertex at grid position (ix, iy) has flat
index iy * n + ix, counting x fastest.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np


@dataclass(frozen=True)
class MeshHierarchy:
    coarse_cells_per_dim: int
    eps_cells_per_dim: int
    fine_cells_per_dim: int
    dimension: int = 2

    def __post_init__(self):
        for n in (self.coarse_cells_per_dim, self.eps_cells_per_dim,
                  self.fine_cells_per_dim):
            if n < 1 or (n & (n - 1)) != 0:
                raise ValueError(f"cells per dim must be a positive power of two, got {n}")
        if self.eps_cells_per_dim % self.coarse_cells_per_dim != 0:
            raise ValueError("oscillation mesh is not nested in the coarse mesh")
        if self.fine_cells_per_dim % self.eps_cells_per_dim != 0:
            raise ValueError("fine mesh is not nested in the oscillation mesh")

    # -- derived sizes -------------------------------------------------

    @property
    def H(self) -> float:
        return 1.0 / self.coarse_cells_per_dim

    @property
    def h(self) -> float:
        return 1.0 / self.fine_cells_per_dim

    @property
    def eps(self) -> float:
        return 1.0 / self.eps_cells_per_dim

    @property
    def fine_per_coarse(self) -> int:
        return self.fine_cells_per_dim // self.coarse_cells_per_dim

    @property
    def fine_per_eps(self) -> int:
        return self.fine_cells_per_dim // self.eps_cells_per_dim

    @property
    def eps_per_coarse(self) -> int:
        return self.eps_cells_per_dim // self.coarse_cells_per_dim

    @property
    def n_coarse_cells(self) -> int:
        return self.coarse_cells_per_dim ** 2

    @property
    def n_fine_cells(self) -> int:
        return self.fine_cells_per_dim ** 2

    @property
    def n_fine_vertices(self) -> int:
        return (self.fine_cells_per_dim + 1) ** 2

    # -- index helpers -------------------------------------------------

    def coarse_cell_index(self, kx, ky):
        return ky * self.coarse_cells_per_dim + kx

    def coarse_cell_coords(self, K):
        n = self.coarse_cells_per_dim
        return K % n, K // n

    def fine_vertex_index(self, ix, iy):
        return iy * (self.fine_cells_per_dim + 1) + ix

    def fine_vertex_positions(self) -> np.ndarray:
        """(n_fine_vertices, 2) array of vertex coordinates, row-major."""
        n = self.fine_cells_per_dim
        t = np.linspace(0.0, 1.0, n + 1)
        X, Y = np.meshgrid(t, t)  # row-major: Y varies with row
        return np.column_stack([X.ravel(), Y.ravel()])

    def fine_cell_centers(self) -> np.ndarray:
        n = self.fine_cells_per_dim
        t = (np.arange(n) + 0.5) / n
        X, Y = np.meshgrid(t, t)
        return np.column_stack([X.ravel(), Y.ravel()])

    def fine_cell_vertices(self) -> np.ndarray:
        """(n_fine_cells, 4) vertex indices per cell.

        Local order: (0,0), (1,0), (1,1), (0,1) relative to the cell corner.
        """
        n = self.fine_cells_per_dim
        ix, iy = np.meshgrid(np.arange(n), np.arange(n))
        ix, iy = ix.ravel(), iy.ravel()
        v00 = self.fine_vertex_index(ix, iy)
        return np.column_stack([v00, v00 + 1, v00 + n + 2, v00 + n + 1])

    def interior_fine_vertices(self) -> np.ndarray:
        """Fine vertices not on the boundary of the unit square."""
        n = self.fine_cells_per_dim
        ix, iy = np.meshgrid(np.arange(1, n), np.arange(1, n))
        return self.fine_vertex_index(ix.ravel(), iy.ravel())

    def eps_cell_of_fine_cell(self) -> np.ndarray:
        """Flat oscillation-cell index for every fine cell."""
        n = self.fine_cells_per_dim
        r = self.fine_per_eps
        cx, cy = np.meshgrid(np.arange(n), np.arange(n))
        return (cy.ravel() // r) * self.eps_cells_per_dim + cx.ravel() // r

    def coarse_cell_of_fine_cell(self) -> np.ndarray:
        n = self.fine_cells_per_dim
        r = self.fine_per_coarse
        cx, cy = np.meshgrid(np.arange(n), np.arange(n))
        return (cy.ravel() // r) * self.coarse_cells_per_dim + cx.ravel() // r

    def fine_cells_of_coarse(self, K) -> np.ndarray:
        """Flat fine-cell indices inside coarse element K, row-major."""
        kx, ky = self.coarse_cell_coords(K)
        r = self.fine_per_coarse
        n = self.fine_cells_per_dim
        cx = kx * r + np.arange(r)
        cy = ky * r + np.arange(r)
        CX, CY = np.meshgrid(cx, cy)
        return (CY * n + CX).ravel()

    def fine_vertices_of_coarse(self, K) -> np.ndarray:
        """Flat fine-vertex indices on the closed coarse element K."""
        kx, ky = self.coarse_cell_coords(K)
        r = self.fine_per_coarse
        ix = kx * r + np.arange(r + 1)
        iy = ky * r + np.arange(r + 1)
        IX, IY = np.meshgrid(ix, iy)
        return self.fine_vertex_index(IX, IY).ravel()


@dataclass(frozen=True)
class Patch:
    center_element: int
    radius: int
    box: tuple  # (kx0, kx1, ky0, ky1), inclusive coarse-cell bounds
    elements: np.ndarray = field(repr=False)
    fine_interior_dofs: np.ndarray = field(repr=False)


def build_hierarchy(H_exp: int, eps_exp: int, h_exp: int) -> MeshHierarchy:
    if not (0 <= H_exp <= eps_exp <= h_exp):
        raise ValueError(f"exponents must satisfy 0 <= {H_exp} <= {eps_exp} <= {h_exp}")
    return MeshHierarchy(2 ** H_exp, 2 ** eps_exp, 2 ** h_exp)


def patch(mesh: MeshHierarchy, K: int, ell: int) -> Patch:
    """Element patch of radius ell around coarse element K, clipped at the boundary.

    Radius 0 is the element itself; each further layer adds all elements
    sharing a vertex with the previous patch.  On a structured mesh this is
    the clipped square of half-width ell.
    """
    if ell < 0:
        raise ValueError("patch radius must be nonnegative")
    nc = mesh.coarse_cells_per_dim
    if not (0 <= K < mesh.n_coarse_cells):
        raise ValueError(f"element index {K} out of range")
    kx, ky = mesh.coarse_cell_coords(K)
    kx0, kx1 = max(0, kx - ell), min(nc - 1, kx + ell)
    ky0, ky1 = max(0, ky - ell), min(nc - 1, ky + ell)
    EX, EY = np.meshgrid(np.arange(kx0, kx1 + 1), np.arange(ky0, ky1 + 1))
    elements = (EY * nc + EX).ravel()

    r = mesh.fine_per_coarse
    ix = np.arange(kx0 * r + 1, (kx1 + 1) * r)
    iy = np.arange(ky0 * r + 1, (ky1 + 1) * r)
    IX, IY = np.meshgrid(ix, iy)
    dofs = mesh.fine_vertex_index(IX.ravel(), IY.ravel())
    return Patch(center_element=K, radius=ell, box=(kx0, kx1, ky0, ky1),
                 elements=elements, fine_interior_dofs=dofs)
