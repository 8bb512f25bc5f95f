"""Conforming Q1 finite elements on the fine mesh.

Assembly of coefficient-weighted stiffness and mass matrices with exact
quadrature (the coefficient is constant per fine cell), homogeneous
Dirichlet elimination, and the two direct solvers everything else is built
on: a reusable SPD factorization and a saddle-point (KKT) factorization
for moment-constrained minimization problems.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .coefficient import CoefficientField
from .mesh import MeshHierarchy


class LinearSolveError(RuntimeError):
    pass


class NotSPDError(LinearSolveError):
    pass


class RankDeficientError(LinearSolveError):
    pass


# Exact element matrices for bilinear shape functions on a square cell,
# local vertex order (0,0), (1,0), (1,1), (0,1).
_K_UNIT = np.array([
    [4.0, -1.0, -2.0, -1.0],
    [-1.0, 4.0, -1.0, -2.0],
    [-2.0, -1.0, 4.0, -1.0],
    [-1.0, -2.0, -1.0, 4.0],
]) / 6.0

_M_UNIT = np.array([
    [4.0, 2.0, 1.0, 2.0],
    [2.0, 4.0, 2.0, 1.0],
    [1.0, 2.0, 4.0, 2.0],
    [2.0, 1.0, 2.0, 4.0],
]) / 36.0


def q1_element_matrices(cell_size: float, a_cell: float):
    """Closed-form 4x4 stiffness and mass of one square Q1 cell.

    The stiffness is scale-invariant in 2D and linear in the coefficient;
    the mass scales with the cell area.
    """
    if cell_size <= 0 or a_cell <= 0:
        raise ValueError("cell size and coefficient must be positive")
    return a_cell * _K_UNIT, cell_size ** 2 * _M_UNIT


@dataclass(frozen=True)
class FineSystem:
    mesh: MeshHierarchy
    stiffness_full: sp.csr_matrix = field(repr=False)  # all vertices, no BC
    mass_full: sp.csr_matrix = field(repr=False)
    interior: np.ndarray = field(repr=False)  # interior vertex indices
    stiffness: sp.csr_matrix = field(repr=False)  # interior block
    mass: sp.csr_matrix = field(repr=False)

    @property
    def n_vertices(self) -> int:
        return self.mesh.n_fine_vertices


def assemble(mesh: MeshHierarchy, coefficient: CoefficientField) -> FineSystem:
    """Global stiffness (coefficient-weighted) and mass on the fine mesh."""
    a = np.asarray(coefficient.values)
    if a.shape != (mesh.n_fine_cells,):
        raise ValueError("coefficient is not defined on every fine cell")
    verts = mesh.fine_cell_vertices()
    h2 = mesh.h ** 2

    rows = np.repeat(verts, 4, axis=1).ravel()
    cols = np.tile(verts, (1, 4)).ravel()
    data_s = (a[:, None, None] * _K_UNIT[None, :, :]).ravel()
    data_m = np.broadcast_to(h2 * _M_UNIT, (len(a), 4, 4)).ravel()

    nv = mesh.n_fine_vertices
    S = sp.coo_matrix((data_s, (rows, cols)), shape=(nv, nv)).tocsr()
    M = sp.coo_matrix((data_m, (rows, cols)), shape=(nv, nv)).tocsr()
    interior = mesh.interior_fine_vertices()
    S_i = S[interior][:, interior].tocsr()
    M_i = M[interior][:, interior].tocsr()
    return FineSystem(mesh=mesh, stiffness_full=S, mass_full=M,
                      interior=interior, stiffness=S_i, mass=M_i)


def element_stiffness_action(mesh: MeshHierarchy, coefficient: CoefficientField,
                             K: int, v: np.ndarray) -> np.ndarray:
    """Action of the stiffness restricted to coarse element K: w_i = a|_K(v, phi_i).

    Returns a full fine-vertex vector with support on the closed element.
    """
    cells = mesh.fine_cells_of_coarse(K)
    verts = mesh.fine_cell_vertices()[cells]
    a = coefficient.values[cells]
    local = (a[:, None] * (v[verts] @ _K_UNIT.T))
    w = np.zeros(mesh.n_fine_vertices)
    np.add.at(w, verts.ravel(), local.ravel())
    return w


class SPDFactor:
    """Reusable direct factorization of a sparse SPD matrix."""

    def __init__(self, matrix: sp.spmatrix, tol: float = 1e-10):
        matrix = matrix.tocsc()
        d = matrix.diagonal()
        if np.any(d <= 0):
            raise NotSPDError("matrix has a non-positive diagonal entry")
        self._matrix = matrix
        self._tol = tol
        self._lu = spla.splu(matrix, permc_spec="MMD_AT_PLUS_A")

    def solve(self, rhs: np.ndarray) -> np.ndarray:
        x = self._lu.solve(rhs)
        scale = np.linalg.norm(rhs)
        if scale > 0:
            res = np.linalg.norm(self._matrix @ x - rhs)
            if not res <= self._tol * scale:
                raise NotSPDError(f"solve residual {res:.3e} above tolerance; "
                                  "matrix may not be SPD")
        return x


def solve_spd(matrix: sp.spmatrix, rhs: np.ndarray) -> np.ndarray:
    return SPDFactor(matrix).solve(rhs)


class KKTFactor:
    """Factorization of the saddle-point system [[A, C^T], [C, 0]].

    One factorization serves all right-hand sides of a patch; `solve`
    accepts a matrix of stacked right-hand-side columns.
    """

    def __init__(self, stiffness_block: sp.spmatrix, constraint_rows,
                 tol: float = 1e-10):
        A = sp.csc_matrix(stiffness_block)
        C = sp.csc_matrix(constraint_rows)
        if C.shape[1] != A.shape[0]:
            raise ValueError("constraint rows do not match the primal dimension")
        self.n_primal = A.shape[0]
        self.n_constraints = C.shape[0]
        self._A = A
        self._C = C
        self._tol = tol
        kkt = sp.bmat([[A, C.T], [C, None]], format="csc")
        try:
            self._lu = spla.splu(kkt, permc_spec="MMD_AT_PLUS_A")
        except RuntimeError as exc:  # singular factorization
            raise RankDeficientError(f"saddle-point factorization failed: {exc}") from exc

    def solve(self, rhs_primal: np.ndarray, rhs_multiplier: np.ndarray | None = None):
        """Returns (primal, multipliers); both 2D if the input is 2D."""
        rhs_primal = np.asarray(rhs_primal, dtype=float)
        single = rhs_primal.ndim == 1
        rp = rhs_primal.reshape(self.n_primal, -1)
        if rhs_multiplier is None:
            rm = np.zeros((self.n_constraints, rp.shape[1]))
        else:
            rm = np.asarray(rhs_multiplier, dtype=float).reshape(self.n_constraints, -1)
        rhs = np.vstack([rp, rm])
        sol = self._lu.solve(rhs)
        x, lam = sol[:self.n_primal], sol[self.n_primal:]

        scale = max(np.abs(rhs).max(), 1.0)
        res_c = np.abs(self._C @ x - rm).max() if self.n_constraints else 0.0
        res_p = np.abs(self._A @ x + self._C.T @ lam - rp).max()
        if not (res_c <= self._tol * scale and res_p <= self._tol * scale):
            raise RankDeficientError(
                f"KKT residuals too large (primal {res_p:.3e}, constraint {res_c:.3e}); "
                "constraint rows may be rank deficient")
        if single:
            return x[:, 0], lam[:, 0]
        return x, lam


def solve_kkt(stiffness_block, constraint_rows, rhs_primal, rhs_multiplier=None):
    n_rows = constraint_rows.shape[0] if hasattr(constraint_rows, "shape") else len(constraint_rows)
    if n_rows == 0:  # unconstrained limit
        x = solve_spd(sp.csc_matrix(stiffness_block), np.asarray(rhs_primal, dtype=float))
        return x, np.zeros(0)
    return KKTFactor(stiffness_block, constraint_rows).solve(rhs_primal, rhs_multiplier)
