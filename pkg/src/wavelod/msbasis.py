"""Problem-adapted multiscale basis construction.

Pipeline per coarse element: element bubbles (moment-constrained energy
minimizers inside one element), the layer-extended constant-mode bubble
iota + nu, and patch-local correctors that subtract the coefficient's
fine-scale response.  The corrected columns span a space whose element-wise
L2 projection is exactly the coarse polynomial space, which is what the
wave solver steps on via the coarse stiffness and mass matrices.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp

from . import coarse as coarse_mod
from .coarse import MomentMap, build_moment_map
from .coefficient import CoefficientField
from .fem import (FineSystem, KKTFactor, SPDFactor, _K_UNIT, assemble,
                  element_stiffness_action)
from .mesh import MeshHierarchy, patch


def saturating_ell(mesh: MeshHierarchy) -> int:
    """Smallest radius for which every patch covers the whole mesh."""
    return mesh.coarse_cells_per_dim - 1


def element_interior_vertices(mesh: MeshHierarchy, K: int) -> np.ndarray:
    kx, ky = mesh.coarse_cell_coords(K)
    r = mesh.fine_per_coarse
    ix = kx * r + np.arange(1, r)
    iy = ky * r + np.arange(1, r)
    IX, IY = np.meshgrid(ix, iy)
    return mesh.fine_vertex_index(IX.ravel(), IY.ravel())


def _local_unit_stiffness(r: int) -> sp.csr_matrix:
    """A=1 stiffness on the local r x r cell grid of one coarse element."""
    nv = (r + 1) ** 2
    ix, iy = np.meshgrid(np.arange(r), np.arange(r))
    v00 = iy.ravel() * (r + 1) + ix.ravel()
    verts = np.column_stack([v00, v00 + 1, v00 + r + 2, v00 + r + 1])
    rows = np.repeat(verts, 4, axis=1).ravel()
    cols = np.tile(verts, (1, 4)).ravel()
    data = np.broadcast_to(_K_UNIT, (r * r, 4, 4)).ravel()
    return sp.coo_matrix((data, (rows, cols)), shape=(nv, nv)).tocsr()


def _local_interior(r: int) -> np.ndarray:
    ix, iy = np.meshgrid(np.arange(1, r), np.arange(1, r))
    return (iy.ravel() * (r + 1) + ix.ravel())


def compute_local_bubbles(mesh: MeshHierarchy, mmap: MomentMap) -> np.ndarray:
    """Bubble functions of one reference element, ((r-1)^2, M).

    Minimizers of the A=1 Dirichlet energy among fine functions vanishing
    on the element boundary with prescribed unit moments.  Identical on
    every element by translation, and independent of the coefficient.
    """
    r = mesh.fine_per_coarse
    p = mmap.p
    if r < p + 2:
        raise ValueError(f"need at least p+2={p + 2} fine cells per coarse edge, got {r}")
    interior = _local_interior(r)
    L = _local_unit_stiffness(r)[interior][:, interior]
    C = mmap.reference_block[:, interior]
    M = mmap.modes_per_element
    factor = KKTFactor(L, C)
    primal, _ = factor.solve(np.zeros((len(interior), M)), np.eye(M))
    return primal


def compute_bubble(mesh: MeshHierarchy, mmap: MomentMap, K: int, j0: int) -> np.ndarray:
    """Global fine vector of the bubble for mode j0 on element K."""
    W = compute_local_bubbles(mesh, mmap)
    out = np.zeros(mesh.n_fine_vertices)
    out[element_interior_vertices(mesh, K)] = W[:, j0]
    return out


def compute_iota(mesh: MeshHierarchy, K: int) -> np.ndarray:
    """Coarse-bilinear layer function: 1/4 at vertices of K interior to the
    one-layer patch, 0 on the patch boundary, sampled at fine nodes."""
    nc = mesh.coarse_cells_per_dim
    r = mesh.fine_per_coarse
    kx, ky = mesh.coarse_cell_coords(K)
    pat = patch(mesh, K, 1)
    kx0, kx1, ky0, ky1 = pat.box

    gx = np.arange(kx0, kx1 + 2)
    gy = np.arange(ky0, ky1 + 2)
    GX, GY = np.meshgrid(gx, gy)
    in_K = (GX >= kx) & (GX <= kx + 1) & (GY >= ky) & (GY <= ky + 1)
    on_bd = (GX == kx0) | (GX == kx1 + 1) | (GY == ky0) | (GY == ky1 + 1)
    Vc = np.where(in_K & ~on_bd, 0.25, 0.0)

    # bilinear interpolation of the coarse-vertex grid at the fine nodes
    fx = np.arange(kx0 * r, (kx1 + 1) * r + 1)
    fy = np.arange(ky0 * r, (ky1 + 1) * r + 1)
    sx = fx / r - kx0
    sy = fy / r - ky0
    ix0 = np.clip(sx.astype(int), 0, Vc.shape[1] - 2)
    iy0 = np.clip(sy.astype(int), 0, Vc.shape[0] - 2)
    tx = sx - ix0
    ty = sy - iy0
    TX, TY = np.meshgrid(tx, ty)
    IX0, IY0 = np.meshgrid(ix0, iy0)
    vals = ((1 - TX) * (1 - TY) * Vc[IY0, IX0] + TX * (1 - TY) * Vc[IY0, IX0 + 1]
            + TX * TY * Vc[IY0 + 1, IX0 + 1] + (1 - TX) * TY * Vc[IY0 + 1, IX0])

    FX, FY = np.meshgrid(fx, fy)
    out = np.zeros(mesh.n_fine_vertices)
    out[mesh.fine_vertex_index(FX.ravel(), FY.ravel())] = vals.ravel()
    return out


def compute_nu(mesh: MeshHierarchy, mmap: MomentMap, K: int,
               local_bubbles: np.ndarray | None = None):
    """Bubble combination restoring the constant-mode moments of iota.

    Returns (nu, coefficients) with the coefficient table indexed like the
    coarse moment vector (nonzero only for elements of the one-layer patch).
    """
    if local_bubbles is None:
        local_bubbles = compute_local_bubbles(mesh, mmap)
    M = mmap.modes_per_element
    iota = compute_iota(mesh, K)
    c = -(mmap.matrix @ iota)
    c[K * M] += 1.0
    nu = np.zeros(mesh.n_fine_vertices)
    for G in patch(mesh, K, 1).elements:
        cg = c[G * M:(G + 1) * M]
        nu[element_interior_vertices(mesh, G)] += local_bubbles @ cg
    return nu, c


def extended_bubble(mesh: MeshHierarchy, mmap: MomentMap, K: int,
                    local_bubbles: np.ndarray | None = None) -> np.ndarray:
    nu, _ = compute_nu(mesh, mmap, K, local_bubbles)
    return compute_iota(mesh, K) + nu


def _patch_factor(mmap: MomentMap, fs: FineSystem, pat):
    """KKT factorization of one patch corrector problem."""
    M = mmap.modes_per_element
    pdofs = pat.fine_interior_dofs
    rows = (pat.elements[:, None] * M + np.arange(M)[None, :]).ravel()
    A = fs.stiffness_full[pdofs][:, pdofs]
    C = mmap.matrix[rows][:, pdofs]
    return KKTFactor(A, C), pdofs


def element_corrector(mesh: MeshHierarchy, coefficient: CoefficientField,
                      mmap: MomentMap, fs: FineSystem, T: int,
                      v: np.ndarray, ell: int) -> np.ndarray:
    """Patch-local corrector of v for element T: the moment-free function
    whose energy inner product matches the element-T-restricted one of v."""
    pat = patch(mesh, T, ell)
    factor, pdofs = _patch_factor(mmap, fs, pat)
    w = element_stiffness_action(mesh, coefficient, T, v)
    primal, _ = factor.solve(w[pdofs])
    out = np.zeros(mesh.n_fine_vertices)
    out[pdofs] = primal
    return out


@dataclass(frozen=True)
class MultiscaleBasis:
    mesh: MeshHierarchy
    p: int
    ell: int
    B: sp.csc_matrix = field(repr=False)  # fine vertices x coarse dofs
    stiffness: object = field(repr=False)  # coarse, sparse or dense ndarray
    mass: object = field(repr=False)
    coefficient_hash: str = ""

    @property
    def n_columns(self) -> int:
        return self.B.shape[1]

    def lift(self, coarse_coeffs: np.ndarray) -> np.ndarray:
        """Fine nodal vector of the multiscale function with given coefficients."""
        return self.B @ np.asarray(coarse_coeffs, dtype=float)


def _uncorrected_columns(mesh, mmap, local_bubbles, K):
    """Pairs (j0, (dofs, values)) of the uncorrected column functions of K."""
    M = mmap.modes_per_element
    out = []
    ext = extended_bubble(mesh, mmap, K, local_bubbles)
    sup1 = patch(mesh, K, 1).fine_interior_dofs
    out.append((0, (sup1, ext[sup1])))
    ivers = element_interior_vertices(mesh, K)
    for j0 in range(1, M):
        out.append((j0, (ivers, local_bubbles[:, j0])))
    return out


def build_basis(mesh: MeshHierarchy, coefficient: CoefficientField, p: int,
                ell: int, fs: FineSystem | None = None,
                mmap: MomentMap | None = None, check_projection: bool = True,
                projection_tol: float = 1e-9) -> MultiscaleBasis:
    """Corrected multiscale basis with coarse stiffness and mass matrices.

    One KKT factorization per distinct (clipped) patch box is reused for
    all right-hand sides whose corrector lives on that patch; elements are
    processed in row-major order so the result is deterministic.
    """
    if ell < 0:
        raise ValueError("localization radius must be nonnegative")
    r = mesh.fine_per_coarse
    if r < p + 2:
        raise ValueError(f"need at least p+2={p + 2} fine cells per coarse edge, got {r}")
    if fs is None:
        fs = assemble(mesh, coefficient)
    if mmap is None:
        mmap = build_moment_map(mesh, p)
    M = mmap.modes_per_element
    nc2 = mesh.n_coarse_cells
    ncols = nc2 * M
    nv = mesh.n_fine_vertices

    if ell >= mesh.coarse_cells_per_dim - 1:
        return _saturated_basis(mesh, coefficient, p, ell, fs, mmap,
                                check_projection, projection_tol)

    local_bubbles = compute_local_bubbles(mesh, mmap)

    # column supports: mode 0 reaches one layer further than the others
    sup_l = [patch(mesh, K, ell).fine_interior_dofs for K in range(nc2)]
    sup_lp1 = [patch(mesh, K, ell + 1).fine_interior_dofs for K in range(nc2)]
    col_support = [None] * ncols
    col_acc = [None] * ncols
    uncorrected = {}  # K -> list of (dofs, vals) per mode, for corrector rhs
    for K in range(nc2):
        cols = _uncorrected_columns(mesh, mmap, local_bubbles, K)
        uncorrected[K] = [entry for _, entry in cols]
        for j0, (dofs, vals) in cols:
            sup = sup_lp1[K] if j0 == 0 else sup_l[K]
            acc = np.zeros(len(sup))
            acc[np.searchsorted(sup, dofs)] = vals
            col_support[K * M + j0] = sup
            col_acc[K * M + j0] = acc

    scratch = np.zeros(nv)

    # group corrector problems by patch box so clipped patches share factors
    groups = {}
    for T in range(nc2):
        pat = patch(mesh, T, ell)
        groups.setdefault(pat.box, []).append((T, pat))

    for box in sorted(groups):
        factor = None
        for T, pat in groups[box]:
            if factor is None:
                factor, pdofs = _patch_factor(mmap, fs, pat)
            targets = [T * M + j0 for j0 in range(1, M)]
            targets += [int(Kn) * M for Kn in patch(mesh, T, 1).elements]
            rhs = np.empty((len(pdofs), len(targets)))
            for i, col in enumerate(targets):
                K_src, j0 = divmod(col, M)
                dofs, vals = uncorrected[K_src][j0]
                scratch[dofs] = vals
                rhs[:, i] = element_stiffness_action(mesh, coefficient, T, scratch)[pdofs]
                scratch[dofs] = 0.0
            primal, _ = factor.solve(rhs)
            for i, col in enumerate(targets):
                pos = np.searchsorted(col_support[col], pdofs)
                col_acc[col][pos] -= primal[:, i]
        factor = None  # drop the factorization before the next group

    return _finalize_basis(mesh, coefficient, p, ell, fs, mmap, col_support,
                           col_acc, check_projection, projection_tol)


def _symmetrize_inplace(A: np.ndarray, block: int) -> None:
    """A <- (A + A.T)/2 without allocating a full-size transpose."""
    n = A.shape[0]
    for i in range(0, n, block):
        bi = slice(i, min(i + block, n))
        for j in range(i, n, block):
            bj = slice(j, min(j + block, n))
            avg = 0.5 * (A[bi, bj] + A[bj, bi].T)
            A[bi, bj] = avg
            A[bj, bi] = avg.T


def _mirror_lower_inplace(A: np.ndarray, block: int) -> None:
    """Copy the lower triangle onto the upper one, block by block."""
    n = A.shape[0]
    for i in range(0, n, block):
        bi = slice(i, min(i + block, n))
        for j in range(0, i + block, block):
            bj = slice(j, min(j + block, n))
            if j < i:
                A[bj, bi] = A[bi, bj].T
    for i in range(0, n, block):
        bi = slice(i, min(i + block, n))
        tri = A[bi, bi]
        il, ju = np.tril_indices_from(tri, -1)
        tri[ju, il] = tri[il, ju]


def _saturated_basis(mesh, coefficient, p, ell, fs, mmap, check_projection,
                     projection_tol) -> MultiscaleBasis:
    """Closed form of the corrected basis at saturating radius.

    When every patch covers the whole mesh, the corrector removes everything
    from an uncorrected column except its moments, so the basis depends only
    on the constraint set: with A the interior stiffness and C the moment
    map restricted to interior vertices,

        B = A^{-1} C^T G^{-1},   G = C A^{-1} C^T,

    and the coarse stiffness B^T A B equals G^{-1} exactly.  This costs a
    few dense matrix products instead of thousands of saddle-point solves.
    """
    import scipy.linalg as sla

    pdofs = np.asarray(fs.interior)
    ncols = mesh.n_coarse_cells * mmap.modes_per_element
    C = mmap.matrix.tocsc()[:, pdofs].tocsr()
    CT = C.T.tocsc()
    factor = SPDFactor(fs.stiffness)
    chunk = 256

    # Gram matrix assembled in column blocks; Y = A^{-1} C^T is never stored.
    # Everything below works in place (Fortran order, potrf/potri) so the
    # peak never holds more than one ncols x ncols array plus the basis.
    G = np.empty((ncols, ncols), order="F")
    for s in range(0, ncols, chunk):
        G[:, s:s + chunk] = C @ factor.solve(CT[:, s:s + chunk].toarray())
    _symmetrize_inplace(G, chunk)
    cf, info = sla.lapack.dpotrf(G, lower=1, overwrite_a=True)
    if info != 0:
        raise RuntimeError(f"Gram matrix not positive definite (dpotrf info={info})")
    Ginv, info = sla.lapack.dpotri(cf, lower=1, overwrite_c=True)
    if info != 0:
        raise RuntimeError(f"Gram inverse failed (dpotri info={info})")
    _mirror_lower_inplace(Ginv, chunk)
    del G, cf

    # B = A^{-1} (C^T G^{-1}), solved in place block by block (Fortran order
    # so the sparse assembly below is a view)
    Bd = np.empty((len(pdofs), ncols), order="F")
    for s in range(0, ncols, chunk):
        Bd[:, s:s + chunk] = factor.solve(CT @ Ginv[:, s:s + chunk])

    # products in column blocks to bound peak memory on large meshes
    Mt = np.empty((ncols, ncols))
    resid = 0.0
    for s in range(0, ncols, chunk):
        blk = Bd[:, s:s + chunk]
        if check_projection:
            P_blk = C @ blk
            w = blk.shape[1]
            P_blk[s + np.arange(w), np.arange(w)] -= 1.0
            resid = max(resid, float(np.abs(P_blk).max()))
        Mt[:, s:s + chunk] = Bd.T @ (fs.mass @ blk)
    if check_projection and resid > projection_tol:
        raise RuntimeError(f"basis violates the projection identity: residual {resid:.3e}")
    _symmetrize_inplace(Mt, chunk)
    indices = np.tile(pdofs.astype(np.int32), ncols)
    indptr = np.arange(ncols + 1, dtype=np.int64) * len(pdofs)
    B = sp.csc_matrix((Bd.ravel(order="F"), indices, indptr),
                      shape=(mesh.n_fine_vertices, ncols))
    return MultiscaleBasis(mesh=mesh, p=p, ell=ell, B=B, stiffness=Ginv,
                           mass=Mt, coefficient_hash=coefficient.descriptor_hash())


def _finalize_basis(mesh, coefficient, p, ell, fs, mmap, col_support, col_acc,
                    check_projection, projection_tol) -> MultiscaleBasis:
    nv = mesh.n_fine_vertices
    ncols = len(col_support)
    rows = np.concatenate([np.asarray(s, dtype=np.int32) for s in col_support])
    cols = np.concatenate([np.full(len(s), c, dtype=np.int32)
                           for c, s in enumerate(col_support)])
    data = np.concatenate(col_acc)
    B = sp.coo_matrix((data, (rows, cols)), shape=(nv, ncols)).tocsc()
    del col_acc, col_support, rows, cols, data

    if check_projection:
        R = (mmap.matrix @ B) - sp.identity(ncols, format="csr")
        resid = np.abs(R.data).max() if R.nnz else 0.0
        if resid > projection_tol:
            raise RuntimeError(f"basis violates the projection identity: residual {resid:.3e}")

    SB = fs.stiffness_full @ B
    St = (B.T @ SB).toarray() if _dense_product(B) else (B.T @ SB).tocsr()
    MB = fs.mass_full @ B
    Mt = (B.T @ MB).toarray() if _dense_product(B) else (B.T @ MB).tocsr()
    St = _symmetrize(St)
    Mt = _symmetrize(Mt)
    return MultiscaleBasis(mesh=mesh, p=p, ell=ell, B=B, stiffness=St, mass=Mt,
                           coefficient_hash=coefficient.descriptor_hash())


def _dense_product(B: sp.csc_matrix) -> bool:
    # dense coarse operators once columns overlap heavily
    ncols = B.shape[1]
    return ncols <= 4096 or B.nnz / B.shape[0] / ncols > 0.2


def _symmetrize(A):
    if sp.issparse(A):
        return ((A + A.T) * 0.5).tocsr()
    return 0.5 * (A + A.T)


def a_norm(fs: FineSystem, v: np.ndarray) -> float:
    return float(np.sqrt(max(v @ (fs.stiffness_full @ v), 0.0)))


def corrected_column(mesh, coefficient, mmap, fs, local_bubbles, K, j0, ell):
    """One corrected basis column, used by the localization-decay probe."""
    M = mmap.modes_per_element
    if j0 == 0:
        v = extended_bubble(mesh, mmap, K, local_bubbles)
        T_list = [int(t) for t in patch(mesh, K, 1).elements]
    else:
        v = np.zeros(mesh.n_fine_vertices)
        v[element_interior_vertices(mesh, K)] = local_bubbles[:, j0]
        T_list = [K]
    out = v.copy()
    for T in T_list:
        out -= element_corrector(mesh, coefficient, mmap, fs, T, v, ell)
    return out


def localization_decay(mesh: MeshHierarchy, coefficient: CoefficientField, p: int,
                       ell_list, probe_elements=None, fs=None, mmap=None) -> dict:
    """a-norm distance of probe basis columns to their most-localized=global
    versions, per localization radius.

    The largest entry of ell_list must saturate the probe patches; it serves
    as the unlocalized reference.
    """
    ells = list(ell_list)
    if ells != sorted(ells):
        raise ValueError("localization radii must be ascending")
    if fs is None:
        fs = assemble(mesh, coefficient)
    if mmap is None:
        mmap = build_moment_map(mesh, p)
    local_bubbles = compute_local_bubbles(mesh, mmap)
    nc = mesh.coarse_cells_per_dim
    if probe_elements is None:
        c = nc // 2
        probe_elements = [mesh.coarse_cell_index(c, c), mesh.coarse_cell_index(c - 1, c - 1)]
    modes = range(1, mmap.modes_per_element) if p >= 1 else [0]

    columns = {}
    for ell in ells:
        cols = [corrected_column(mesh, coefficient, mmap, fs, local_bubbles, K, j0, ell)
                for K in probe_elements for j0 in modes]
        columns[ell] = cols
    ref = columns[ells[-1]]
    return {ell: float(np.sqrt(sum(a_norm(fs, c - cr) ** 2
                                   for c, cr in zip(columns[ell], ref))))
            for ell in ells}


# -- basis cache -------------------------------------------------------

_CACHE_VERSION = 1


def save_basis(basis: MultiscaleBasis, path) -> None:
    """Versioned binary cache (zip of little-endian arrays, CSC layout)."""
    St, Mt = basis.stiffness, basis.mass
    np.savez_compressed(
        path,
        version=np.int64(_CACHE_VERSION),
        mesh_cells=np.array([basis.mesh.coarse_cells_per_dim,
                             basis.mesh.eps_cells_per_dim,
                             basis.mesh.fine_cells_per_dim], dtype=np.int64),
        p=np.int64(basis.p), ell=np.int64(basis.ell),
        coefficient_hash=np.frombuffer(bytes.fromhex(basis.coefficient_hash), dtype=np.uint8),
        B_data=basis.B.data.astype("<f8"), B_indices=basis.B.indices.astype("<i8"),
        B_indptr=basis.B.indptr.astype("<i8"),
        B_shape=np.array(basis.B.shape, dtype=np.int64),
        St_dense=np.int64(0 if sp.issparse(St) else 1),
        **_matrix_fields("St", St), **_matrix_fields("Mt", Mt),
    )


def _matrix_fields(name, A):
    if sp.issparse(A):
        A = A.tocsc()
        return {f"{name}_data": A.data.astype("<f8"),
                f"{name}_indices": A.indices.astype("<i8"),
                f"{name}_indptr": A.indptr.astype("<i8"),
                f"{name}_shape": np.array(A.shape, dtype=np.int64)}
    return {f"{name}_array": np.asarray(A, dtype="<f8")}


def _matrix_load(z, name):
    if f"{name}_array" in z:
        return z[f"{name}_array"]
    return sp.csc_matrix((z[f"{name}_data"], z[f"{name}_indices"], z[f"{name}_indptr"]),
                         shape=tuple(z[f"{name}_shape"])).tocsr()


def load_basis(path, mesh: MeshHierarchy, coefficient: CoefficientField,
               p: int, ell: int) -> MultiscaleBasis | None:
    """Returns the cached basis or None when the key does not match."""
    try:
        z = np.load(path)
    except (OSError, ValueError):
        return None
    with z:
        if int(z["version"]) != _CACHE_VERSION:
            return None
        cells = tuple(int(x) for x in z["mesh_cells"])
        if cells != (mesh.coarse_cells_per_dim, mesh.eps_cells_per_dim,
                     mesh.fine_cells_per_dim):
            return None
        if int(z["p"]) != p or int(z["ell"]) != ell:
            return None
        if bytes(z["coefficient_hash"]).hex() != coefficient.descriptor_hash():
            return None
        B = sp.csc_matrix((z["B_data"], z["B_indices"], z["B_indptr"]),
                          shape=tuple(z["B_shape"]))
        return MultiscaleBasis(mesh=mesh, p=p, ell=ell, B=B,
                               stiffness=_matrix_load(z, "St"),
                               mass=_matrix_load(z, "Mt"),
                               coefficient_hash=coefficient.descriptor_hash())
