"""Assembled CSR path: element-loop assembly for CG/DG/Helmholtz, CSR
matvec, and diagonal extraction.

This is the oracle and throughput baseline for the matrix-free operators.
Assembly deliberately reuses the same quadrature, basis tables and geometry
factors as the matrix-free path so equivalence holds to rounding error, not
merely to discretization accuracy.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

from . import kernels
from .basis import BasisTable
from .dofmap import DoFMap
from .geometry import GeometryData
from .mesh import TetMesh
from .operator import SipgConfig, HelmholtzCoefficients

__all__ = ["CsrMatrix", "assemble", "spmv", "extract_diagonal"]


@dataclass
class CsrMatrix:
    """CSR storage with 32-bit column indices (sorted within each row)."""

    row_ptr: np.ndarray     # (n+1,) int64
    col_idx: np.ndarray     # (nnz,) int32
    values: np.ndarray      # (nnz,) float64
    n_rows: int

    @property
    def nnz(self) -> int:
        return len(self.values)

    def matvec(self, u: np.ndarray) -> np.ndarray:
        if len(u) != self.n_rows:
            raise ValueError(f"vector length {len(u)} != {self.n_rows}")
        return kernels.active.spmv(self.row_ptr, self.col_idx, self.values, u)

    @property
    def flops_per_apply(self) -> int:
        return 2 * self.nnz

    def nbytes(self) -> int:
        """Memory accounting: 4 bytes per index, 8 per value, 8 per row offset."""
        return 4 * self.nnz + 8 * self.nnz + 8 * (self.n_rows + 1)

    def diagonal(self) -> np.ndarray:
        d = np.zeros(self.n_rows)
        for i in range(self.n_rows):
            lo, hi = self.row_ptr[i], self.row_ptr[i + 1]
            cols = self.col_idx[lo:hi]
            hit = np.flatnonzero(cols == i)
            if len(hit):
                d[i] = self.values[lo + hit[0]]
        return d

    def to_scipy(self) -> sp.csr_matrix:
        return sp.csr_matrix((self.values, self.col_idx, self.row_ptr),
                             shape=(self.n_rows, self.n_rows))

    def to_dense(self) -> np.ndarray:
        return self.to_scipy().toarray()

    @classmethod
    def from_scipy(cls, m) -> "CsrMatrix":
        m = m.tocsr()
        m.sort_indices()
        return cls(m.indptr.astype(np.int64), m.indices.astype(np.int32),
                   m.data.astype(np.float64), m.shape[0])

    def write_matrix_market(self, path: str) -> None:
        from scipy.io import mmwrite

        mmwrite(path, self.to_scipy())


def _grad_blocks(geo: GeometryData, basis: BasisTable) -> np.ndarray:
    """Physical gradients B[e,q,i,a] = (J^{-T} grad phi_a)_i at each point."""
    g3 = basis.grad_matrix.reshape(basis.n_q, 3, basis.n_dofs)
    if geo.is_affine:
        return np.einsum("eij,qja->eqia", geo.jac_inv_t, g3)
    return np.einsum("eqij,qja->eqia", geo.jac_inv_t, g3)


def _cell_matrices(geo: GeometryData, basis: BasisTable,
                   mass_scale: float = 0.0, stiff_scale: float = 1.0) -> np.ndarray:
    """Per-cell matrices of stiff_scale * stiffness + mass_scale * mass."""
    B = _grad_blocks(geo, basis)
    K = np.einsum("eqia,eqib,eq->eab", B, B, geo.jxw, optimize=True)
    if stiff_scale != 1.0:
        K *= stiff_scale
    if mass_scale != 0.0:
        V = basis.value_matrix
        K += mass_scale * np.einsum("qa,qb,eq->eab", V, V, geo.jxw, optimize=True)
    return K


def _face_side_tables(basis: BasisTable, lf: int, code: int):
    Fv = basis.face_values[lf, code]
    Fg3 = basis.face_grads[lf, code].reshape(basis.n_qf, 3, basis.n_dofs)
    return Fv, Fg3


def _sipg_face_blocks(mesh: TetMesh, geo: GeometryData, basis: BasisTable,
                      sipg: SipgConfig, scale: float):
    """Yield (rows_cells, cols_cells, blocks) for all SIPG face couplings."""
    ifc = mesh.interior_faces
    for (lfm, lfp, code) in sorted(set((int(r[1]), int(r[3]), int(r[4])) for r in ifc)) if len(ifc) else []:
        sel = np.flatnonzero((ifc[:, 1] == lfm) & (ifc[:, 3] == lfp) & (ifc[:, 4] == code))
        rows = ifc[sel]
        Vm, Fg3m = _face_side_tables(basis, lfm, 0)
        Vp, Fg3p = _face_side_tables(basis, lfp, code)
        dn_m = np.einsum("fqk,qka->fqa", geo.face_m_minus[sel], Fg3m)
        dn_p = np.einsum("fqk,qka->fqa", geo.face_m_plus[sel], Fg3p)
        w = geo.face_jxw[sel] * scale                         # (F, n_qf)
        tau = sipg.tau_interior[sel]                          # (F,)
        sides = {
            -1: (np.broadcast_to(Vm, (len(sel),) + Vm.shape), dn_m, 1.0, rows[:, 0]),
            +1: (np.broadcast_to(Vp, (len(sel),) + Vp.shape), dn_p, -1.0, rows[:, 2]),
        }
        for rho, (V_r, dn_r, s_r, cells_r) in sides.items():
            for sigma, (V_s, dn_s, s_s, cells_s) in sides.items():
                blk = (
                    -0.5 * s_s * np.einsum("fqa,fqb,fq->fab", dn_r, V_s, w, optimize=True)
                    - 0.5 * s_r * np.einsum("fqa,fqb,fq->fab", V_r, dn_s, w, optimize=True)
                    + s_r * s_s * np.einsum("fqa,fqb,fq->fab", V_r, V_s, w * tau[:, None],
                                            optimize=True)
                )
                yield cells_r, cells_s, blk


def _sipg_boundary_blocks(mesh: TetMesh, geo: GeometryData, basis: BasisTable,
                          sipg: SipgConfig, dirichlet_ids, scale: float):
    bfc = mesh.boundary_faces
    dset = set(int(i) for i in dirichlet_ids)
    sel_all = np.array([i for i in range(len(bfc)) if int(bfc[i, 2]) in dset], dtype=np.int64)
    if not len(sel_all):
        return
    for lf in range(4):
        sel = sel_all[bfc[sel_all, 1] == lf]
        if not len(sel):
            continue
        V, Fg3 = _face_side_tables(basis, lf, 0)
        dn = np.einsum("fqk,qka->fqa", geo.bnd_m[sel], Fg3)
        w = geo.bnd_jxw[sel] * scale
        tau = sipg.tau_boundary[sel]
        Vb = np.broadcast_to(V, (len(sel),) + V.shape)
        blk = (
            -np.einsum("fqa,fqb,fq->fab", dn, Vb, w, optimize=True)
            - np.einsum("fqa,fqb,fq->fab", Vb, dn, w, optimize=True)
            + np.einsum("fqa,fqb,fq->fab", Vb, Vb, w * tau[:, None], optimize=True)
        )
        yield bfc[sel, 0], bfc[sel, 0], blk


def _accumulate(coo_i, coo_j, coo_v, dofmap: DoFMap, cells_r, cells_s, blocks):
    dr = dofmap.cell_dofs[cells_r].astype(np.int64)           # (F, nd)
    ds = dofmap.cell_dofs[cells_s].astype(np.int64)
    nd = dr.shape[1]
    ii = np.repeat(dr, nd, axis=1)
    jj = np.tile(ds, (1, nd))
    coo_i.append(ii.ravel())
    coo_j.append(jj.ravel())
    coo_v.append(blocks.reshape(len(dr), -1).ravel())


def assemble(
    dofmap: DoFMap,
    mesh: TetMesh,
    geometry: GeometryData,
    basis: BasisTable,
    sipg: SipgConfig | None = None,
    coeffs: HelmholtzCoefficients | None = None,
    dirichlet_ids=(),
) -> CsrMatrix:
    """Assemble the operator configured by the arguments:

    CG dofmap -> Poisson stiffness with identity Dirichlet rows/columns;
    DG dofmap + sipg -> SIPG Poisson; additionally coeffs -> Helmholtz
    (mass_scale * M + diffusivity * A), expanded per interleaved component.
    """
    mass_scale = coeffs.mass_scale if coeffs is not None else 0.0
    scale = coeffs.diffusivity if coeffs is not None else 1.0

    coo_i, coo_j, coo_v = [], [], []
    K = _cell_matrices(geometry, basis, mass_scale, scale)
    _accumulate(coo_i, coo_j, coo_v, dofmap,
                np.arange(mesh.n_cells), np.arange(mesh.n_cells), K)

    if dofmap.space == "dg":
        if sipg is None:
            raise ValueError("DG assembly requires a SipgConfig")
        for cr, cs, blk in _sipg_face_blocks(mesh, geometry, basis, sipg, scale):
            _accumulate(coo_i, coo_j, coo_v, dofmap, cr, cs, blk)
        for cr, cs, blk in _sipg_boundary_blocks(mesh, geometry, basis, sipg,
                                                 dirichlet_ids, scale):
            _accumulate(coo_i, coo_j, coo_v, dofmap, cr, cs, blk)

    i = np.concatenate(coo_i)
    j = np.concatenate(coo_j)
    v = np.concatenate(coo_v)
    n = dofmap.n_scalar_dofs

    if dofmap.space == "cg" and dofmap.dirichlet_mask.any():
        mask = dofmap.dirichlet_mask
        keep = ~(mask[i] | mask[j])
        i, j, v = i[keep], j[keep], v[keep]
        cdofs = np.flatnonzero(mask)
        i = np.concatenate([i, cdofs])
        j = np.concatenate([j, cdofs])
        v = np.concatenate([v, np.ones(len(cdofs))])

    nc = dofmap.n_components
    if nc > 1:
        i = (i[None, :] * nc + np.arange(nc)[:, None]).ravel()
        j = (j[None, :] * nc + np.arange(nc)[:, None]).ravel()
        v = np.tile(v, nc)
        n *= nc

    mat = sp.coo_matrix((v, (i, j)), shape=(n, n)).tocsr()
    mat.sum_duplicates()
    mat.sort_indices()
    # drop assembly-zero fill-in while keeping the true sparsity pattern
    return CsrMatrix.from_scipy(mat)


def spmv(A: CsrMatrix, u: np.ndarray) -> np.ndarray:
    return A.matvec(u)


def extract_diagonal(A: CsrMatrix) -> np.ndarray:
    """Diagonal of A; raises if an entry is exactly zero (reported by index)."""
    d = A.diagonal()
    zero = np.flatnonzero(d == 0.0)
    if len(zero):
        raise ValueError(f"zero diagonal entries at indices {zero[:10].tolist()}")
    return d
