"""Pure-NumPy kernel backend.

Implements the same call surface as the compiled extension so the two are
interchangeable.  The kernel stages are numerically equivalent formulations
that differ only in how the small interpolation products are organized; in
NumPy the reference stage keeps a per-lane matrix-vector loop while the
later stages collapse to batched matmuls.
"""

from __future__ import annotations

import numpy as np

COMPILED = False

# kernel stage codes
STAGE_REFERENCE = 0
STAGE_DATA = 1
STAGE_MM = 2
STAGE_SCHED = 3


def gather(u: np.ndarray, idx: np.ndarray) -> np.ndarray:
    """Block[j,s] = u[idx[j,s]], with negative indices reading zero."""
    out = u[np.clip(idx, 0, None)]
    out[idx < 0] = 0.0
    return np.ascontiguousarray(out)


def gather_compressed(u: np.ndarray, flat_idx: np.ndarray, shape: tuple) -> np.ndarray:
    """Masked gather through a sentinel-extended vector (branch-free form)."""
    u_ext = np.empty(len(u) + 1, dtype=u.dtype)
    u_ext[:-1] = u
    u_ext[-1] = 0.0
    return u_ext[flat_idx].reshape(shape)


def scatter_add(y: np.ndarray, idx: np.ndarray, block: np.ndarray) -> None:
    sel = idx >= 0
    np.add.at(y, idx[sel], block[sel])


def scatter_add_compressed(y: np.ndarray, positions: np.ndarray, targets: np.ndarray,
                           block: np.ndarray) -> None:
    np.add.at(y, targets, block.reshape(-1)[positions])


def interp(E: np.ndarray, U: np.ndarray, stage: int) -> np.ndarray:
    """V = E @ U for a (rows, n_dofs) table and (n_dofs, S) block."""
    if stage == STAGE_REFERENCE:
        out = np.empty((E.shape[0], U.shape[1]), dtype=U.dtype)
        for s in range(U.shape[1]):
            out[:, s] = E @ U[:, s]
        return out
    return E @ U


def interp_t(E: np.ndarray, V: np.ndarray, stage: int) -> np.ndarray:
    """U = E.T @ V."""
    if stage == STAGE_REFERENCE:
        out = np.empty((E.shape[1], V.shape[1]), dtype=V.dtype)
        for s in range(V.shape[1]):
            out[:, s] = E.T @ V[:, s]
        return out
    return E.T @ V


def d_action_affine(G: np.ndarray, jit: np.ndarray, jxw: np.ndarray) -> np.ndarray:
    """Quadrature-point transform with one Jacobian per slot.

    G: (n_q, 3, S) reference gradients; jit: (S, 3, 3) inverse-transpose
    Jacobians; jxw: (S, n_q).  Returns J^{-1} (jxw * (J^{-T} g)).
    """
    g1 = np.einsum("sij,qjs->qis", jit, G, optimize=True)
    g1 *= jxw.T[:, None, :]
    return np.einsum("sji,qjs->qis", jit, g1, optimize=True)


def d_action_per_point(G: np.ndarray, jit: np.ndarray, jxw: np.ndarray) -> np.ndarray:
    """Same with per-quadrature-point Jacobians: jit (S, n_q, 3, 3)."""
    g1 = np.einsum("sqij,qjs->qis", jit, G, optimize=True)
    g1 *= jxw.T[:, None, :]
    return np.einsum("sqji,qjs->qis", jit, g1, optimize=True)


def mass_action(V: np.ndarray, jxw: np.ndarray, scale: float) -> np.ndarray:
    """Pointwise mass scaling of interpolated values, (n_q, S) * (S, n_q)."""
    return V * (scale * jxw.T)


def face_qpoint(Vm, Vp, Gm, Gp, m_minus, m_plus, sjxw, tau, scale):
    """Interior-face quadrature-point arithmetic.

    Vm/Vp: (n_qf, S) values; Gm/Gp: (n_qf, 3, S) reference gradients;
    m_minus/m_plus: (S, n_qf, 3); sjxw: (S, n_qf); tau: (S,); scale is an
    overall factor (diffusivity).  Returns (qv, qg_m, qg_p): the value-test
    weights (n_qf, S) for the minus side (negated for plus) and the
    gradient-test blocks (n_qf, 3, S) per side.
    """
    dn_m = np.einsum("sqk,qks->qs", m_minus, Gm, optimize=True)
    dn_p = np.einsum("sqk,qks->qs", m_plus, Gp, optimize=True)
    jump = Vm - Vp
    avg = 0.5 * (dn_m + dn_p)
    w = sjxw.T * scale
    qv = w * (tau[None, :] * jump - avg)
    half_wj = -0.5 * (w * jump)
    qg_m = half_wj[:, None, :] * np.transpose(m_minus, (1, 2, 0))
    qg_p = half_wj[:, None, :] * np.transpose(m_plus, (1, 2, 0))
    return qv, qg_m, qg_p


def boundary_qpoint(Vm, Gm, m, sjxw, tau, scale):
    """Dirichlet boundary-face arithmetic (one-sided, full jump)."""
    dn = np.einsum("sqk,qks->qs", m, Gm, optimize=True)
    w = sjxw.T * scale
    qv = w * (tau[None, :] * Vm - dn)
    wj = -(w * Vm)
    qg = wj[:, None, :] * np.transpose(m, (1, 2, 0))
    return qv, qg


def spmv(row_ptr: np.ndarray, col_idx: np.ndarray, values: np.ndarray,
         u: np.ndarray) -> np.ndarray:
    """CSR matrix-vector product (row-sequential, deterministic)."""
    prod = values * u[col_idx]
    out = np.add.reduceat(prod, row_ptr[:-1])
    out[np.diff(row_ptr) == 0] = 0.0
    return out


def axpy_rows(y: np.ndarray, idx: np.ndarray, block: np.ndarray) -> None:
    scatter_add(y, idx, block)
