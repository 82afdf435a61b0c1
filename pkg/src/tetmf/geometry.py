"""Precomputed geometry factors for operator evaluation.

Cell data holds inverse-transpose Jacobians and quadrature scaling (JxW).
In affine mode a single Jacobian per cell is stored; in per-quadrature-point
mode (required for curved meshes) a Jacobian is stored for every quadrature
point, with the cell map interpolated quadratically through the vertices and
edge midpoints.

Face data is always stored per quadrature point: unit normals of the minus
side, surface JxW, and the vectors m = J^{-1} n for both adjacent cells,
which turn reference gradients into physical normal derivatives.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .basis import lagrange_grads, lagrange_values, reference_nodes
from .mesh import TetMesh
from .quadrature import QuadratureRule
from .reference import EDGE_VERTICES, FACE_VERTICES, REF_VERTICES, face_quad_points

__all__ = ["GeometryData", "build_geometry", "cell_quad_points", "AFFINE", "PER_POINT"]

AFFINE = "affine"
PER_POINT = "per_point"


@dataclass
class GeometryData:
    """Geometry factors for one (mesh, quadrature) pairing."""

    mode: str
    cell_rule: QuadratureRule
    face_rule: QuadratureRule | None
    # cell data
    jac_inv_t: np.ndarray        # (N,3,3) affine / (N,n_q,3,3) per-point
    jxw: np.ndarray              # (N, n_q); affine rows are det * w_q
    det: np.ndarray | None       # (N,) affine only
    cell_volumes: np.ndarray     # (N,)
    # interior face data (present when face_rule given)
    face_normals: np.ndarray | None = None    # (n_if, n_qf, 3), minus-outward
    face_jxw: np.ndarray | None = None        # (n_if, n_qf)
    face_m_minus: np.ndarray | None = None    # (n_if, n_qf, 3)
    face_m_plus: np.ndarray | None = None     # (n_if, n_qf, 3)
    face_areas: np.ndarray | None = None      # (n_if,)
    # boundary face data
    bnd_normals: np.ndarray | None = None
    bnd_jxw: np.ndarray | None = None
    bnd_m: np.ndarray | None = None
    bnd_areas: np.ndarray | None = None

    @property
    def n_cells(self) -> int:
        return len(self.jxw)

    @property
    def is_affine(self) -> bool:
        return self.mode == AFFINE

    def total_volume(self) -> float:
        return float(self.jxw.sum())

    def nbytes(self) -> int:
        """Resident size of the stored geometry arrays."""
        total = 0
        for arr in (self.jac_inv_t, self.jxw, self.det, self.face_normals,
                    self.face_jxw, self.face_m_minus, self.face_m_plus,
                    self.bnd_normals, self.bnd_jxw, self.bnd_m):
            if arr is not None:
                total += arr.nbytes
        return total


def _geometry_nodes(mesh: TetMesh) -> np.ndarray:
    """Quadratic geometry nodes; straight cells get their affine midpoints."""
    if mesh.is_curved:
        return mesh.geometry_nodes
    corner = mesh.vertices[mesh.cells]
    mids = np.stack([0.5 * (corner[:, a] + corner[:, b]) for a, b in EDGE_VERTICES], axis=1)
    return np.concatenate([corner, mids], axis=1)


def _p2_grad_table(points: np.ndarray) -> np.ndarray:
    """Quadratic geometry shape gradients at reference points, (n_pts, 10, 3)."""
    return np.transpose(lagrange_grads(2, points), (0, 2, 1))


def _p2_value_table(points: np.ndarray) -> np.ndarray:
    return lagrange_values(2, points)


def _check_positive(det: np.ndarray, what: str) -> None:
    bad = np.flatnonzero(det <= 0)
    if len(bad):
        raise ValueError(f"non-positive Jacobian determinant in {what} for cells {bad[:20].tolist()}")


def face_phys_points(mesh: TetMesh, rule: QuadratureRule, cells: np.ndarray,
                     local_faces: np.ndarray, codes: np.ndarray) -> np.ndarray:
    """Physical positions of face quadrature points, (n_faces, n_qf, 3)."""
    n_qf = rule.n_points
    ref = np.empty((len(cells), n_qf, 3))
    for key in set(zip(local_faces.tolist(), codes.tolist())):
        lf, code = key
        sel = (local_faces == lf) & (codes == code)
        ref[sel] = face_quad_points(lf, code, rule.points)
    if mesh.is_curved:
        vals = _p2_value_table(ref.reshape(-1, 3)).reshape(len(cells), n_qf, 10)
        return np.einsum("fqa,fai->fqi", vals, mesh.geometry_nodes[cells])
    jac = mesh.cell_jacobians()[cells]
    v0 = mesh.vertices[mesh.cells[cells, 0]]
    return v0[:, None, :] + np.einsum("fij,fqj->fqi", jac, ref)


def cell_quad_points(mesh: TetMesh, rule: QuadratureRule) -> np.ndarray:
    """Physical positions of the cell quadrature points, (N, n_q, 3)."""
    if mesh.is_curved:
        vals = _p2_value_table(rule.points)                   # (n_q, 10)
        return np.einsum("qa,eai->eqi", vals, mesh.geometry_nodes)
    jac = mesh.cell_jacobians()
    v0 = mesh.vertices[mesh.cells[:, 0]]
    return v0[:, None, :] + np.einsum("eij,qj->eqi", jac, rule.points)


def build_geometry(
    mesh: TetMesh,
    cell_rule: QuadratureRule,
    mode: str = AFFINE,
    face_rule: QuadratureRule | None = None,
) -> GeometryData:
    """Precompute cell (and optionally face) geometry factors.

    Affine mode requires a straight-sided mesh; curved meshes must use
    ``PER_POINT``.
    """
    if mode not in (AFFINE, PER_POINT):
        raise ValueError(f"unknown geometry mode {mode!r}")
    if mode == AFFINE and mesh.is_curved:
        raise ValueError("affine geometry requested for a curved mesh; use per-point mode")

    w = cell_rule.weights
    if mode == AFFINE:
        jac = mesh.cell_jacobians()
        det = np.linalg.det(jac)
        _check_positive(det, "cell geometry")
        jac_inv_t = np.transpose(np.linalg.inv(jac), (0, 2, 1))
        jxw = det[:, None] * w[None, :]
        volumes = det / 6.0
    else:
        nodes = _geometry_nodes(mesh)
        dn = _p2_grad_table(cell_rule.points)                 # (n_q, 10, 3)
        jac = np.einsum("eai,qaj->eqij", nodes, dn)           # (N, n_q, 3, 3)
        det = np.linalg.det(jac)
        _check_positive(det.min(axis=1), "cell geometry")
        jac_inv_t = np.transpose(np.linalg.inv(jac), (0, 1, 3, 2))
        jxw = det * w[None, :]
        volumes = jxw.sum(axis=1)
        det = None

    geo = GeometryData(
        mode=mode, cell_rule=cell_rule, face_rule=face_rule,
        jac_inv_t=np.ascontiguousarray(jac_inv_t),
        jxw=np.ascontiguousarray(jxw),
        det=det, cell_volumes=volumes,
    )
    if face_rule is not None:
        _build_face_geometry(mesh, geo, face_rule)
    return geo


def _face_side_jacobians(mesh, geo_nodes, cells_side, ref_pts_per_face, affine_jac):
    """Jacobians of the side cells at given reference points.

    ref_pts_per_face: (n_faces, n_qf, 3); returns (n_faces, n_qf, 3, 3).
    """
    n_faces, n_qf = ref_pts_per_face.shape[:2]
    if affine_jac is not None:
        return np.broadcast_to(affine_jac[cells_side][:, None], (n_faces, n_qf, 3, 3)).copy()
    flat = ref_pts_per_face.reshape(-1, 3)
    dn = _p2_grad_table(flat).reshape(n_faces, n_qf, 10, 3)
    return np.einsum("fai,fqaj->fqij", geo_nodes[cells_side], dn)


def _build_face_geometry(mesh: TetMesh, geo: GeometryData, face_rule: QuadratureRule) -> None:
    w = face_rule.weights
    n_qf = face_rule.n_points
    affine_jac = mesh.cell_jacobians() if geo.is_affine else None
    geo_nodes = None if geo.is_affine else _geometry_nodes(mesh)
    p2_vals = None if geo.is_affine else _p2_value_table

    def side_points(local_faces, codes):
        pts = np.empty((len(local_faces), n_qf, 3))
        for key in set(zip(local_faces.tolist(), codes.tolist())):
            lf, code = key
            sel = (local_faces == lf) & (codes == code)
            pts[sel] = face_quad_points(lf, code, face_rule.points)
        return pts

    def face_block(cells_minus, lf_minus, codes_minus, cells_plus=None, lf_plus=None, codes_plus=None):
        ref_m = side_points(lf_minus, codes_minus)
        jac_m = _face_side_jacobians(mesh, geo_nodes, cells_minus, ref_m, affine_jac)

        # tangents of the minus-side parameterization (affine in s,t)
        corners = REF_VERTICES[np.array([FACE_VERTICES[lf] for lf in lf_minus])]  # (F,3,3)
        dxi_ds = corners[:, 1] - corners[:, 0]
        dxi_dt = corners[:, 2] - corners[:, 0]
        t_s = np.einsum("fqij,fj->fqi", jac_m, dxi_ds)
        t_t = np.einsum("fqij,fj->fqi", jac_m, dxi_dt)
        cr = np.cross(t_s, t_t)
        norm = np.linalg.norm(cr, axis=2)
        normals = cr / norm[..., None]

        # orient outward from the minus cell
        centroids = mesh.vertices[mesh.cells[cells_minus]].mean(axis=1)
        if geo.is_affine:
            v0 = mesh.vertices[mesh.cells[cells_minus, 0]]
            xq = v0[:, None, :] + np.einsum("fij,fqj->fqi", jac_m[:, 0], ref_m)
        else:
            vals = p2_vals(ref_m.reshape(-1, 3)).reshape(len(cells_minus), n_qf, 10)
            xq = np.einsum("fqa,fai->fqi", vals, geo_nodes[cells_minus])
        sign = np.sign(np.einsum("fqi,fqi->fq", normals, xq - centroids[:, None, :]).mean(axis=1))
        normals *= sign[:, None, None]

        sjxw = norm * w[None, :]
        areas = sjxw.sum(axis=1)
        m_minus = np.linalg.solve(jac_m, normals[..., None])[..., 0]

        m_plus = None
        if cells_plus is not None:
            ref_p = side_points(lf_plus, codes_plus)
            jac_p = _face_side_jacobians(mesh, geo_nodes, cells_plus, ref_p, affine_jac)
            m_plus = np.linalg.solve(jac_p, normals[..., None])[..., 0]
        return normals, sjxw, m_minus, m_plus, areas

    def compact(arr):
        # affine faces carry constant normals/m vectors; store one per face
        return arr[:, 0, :].copy() if geo.is_affine else arr

    ifaces = mesh.interior_faces
    if len(ifaces):
        zeros = np.zeros(len(ifaces), dtype=np.int32)
        normals, sjxw, m_m, m_p, areas = face_block(
            ifaces[:, 0], ifaces[:, 1], zeros, ifaces[:, 2], ifaces[:, 3], ifaces[:, 4]
        )
        geo.face_normals, geo.face_jxw = compact(normals), sjxw
        geo.face_m_minus, geo.face_m_plus = compact(m_m), compact(m_p)
        geo.face_areas = areas
    else:
        geo.face_normals = np.empty((0, 3))
        geo.face_jxw = np.empty((0, n_qf))
        geo.face_m_minus = np.empty((0, 3))
        geo.face_m_plus = np.empty((0, 3))
        geo.face_areas = np.empty((0,))

    bfaces = mesh.boundary_faces
    if len(bfaces):
        zeros = np.zeros(len(bfaces), dtype=np.int32)
        normals, sjxw, m, _, areas = face_block(bfaces[:, 0], bfaces[:, 1], zeros)
        geo.bnd_normals, geo.bnd_jxw = compact(normals), sjxw
        geo.bnd_m, geo.bnd_areas = compact(m), areas
    else:
        geo.bnd_normals = np.empty((0, 3))
        geo.bnd_jxw = np.empty((0, n_qf))
        geo.bnd_m = np.empty((0, 3))
        geo.bnd_areas = np.empty((0,))
