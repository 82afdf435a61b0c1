"""Matrix-free operators: CG Poisson, DG-SIPG Poisson, and the vector-valued
Helmholtz operator, with selectable kernel stages and batching strategies.

An operator evaluation loops over cell batches computing

    y += G^T  E^T  D  E  G  u

where G gathers local DoFs, E is the tabulated interpolation matrix and D
acts at quadrature points (Jacobian transforms and JxW scaling).  DG adds a
face loop with jump/average/penalty terms; faces follow their owning (minus)
cell in the traversal order and are grouped on the fly by local-face and
orientation signature so grouped faces share their interpolation matrices.

Dirichlet constraints are realized by masked gather/scatter: constrained
entries read as zero and are never written, and the final result carries the
input values on constrained rows (identity-row convention, which keeps the
operators symmetric positive definite).
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

from . import kernels
from .basis import BasisTable
from .counters import FlopCounters
from .dofmap import DoFMap, build_batch_plan, dof_coordinates
from .geometry import GeometryData, cell_quad_points, face_phys_points
from .kernels import STAGE_CODES, STAGE_SCHED
from .mesh import TetMesh

__all__ = [
    "OperatorConfig",
    "SipgConfig",
    "HelmholtzCoefficients",
    "CgPoissonOperator",
    "DgSipgOperator",
    "HelmholtzOperator",
    "compute_sipg_tau",
    "assemble_rhs",
    "l2_error",
    "apply_cg_poisson",
    "apply_dg_sipg",
    "apply_helmholtz",
]

# flops per quadrature point in the cell D action: two 3x3 transforms at 15
# each plus the JxW scaling of the 3-vector
_D_FLOPS_PER_POINT = 33
# flops per face quadrature point per column in face_qpoint (counted ops)
_FACE_Q_FLOPS = 26
_BND_Q_FLOPS = 13


@dataclass(frozen=True)
class OperatorConfig:
    """Kernel/batching selection for one operator instance."""

    kernel_stage: str = "mm"          # ref | data | mm | sched
    batching: str = "cells"           # cells | components
    lane_width: int | None = None     # default: 4 (f64), 8 (f32)
    quadrature_variant: str = "standard"
    precision: str = "f64"
    threads: int = 1
    backend: str = "auto"             # auto | compiled | python

    def __post_init__(self):
        if self.kernel_stage not in STAGE_CODES:
            raise ValueError(f"unknown kernel stage {self.kernel_stage!r}")
        if self.batching not in ("cells", "components"):
            raise ValueError(f"unknown batching {self.batching!r}")
        if self.precision not in ("f32", "f64"):
            raise ValueError(f"unknown precision {self.precision!r}")

    @property
    def resolved_lane_width(self) -> int:
        if self.lane_width is not None:
            return self.lane_width
        return 8 if self.precision == "f32" else 4

    @property
    def cells_per_lane(self) -> int:
        if self.kernel_stage in ("mm", "sched") and self.batching == "cells":
            return 4
        return 1

    @property
    def dtype(self):
        return np.float32 if self.precision == "f32" else np.float64


@dataclass
class HelmholtzCoefficients:
    """mass_scale = gamma0/dt [1/s], diffusivity = nu [m^2/s]."""

    mass_scale: float
    diffusivity: float

    def __post_init__(self):
        if self.mass_scale < 0 or self.diffusivity < 0:
            raise ValueError("coefficients must be non-negative")
        if self.mass_scale == 0 and self.diffusivity == 0:
            raise ValueError("mass_scale and diffusivity cannot both vanish")


@dataclass
class SipgConfig:
    """Interior-penalty parameters with the per-face tau cache."""

    penalty_constant: float = 1.0
    tau_interior: np.ndarray = field(default=None)   # (n_if,)
    tau_boundary: np.ndarray = field(default=None)   # (n_bf,)


def compute_sipg_tau(mesh: TetMesh, geo: GeometryData, p: int, penalty_constant: float = 1.0) -> SipgConfig:
    """tau = C (p+1)(p+3)/3 * max_sides(face area / cell volume); boundary
    faces use the single adjacent cell with an extra factor 2."""
    base = penalty_constant * (p + 1) * (p + 3) / 3.0
    vols = geo.cell_volumes
    ifc = mesh.interior_faces
    tau_i = np.empty(len(ifc))
    if len(ifc):
        ratio = np.maximum(geo.face_areas / vols[ifc[:, 0]], geo.face_areas / vols[ifc[:, 2]])
        tau_i = base * ratio
    bfc = mesh.boundary_faces
    tau_b = np.empty(len(bfc))
    if len(bfc):
        tau_b = base * 2.0 * geo.bnd_areas / vols[bfc[:, 0]]
    cfg = SipgConfig(penalty_constant, tau_i, tau_b)
    if len(tau_i) and not np.all(tau_i > 0):
        raise ValueError("non-positive interior penalty")
    return cfg


@dataclass
class _FaceGroup:
    start: int
    stop: int
    lf_minus: int
    lf_plus: int
    code: int
    idx_minus: np.ndarray     # (n_dofs, S) global indices
    idx_plus: np.ndarray | None

    @property
    def n_faces(self) -> int:
        return self.stop - self.start


def _group_faces(faces: np.ndarray, capacity: int, key_cols) -> list[tuple[int, int]]:
    """Split the face list into maximal runs of equal signature, capped at
    ``capacity`` (on-the-fly orientation matching; leftovers form smaller
    groups, the per-lane fallback)."""
    groups = []
    n = len(faces)
    start = 0
    while start < n:
        stop = start + 1
        sig = tuple(faces[start, c] for c in key_cols)
        while (
            stop < n
            and stop - start < capacity
            and tuple(faces[stop, c] for c in key_cols) == sig
        ):
            stop += 1
        groups.append((start, stop))
        start = stop
    return groups


def _face_gather_idx(dofmap: DoFMap, cells: np.ndarray, n_cols: int, component) -> np.ndarray:
    """(n_dofs, S) vector-space gather indices, S = n_cols * n_faces,
    slot s = c * n_faces + l."""
    nc = dofmap.n_components
    scalar = dofmap.cell_dofs[cells].T.astype(np.int64)      # (n_dofs, F)
    blocks = []
    comps = range(nc) if component is None and n_cols > 1 else [component or 0]
    for c in comps:
        blocks.append(scalar * nc + c)
    return np.concatenate(blocks, axis=1).astype(np.int32)


class _OperatorBase:
    """Shared batching/casting machinery for the matrix-free operators."""

    n_components = 1

    def __init__(self, mesh, dofmap: DoFMap, geometry: GeometryData, basis: BasisTable,
                 config: OperatorConfig | None = None):
        self.mesh = mesh
        self.dofmap = dofmap
        self.geo = geometry
        self.basis = basis
        self.config = config or OperatorConfig()
        if self.config.batching == "components" and dofmap.n_components != 3:
            raise ValueError("components batching requires a 3-component space")
        self.k = kernels.get_backend(self.config.backend)
        self.stage = STAGE_CODES[self.config.kernel_stage]
        self.counters = FlopCounters()
        self.n_applies = 0

        dt = self.config.dtype
        self._Eg = np.ascontiguousarray(basis.grad_matrix, dtype=dt)
        self._Ev = np.ascontiguousarray(basis.value_matrix, dtype=dt)
        self._jit = np.ascontiguousarray(geometry.jac_inv_t, dtype=dt)
        self._jxw = np.ascontiguousarray(geometry.jxw, dtype=dt)

        W = self.config.resolved_lane_width
        cpl = self.config.cells_per_lane
        if self.config.batching == "components":
            self._plans = [build_batch_plan(dofmap, W, 1, "components")]
        elif dofmap.n_components == 1:
            self._plans = [build_batch_plan(dofmap, W, cpl, "cells")]
        else:
            self._plans = [build_batch_plan(dofmap, W, cpl, "cells", component=c)
                           for c in range(dofmap.n_components)]
        if self.stage == STAGE_SCHED:
            for plan in self._plans:
                flat = plan.gather_idx.reshape(plan.n_batches, -1).astype(np.int64).copy()
                flat[flat < 0] = plan.n_global
                plan.sched_idx = flat.astype(np.int32)

    # -- counters ---------------------------------------------------------

    def _count_cell_batch(self, S: int, n_active: int, n_scatter: int, with_mass: bool):
        nd = self.basis.n_dofs
        nq = self.basis.n_q
        self.counters.add("cell_interp_flops", 2 * (3 * nq * nd * 2) * S)
        self.counters.add("cell_qpoint_flops", _D_FLOPS_PER_POINT * nq * S)
        if with_mass:
            self.counters.add("cell_interp_flops", 2 * (nq * nd * 2) * S)
            self.counters.add("cell_qpoint_flops", 2 * nq * S + 3 * nq * S)  # mass scale + nu fold
            self.counters.add("cell_sum_flops", nd * S)                      # combine the two parts
        self.counters.add("cell_sum_flops", n_scatter)
        idx_per_cell = 1 if self.dofmap.space == "dg" else nd
        self.counters.add("index_bytes", 4 * idx_per_cell * n_active)
        geom = 14 if self.dofmap.space == "cg" else 18
        self.counters.add("geometry_bytes", geom * S // self.config.resolved_lane_width)
        if not self.geo.is_affine:
            self.counters.add("geometry_bytes", 72 * nq * n_active)

    def _count_apply_vectors(self):
        self.counters.add("vector_bytes", 24 * self.dofmap.n_global_dofs)

    # -- cell loop --------------------------------------------------------

    def _gather(self, plan, b, u):
        if self.stage == STAGE_SCHED:
            shape = plan.gather_idx[b].shape
            return self.k.gather_compressed(u, plan.sched_idx[b], shape)
        return self.k.gather(u, plan.gather_idx[b])

    def _cell_batch_range(self, plan, u, y, mass_scale, stiff_scale, b0, b1):
        k = self.k
        stage = self.stage
        with_mass = mass_scale != 0.0
        for b in range(b0, b1):
            U = self._gather(plan, b, u)
            S = U.shape[1]
            cells = plan.slot_cells[b]
            jxw_b = self._jxw[cells]
            V = k.interp(self._Eg, U, stage)
            G = V.reshape(self.basis.n_q, 3, S)
            if self.geo.is_affine:
                D = k.d_action_affine(G, self._jit[cells], jxw_b)
            else:
                D = k.d_action_per_point(G, self._jit[cells], jxw_b)
            if stiff_scale != 1.0:
                D *= self.config.dtype(stiff_scale)
            R = k.interp_t(self._Eg, D.reshape(3 * self.basis.n_q, S), stage)
            if with_mass:
                Vv = k.interp(self._Ev, U, stage)
                M = k.mass_action(Vv, jxw_b, mass_scale)
                R += k.interp_t(self._Ev, M, stage)
            k.scatter_add(y, plan.gather_idx[b], R)
            self._count_cell_batch(S, int(plan.active[b].sum()), int(plan.n_unmasked[b]), with_mass)

    def _cell_loop(self, plan, u, y, mass_scale=0.0, stiff_scale=1.0):
        threads = self.config.threads
        if threads <= 1:
            self._cell_batch_range(plan, u, y, mass_scale, stiff_scale, 0, plan.n_batches)
            return
        # same-color batches write disjoint DoFs and may run concurrently
        from concurrent.futures import ThreadPoolExecutor

        order = np.argsort(plan.colors, kind="stable")
        colors = plan.colors[order]
        with ThreadPoolExecutor(max_workers=threads) as pool:
            for color in np.unique(colors):
                ids = order[colors == color]
                chunks = np.array_split(ids, threads)
                futs = [
                    pool.submit(self._run_batches, plan, u, y, mass_scale, stiff_scale, chunk)
                    for chunk in chunks if len(chunk)
                ]
                for f in futs:
                    f.result()

    def _run_batches(self, plan, u, y, mass_scale, stiff_scale, ids):
        for b in ids:
            self._cell_batch_range(plan, u, y, mass_scale, stiff_scale, b, b + 1)

    def _check_length(self, u):
        if len(u) != self.dofmap.n_global_dofs:
            raise ValueError(
                f"vector length {len(u)} does not match {self.dofmap.n_global_dofs} DoFs")


class CgPoissonOperator(_OperatorBase):
    """Continuous-Galerkin Poisson action with identity Dirichlet rows."""

    def __init__(self, mesh, dofmap, geometry, basis, config=None):
        if dofmap.space != "cg":
            raise ValueError("CG operator needs a CG dof map")
        super().__init__(mesh, dofmap, geometry, basis, config)
        self._maskv = dofmap.vector_mask()

    def apply(self, u: np.ndarray) -> np.ndarray:
        self._check_length(u)
        dt = self.config.dtype
        u = np.asarray(u, dtype=dt)
        y = np.zeros(self.dofmap.n_global_dofs, dtype=dt)
        for plan in self._plans:
            self._cell_loop(plan, u, y)
        if self._maskv.any():
            y[self._maskv] = u[self._maskv]
        self._count_apply_vectors()
        self.n_applies += 1
        return y


class _DgFaceMixin:
    """Face loop shared by the DG Poisson and Helmholtz operators."""

    def _setup_faces(self, dirichlet_ids, sipg):
        mesh = self.mesh
        if self.geo.face_rule is None:
            raise ValueError("geometry was built without face data")
        self.sipg = sipg
        self.dirichlet_ids = frozenset(int(b) for b in dirichlet_ids)
        dt = self.config.dtype
        self._Fv = np.ascontiguousarray(self.basis.face_values, dtype=dt)
        self._Fg = np.ascontiguousarray(self.basis.face_grads, dtype=dt)
        self._fjxw = np.ascontiguousarray(self.geo.face_jxw, dtype=dt)
        self._fmm = np.ascontiguousarray(self.geo.face_m_minus, dtype=dt)
        self._fmp = np.ascontiguousarray(self.geo.face_m_plus, dtype=dt)
        self._tau_i = np.ascontiguousarray(sipg.tau_interior, dtype=dt)
        self._bjxw = np.ascontiguousarray(self.geo.bnd_jxw, dtype=dt)
        self._bm = np.ascontiguousarray(self.geo.bnd_m, dtype=dt)
        self._tau_b = np.ascontiguousarray(sipg.tau_boundary, dtype=dt)

        W = self.config.resolved_lane_width
        capacity = 4 * W if self.config.kernel_stage in ("mm", "sched") else W
        components = self.config.batching == "components"
        n_cols = 3 if components else 1
        comps = [None] if components else (
            range(self.dofmap.n_components) if self.dofmap.n_components > 1 else [0])

        self._face_plans = []
        self._bnd_plans = []
        ifc = mesh.interior_faces
        bfc = mesh.boundary_faces
        self._bnd_dirichlet = np.array(
            [i for i in range(len(bfc)) if int(bfc[i, 2]) in self.dirichlet_ids], dtype=np.int64)
        for comp in comps:
            groups = []
            for (f0, f1) in _group_faces(ifc, capacity, (1, 3, 4)):
                rows = ifc[f0:f1]
                groups.append(_FaceGroup(
                    f0, f1, int(rows[0, 1]), int(rows[0, 3]), int(rows[0, 4]),
                    _face_gather_idx(self.dofmap, rows[:, 0], n_cols, comp),
                    _face_gather_idx(self.dofmap, rows[:, 2], n_cols, comp),
                ))
            self._face_plans.append(groups)
            bgroups = []
            if len(self._bnd_dirichlet):
                dir_faces = bfc[self._bnd_dirichlet]
                sub_groups = _group_faces(dir_faces, capacity, (1,))
                for (f0, f1) in sub_groups:
                    rows = dir_faces[f0:f1]
                    bgroups.append((self._bnd_dirichlet[f0:f1], int(rows[0, 1]),
                                    _face_gather_idx(self.dofmap, rows[:, 0], n_cols, comp)))
            self._bnd_plans.append(bgroups)

    def _face_loop(self, plan_idx, u, y, scale=1.0):
        k = self.k
        stage = self.stage
        n_qf = self.basis.n_qf
        nd = self.basis.n_dofs
        cols = 3 if self.config.batching == "components" else 1
        for g in self._face_plans[plan_idx]:
            F = g.n_faces
            S = cols * F
            Um = k.gather(u, g.idx_minus)
            Up = k.gather(u, g.idx_plus)
            Fv_m, Fg_m = self._Fv[g.lf_minus, 0], self._Fg[g.lf_minus, 0]
            Fv_p, Fg_p = self._Fv[g.lf_plus, g.code], self._Fg[g.lf_plus, g.code]
            Vm = k.interp(Fv_m, Um, stage)
            Gm = k.interp(Fg_m, Um, stage).reshape(n_qf, 3, S)
            Vp = k.interp(Fv_p, Up, stage)
            Gp = k.interp(Fg_p, Up, stage).reshape(n_qf, 3, S)
            sl = slice(g.start, g.stop)
            mm = self._tile(self._fmm[sl], cols)
            mp = self._tile(self._fmp[sl], cols)
            sjxw = self._tile(self._fjxw[sl], cols)
            tau = self._tile(self._tau_i[sl], cols)
            qv, qg_m, qg_p = k.face_qpoint(Vm, Vp, Gm, Gp, mm, mp, sjxw, tau, scale)
            Rm = k.interp_t(Fv_m, qv, stage)
            Rm += k.interp_t(Fg_m, qg_m.reshape(3 * n_qf, S), stage)
            Rp = k.interp_t(Fv_p, -qv, stage)
            Rp += k.interp_t(Fg_p, qg_p.reshape(3 * n_qf, S), stage)
            k.scatter_add(y, g.idx_minus, Rm)
            k.scatter_add(y, g.idx_plus, Rp)
            self.counters.add("face_interp_flops", 2 * 2 * 4 * n_qf * nd * 2 * S)
            self.counters.add("face_qpoint_flops", _FACE_Q_FLOPS * n_qf * S)
            self.counters.add("index_bytes", 4 * 2 * F)
            self.counters.add("geometry_bytes", 18 * S // self.config.resolved_lane_width)

        for faces, lf, idx in self._bnd_plans[plan_idx]:
            S = idx.shape[1]
            Um = k.gather(u, idx)
            Fv, Fg = self._Fv[lf, 0], self._Fg[lf, 0]
            Vm = k.interp(Fv, Um, stage)
            Gm = k.interp(Fg, Um, stage).reshape(n_qf, 3, S)
            m = self._tile(self._bm[faces], cols)
            sjxw = self._tile(self._bjxw[faces], cols)
            tau = self._tile(self._tau_b[faces], cols)
            qv, qg = k.boundary_qpoint(Vm, Gm, m, sjxw, tau, scale)
            R = k.interp_t(Fv, qv, stage)
            R += k.interp_t(Fg, qg.reshape(3 * n_qf, S), stage)
            k.scatter_add(y, idx, R)
            self.counters.add("face_interp_flops", 2 * 4 * n_qf * nd * 2 * S)
            self.counters.add("face_qpoint_flops", _BND_Q_FLOPS * n_qf * S)
            self.counters.add("index_bytes", 4 * len(faces))
            self.counters.add("geometry_bytes", 18 * S // self.config.resolved_lane_width)

    @staticmethod
    def _tile(arr, cols):
        if cols == 1:
            return arr
        return np.concatenate([arr] * cols, axis=0)


class DgSipgOperator(_OperatorBase, _DgFaceMixin):
    """Scalar DG-SIPG Poisson action (weak Dirichlet on selected ids)."""

    def __init__(self, mesh, dofmap, geometry, basis, sipg: SipgConfig,
                 config=None, dirichlet_ids=()):
        if dofmap.space != "dg":
            raise ValueError("DG operator needs a DG dof map")
        super().__init__(mesh, dofmap, geometry, basis, config)
        self._setup_faces(dirichlet_ids, sipg)

    def apply(self, u: np.ndarray) -> np.ndarray:
        self._check_length(u)
        dt = self.config.dtype
        u = np.asarray(u, dtype=dt)
        y = np.zeros(self.dofmap.n_global_dofs, dtype=dt)
        for i, plan in enumerate(self._plans):
            self._cell_loop(plan, u, y)
            self._face_loop(i, u, y)
        self._count_apply_vectors()
        self.n_applies += 1
        return y


class HelmholtzOperator(_OperatorBase, _DgFaceMixin):
    """Vector-valued DG operator: mass_scale * M + diffusivity * A_sipg,
    acting identically on each of the 3 interleaved components."""

    def __init__(self, mesh, dofmap, geometry, basis, sipg: SipgConfig,
                 coeffs: HelmholtzCoefficients, config=None, dirichlet_ids=()):
        if dofmap.space != "dg" or dofmap.n_components != 3:
            raise ValueError("Helmholtz operator needs a 3-component DG space")
        super().__init__(mesh, dofmap, geometry, basis, config)
        self.coeffs = coeffs
        self._setup_faces(dirichlet_ids, sipg)

    def apply(self, u: np.ndarray) -> np.ndarray:
        self._check_length(u)
        dt = self.config.dtype
        u = np.asarray(u, dtype=dt)
        y = np.zeros(self.dofmap.n_global_dofs, dtype=dt)
        ms, nu = self.coeffs.mass_scale, self.coeffs.diffusivity
        for i, plan in enumerate(self._plans):
            self._cell_loop(plan, u, y, mass_scale=ms, stiff_scale=nu)
            if nu != 0.0:
                self._face_loop(i, u, y, scale=nu)
        self._count_apply_vectors()
        self.n_applies += 1
        return y


# ---------------------------------------------------------------------------
# Right-hand sides and error norms
# ---------------------------------------------------------------------------


def assemble_rhs(
    mesh: TetMesh,
    dofmap: DoFMap,
    geometry: GeometryData,
    basis: BasisTable,
    f,
    dirichlet_ids=(),
    u_dirichlet=None,
    sipg: SipgConfig | None = None,
    diffusivity: float = 1.0,
) -> np.ndarray:
    """b_i = (f, phi_i) plus the Dirichlet contributions.

    CG: constrained rows carry the boundary values and the lifting
    -A(u_D-extension) is subtracted from the unconstrained rows.  DG: SIPG
    boundary terms (tau u_D, phi) - (u_D, dn phi) are added on Dirichlet
    faces.  ``f`` maps (n, 3) points to values ((n,) or (n, n_components)).
    """
    nc = dofmap.n_components
    xq = cell_quad_points(mesh, geometry.cell_rule)
    fv = np.asarray(f(xq.reshape(-1, 3)))
    n_q = geometry.cell_rule.n_points
    if nc == 1:
        fv = fv.reshape(mesh.n_cells, n_q, 1)
    else:
        fv = fv.reshape(mesh.n_cells, n_q, nc)

    b = np.zeros(dofmap.n_global_dofs)
    wf = geometry.jxw[:, :, None] * fv                       # (N, n_q, nc)
    contrib = np.einsum("eqc,qj->ejc", wf, basis.value_matrix)
    for c in range(nc):
        np.add.at(b, dofmap.cell_dofs.astype(np.int64) * nc + c, contrib[:, :, c])

    if dofmap.space == "cg":
        maskv = dofmap.vector_mask()
        if maskv.any():
            ubar = np.zeros(dofmap.n_global_dofs)
            if u_dirichlet is not None:
                coords = dof_coordinates(mesh, dofmap, basis.nodes)
                vals = np.asarray(u_dirichlet(coords)).reshape(dofmap.n_scalar_dofs, -1)
                full = vals.reshape(-1) if vals.shape[1] == nc else np.repeat(vals[:, 0], nc)
                ubar[maskv] = full[maskv]
            if np.any(ubar):
                nomask = DoFMap(dofmap.space, dofmap.degree, nc, dofmap.n_scalar_dofs,
                                dofmap.cell_dofs, np.zeros_like(dofmap.dirichlet_mask))
                lift = CgPoissonOperator(mesh, nomask, geometry, basis).apply(ubar)
                b[~maskv] -= lift[~maskv]
            b[maskv] = ubar[maskv]
        return b

    # DG boundary lift on Dirichlet faces
    if u_dirichlet is None or sipg is None:
        return b
    bfc = mesh.boundary_faces
    dset = set(int(i) for i in dirichlet_ids)
    sel = [i for i in range(len(bfc)) if int(bfc[i, 2]) in dset]
    if not sel:
        return b
    rule = geometry.face_rule
    for i in sel:
        c, lf, _ = bfc[i]
        pts = face_phys_points(mesh, rule, np.array([c]), np.array([lf]),
                               np.array([0]))[0]              # (n_qf, 3)
        ud = np.asarray(u_dirichlet(pts)).reshape(rule.n_points, -1)  # (n_qf, nc')
        Fv = basis.face_values[lf, 0]
        Fg = basis.face_grads[lf, 0]
        w = geometry.bnd_jxw[i] * diffusivity                # (n_qf,)
        m = geometry.bnd_m[i]                                # (n_qf, 3)
        tau = sipg.tau_boundary[i]
        for comp in range(nc):
            udc = ud[:, 0] if ud.shape[1] == 1 else ud[:, comp]
            val_part = Fv.T @ (w * tau * udc)
            grad_part = Fg.T @ (-(w * udc)[:, None] * m).reshape(-1)
            dofs = dofmap.cell_dofs[c].astype(np.int64) * nc + comp
            b[dofs] += val_part + grad_part
    return b


def l2_error(mesh: TetMesh, dofmap: DoFMap, basis: BasisTable, u_h: np.ndarray,
             u_exact, relative: bool = True) -> float:
    """L2 distance between the discrete field and ``u_exact`` via a
    high-order (degree >= 6) quadrature on the same mesh."""
    from .geometry import AFFINE, PER_POINT, build_geometry
    from .quadrature import make_cell_quadrature

    rule = make_cell_quadrature(3, "standard")
    mode = PER_POINT if mesh.is_curved else AFFINE
    geo = build_geometry(mesh, rule, mode)
    vals = basis.values_at(rule.points)                      # (n_q, nd)
    uh_cells = u_h[dofmap.cell_dofs]                         # (N, nd) scalar only
    uh_q = uh_cells @ vals.T                                 # (N, n_q)
    xq = cell_quad_points(mesh, rule)
    ue_q = np.asarray(u_exact(xq.reshape(-1, 3))).reshape(mesh.n_cells, rule.n_points)
    err2 = float(np.sum(geo.jxw * (uh_q - ue_q) ** 2))
    if not relative:
        return np.sqrt(err2)
    ref2 = float(np.sum(geo.jxw * ue_q**2))
    return np.sqrt(err2 / ref2)


# ---------------------------------------------------------------------------
# Spec-surface convenience wrappers
# ---------------------------------------------------------------------------


def apply_cg_poisson(config, dofmap, geometry, basis, u, mesh=None):
    return CgPoissonOperator(mesh, dofmap, geometry, basis, config).apply(u)


def apply_dg_sipg(config, mesh, dofmap, geometry, basis, sipg, u, dirichlet_ids=()):
    return DgSipgOperator(mesh, dofmap, geometry, basis, sipg, config, dirichlet_ids).apply(u)


def apply_helmholtz(config, mesh, dofmap, geometry, basis, sipg, coeffs, u, dirichlet_ids=()):
    return HelmholtzOperator(mesh, dofmap, geometry, basis, sipg, coeffs, config,
                             dirichlet_ids).apply(u)
