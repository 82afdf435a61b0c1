"""Global DoF enumeration (CG/DG), Dirichlet masks, and cell batching.

CG numbering glues shared nodes through global mesh entities: vertex nodes
take the vertex id, edge nodes are counted per unique edge (two nodes per
edge at p=3, ordered along the ascending-global-id direction so neighbours
agree), face nodes per unique face.  DG cells own contiguous index ranges.

Vector-valued problems interleave components: global index = scalar*n_c + c.

Batches hold lane_width * cells_per_lane cells in a lane-major block layout:
block column c*W + l belongs to lane l.  The last batch is padded by
repeating the final cell with an inactive flag; padded slots gather zeros
and never scatter.  Constrained (Dirichlet) DoFs behave the same way, which
realizes the identity-row convention of the operators.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .basis import n_dofs_per_cell, reference_nodes
from .mesh import TetMesh
from .reference import EDGE_VERTICES, FACE_VERTICES

__all__ = ["DoFMap", "BatchPlan", "build_dof_map", "build_batch_plan",
           "gather_masked", "scatter_add_masked"]

CG = "cg"
DG = "dg"

# local edges lying inside each local face
_FACE_EDGES = tuple(
    tuple(e for e, (a, b) in enumerate(EDGE_VERTICES)
          if a in corners and b in corners)
    for corners in FACE_VERTICES
)


@dataclass
class DoFMap:
    space: str
    degree: int
    n_components: int
    n_scalar_dofs: int
    cell_dofs: np.ndarray           # (n_cells, n_dofs_per_cell) int32, scalar indices
    dirichlet_mask: np.ndarray      # (n_scalar_dofs,) bool

    @property
    def n_global_dofs(self) -> int:
        return self.n_scalar_dofs * self.n_components

    @property
    def n_dofs_per_cell(self) -> int:
        return self.cell_dofs.shape[1]

    @property
    def n_cells(self) -> int:
        return self.cell_dofs.shape[0]

    def vector_mask(self) -> np.ndarray:
        """Dirichlet mask expanded to the interleaved vector layout."""
        return np.repeat(self.dirichlet_mask, self.n_components)


def build_dof_map(
    mesh: TetMesh,
    p: int,
    space: str,
    n_components: int = 1,
    dirichlet_boundary_ids=(),
) -> DoFMap:
    if space not in (CG, DG):
        raise ValueError(f"unknown space {space!r}")
    if n_components not in (1, 3):
        raise ValueError("n_components must be 1 or 3")
    known_ids = set(int(b) for b in mesh.boundary_faces[:, 2]) if len(mesh.boundary_faces) else set()
    for bid in dirichlet_boundary_ids:
        if bid not in known_ids:
            raise ValueError(f"unknown boundary id {bid} (mesh has {sorted(known_ids)})")

    n_loc = n_dofs_per_cell(p)
    if space == DG:
        cell_dofs = np.arange(mesh.n_cells * n_loc, dtype=np.int32).reshape(mesh.n_cells, n_loc)
        # Dirichlet enters weakly through face terms; no strong constraints.
        mask = np.zeros(mesh.n_cells * n_loc, dtype=bool)
        return DoFMap(DG, p, n_components, mesh.n_cells * n_loc, cell_dofs, mask)

    _, tags = reference_nodes(p)
    edge_ids: dict[tuple, int] = {}
    face_ids: dict[tuple, int] = {}
    if p >= 2:
        for e in range(mesh.n_cells):
            for a, b in EDGE_VERTICES:
                key = tuple(sorted((int(mesh.cells[e, a]), int(mesh.cells[e, b]))))
                edge_ids.setdefault(key, len(edge_ids))
    if p >= 3:
        for e in range(mesh.n_cells):
            for corners in FACE_VERTICES:
                key = tuple(sorted(int(mesh.cells[e, c]) for c in corners))
                face_ids.setdefault(key, len(face_ids))

    per_edge = p - 1
    edge_base = mesh.n_vertices
    face_base = edge_base + per_edge * len(edge_ids)
    n_scalar = face_base + len(face_ids)

    cell_dofs = np.empty((mesh.n_cells, n_loc), dtype=np.int32)
    for e in range(mesh.n_cells):
        cell = mesh.cells[e]
        for j, (kind, ent, slot) in enumerate(tags):
            if kind == "v":
                cell_dofs[e, j] = cell[ent]
            elif kind == "e":
                a, b = EDGE_VERTICES[ent]
                ga, gb = int(cell[a]), int(cell[b])
                eid = edge_ids[(min(ga, gb), max(ga, gb))]
                k = slot if ga < gb else per_edge - 1 - slot
                cell_dofs[e, j] = edge_base + per_edge * eid + k
            else:
                key = tuple(sorted(int(cell[c]) for c in FACE_VERTICES[ent]))
                cell_dofs[e, j] = face_base + face_ids[key]

    mask = np.zeros(n_scalar, dtype=bool)
    if dirichlet_boundary_ids:
        dset = set(int(b) for b in dirichlet_boundary_ids)
        for c, lf, bid in mesh.boundary_faces:
            if int(bid) not in dset:
                continue
            cell = mesh.cells[c]
            for v in FACE_VERTICES[lf]:
                mask[cell[v]] = True
            if p >= 2:
                for le in _FACE_EDGES[lf]:
                    a, b = EDGE_VERTICES[le]
                    key = tuple(sorted((int(cell[a]), int(cell[b]))))
                    base = edge_base + per_edge * edge_ids[key]
                    mask[base:base + per_edge] = True
            if p >= 3:
                key = tuple(sorted(int(cell[v]) for v in FACE_VERTICES[lf]))
                mask[face_base + face_ids[key]] = True

    return DoFMap(CG, p, n_components, n_scalar, cell_dofs, mask)


@dataclass
class BatchPlan:
    """Precomputed gather/scatter layout for batched cell processing.

    ``gather_idx[b]`` has shape (n_dofs_per_cell, n_cols*W) holding global
    vector-space indices, with -1 for padded or constrained slots.  For the
    cells+components layouts see the module docstring.
    """

    lane_width: int
    cells_per_lane: int
    n_cols: int                      # columns per lane (cells_per_lane or n_components)
    component: int | None            # fixed component (cells-batched vector), else None
    cell_ids: np.ndarray             # (n_batches, W*cells_per_lane) int32
    active: np.ndarray               # (n_batches, n_slots) bool, block-slot layout
    gather_idx: np.ndarray           # (n_batches, n_dofs, n_slots) int32, -1 masked
    colors: np.ndarray               # (n_batches,) int32
    n_global: int
    unconstrained_idx: np.ndarray = field(default=None)  # same but only padding masked
    slot_cells: np.ndarray = field(default=None)         # (n_batches, n_slots) int32
    n_unmasked: np.ndarray = field(default=None)         # (n_batches,) int64 scatter adds

    @property
    def n_batches(self) -> int:
        return len(self.cell_ids)

    @property
    def n_slots(self) -> int:
        return self.cell_ids.shape[1]


def _batch_cells(n_cells: int, lane_width: int, cells_per_lane: int):
    per_batch = lane_width * cells_per_lane
    n_batches = (n_cells + per_batch - 1) // per_batch
    ids = np.empty((n_batches, per_batch), dtype=np.int32)
    active = np.zeros((n_batches, per_batch), dtype=bool)
    for b in range(n_batches):
        base = b * per_batch
        for l in range(lane_width):
            for c in range(cells_per_lane):
                cell = base + l * cells_per_lane + c
                slot = c * lane_width + l
                if cell < n_cells:
                    ids[b, slot] = cell
                    active[b, slot] = True
                else:
                    ids[b, slot] = n_cells - 1  # padded: repeat last cell, inactive
    return ids, active


def build_batch_plan(
    dofmap: DoFMap,
    lane_width: int = 4,
    cells_per_lane: int = 1,
    batching: str = "cells",
    component: int | None = None,
) -> BatchPlan:
    """Plan the batch layout for one apply configuration.

    batching="cells": n_cols = cells_per_lane, scalar subproblem (a fixed
    ``component`` selects the interleaved subvector for vector problems).
    batching="components": one cell per lane, n_cols = n_components = 3.
    """
    nc = dofmap.n_components
    if batching == "components":
        if nc != 3:
            raise ValueError("components batching requires n_components = 3")
        if cells_per_lane != 1:
            raise ValueError("components batching uses one cell per lane")
        n_cols = nc
    elif batching == "cells":
        n_cols = cells_per_lane
        if nc > 1 and component is None:
            raise ValueError("cells batching of a vector problem needs a component")
    else:
        raise ValueError(f"unknown batching {batching!r}")

    cell_ids, active = _batch_cells(dofmap.n_cells, lane_width, cells_per_lane)
    n_batches, _ = cell_ids.shape
    n_dofs = dofmap.n_dofs_per_cell
    W = lane_width
    n_slots = n_cols * W

    gather_idx = np.empty((n_batches, n_dofs, n_slots), dtype=np.int32)
    unconstrained = np.empty_like(gather_idx)
    slot_active = np.zeros((n_batches, n_slots), dtype=bool)
    slot_cells = np.empty((n_batches, n_slots), dtype=np.int32)
    mask = dofmap.dirichlet_mask
    for b in range(n_batches):
        for l in range(W):
            for c in range(n_cols):
                slot = c * W + l
                if batching == "components":
                    cell_slot = l
                    comp = c
                else:
                    cell_slot = c * W + l
                    comp = component or 0
                cell = cell_ids[b, cell_slot]
                is_active = active[b, cell_slot]
                slot_active[b, slot] = is_active
                slot_cells[b, slot] = cell
                dofs = dofmap.cell_dofs[cell]
                vec_idx = dofs.astype(np.int64) * nc + comp
                unconstrained[b, :, slot] = vec_idx if is_active else -1
                if is_active:
                    gi = np.where(mask[dofs], -1, vec_idx)
                else:
                    gi = np.full(n_dofs, -1, dtype=np.int64)
                gather_idx[b, :, slot] = gi

    colors = _color_batches(dofmap, cell_ids, active)
    return BatchPlan(
        lane_width=W, cells_per_lane=cells_per_lane, n_cols=n_cols,
        component=component if batching == "cells" and nc > 1 else None,
        cell_ids=cell_ids, active=slot_active, gather_idx=gather_idx,
        colors=colors, n_global=dofmap.n_global_dofs,
        unconstrained_idx=unconstrained, slot_cells=slot_cells,
        n_unmasked=(gather_idx >= 0).sum(axis=(1, 2)).astype(np.int64),
    )


def _color_batches(dofmap: DoFMap, cell_ids, active) -> np.ndarray:
    """Greedy coloring so same-color batches share no global DoF."""
    n_batches = len(cell_ids)
    colors = np.zeros(n_batches, dtype=np.int32)
    if dofmap.space == DG:
        return colors
    owner: dict[int, list] = {}
    for b in range(n_batches):
        dofs = np.unique(dofmap.cell_dofs[cell_ids[b][active[b]]])
        for d in dofs.tolist():
            owner.setdefault(d, []).append(b)
    adj: list[set] = [set() for _ in range(n_batches)]
    for batches in owner.values():
        for i in batches:
            for j in batches:
                if i != j:
                    adj[i].add(j)
    for b in range(n_batches):
        used = {colors[j] for j in adj[b] if j < b}
        c = 0
        while c in used:
            c += 1
        colors[b] = c
    return colors


def dof_coordinates(mesh: TetMesh, dofmap: DoFMap, ref_nodes: np.ndarray) -> np.ndarray:
    """Physical coordinates of the scalar DoFs (vertex-map placement)."""
    coords = np.empty((dofmap.n_scalar_dofs, 3))
    jac = mesh.cell_jacobians()
    v0 = mesh.vertices[mesh.cells[:, 0]]
    for e in range(mesh.n_cells):
        phys = v0[e] + ref_nodes @ jac[e].T
        coords[dofmap.cell_dofs[e]] = phys
    return coords


def gather_masked(plan: BatchPlan, batch: int, u: np.ndarray) -> np.ndarray:
    """Lane-major local block for one batch; masked slots read as zero."""
    idx = plan.gather_idx[batch]
    out = u[np.clip(idx, 0, None)]
    out[idx < 0] = 0.0
    return out


def scatter_add_masked(plan: BatchPlan, batch: int, block: np.ndarray, y: np.ndarray) -> None:
    """Adjoint of gather_masked: accumulate into y, skipping masked slots."""
    idx = plan.gather_idx[batch]
    sel = idx >= 0
    np.add.at(y, idx[sel], block[sel])
