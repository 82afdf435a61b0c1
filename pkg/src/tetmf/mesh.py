"""Unstructured tetrahedral meshes: generation, refinement, connectivity, IO.

Cells are stored with positive orientation (det J > 0 under the canonical
reference-to-real map).  Interior faces record the adjacent cell pair, the
local face index on each side and an orientation code; the cell with the
lower id is the "minus" side and owns the face parameterization.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass

import numpy as np

from .reference import EDGE_VERTICES, FACE_VERTICES, orientation_code

__all__ = [
    "TetMesh",
    "MeshImportError",
    "generate_cube_mesh",
    "refine_uniform",
    "import_mesh",
    "export_mesh",
    "shuffle_cells",
]


class MeshImportError(ValueError):
    """Raised for unreadable or non-tetrahedral mesh files."""


@dataclass
class TetMesh:
    """Tetrahedral mesh with full face connectivity.

    interior_faces columns: cell_minus, local_face_minus, cell_plus,
    local_face_plus, orientation_code.  boundary_faces columns: cell,
    local_face, boundary_id.  ``geometry_nodes`` holds per-cell quadratic
    geometry nodes (4 vertices + 6 edge midpoints) for curved meshes and is
    None for straight-sided ones.  ``parent_cells`` maps each cell of a
    refined mesh to its parent cell id.
    """

    vertices: np.ndarray            # (n_v, 3) float64
    cells: np.ndarray               # (n_cells, 4) int32
    interior_faces: np.ndarray      # (n_if, 5) int32
    boundary_faces: np.ndarray      # (n_bf, 3) int32
    geometry_nodes: np.ndarray | None = None   # (n_cells, 10, 3) float64
    parent_cells: np.ndarray | None = None     # (n_cells,) int32

    @property
    def n_vertices(self) -> int:
        return len(self.vertices)

    @property
    def n_cells(self) -> int:
        return len(self.cells)

    @property
    def is_curved(self) -> bool:
        return self.geometry_nodes is not None

    def cell_jacobians(self) -> np.ndarray:
        """Affine Jacobians: columns are the edge vectors from vertex 0."""
        v = self.vertices[self.cells]
        return np.stack([v[:, 1] - v[:, 0], v[:, 2] - v[:, 0], v[:, 3] - v[:, 0]], axis=2)

    def cell_volumes(self) -> np.ndarray:
        return np.linalg.det(self.cell_jacobians()) / 6.0

    def validate(self) -> None:
        """Check the structural mesh invariants; raises AssertionError."""
        assert self.cells.min() >= 0 and self.cells.max() < self.n_vertices
        vols = self.cell_volumes()
        assert np.all(vols > 0), f"non-positive cells: {np.flatnonzero(vols <= 0)[:10]}"
        assert 4 * self.n_cells == 2 * len(self.interior_faces) + len(self.boundary_faces)
        for cm, lfm, cp, lfp, code in self.interior_faces:
            tm = tuple(self.cells[cm, list(FACE_VERTICES[lfm])])
            tp = tuple(self.cells[cp, list(FACE_VERTICES[lfp])])
            assert orientation_code(tm, tp) == code


def _build_faces(cells: np.ndarray, boundary_id_fn=None, vertices=None):
    """Pair up cell faces into interior/boundary lists.

    ``boundary_id_fn(face_vertex_coords) -> int`` assigns boundary ids;
    default 0.
    """
    face_map: dict[tuple, list] = {}
    for e in range(len(cells)):
        for lf in range(4):
            tri = cells[e, list(FACE_VERTICES[lf])]
            key = tuple(sorted(int(v) for v in tri))
            face_map.setdefault(key, []).append((e, lf))

    interior = []
    boundary = []
    for key, refs in sorted(face_map.items()):
        if len(refs) == 2:
            (c0, f0), (c1, f1) = refs
            if c0 > c1:
                c0, f0, c1, f1 = c1, f1, c0, f0
            tm = tuple(int(v) for v in cells[c0, list(FACE_VERTICES[f0])])
            tp = tuple(int(v) for v in cells[c1, list(FACE_VERTICES[f1])])
            interior.append((c0, f0, c1, f1, orientation_code(tm, tp)))
        elif len(refs) == 1:
            e, lf = refs[0]
            bid = 0
            if boundary_id_fn is not None:
                tri = cells[e, list(FACE_VERTICES[lf])]
                bid = boundary_id_fn(vertices[tri])
            boundary.append((e, lf, bid))
        else:
            raise ValueError(f"face {key} referenced by {len(refs)} cells")

    interior.sort()  # owning-cell order: faces follow their minus cell
    interior_arr = np.array(interior, dtype=np.int32).reshape(-1, 5)
    boundary_arr = np.array(sorted(boundary), dtype=np.int32).reshape(-1, 3)
    return interior_arr, boundary_arr


def _orient_positive(vertices: np.ndarray, cells: np.ndarray) -> np.ndarray:
    """Swap the last two vertices of negatively oriented cells."""
    cells = cells.copy()
    v = vertices[cells]
    jac = np.stack([v[:, 1] - v[:, 0], v[:, 2] - v[:, 0], v[:, 3] - v[:, 0]], axis=2)
    neg = np.linalg.det(jac) < 0
    cells[neg] = cells[neg][:, [0, 1, 3, 2]]
    return cells


def _cube_boundary_id(coords: np.ndarray) -> int:
    """Boundary ids 0..5 for the [-1,1]^3 cube: -x,+x,-y,+y,-z,+z."""
    for axis in range(3):
        for side, val in ((0, -1.0), (1, 1.0)):
            if np.all(np.abs(coords[:, axis] - val) < 1e-9):
                return 2 * axis + side
    return 0


# 5-tet decompositions of the unit cube, corners numbered by (i,j,k) bits as
# v = i*4 + j*2 + k.  Parity alternation between adjacent cubes makes the
# face diagonals conform.
_SPLIT_EVEN = ((0, 6, 5, 3), (1, 0, 3, 5), (2, 0, 6, 3), (4, 0, 5, 6), (7, 3, 5, 6))
_SPLIT_ODD = ((1, 7, 2, 4), (0, 1, 2, 4), (3, 1, 7, 2), (5, 1, 4, 7), (6, 2, 4, 7))


def _smooth_displacement(x: np.ndarray) -> np.ndarray:
    """Smooth deformation of the cube: x_i <- x_i + 0.05 prod_j sin(pi x_j)."""
    d = 0.05 * np.sin(np.pi * x[..., 0]) * np.sin(np.pi * x[..., 1]) * np.sin(np.pi * x[..., 2])
    return x + d[..., None]


def generate_cube_mesh(n_subdivisions: int, deformation: str = "none") -> TetMesh:
    """Conforming 5-tet-per-cube mesh of [-1,1]^3 with n^3 cubes.

    ``deformation="smooth"`` displaces vertices by the smooth cube-preserving
    map and attaches quadratic geometry nodes; such a mesh must be paired
    with per-quadrature-point geometry.
    """
    n = int(n_subdivisions)
    if n < 1:
        raise ValueError("n_subdivisions must be >= 1")
    if deformation not in ("none", "smooth"):
        raise ValueError(f"unknown deformation {deformation!r}")

    axis = np.linspace(-1.0, 1.0, n + 1)
    ii, jj, kk = np.meshgrid(axis, axis, axis, indexing="ij")
    vertices = np.stack([ii.ravel(), jj.ravel(), kk.ravel()], axis=1)

    def gid(i, j, k):
        return (i * (n + 1) + j) * (n + 1) + k

    cells = []
    for I in range(n):
        for J in range(n):
            for K in range(n):
                corner = [gid(I + (v >> 2 & 1), J + (v >> 1 & 1), K + (v & 1)) for v in range(8)]
                split = _SPLIT_EVEN if (I + J + K) % 2 == 0 else _SPLIT_ODD
                for tet in split:
                    cells.append([corner[v] for v in tet])
    cells = _orient_positive(vertices, np.array(cells, dtype=np.int32))

    geometry_nodes = None
    if deformation == "smooth":
        corner_pos = vertices[cells]                       # (n_cells, 4, 3) undeformed
        mid_pos = np.stack(
            [0.5 * (corner_pos[:, a] + corner_pos[:, b]) for a, b in EDGE_VERTICES], axis=1
        )
        nodes = np.concatenate([corner_pos, mid_pos], axis=1)
        geometry_nodes = _smooth_displacement(nodes)
        vertices = _smooth_displacement(vertices)

    interior, bnd = _build_faces(cells, _cube_boundary_id, vertices)
    return TetMesh(vertices, cells, interior, bnd, geometry_nodes=geometry_nodes)


_OCTA_QUADS = {
    # diagonal (midpoint indices into the per-cell midpoint list) -> equatorial cycle
    (0, 5): (1, 2, 4, 3),   # m01-m23: cycle m02, m03, m13, m12
    (1, 4): (0, 2, 5, 3),   # m02-m13: cycle m01, m03, m23, m12
    (2, 3): (0, 1, 5, 4),   # m03-m12: cycle m01, m02, m23, m13
}


def refine_uniform(mesh: TetMesh) -> TetMesh:
    """Uniform 1:8 refinement, splitting the inner octahedron along its
    shortest diagonal (ties broken by diagonal listing order)."""
    if mesh.is_curved:
        raise ValueError("uniform refinement supports straight-sided meshes only")

    edge_ids: dict[tuple, int] = {}
    new_coords = [mesh.vertices]
    next_id = mesh.n_vertices
    cells_mid = np.empty((mesh.n_cells, 6), dtype=np.int64)
    midpoints = []
    for e in range(mesh.n_cells):
        for m, (a, b) in enumerate(EDGE_VERTICES):
            key = tuple(sorted((int(mesh.cells[e, a]), int(mesh.cells[e, b]))))
            vid = edge_ids.get(key)
            if vid is None:
                vid = next_id
                edge_ids[key] = vid
                midpoints.append(0.5 * (mesh.vertices[key[0]] + mesh.vertices[key[1]]))
                next_id += 1
            cells_mid[e, m] = vid
    new_coords.append(np.array(midpoints).reshape(-1, 3))
    vertices = np.vstack(new_coords)

    children = []
    parents = []
    for e in range(mesh.n_cells):
        v = mesh.cells[e]
        m = cells_mid[e]
        # corner children keep the parent's orientation
        children.append((v[0], m[0], m[1], m[2]))
        children.append((v[1], m[0], m[3], m[4]))
        children.append((v[2], m[1], m[3], m[5]))
        children.append((v[3], m[2], m[4], m[5]))
        # octahedron: pick the shortest of the three diagonals
        best = None
        for (a, b) in ((0, 5), (1, 4), (2, 3)):
            d = np.linalg.norm(vertices[m[a]] - vertices[m[b]])
            if best is None or d < best[0] - 1e-14:
                best = (d, (a, b))
        a, b = best[1]
        qa, qb, qc, qd = _OCTA_QUADS[(a, b)]
        for (x, y) in ((qa, qb), (qb, qc), (qc, qd), (qd, qa)):
            children.append((m[a], m[b], m[x], m[y]))
        parents.extend([e] * 8)

    cells = _orient_positive(vertices, np.array(children, dtype=np.int32))
    interior, bnd = _build_faces(cells, _cube_boundary_id, vertices)
    return TetMesh(vertices, cells, interior, bnd,
                   parent_cells=np.array(parents, dtype=np.int32))


def _boundary_id_lookup(mesh: TetMesh) -> dict[tuple, int]:
    """Map sorted boundary-face vertex triples to their boundary ids."""
    out = {}
    for c, lf, bid in mesh.boundary_faces:
        key = tuple(sorted(int(v) for v in mesh.cells[c, list(FACE_VERTICES[lf])]))
        out[key] = int(bid)
    return out


def _reorder_cells(mesh: TetMesh, order: np.ndarray) -> TetMesh:
    """Rebuild the mesh with cells[order] as the new cell sequence."""
    cells = mesh.cells[order]
    interior, bnd = _build_faces(cells, None, mesh.vertices)
    bids = _boundary_id_lookup(mesh)
    if len(bnd):
        bnd = bnd.copy()
        bnd[:, 2] = [
            bids.get(tuple(sorted(int(v) for v in cells[c, list(FACE_VERTICES[lf])])), 0)
            for c, lf, _ in bnd
        ]
    geometry_nodes = mesh.geometry_nodes[order] if mesh.is_curved else None
    parents = mesh.parent_cells[order] if mesh.parent_cells is not None else None
    return TetMesh(mesh.vertices.copy(), cells, interior, bnd,
                   geometry_nodes=geometry_nodes, parent_cells=parents)


def shuffle_cells(mesh: TetMesh, seed: int) -> TetMesh:
    """Random permutation of the cell ordering (vertices untouched)."""
    rng = np.random.default_rng(seed)
    return _reorder_cells(mesh, rng.permutation(mesh.n_cells))


def apply_cell_permutation(mesh: TetMesh, new_of_old: np.ndarray) -> TetMesh:
    """Renumber cells so cell e moves to position new_of_old[e]."""
    return _reorder_cells(mesh, np.argsort(new_of_old))


# ---------------------------------------------------------------------------
# File IO: Gmsh MSH 2.2 ASCII (tet elements only) and the internal binary
# format: magic "TF01", little-endian u64 counts, f64 coordinates, u32
# indices (cells, then boundary-face records cell/local_face/boundary_id).
# ---------------------------------------------------------------------------

_BIN_MAGIC = b"TF01"


def export_mesh(mesh: TetMesh, path: str, fmt: str = "internal_binary") -> None:
    if fmt == "internal_binary":
        with open(path, "wb") as fh:
            fh.write(_BIN_MAGIC)
            fh.write(struct.pack("<QQQ", mesh.n_vertices, mesh.n_cells, len(mesh.boundary_faces)))
            fh.write(mesh.vertices.astype("<f8").tobytes())
            fh.write(mesh.cells.astype("<u4").tobytes())
            fh.write(mesh.boundary_faces.astype("<u4").tobytes())
    elif fmt == "gmsh_msh2":
        with open(path, "w") as fh:
            fh.write("$MeshFormat\n2.2 0 8\n$EndMeshFormat\n")
            fh.write(f"$Nodes\n{mesh.n_vertices}\n")
            for i, (x, y, z) in enumerate(mesh.vertices, start=1):
                fh.write(f"{i} {x!r} {y!r} {z!r}\n")
            fh.write("$EndNodes\n")
            fh.write(f"$Elements\n{mesh.n_cells}\n")
            for e, cell in enumerate(mesh.cells, start=1):
                v = " ".join(str(int(c) + 1) for c in cell)
                fh.write(f"{e} 4 2 0 1 {v}\n")
            fh.write("$EndElements\n")
    else:
        raise ValueError(f"unknown mesh format {fmt!r}")


def _import_binary(path: str) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    with open(path, "rb") as fh:
        magic = fh.read(4)
        if magic != _BIN_MAGIC:
            raise MeshImportError(f"{path}: bad magic {magic!r}, expected {_BIN_MAGIC!r}")
        n_v, n_c, n_b = struct.unpack("<QQQ", fh.read(24))
        vertices = np.frombuffer(fh.read(n_v * 24), dtype="<f8").reshape(n_v, 3).copy()
        cells = np.frombuffer(fh.read(n_c * 16), dtype="<u4").reshape(n_c, 4).astype(np.int32)
        bnd = np.frombuffer(fh.read(n_b * 12), dtype="<u4").reshape(n_b, 3).astype(np.int32)
    return vertices, cells, bnd


def _import_msh2(path: str) -> tuple[np.ndarray, np.ndarray]:
    vertices = None
    cells = []
    with open(path) as fh:
        lines = fh.read().splitlines()
    ln = 0

    def fail(msg):
        raise MeshImportError(f"{path}:{ln + 1}: {msg}")

    n_lines = len(lines)
    while ln < n_lines:
        tok = lines[ln].strip()
        if tok == "$Nodes":
            try:
                count = int(lines[ln + 1])
            except (IndexError, ValueError):
                ln += 1
                fail("unreadable node count")
            vertices = np.empty((count, 3))
            id_map = {}
            for i in range(count):
                ln2 = ln + 2 + i
                parts = lines[ln2].split()
                if len(parts) != 4:
                    ln = ln2
                    fail(f"expected 'id x y z', got {lines[ln2]!r}")
                id_map[int(parts[0])] = i
                vertices[i] = [float(parts[1]), float(parts[2]), float(parts[3])]
            ln += 2 + count
        elif tok == "$Elements":
            try:
                count = int(lines[ln + 1])
            except (IndexError, ValueError):
                ln += 1
                fail("unreadable element count")
            for i in range(count):
                ln2 = ln + 2 + i
                parts = lines[ln2].split()
                if len(parts) < 3:
                    ln = ln2
                    fail(f"malformed element line {lines[ln2]!r}")
                eid, etype, ntags = int(parts[0]), int(parts[1]), int(parts[2])
                if etype != 4:
                    ln = ln2
                    fail(f"element {eid} has type {etype}; only 4-node tetrahedra (type 4) are supported")
                nodes = parts[3 + ntags:]
                if len(nodes) != 4:
                    ln = ln2
                    fail(f"element {eid}: expected 4 nodes, got {len(nodes)}")
                cells.append([id_map[int(v)] for v in nodes])
            ln += 2 + count
        else:
            ln += 1
    if vertices is None:
        raise MeshImportError(f"{path}: no $Nodes section found")
    if not cells:
        raise MeshImportError(f"{path}: no tetrahedral elements found")
    return vertices, np.array(cells, dtype=np.int32)


def import_mesh(path: str, fmt: str = "internal_binary") -> TetMesh:
    """Read a mesh; negatively oriented cells are repaired by vertex swap."""
    if fmt == "internal_binary":
        vertices, cells_raw, bnd_records = _import_binary(path)
    elif fmt == "gmsh_msh2":
        vertices, cells_raw = _import_msh2(path)
        bnd_records = np.empty((0, 3), np.int32)
    else:
        raise ValueError(f"unknown mesh format {fmt!r}")

    # boundary ids are matched by vertex triple so that orientation repair
    # (which relabels local faces) cannot detach them
    bids = {}
    for c, lf, b in bnd_records:
        key = tuple(sorted(int(v) for v in cells_raw[c, list(FACE_VERTICES[lf])]))
        bids[key] = int(b)

    cells = _orient_positive(vertices, cells_raw)
    interior, bnd = _build_faces(cells, None, vertices)
    if bids and len(bnd):
        bnd = bnd.copy()
        bnd[:, 2] = [
            bids.get(tuple(sorted(int(v) for v in cells[c, list(FACE_VERTICES[lf])])), 0)
            for c, lf, _ in bnd
        ]
    mesh = TetMesh(vertices, cells, interior, bnd)
    mesh.validate()
    return mesh
