"""Lagrange bases on the reference tetrahedron (p = 1..3) and their
tabulation at quadrature points.

Shape functions are constructed from a monomial basis through the nodal
Vandermonde matrix; at these degrees the system is well conditioned and the
nodal delta property holds to machine precision.  Nodes are laid out
vertices, then edges (two nodes per edge at p=3, ordered from the lower
local endpoint), then face centroids.

The tabulated gradient matrix uses the row layout 3*i + k for quadrature
point i and reference direction k.  Face tables exist per (local face,
orientation code) so that the plus side of an interior face evaluates at the
same physical points as the minus side.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .quadrature import QuadratureRule
from .reference import EDGE_VERTICES, FACE_VERTICES, N_ORIENTATIONS, REF_VERTICES, face_quad_points

__all__ = [
    "BasisTable",
    "tabulate_basis",
    "n_dofs_per_cell",
    "reference_nodes",
    "lagrange_values",
    "lagrange_grads",
]


def n_dofs_per_cell(p: int) -> int:
    """(p+3)!/(3! p!) scalar DoFs on a degree-p tetrahedron."""
    return (p + 1) * (p + 2) * (p + 3) // 6


def _monomial_exponents(p: int) -> list[tuple[int, int, int]]:
    return [(a, b, c)
            for d in range(p + 1)
            for a in range(d + 1)
            for b in range(d - a + 1)
            for c in (d - a - b,)]


def reference_nodes(p: int) -> tuple[np.ndarray, list[tuple]]:
    """Equispaced nodes and their (entity kind, entity id, slot) tags.

    Tags are ("v", vertex), ("e", edge, slot) with slot counted from the
    lower local endpoint, or ("f", face, 0); the dof map uses them to glue
    shared nodes between cells.
    """
    nodes = [REF_VERTICES[i] for i in range(4)]
    tags: list[tuple] = [("v", i, 0) for i in range(4)]
    if p >= 2:
        interior_count = p - 1
        for e, (a, b) in enumerate(EDGE_VERTICES):
            for k in range(interior_count):
                t = (k + 1) / p
                nodes.append((1 - t) * REF_VERTICES[a] + t * REF_VERTICES[b])
                tags.append(("e", e, k))
    if p >= 3:
        for f, corners in enumerate(FACE_VERTICES):
            centroid = REF_VERTICES[list(corners)].mean(axis=0)
            nodes.append(centroid)
            tags.append(("f", f, 0))
    return np.array(nodes), tags


def _monomial_values(points: np.ndarray, exps) -> np.ndarray:
    x, y, z = points[:, 0], points[:, 1], points[:, 2]
    return np.stack([x**a * y**b * z**c for a, b, c in exps], axis=1)


def _monomial_grads(points: np.ndarray, exps) -> np.ndarray:
    """(n_pts, 3, n_mono) derivative table."""
    x, y, z = points[:, 0], points[:, 1], points[:, 2]
    n = len(points)
    out = np.zeros((n, 3, len(exps)))
    for j, (a, b, c) in enumerate(exps):
        if a:
            out[:, 0, j] = a * x**(a - 1) * y**b * z**c
        if b:
            out[:, 1, j] = b * x**a * y**(b - 1) * z**c
        if c:
            out[:, 2, j] = c * x**a * y**b * z**(c - 1)
    return out


@dataclass
class BasisTable:
    """Tabulated shape values/gradients for one polynomial degree."""

    degree: int
    nodes: np.ndarray                  # (n_dofs, 3) reference coordinates
    node_tags: list[tuple]
    cell_rule: QuadratureRule
    face_rule: QuadratureRule
    value_matrix: np.ndarray           # (n_q, n_dofs)
    grad_matrix: np.ndarray            # (3 n_q, n_dofs), row 3*i+k
    face_values: np.ndarray            # (4, 6, n_qf, n_dofs)
    face_grads: np.ndarray             # (4, 6, 3 n_qf, n_dofs)
    _coeffs: np.ndarray                # monomial coefficients, (n_mono, n_dofs)

    @property
    def n_dofs(self) -> int:
        return self.nodes.shape[0]

    @property
    def n_q(self) -> int:
        return self.value_matrix.shape[0]

    @property
    def n_qf(self) -> int:
        return self.face_values.shape[2]

    def values_at(self, points: np.ndarray) -> np.ndarray:
        """Shape function values at arbitrary reference points, (n_pts, n_dofs)."""
        exps = _monomial_exponents(self.degree)
        return _monomial_values(points, exps) @ self._coeffs

    def grads_at(self, points: np.ndarray) -> np.ndarray:
        """Reference gradients at arbitrary points, (n_pts, 3, n_dofs)."""
        exps = _monomial_exponents(self.degree)
        return _monomial_grads(points, exps) @ self._coeffs


def _nodal_coeffs(p: int) -> np.ndarray:
    nodes, _ = reference_nodes(p)
    return np.linalg.inv(_monomial_values(nodes, _monomial_exponents(p)))


def lagrange_values(p: int, points: np.ndarray) -> np.ndarray:
    """Degree-p Lagrange shape values at reference points, (n_pts, n_dofs)."""
    return _monomial_values(points, _monomial_exponents(p)) @ _nodal_coeffs(p)


def lagrange_grads(p: int, points: np.ndarray) -> np.ndarray:
    """Degree-p Lagrange reference gradients, (n_pts, 3, n_dofs)."""
    return _monomial_grads(points, _monomial_exponents(p)) @ _nodal_coeffs(p)


def tabulate_basis(p: int, cell_rule: QuadratureRule, face_rule: QuadratureRule) -> BasisTable:
    if p not in (1, 2, 3):
        raise ValueError(f"unsupported polynomial degree {p}")
    nodes, tags = reference_nodes(p)
    exps = _monomial_exponents(p)
    vander = _monomial_values(nodes, exps)
    coeffs = np.linalg.inv(vander)

    value_matrix = _monomial_values(cell_rule.points, exps) @ coeffs
    g = _monomial_grads(cell_rule.points, exps) @ coeffs      # (n_q, 3, n_dofs)
    grad_matrix = g.reshape(3 * cell_rule.n_points, len(nodes))

    n_qf = face_rule.n_points
    n_dofs = len(nodes)
    face_values = np.empty((4, N_ORIENTATIONS, n_qf, n_dofs))
    face_grads = np.empty((4, N_ORIENTATIONS, 3 * n_qf, n_dofs))
    for f in range(4):
        for o in range(N_ORIENTATIONS):
            pts3 = face_quad_points(f, o, face_rule.points)
            face_values[f, o] = _monomial_values(pts3, exps) @ coeffs
            gf = _monomial_grads(pts3, exps) @ coeffs
            face_grads[f, o] = gf.reshape(3 * n_qf, n_dofs)

    return BasisTable(
        degree=p, nodes=nodes, node_tags=tags,
        cell_rule=cell_rule, face_rule=face_rule,
        value_matrix=value_matrix, grad_matrix=grad_matrix,
        face_values=face_values, face_grads=face_grads,
        _coeffs=coeffs,
    )
