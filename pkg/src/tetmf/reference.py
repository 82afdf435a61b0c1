"""Reference tetrahedron conventions shared across the package.

The reference cell has vertices (0,0,0), (1,0,0), (0,1,0), (0,0,1) and
volume 1/6.  Local face f is the one opposite vertex f, with its corners
listed in ascending local-vertex order; outward normals are recovered
geometrically, not from the corner ordering.

Face orientation codes enumerate the six symmetries of a triangle.  For an
interior face the code ``o`` relates the corner tuples seen from the two
adjacent cells: ``minus_corners[k] == plus_corners[PERMS[o][k]]`` in terms of
global vertex ids, where the minus cell (lower cell id) owns the face
parameterization.
"""

from __future__ import annotations

import numpy as np

REF_VERTICES = np.array(
    [[0.0, 0.0, 0.0], [1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]]
)

REF_VOLUME = 1.0 / 6.0

# Corners of local face f (opposite vertex f), ascending order.
FACE_VERTICES = ((1, 2, 3), (0, 2, 3), (0, 1, 3), (0, 1, 2))

# Edges in fixed order; higher-degree nodes follow this ordering.
EDGE_VERTICES = ((0, 1), (0, 2), (0, 3), (1, 2), (1, 3), (2, 3))

# The six permutations of (0,1,2): codes 0-2 are rotations, 3-5 reflections.
PERMS = ((0, 1, 2), (1, 2, 0), (2, 0, 1), (0, 2, 1), (2, 1, 0), (1, 0, 2))

N_ORIENTATIONS = len(PERMS)


def apply_perm(code: int, triple):
    """Permute a corner triple: result[k] = triple[PERMS[code][k]]."""
    p = PERMS[code]
    return (triple[p[0]], triple[p[1]], triple[p[2]])


def orientation_code(minus_triple, plus_triple) -> int:
    """Code o with minus_triple[k] == plus_triple[PERMS[o][k]]."""
    for code in range(N_ORIENTATIONS):
        if apply_perm(code, plus_triple) == tuple(minus_triple):
            return code
    raise ValueError(f"face corner sets differ: {minus_triple} vs {plus_triple}")


def compose_codes(c1: int, c2: int) -> int:
    """Code of the composition: apply_perm(c1, apply_perm(c2, t)) == apply_perm(compose, t)."""
    p1, p2 = PERMS[c1], PERMS[c2]
    comp = (p2[p1[0]], p2[p1[1]], p2[p1[2]])
    return PERMS.index(comp)


def inverse_code(code: int) -> int:
    p = PERMS[code]
    inv = [0, 0, 0]
    for k in range(3):
        inv[p[k]] = k
    return PERMS.index(tuple(inv))


def face_quad_points(local_face: int, code: int, face_points_2d: np.ndarray) -> np.ndarray:
    """Map triangle quadrature points onto local face ``local_face`` of the
    reference tet, with corner barycentrics permuted by orientation ``code``.

    The minus side of a face always uses code 0; the plus side uses the
    recorded code so both cells evaluate at identical physical points.
    """
    s = face_points_2d[:, 0]
    t = face_points_2d[:, 1]
    bary = np.stack([1.0 - s - t, s, t], axis=1)  # w.r.t. the owning-side corner order
    perm = PERMS[code]
    bary_side = np.empty_like(bary)
    for k in range(3):
        bary_side[:, perm[k]] = bary[:, k]
    corners = REF_VERTICES[list(FACE_VERTICES[local_face])]
    return bary_side @ corners
