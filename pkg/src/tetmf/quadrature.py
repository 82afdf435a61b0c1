"""Simplex quadrature rules on the reference tetrahedron and triangle.

All rules are fully symmetric with positive weights and are stored as compact
orbit tables (orbit generator coordinates in barycentric form plus one weight
per orbit).  The tables were polished offline against exact monomial moments;
no rule is solved for at runtime, only the orbit permutations are expanded.

Reference elements:
    tetrahedron  (0,0,0), (1,0,0), (0,1,0), (0,0,1)   volume 1/6
    triangle     (0,0), (1,0), (0,1)                  area   1/2
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field

import numpy as np

__all__ = [
    "QuadratureRule",
    "make_cell_quadrature",
    "make_face_quadrature",
    "tet_monomial_integral",
    "triangle_monomial_integral",
]


@dataclass(frozen=True)
class QuadratureRule:
    """Point/weight set on a reference simplex.

    ``exactness_degree`` is the guaranteed total polynomial degree; some of
    the embedded tables are exact slightly beyond it.
    """

    points: np.ndarray          # (n_q, dim)
    weights: np.ndarray         # (n_q,)
    exactness_degree: int
    dim: int = field(default=3)

    @property
    def n_points(self) -> int:
        return len(self.weights)


def tet_monomial_integral(a: int, b: int, c: int) -> float:
    """Exact integral of x^a y^b z^c over the reference tetrahedron."""
    return math.factorial(a) * math.factorial(b) * math.factorial(c) / math.factorial(a + b + c + 3)


def triangle_monomial_integral(a: int, b: int) -> float:
    """Exact integral of x^a y^b over the reference triangle."""
    return math.factorial(a) * math.factorial(b) / math.factorial(a + b + 2)


# Orbit kinds: barycentric generators under the full symmetric group.
#   S4          (1/4, 1/4, 1/4, 1/4)                1 point  (tet)
#   S31(a)      (a, a, a, 1-3a)                     4 points (tet)
#   S22(a)      (a, a, 1/2-a, 1/2-a)                6 points (tet)
#   S211(a, b)  (a, a, b, 1-2a-b)                  12 points (tet)
#   S3          (1/3, 1/3, 1/3)                     1 point  (tri)
#   S21(a)      (a, a, 1-2a)                        3 points (tri)
#   S111(a, b)  (a, b, 1-a-b)                       6 points (tri)

_SQRT5 = math.sqrt(5.0)

# Tetrahedron tables, keyed by requested exactness degree.  The degree-4 and
# degree-6 slots hold 14-point degree-5 and 35-point degree-7 rules of
# Witherden-Vincent type (smallest embedded rule at least that exact).
_TET_TABLES = {
    1: (1, [("S4", (), 1.0 / 6.0)]),
    2: (2, [("S31", ((5.0 - _SQRT5) / 20.0,), 1.0 / 24.0)]),
    4: (5, [
        ("S31", (0.3108859192633005,), 0.01878132095300265),
        ("S31", (0.0927352503108912,), 0.01224884051939365),
        ("S22", (0.0455037041256497,), 0.007091003462846916),
    ]),
    6: (7, [
        ("S4", (), 0.015914214910682768),
        ("S31", (0.31570114977819624,), 0.007054930201663913),
        ("S22", (0.050489822598392554,), 0.005316154638809225),
        ("S211", (0.1888338310259973, 0.575171637587011), 0.006201188454722337),
        ("S211", (0.021265472541481666, 0.8108302410985562), 0.0013517951383170692),
    ]),
}

# Triangle tables for face integration.
_TRI_TABLES = {
    2: (2, [("S21", (1.0 / 6.0,), 1.0 / 6.0)]),
    4: (4, [
        ("S21", (0.4459484909159647,), 0.11169079483900544),
        ("S21", (0.09157621350977113,), 0.05497587182766123),
    ]),
    6: (6, [
        ("S21", (0.06308901449150588,), 0.025422453185105918),
        ("S21", (0.2492867451708941,), 0.0583931378632035),
        ("S111", (0.3103524510337971, 0.05314504984480522), 0.04142553780917863),
    ]),
}


def _orbit_barycentric(kind: str, params: tuple) -> list[tuple]:
    if kind == "S4":
        return [(0.25, 0.25, 0.25, 0.25)]
    if kind == "S31":
        a = params[0]
        gen = (a, a, a, 1.0 - 3.0 * a)
    elif kind == "S22":
        a = params[0]
        gen = (a, a, 0.5 - a, 0.5 - a)
    elif kind == "S211":
        a, b = params
        gen = (a, a, b, 1.0 - 2.0 * a - b)
    elif kind == "S3":
        return [(1.0 / 3.0, 1.0 / 3.0, 1.0 / 3.0)]
    elif kind == "S21":
        a = params[0]
        gen = (a, a, 1.0 - 2.0 * a)
    elif kind == "S111":
        a, b = params
        gen = (a, b, 1.0 - a - b)
    else:
        raise ValueError(f"unknown orbit kind {kind!r}")
    return sorted(set(itertools.permutations(gen)))


def _expand(table, dim: int) -> QuadratureRule:
    degree, orbits = table
    pts, wts = [], []
    for kind, params, w in orbits:
        for bary in _orbit_barycentric(kind, params):
            pts.append(bary[1:])  # drop lambda_0: remaining coords are x,y(,z)
            wts.append(w)
    points = np.asarray(pts, dtype=np.float64)
    weights = np.asarray(wts, dtype=np.float64)
    return QuadratureRule(points=points, weights=weights, exactness_degree=degree, dim=dim)


def _tet_rule(min_degree: int) -> QuadratureRule:
    for deg in sorted(_TET_TABLES):
        if deg >= min_degree:
            return _expand(_TET_TABLES[deg], dim=3)
    raise ValueError(f"no embedded tetrahedron rule of degree >= {min_degree}")


def _triangle_rule(min_degree: int) -> QuadratureRule:
    for deg in sorted(_TRI_TABLES):
        if deg >= min_degree:
            return _expand(_TRI_TABLES[deg], dim=2)
    raise ValueError(f"no embedded triangle rule of degree >= {min_degree}")


def make_cell_quadrature(p: int, variant: str = "standard") -> QuadratureRule:
    """Cell rule for polynomial degree ``p``.

    ``standard`` is exact to degree 2p (stiffness and mass integrands of a
    degree-p space); ``modified`` is the reduced rule exact to degree 2p-2
    (degree 1 for p=1), admissible for second-order elliptic cell terms.
    """
    if p not in (1, 2, 3):
        raise ValueError(f"unsupported polynomial degree {p}")
    if variant == "standard":
        return _tet_rule(2 * p)
    if variant == "modified":
        return _tet_rule(max(2 * p - 2, 1))
    raise ValueError(f"unknown quadrature variant {variant!r}")


def make_face_quadrature(p: int) -> QuadratureRule:
    """Triangle rule for face terms, exact to degree 2p (jump penalty)."""
    if p not in (1, 2, 3):
        raise ValueError(f"unsupported polynomial degree {p}")
    return _triangle_rule(2 * p)
