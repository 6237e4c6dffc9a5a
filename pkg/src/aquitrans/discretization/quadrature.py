"""
Quadrature rules on triangles and edges.

Weights are normalised to sum to one, so a rule gives the *average* of the
integrand; multiply by |T| (or |e|) for the integral.
"""
from typing import NamedTuple

import numpy as np


class QuadratureRule(NamedTuple):
    name: str
    points: np.ndarray  # barycentric on triangles (Q, 3), parametric on edges (Q,)
    weights: np.ndarray  # (Q,), sum to 1
    degree: int


def _edge_midpoint_rule() -> QuadratureRule:
    # Point k is the midpoint of the edge opposite vertex k
    points = np.array(
        [
            [0.0, 0.5, 0.5],
            [0.5, 0.0, 0.5],
            [0.5, 0.5, 0.0],
        ]
    )
    return QuadratureRule("edge_midpoint", points, np.full(3, 1.0 / 3.0), 2)


def _strang_fix_7_rule() -> QuadratureRule:
    sqrt15 = np.sqrt(15.0)
    a1 = (6.0 - sqrt15) / 21.0
    a2 = (6.0 + sqrt15) / 21.0
    w1 = (155.0 - sqrt15) / 1200.0
    w2 = (155.0 + sqrt15) / 1200.0
    points = np.array(
        [
            [1.0 / 3.0, 1.0 / 3.0, 1.0 / 3.0],
            [a1, a1, 1.0 - 2.0 * a1],
            [a1, 1.0 - 2.0 * a1, a1],
            [1.0 - 2.0 * a1, a1, a1],
            [a2, a2, 1.0 - 2.0 * a2],
            [a2, 1.0 - 2.0 * a2, a2],
            [1.0 - 2.0 * a2, a2, a2],
        ]
    )
    weights = np.array([9.0 / 40.0, w1, w1, w1, w2, w2, w2])
    return QuadratureRule("strang_fix_7", points, weights, 5)


def _gauss_legendre_edge_rule() -> QuadratureRule:
    s = np.sqrt(3.0 / 5.0)
    points = 0.5 * (1.0 + np.array([-s, 0.0, s]))
    weights = np.array([5.0, 8.0, 5.0]) / 18.0
    return QuadratureRule("gauss_legendre_3", points, weights, 5)


EDGE_MIDPOINT = _edge_midpoint_rule()
STRANG_FIX_7 = _strang_fix_7_rule()
GAUSS_LEGENDRE_3 = _gauss_legendre_edge_rule()


def map_to_cells(cell_vertices: np.ndarray, rule: QuadratureRule) -> np.ndarray:
    """Physical quadrature points, shape (C, Q, 2), for cell vertex coordinates (C, 3, 2)"""
    return np.einsum("qk,ckd->cqd", rule.points, cell_vertices)


def map_to_edges(edge_vertices: np.ndarray, rule: QuadratureRule = GAUSS_LEGENDRE_3) -> np.ndarray:
    """Physical points (E, Q, 2) on edges given as (E, 2, 2) endpoint coordinates"""
    t = rule.points[None, :, None]
    return (1.0 - t) * edge_vertices[:, None, 0, :] + t * edge_vertices[:, None, 1, :]
