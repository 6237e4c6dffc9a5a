"""
Convergence tables, observed orders and the fine-to-coarse P_h restriction
used by the self-convergence experiments.
"""
import logging
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence

import numpy as np
import scipy.sparse as sps
from scipy.spatial import cKDTree

from aquitrans.discretization.mesh import Mesh
from aquitrans.errors import AssemblyError

logger = logging.getLogger(__name__)


def observed_orders(hs: Sequence[float], errors: Sequence[float]) -> List[float]:
    """log(e_k / e_k+1) / log(h_k / h_k+1); nan where an error is not positive"""
    hs = np.asarray(hs, dtype=float)
    errors = np.asarray(errors, dtype=float)
    if hs.shape != errors.shape:
        raise ValueError(f"Got {hs.size} mesh sizes but {errors.size} errors")
    orders = []
    for k in range(hs.size - 1):
        if errors[k] > 0 and errors[k + 1] > 0:
            orders.append(float(np.log(errors[k] / errors[k + 1]) / np.log(hs[k] / hs[k + 1])))
        else:
            orders.append(float("nan"))
    return orders


@dataclass
class ConvergenceRow:
    h: float
    errors: Dict[str, float]
    orders: Dict[str, float] = field(default_factory=dict)
    tau: Optional[float] = None
    extras: Dict[str, float] = field(default_factory=dict)


class ConvergenceTable:
    """Rows of (h, tau, error per norm, observed order per norm), h strictly decreasing"""

    def __init__(self, norms: Sequence[str], extras: Sequence[str] = ()):
        self.norms = list(norms)
        self.extra_names = list(extras)
        self.rows: List[ConvergenceRow] = []
        self.flags: List[str] = []

    def add(self, h: float, errors: Dict[str, float], tau: Optional[float] = None, **extras: float) -> ConvergenceRow:
        missing = set(self.norms) - set(errors)
        if missing:
            raise ValueError(f"Missing errors for norms {sorted(missing)}")
        if self.rows and not h < self.rows[-1].h:
            raise ValueError(f"Mesh sizes must strictly decrease, got h={h} after h={self.rows[-1].h}")

        row = ConvergenceRow(h=float(h), errors={k: float(errors[k]) for k in self.norms}, tau=tau, extras=extras)
        if self.rows:
            prev = self.rows[-1]
            for name in self.norms:
                row.orders[name] = observed_orders([prev.h, row.h], [prev.errors[name], row.errors[name]])[0]
                if row.errors[name] > prev.errors[name]:
                    message = f"Non-monotone {name} error: {prev.errors[name]:.3e} -> {row.errors[name]:.3e} at h={row.h:.4g}"
                    logger.warning(message)
                    self.flags.append(message)
        self.rows.append(row)
        return row

    def flag(self, message: str) -> None:
        logger.warning(message)
        self.flags.append(message)

    def column(self, name: str) -> np.ndarray:
        return np.array([row.errors[name] for row in self.rows])

    def orders(self, name: str) -> List[float]:
        return [row.orders[name] for row in self.rows[1:]]

    def last_order(self, name: str) -> float:
        if len(self.rows) < 2:
            raise ValueError("Need at least two rows for an observed order")
        return self.rows[-1].orders[name]

    @property
    def header(self) -> List[str]:
        columns = ["h", "tau"]
        for name in self.norms:
            columns += [f"{name}", f"{name}_order"]
        return columns + self.extra_names

    def as_records(self) -> List[List[Optional[float]]]:
        records = []
        for row in self.rows:
            record: List[Optional[float]] = [row.h, row.tau]
            for name in self.norms:
                record += [row.errors[name], row.orders.get(name)]
            record += [row.extras.get(name) for name in self.extra_names]
            records.append(record)
        return records

    def __len__(self) -> int:
        return len(self.rows)


def _barycentric(points: np.ndarray, triangles: np.ndarray) -> np.ndarray:
    """Barycentric coordinates of points (P, 2) in triangles (P, 3, 2)"""
    a, b, c = triangles[:, 0], triangles[:, 1], triangles[:, 2]
    v0, v1, v2 = b - a, c - a, points - a
    det = v0[:, 0] * v1[:, 1] - v0[:, 1] * v1[:, 0]
    l1 = (v2[:, 0] * v1[:, 1] - v2[:, 1] * v1[:, 0]) / det
    l2 = (v0[:, 0] * v2[:, 1] - v0[:, 1] * v2[:, 0]) / det
    return np.stack([1.0 - l1 - l2, l1, l2], axis=-1)


def locate_points(mesh: Mesh, points: np.ndarray, candidates: int = 12) -> np.ndarray:
    """Index of the cell containing each point; -1 if none of the nearest candidate cells does"""
    points = np.asarray(points, dtype=float)
    k = min(candidates, mesh.n_cells)
    _, nearest = cKDTree(mesh.centroids).query(points, k=k)
    nearest = np.asarray(nearest).reshape(len(points), k)

    found = np.full(len(points), -1, dtype=int)
    tol = 1e-12
    for j in range(k):
        pending = found < 0
        if not pending.any():
            break
        cells = nearest[pending, j]
        lam = _barycentric(points[pending], mesh.cell_vertices[cells])
        inside = np.all(lam >= -tol, axis=1)
        idx = np.flatnonzero(pending)[inside]
        found[idx] = cells[inside]
    return found


def restriction_matrix(fine: Mesh, coarse: Mesh) -> sps.csr_array:
    """
    P_h restriction of fine P0 fields onto a coarse mesh it refines: each
    coarse value is the area-weighted mean of the fine cells inside it.
    """
    owner = locate_points(coarse, fine.centroids)
    if np.any(owner < 0):
        raise AssemblyError(f"{int(np.sum(owner < 0))} fine cells lie outside the coarse mesh")
    weights = fine.areas / coarse.areas[owner]
    matrix = sps.csr_array(
        (weights, (owner, np.arange(fine.n_cells))), shape=(coarse.n_cells, fine.n_cells)
    )
    coverage = matrix.sum(axis=1)
    if not np.allclose(coverage, 1.0, rtol=0, atol=1e-10):
        worst = int(np.argmax(np.abs(coverage - 1.0)))
        raise AssemblyError(
            f"Meshes are not nested: coarse cell {worst} is covered to {coverage[worst]:.6f} by fine cells"
        )
    return matrix
