"""
Finite element spaces and sparse operators on a triangular Mesh.

Spaces
------
P0  : one value per cell (concentration, head, sources)
P1  : one value per vertex (postprocessed head only)
RT0 : lowest-order Raviart-Thomas, one coefficient per edge equal to the
      normal component u.n_e on that edge, n_e the mesh's global edge normal.

On a cell T with vertices P_0, P_1, P_2 the basis function of local edge k
(opposite P_k) is

    u_k(x) = s_k |e_k| / (2|T|) (x - P_k),      s_k = +1 if n_e points out of T

so div u_k = s_k |e_k| / |T| and grad u_k = s_k |e_k| / (2|T|) Id.

Every assembly routine is vectorised over cells and emits triplets in a
fixed cell order, so matrices are bit-identical from run to run.
"""
import logging
from typing import Callable, Optional, Union

import numpy as np
import scipy.sparse as sps

from aquitrans.discretization.mesh import Mesh
from aquitrans.discretization.quadrature import (
    EDGE_MIDPOINT,
    GAUSS_LEGENDRE_3,
    STRANG_FIX_7,
    QuadratureRule,
    map_to_cells,
    map_to_edges,
)
from aquitrans.errors import AssemblyError

logger = logging.getLogger(__name__)

P0Field = np.ndarray
P1Field = np.ndarray
RT0Field = np.ndarray
CellTensors = np.ndarray  # (C, 2, 2)
ScalarFunction = Callable[[np.ndarray, np.ndarray], np.ndarray]
VectorFunction = Callable[[np.ndarray, np.ndarray], object]


# --------------------------------------------------------------------- fields
def check_p0(mesh: Mesh, values, name: str = "P0 field") -> P0Field:
    values = np.asarray(values, dtype=float)
    if values.ndim == 0:
        values = np.full(mesh.n_cells, float(values))
    if values.shape != (mesh.n_cells,):
        raise AssemblyError(f"{name} needs {mesh.n_cells} cell values, got shape {values.shape}")
    return values


def check_rt0(mesh: Mesh, values, name: str = "RT0 field") -> RT0Field:
    values = np.asarray(values, dtype=float)
    if values.shape != (mesh.n_edges,):
        raise AssemblyError(f"{name} needs {mesh.n_edges} edge coefficients, got shape {values.shape}")
    return values


def check_cell_tensors(mesh: Mesh, tensors, name: str = "cell tensor") -> CellTensors:
    tensors = np.asarray(tensors, dtype=float)
    if tensors.shape == (2, 2):
        tensors = np.broadcast_to(tensors, (mesh.n_cells, 2, 2))
    if tensors.shape != (mesh.n_cells, 2, 2):
        raise AssemblyError(f"{name} must have shape ({mesh.n_cells}, 2, 2), got {tensors.shape}")
    return tensors


def check_spd(tensors: CellTensors, name: str = "cell tensor") -> None:
    asym = np.abs(tensors - np.swapaxes(tensors, 1, 2)).max(axis=(1, 2))
    scale = np.abs(tensors).max(axis=(1, 2))
    bad = np.flatnonzero(asym > 1e-12 * np.maximum(scale, 1e-300))
    if bad.size:
        raise AssemblyError(f"{name} of cell {int(bad[0])} is not symmetric")
    smallest = np.linalg.eigvalsh(tensors)[:, 0]
    bad = np.flatnonzero(~(smallest > 0))
    if bad.size:
        raise AssemblyError(
            f"{name} of cell {int(bad[0])} is not positive definite (smallest eigenvalue {smallest[bad[0]]:.3e})"
        )


def zero_trace_prolongation(mesh: Mesh) -> sps.csc_array:
    """E x F matrix injecting interior-edge coefficients into a full RT0 vector"""
    free = mesh.interior_edges
    return sps.csc_array(
        (np.ones(free.size), (free, np.arange(free.size))), shape=(mesh.n_edges, free.size)
    )


# ---------------------------------------------------------------- local basis
def _basis_scaling(mesh: Mesh) -> np.ndarray:
    """s_k |e_k| / (2|T|) per cell and local edge, shape (C, 3)"""
    lengths = mesh.edge_lengths[mesh.cell_edges]
    return mesh.cell_edge_signs * lengths / (2.0 * mesh.areas[:, None])


def _basis_at(mesh: Mesh, points: np.ndarray) -> np.ndarray:
    """Basis values at per-cell points (C, Q, 2) -> (C, Q, 3, 2)"""
    diff = points[:, :, None, :] - mesh.cell_vertices[:, None, :, :]
    return _basis_scaling(mesh)[:, None, :, None] * diff


class RT0LocalBasis:
    """The three RT0 shape functions of one cell, with the mesh's global signs"""

    def __init__(self, vertices: np.ndarray, edge_lengths: np.ndarray, signs: np.ndarray, normals: np.ndarray):
        self.vertices = np.asarray(vertices, dtype=float)
        e1 = self.vertices[1] - self.vertices[0]
        e2 = self.vertices[2] - self.vertices[0]
        self.area = 0.5 * (e1[0] * e2[1] - e1[1] * e2[0])
        if not self.area > 0:
            raise AssemblyError("RT0 basis needs a positively oriented cell")
        self.edge_lengths = np.asarray(edge_lengths, dtype=float)
        self.signs = np.asarray(signs, dtype=float)
        self.normals = np.asarray(normals, dtype=float)
        self.scaling = self.signs * self.edge_lengths / (2.0 * self.area)

    def values(self, points) -> np.ndarray:
        """Shape (3, P, 2)"""
        points = np.atleast_2d(np.asarray(points, dtype=float))
        return self.scaling[:, None, None] * (points[None, :, :] - self.vertices[:, None, :])

    @property
    def gradients(self) -> np.ndarray:
        return self.scaling[:, None, None] * np.eye(2)[None]

    @property
    def divergence(self) -> np.ndarray:
        return 2.0 * self.scaling

    def facet_flux_averages(self, rule: QuadratureRule = GAUSS_LEGENDRE_3) -> np.ndarray:
        """(3, 3) matrix of mean u_e . n_f over facet f; the identity for a valid basis"""
        out = np.empty((3, 3))
        for f in range(3):
            a = self.vertices[(f + 1) % 3]
            b = self.vertices[(f + 2) % 3]
            pts = a[None] + rule.points[:, None] * (b - a)[None]
            vals = self.values(pts)  # (3, Q, 2)
            out[:, f] = np.einsum("q,eqd,d->e", rule.weights, vals, self.normals[f])
        return out


def rt0_local_basis(mesh: Mesh, cell: int) -> RT0LocalBasis:
    edges = mesh.cell_edges[cell]
    return RT0LocalBasis(
        mesh.cell_vertices[cell],
        mesh.edge_lengths[edges],
        mesh.cell_edge_signs[cell],
        mesh.normals[edges],
    )


# ----------------------------------------------------------------- operators
def assemble_p0_mass(mesh: Mesh, weight: Union[float, P0Field] = 1.0) -> sps.csc_array:
    weight = check_p0(mesh, weight, "mass weight")
    if np.any(~(weight > 0)):
        bad = int(np.flatnonzero(~(weight > 0))[0])
        raise AssemblyError(f"P0 mass weight must be positive, cell {bad} has {weight[bad]}")
    return sps.diags_array(weight * mesh.areas, format="csc")


def assemble_rt0_weighted_mass(
    mesh: Mesh,
    cell_tensors: Optional[CellTensors] = None,
    rule: QuadratureRule = EDGE_MIDPOINT,
) -> sps.csc_array:
    """
    Entries sum_T int_T (A_T u_e) . u_f dx. The edge-midpoint rule is exact
    for the affine x affine integrands with cellwise-constant A_T.
    """
    if cell_tensors is None:
        cell_tensors = np.broadcast_to(np.eye(2), (mesh.n_cells, 2, 2))
    cell_tensors = check_cell_tensors(mesh, cell_tensors, "mass tensor")
    check_spd(cell_tensors, "mass tensor")

    phi = _basis_at(mesh, map_to_cells(mesh.cell_vertices, rule))  # (C, Q, 3, 2)
    local = np.einsum("q,cqki,cij,cqlj->ckl", rule.weights, phi, cell_tensors, phi)
    local *= mesh.areas[:, None, None]
    local = 0.5 * (local + np.swapaxes(local, 1, 2))

    rows = np.broadcast_to(mesh.cell_edges[:, :, None], local.shape)
    cols = np.broadcast_to(mesh.cell_edges[:, None, :], local.shape)
    matrix = sps.coo_array(
        (local.ravel(), (rows.ravel(), cols.ravel())), shape=(mesh.n_edges, mesh.n_edges)
    ).tocsc()
    matrix.sum_duplicates()
    return matrix


def _cell_by_edge(mesh: Mesh, values: np.ndarray) -> sps.csc_array:
    rows = np.repeat(np.arange(mesh.n_cells), 3)
    matrix = sps.coo_array(
        (values.ravel(), (rows, mesh.cell_edges.ravel())), shape=(mesh.n_cells, mesh.n_edges)
    ).tocsc()
    matrix.sum_duplicates()
    return matrix


def assemble_div(mesh: Mesh) -> sps.csc_array:
    """(cells x edges), entry int_T div u_e = s |e|"""
    return _cell_by_edge(mesh, mesh.cell_edge_signs * mesh.edge_lengths[mesh.cell_edges])


def assemble_weighted_div(mesh: Mesh, cell_tensors: CellTensors) -> sps.csc_array:
    """(cells x edges), entry int_T div(A_T u_e) = s |e| tr(A_T) / 2 for constant A_T"""
    cell_tensors = check_cell_tensors(mesh, cell_tensors, "divergence weight")
    trace = np.trace(cell_tensors, axis1=1, axis2=2)
    values = 0.5 * mesh.cell_edge_signs * mesh.edge_lengths[mesh.cell_edges] * trace[:, None]
    return _cell_by_edge(mesh, values)


def assemble_vector_coupling(mesh: Mesh, cell_vectors: np.ndarray) -> sps.csc_array:
    """(edges x cells), entry int_T q_T . u_e = q_T . (s |e| / 2)(centroid_T - P_opp)"""
    q = np.asarray(cell_vectors, dtype=float)
    if q.shape != (mesh.n_cells, 2):
        raise AssemblyError(f"Cell vectors must have shape ({mesh.n_cells}, 2), got {q.shape}")
    if not np.all(np.isfinite(q)):
        raise AssemblyError("Cell vectors must be finite")
    lever = mesh.centroids[:, None, :] - mesh.cell_vertices  # (C, 3, 2)
    values = 0.5 * mesh.cell_edge_signs * mesh.edge_lengths[mesh.cell_edges]
    values = values * np.einsum("ckd,cd->ck", lever, q)
    cols = np.repeat(np.arange(mesh.n_cells), 3)
    matrix = sps.coo_array(
        (values.ravel(), (mesh.cell_edges.ravel(), cols)), shape=(mesh.n_edges, mesh.n_cells)
    ).tocsc()
    matrix.sum_duplicates()
    return matrix


# --------------------------------------------------------------- projections
def _evaluate_vector(f: VectorFunction, points: np.ndarray) -> np.ndarray:
    x, y = points[..., 0], points[..., 1]
    result = f(x, y)
    if isinstance(result, (tuple, list)):
        return np.stack(np.broadcast_arrays(*result), axis=-1).astype(float)
    result = np.asarray(result, dtype=float)
    if result.shape != points.shape:
        raise AssemblyError(f"Vector function returned shape {result.shape}, expected {points.shape}")
    return result


def _evaluate_scalar(f: ScalarFunction, points: np.ndarray) -> np.ndarray:
    return np.broadcast_to(np.asarray(f(points[..., 0], points[..., 1]), dtype=float), points.shape[:-1])


def project_P_h(mesh: Mesh, f: ScalarFunction, rule: QuadratureRule = STRANG_FIX_7) -> P0Field:
    """Cell averages of a smooth scalar function"""
    values = _evaluate_scalar(f, map_to_cells(mesh.cell_vertices, rule))
    return values @ rule.weights


def project_Pi_h(mesh: Mesh, f: VectorFunction, rule: QuadratureRule = GAUSS_LEGENDRE_3) -> RT0Field:
    """Per-edge average normal component of a smooth vector function"""
    endpoints = mesh.vertices[mesh.edges]  # (E, 2, 2)
    values = _evaluate_vector(f, map_to_edges(endpoints, rule))  # (E, Q, 2)
    normal_part = np.einsum("eqd,ed->eq", values, mesh.normals)
    return normal_part @ rule.weights


def integrate_cells(mesh: Mesh, f: ScalarFunction, rule: QuadratureRule = STRANG_FIX_7) -> np.ndarray:
    """Per-cell integrals of f"""
    return project_P_h(mesh, f, rule) * mesh.areas


# ---------------------------------------------------------- field evaluation
def rt0_values(mesh: Mesh, coefficients: RT0Field, points: np.ndarray) -> np.ndarray:
    """RT0 field at per-cell points (C, Q, 2) -> (C, Q, 2)"""
    coefficients = check_rt0(mesh, coefficients)
    phi = _basis_at(mesh, points)
    return np.einsum("cqkd,ck->cqd", phi, coefficients[mesh.cell_edges])


def rt0_cell_centroid_values(mesh: Mesh, coefficients: RT0Field) -> np.ndarray:
    """Value at each centroid (= cell average of the affine field), shape (C, 2)"""
    return rt0_values(mesh, coefficients, mesh.centroids[:, None, :])[:, 0, :]


def rt0_vertex_values(mesh: Mesh, coefficients: RT0Field) -> np.ndarray:
    """Value at each cell's own vertices, shape (C, 3, 2)"""
    return rt0_values(mesh, coefficients, mesh.cell_vertices)


def rt0_max_speed(mesh: Mesh, coefficients: RT0Field) -> float:
    """L-infinity norm of |u|; attained at a vertex since u is affine per cell"""
    return float(np.linalg.norm(rt0_vertex_values(mesh, coefficients), axis=-1).max())


def p0_l2_norm(mesh: Mesh, values: P0Field) -> float:
    values = check_p0(mesh, values)
    return float(np.sqrt(np.sum(mesh.areas * values**2)))


def rt0_l2_norm(mesh: Mesh, coefficients: RT0Field, mass: Optional[sps.csc_array] = None) -> float:
    coefficients = check_rt0(mesh, coefficients)
    mass = assemble_rt0_weighted_mass(mesh) if mass is None else mass
    return float(np.sqrt(max(coefficients @ (mass @ coefficients), 0.0)))


def p0_l2_error(mesh: Mesh, values: P0Field, exact: ScalarFunction, rule: QuadratureRule = STRANG_FIX_7) -> float:
    values = check_p0(mesh, values)
    exact_values = _evaluate_scalar(exact, map_to_cells(mesh.cell_vertices, rule))
    err2 = ((exact_values - values[:, None]) ** 2) @ rule.weights
    return float(np.sqrt(np.sum(err2 * mesh.areas)))


def rt0_l2_error(mesh: Mesh, coefficients: RT0Field, exact: VectorFunction, rule: QuadratureRule = STRANG_FIX_7) -> float:
    points = map_to_cells(mesh.cell_vertices, rule)
    diff = rt0_values(mesh, coefficients, points) - _evaluate_vector(exact, points)
    err2 = np.sum(diff**2, axis=-1) @ rule.weights
    return float(np.sqrt(np.sum(err2 * mesh.areas)))


def p1_from_p0(mesh: Mesh, values: P0Field) -> P1Field:
    """Area-weighted vertex average of a P0 field"""
    values = check_p0(mesh, values)
    weights = np.repeat(mesh.areas, 3)
    flat = mesh.cells.ravel()
    total = np.bincount(flat, weights=weights * np.repeat(values, 3), minlength=mesh.n_vertices)
    mass = np.bincount(flat, weights=weights, minlength=mesh.n_vertices)
    return total / mass
