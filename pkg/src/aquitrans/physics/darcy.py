"""
Stationary Darcy problem div v = g, v = -kappa grad phi, solved by the dual
mixed RT0-P0 method.

Find (v, phi) in RT0 x P0 with

    <kappa^{-1} v, psi> - <phi, div psi> = -int_dOmega phi_D psi.n     for all psi
    -<div v, w>                          = -<g, w>                     for all w

The block matrix [[A, -B^T], [-B, 0]] is symmetric. In Neumann mode the flux
lives in the zero-trace subspace and the head is pinned by a zero-mean
constraint through one Lagrange multiplier.
"""
import logging
from dataclasses import dataclass, field
from enum import Enum
from typing import Callable, Optional, Sequence

import numpy as np
import scipy.sparse as sps
import scipy.sparse.linalg as spla

from aquitrans.analysis.convergence import ConvergenceTable
from aquitrans.discretization.assembly import (
    P0Field,
    P1Field,
    RT0Field,
    assemble_div,
    assemble_rt0_weighted_mass,
    check_cell_tensors,
    check_p0,
    check_spd,
    p0_l2_error,
    p0_l2_norm,
    p1_from_p0,
    project_P_h,
    project_Pi_h,
    rt0_cell_centroid_values,
    rt0_l2_error,
    rt0_l2_norm,
    rt0_max_speed,
    zero_trace_prolongation,
)
from aquitrans.discretization.mesh import Mesh, Rectangle, build_structured_mesh
from aquitrans.discretization.quadrature import GAUSS_LEGENDRE_3, map_to_edges
from aquitrans.errors import DarcySolveError

logger = logging.getLogger(__name__)

COMPATIBILITY_TOL = 1e-10

HeadFunction = Callable[[np.ndarray, np.ndarray], np.ndarray]


class HeadBoundary(Enum):
    DIRICHLET = "dirichlet"
    NEUMANN = "neumann"


@dataclass(frozen=True)
class DarcyProblem:
    mesh: Mesh
    kappa: np.ndarray  # (C, 2, 2) or a single (2, 2)
    source: P0Field
    boundary: HeadBoundary = HeadBoundary.DIRICHLET
    head_boundary: Optional[HeadFunction] = None
    kappa_minus: float = field(init=False)
    kappa_plus: float = field(init=False)

    def __post_init__(self):
        object.__setattr__(self, "boundary", HeadBoundary(self.boundary))
        kappa = np.array(check_cell_tensors(self.mesh, self.kappa, "permeability"))
        check_spd(kappa, "permeability")
        kappa.setflags(write=False)
        object.__setattr__(self, "kappa", kappa)

        source = np.array(check_p0(self.mesh, self.source, "Darcy source"))
        if not np.all(np.isfinite(source)):
            raise DarcySolveError("Darcy source must be finite")
        source.setflags(write=False)
        object.__setattr__(self, "source", source)

        eig = np.linalg.eigvalsh(kappa)
        object.__setattr__(self, "kappa_minus", float(eig[:, 0].min()))
        object.__setattr__(self, "kappa_plus", float(eig[:, -1].max()))

        if self.boundary is HeadBoundary.NEUMANN and self.head_boundary is not None:
            raise DarcySolveError("Head boundary data only applies in Dirichlet mode")

    @property
    def compatibility_defect(self) -> float:
        """int g, which must vanish in Neumann mode"""
        return float(np.sum(self.source * self.mesh.areas))


@dataclass(frozen=True)
class DarcySolution:
    mesh: Mesh
    phi: P0Field
    v: RT0Field
    vmax: float

    @classmethod
    def at_rest(cls, mesh: Mesh) -> "DarcySolution":
        """Zero head and zero velocity"""
        return cls(mesh, np.zeros(mesh.n_cells), np.zeros(mesh.n_edges), 0.0)

    @classmethod
    def from_velocity(cls, mesh: Mesh, v: RT0Field, phi: Optional[P0Field] = None) -> "DarcySolution":
        v = np.asarray(v, dtype=float)
        phi = np.zeros(mesh.n_cells) if phi is None else np.asarray(phi, dtype=float)
        return cls(mesh, phi, v, rt0_max_speed(mesh, v))

    @property
    def centroid_velocities(self) -> np.ndarray:
        return rt0_cell_centroid_values(self.mesh, self.v)

    def head_p1(self) -> P1Field:
        return p1_from_p0(self.mesh, self.phi)

    def divergence(self) -> P0Field:
        """Cell averages of div v"""
        return (assemble_div(self.mesh) @ self.v) / self.mesh.areas


def _boundary_head_term(mesh: Mesh, head: HeadFunction) -> np.ndarray:
    """-int_e phi_D ds on boundary edges, zero elsewhere"""
    edges = mesh.boundary_edges
    points = map_to_edges(mesh.vertices[mesh.edges[edges]], GAUSS_LEGENDRE_3)
    values = np.broadcast_to(np.asarray(head(points[..., 0], points[..., 1]), dtype=float), points.shape[:-1])
    term = np.zeros(mesh.n_edges)
    term[edges] = -mesh.edge_lengths[edges] * (values @ GAUSS_LEGENDRE_3.weights)
    return term


def _factor(matrix: sps.sparray, what: str):
    try:
        return spla.splu(sps.csc_matrix(matrix))
    except RuntimeError as e:
        raise DarcySolveError(f"Singular Darcy system ({what}): {e}") from e


def solve_darcy(problem: DarcyProblem) -> DarcySolution:
    mesh = problem.mesh
    kappa_inv = np.linalg.inv(problem.kappa)
    kappa_inv = 0.5 * (kappa_inv + np.swapaxes(kappa_inv, 1, 2))
    A = assemble_rt0_weighted_mass(mesh, kappa_inv)
    B = assemble_div(mesh)
    load = -problem.source * mesh.areas

    if problem.boundary is HeadBoundary.DIRICHLET:
        flux_rhs = np.zeros(mesh.n_edges)
        if problem.head_boundary is not None:
            flux_rhs = _boundary_head_term(mesh, problem.head_boundary)
        system = sps.block_array([[A, -B.T], [-B, None]], format="csc")
        rhs = np.concatenate([flux_rhs, load])
        lu = _factor(system, "flux-divergence coupling, homogeneous head")
        solution = lu.solve(rhs)
        v = solution[: mesh.n_edges]
        phi = solution[mesh.n_edges :]
    else:
        defect = problem.compatibility_defect
        scale = max(1.0, float(np.sum(np.abs(problem.source) * mesh.areas)))
        if abs(defect) > COMPATIBILITY_TOL * scale:
            raise DarcySolveError(f"Neumann Darcy problem needs int g = 0, got {defect:.3e}")
        P = zero_trace_prolongation(mesh)
        A_f = (P.T @ A @ P).tocsc()
        B_f = (B @ P).tocsc()
        areas = sps.csc_array(mesh.areas[:, None])
        system = sps.block_array(
            [[A_f, -B_f.T, None], [-B_f, None, areas], [None, areas.T, None]], format="csc"
        )
        rhs = np.concatenate([np.zeros(A_f.shape[0]), load, [0.0]])
        lu = _factor(system, "zero-mean head constraint")
        solution = lu.solve(rhs)
        v = P @ solution[: A_f.shape[0]]
        phi = solution[A_f.shape[0] : A_f.shape[0] + mesh.n_cells]

    if not (np.all(np.isfinite(v)) and np.all(np.isfinite(phi))):
        raise DarcySolveError("Darcy solve produced non-finite values")

    v.setflags(write=False)
    phi.setflags(write=False)
    result = DarcySolution(mesh, phi, v, rt0_max_speed(mesh, v))
    logger.info(
        f"Darcy solved on {mesh.n_cells} cells ({problem.boundary.value}): "
        f"|v|_inf={result.vmax:.4e}, kappa in [{problem.kappa_minus:.3g}, {problem.kappa_plus:.3g}]"
    )
    return result


# ------------------------------------------------------ manufactured solutions
@dataclass(frozen=True)
class ManufacturedCase:
    name: str
    kappa: np.ndarray
    head: HeadFunction
    velocity: Callable
    source: HeadFunction
    dirichlet_data: bool = False

    def problem(self, mesh: Mesh) -> DarcyProblem:
        return DarcyProblem(
            mesh=mesh,
            kappa=self.kappa,
            source=project_P_h(mesh, self.source),
            boundary=HeadBoundary.DIRICHLET,
            head_boundary=self.head if self.dirichlet_data else None,
        )


def sinsin_case(kappa=None) -> ManufacturedCase:
    """phi = sin(pi x) sin(pi y) on the unit square, constant SPD kappa"""
    kappa = np.eye(2) if kappa is None else np.asarray(kappa, dtype=float)
    kxx, kxy, kyy = kappa[0, 0], kappa[0, 1], kappa[1, 1]
    pi = np.pi

    def head(x, y):
        return np.sin(pi * x) * np.sin(pi * y)

    def velocity(x, y):
        dx = pi * np.cos(pi * x) * np.sin(pi * y)
        dy = pi * np.sin(pi * x) * np.cos(pi * y)
        return -(kxx * dx + kxy * dy), -(kxy * dx + kyy * dy)

    def source(x, y):
        return pi**2 * (kxx + kyy) * np.sin(pi * x) * np.sin(pi * y) - 2.0 * kxy * pi**2 * np.cos(pi * x) * np.cos(
            pi * y
        )

    return ManufacturedCase("sinsin", kappa, head, velocity, source)


def linear_case(kappa=None, gradient=(1.0, -0.5), offset: float = 0.25) -> ManufacturedCase:
    """Affine head with constant velocity; representable exactly in RT0 x P0"""
    kappa = np.eye(2) if kappa is None else np.asarray(kappa, dtype=float)
    a, b = gradient
    velocity_value = -kappa @ np.array([a, b])

    def head(x, y):
        return a * x + b * y + offset

    def velocity(x, y):
        shape = np.broadcast(x, y).shape
        return np.full(shape, velocity_value[0]), np.full(shape, velocity_value[1])

    def source(x, y):
        return np.zeros(np.broadcast(x, y).shape)

    return ManufacturedCase("linear", kappa, head, velocity, source, dirichlet_data=True)


MANUFACTURED_CASES = {"sinsin": sinsin_case, "linear": linear_case}

DARCY_STUDY_NORMS = ("v_exact", "v_interp", "phi_exact", "phi_interp")

VMAX_GROWTH_TOL = 0.10


def darcy_convergence_study(
    case: ManufacturedCase, levels: Sequence[int], domain: Rectangle = Rectangle()
) -> ConvergenceTable:
    """
    Solve the case on structured meshes n in levels and tabulate errors against
    the exact fields (quadrature) and against their P_h / Pi_h interpolants.
    """
    levels = [int(n) for n in levels]
    if len(levels) < 3:
        raise ValueError(f"A convergence study needs at least 3 meshes, got {len(levels)}")
    for coarse, fine in zip(levels[:-1], levels[1:]):
        if fine <= coarse or fine % coarse:
            raise ValueError(f"Mesh levels must be nested refinements, got n={coarse} then n={fine}")

    table = ConvergenceTable(DARCY_STUDY_NORMS, extras=("vmax",))
    for n in levels:
        mesh = build_structured_mesh(n, domain)
        solution = solve_darcy(case.problem(mesh))
        mass = assemble_rt0_weighted_mass(mesh)
        errors = {
            "v_exact": rt0_l2_error(mesh, solution.v, case.velocity),
            "v_interp": rt0_l2_norm(mesh, solution.v - project_Pi_h(mesh, case.velocity), mass),
            "phi_exact": p0_l2_error(mesh, solution.phi, case.head),
            "phi_interp": p0_l2_norm(mesh, solution.phi - project_P_h(mesh, case.head)),
        }
        row = table.add(mesh.h, errors, vmax=solution.vmax)
        logger.info(f"{case.name} n={n}: " + ", ".join(f"{k}={v:.3e}" for k, v in row.errors.items()))

    vmax = [row.extras["vmax"] for row in table.rows]
    for prev, curr in zip(vmax[:-1], vmax[1:]):
        if curr > (1.0 + VMAX_GROWTH_TOL) * prev:
            table.flag(f"Velocity bound grows under refinement: |v_h|_inf {prev:.4e} -> {curr:.4e}")
    return table


if __name__ == "__main__":
    from datetime import datetime

    from aquitrans.utils.logging import setup_logging

    setup_logging("logs", datetime.now().strftime("%Y%m%d_%H%M%S"), "darcy")
    study = darcy_convergence_study(sinsin_case(), [8, 16, 32])
    for record in study.as_records():
        print(record)
