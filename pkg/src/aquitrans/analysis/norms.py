"""
Discrete norms on P0 / RT0 fields, the majorization ratio
rho = |c|_{1,h} / (|v_c| + |c|) and the piecewise-linear time interpolant of
a trajectory.

Trajectories are any sequence of states exposing `t`, `c` and `vc`.
"""
import bisect
import logging
from typing import Callable, Dict, NamedTuple, Optional, Sequence, Tuple, Union

import numpy as np
import scipy.sparse as sps

from aquitrans.discretization.assembly import (
    assemble_rt0_weighted_mass,
    check_p0,
    p0_l2_error,
    p0_l2_norm,
    project_P_h,
    rt0_l2_norm,
)
from aquitrans.discretization.mesh import Mesh

logger = logging.getLogger(__name__)


def discrete_h1_norm(mesh: Mesh, c, dirichlet: bool = False) -> float:
    """
    (sum over edges of sigma (c_i - c_j)^2)^{1/2}. Boundary edges see a ghost
    value 0 in Dirichlet mode and are skipped in Neumann mode.
    """
    c = check_p0(mesh, c)
    interior = mesh.interior_edges
    left, right = mesh.edge_cells[interior, 0], mesh.edge_cells[interior, 1]
    total = np.sum(mesh.sigma[interior] * (c[left] - c[right]) ** 2)
    if dirichlet:
        boundary = mesh.boundary_edges
        total += np.sum(mesh.sigma[boundary] * c[mesh.edge_cells[boundary, 0]] ** 2)
    return float(np.sqrt(total))


class DiscreteNormReport(NamedTuple):
    h1: float
    c_l2: float
    vc_l2: float
    ratio: Optional[float]


def norm_report(
    mesh: Mesh, c, vc, dirichlet: bool = False, flux_mass: Optional[sps.csc_array] = None
) -> DiscreteNormReport:
    h1 = discrete_h1_norm(mesh, c, dirichlet)
    c_l2 = p0_l2_norm(mesh, c)
    vc_l2 = rt0_l2_norm(mesh, vc, flux_mass)
    denominator = vc_l2 + c_l2
    ratio = h1 / denominator if denominator > 0 else None
    return DiscreteNormReport(h1=h1, c_l2=c_l2, vc_l2=vc_l2, ratio=ratio)


def check_majorization(mesh: Mesh, trajectory: Sequence, dirichlet: bool = False) -> Optional[float]:
    """Max of rho over the trajectory; None when every state is zero"""
    mass = assemble_rt0_weighted_mass(mesh)
    ratios = [norm_report(mesh, s.c, s.vc, dirichlet, mass).ratio for s in trajectory]
    ratios = [r for r in ratios if r is not None]
    if not ratios:
        logger.info("Majorization ratio undefined: trajectory is identically zero")
        return None
    return float(max(ratios))


def majorization_spread(max_ratios: Sequence[Optional[float]]) -> float:
    """Relative variation max/min - 1 of per-mesh maximal ratios"""
    values = [r for r in max_ratios if r is not None]
    if len(values) < 2:
        raise ValueError("Need defined ratios on at least two meshes")
    return float(max(values) / min(values) - 1.0)


def time_interpolant(trajectory: Sequence, t: float) -> Tuple[np.ndarray, np.ndarray]:
    """Linear interpolation in time of (c, vc) between stored states"""
    times = [s.t for s in trajectory]
    if not trajectory:
        raise ValueError("Empty trajectory")
    tol = 1e-12 * max(1.0, abs(times[-1]))
    if t < times[0] - tol or t > times[-1] + tol:
        raise ValueError(f"t={t} outside the trajectory range [{times[0]}, {times[-1]}]")

    n = bisect.bisect_left(times, t)
    if n < len(times) and abs(times[n] - t) <= tol:
        return np.array(trajectory[n].c), np.array(trajectory[n].vc)
    if n == 0:
        return np.array(trajectory[0].c), np.array(trajectory[0].vc)
    if n >= len(times):
        return np.array(trajectory[-1].c), np.array(trajectory[-1].vc)

    before, after = trajectory[n - 1], trajectory[n]
    theta = (t - before.t) / (after.t - before.t)
    c = theta * np.asarray(after.c) + (1.0 - theta) * np.asarray(before.c)
    vc = theta * np.asarray(after.vc) + (1.0 - theta) * np.asarray(before.vc)
    return c, vc


Reference = Union[np.ndarray, Callable[[np.ndarray, np.ndarray], np.ndarray]]


def error_norms(
    mesh: Mesh,
    field,
    reference: Reference,
    dirichlet: bool = False,
    restriction: Optional[sps.sparray] = None,
) -> Dict[str, float]:
    """
    L2 and discrete H1 error of a P0 field. The reference is a closed form,
    a field on the same mesh, or a fine-mesh field with its restriction map.
    """
    field = check_p0(mesh, field)
    if callable(reference):
        l2 = p0_l2_error(mesh, field, reference)
        projected = project_P_h(mesh, reference)
        return {"L2": l2, "H1": discrete_h1_norm(mesh, field - projected, dirichlet)}

    reference = np.asarray(reference, dtype=float)
    if restriction is not None:
        reference = restriction @ reference
    elif reference.shape != field.shape:
        raise ValueError(
            f"Reference has {reference.size} values for a mesh of {mesh.n_cells} cells and no restriction map was given"
        )
    diff = field - reference
    return {"L2": p0_l2_norm(mesh, diff), "H1": discrete_h1_norm(mesh, diff, dirichlet)}


def space_time_l2_error(
    mesh: Mesh,
    trajectory: Sequence,
    reference_trajectory: Sequence,
    restriction: Optional[sps.sparray] = None,
) -> float:
    """
    Discrete L2(0,T; L2) distance (sum_n tau_n |c^n - C_ref(t_n)|^2)^{1/2},
    the reference interpolated in time and restricted in space.
    """
    total = 0.0
    for prev, state in zip(trajectory[:-1], trajectory[1:]):
        ref_c, _ = time_interpolant(reference_trajectory, state.t)
        if restriction is not None:
            ref_c = restriction @ ref_c
        total += (state.t - prev.t) * p0_l2_norm(mesh, np.asarray(state.c) - ref_c) ** 2
    return float(np.sqrt(total))
