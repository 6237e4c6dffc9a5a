"""
Semi-implicit mixed scheme for reactive transport

    R psi dc/dt + div(v_c) + r(c) = p,      v_c = -S(v) psi grad c + v c

Each step solves, for (c^n, v_c^n) in P0 x RT0,

    M_{R psi} c^n + tau D_{S^1/2} v_c^n        = M_{R psi} c^{n-1} - tau M r(c^{n-1}) + tau M p
    A_{S^-1/2 psi^-1} v_c^n - (B^T + G) c^n   = 0

with S frozen at the cell-centroid Darcy velocity and G the coupling with
S^{-1} psi^{-1} v_h. The Darcy field is stationary, so the block matrix does
not change between steps and is factored once.
"""
import logging
import math
from dataclasses import dataclass, field
from enum import Enum
from typing import Callable, List, NamedTuple, Optional, Sequence, Tuple

import numpy as np
import scipy.sparse as sps
import scipy.sparse.linalg as spla

from aquitrans.analysis.convergence import ConvergenceTable, restriction_matrix
from aquitrans.analysis.norms import space_time_l2_error
from aquitrans.discretization.assembly import (
    P0Field,
    RT0Field,
    assemble_div,
    assemble_p0_mass,
    assemble_rt0_weighted_mass,
    assemble_vector_coupling,
    assemble_weighted_div,
    check_p0,
    zero_trace_prolongation,
)
from aquitrans.discretization.mesh import Mesh, Rectangle, build_structured_mesh
from aquitrans.errors import StepRefusedError, TransportStepError
from aquitrans.physics.darcy import DarcySolution
from aquitrans.physics.dispersion import (
    BoundConstants,
    DispersionParams,
    TensorKind,
    bound_constants,
    tensor_field,
    tensor_inv_times_v,
)
from aquitrans.physics.isotherms import Isotherm, isotherm_eval

logger = logging.getLogger(__name__)

SPACE_DIM = 2
DIVERGENCE_MISMATCH_TOL = 1e-8


class TransportBoundary(Enum):
    NEUMANN = "neumann"
    DIRICHLET = "dirichlet"


@dataclass(frozen=True, eq=False)
class TransportParams:
    R: float
    psi: P0Field
    dispersion: DispersionParams
    isotherm: Isotherm
    p: P0Field
    c0: P0Field
    chi: TransportBoundary = TransportBoundary.NEUMANN
    g: Optional[P0Field] = None

    def __post_init__(self):
        object.__setattr__(self, "chi", TransportBoundary(self.chi))
        if not (np.isfinite(self.R) and self.R > 0):
            raise ValueError(f"Retardation factor must satisfy R > 0, got R={self.R}")
        for name in ("psi", "p", "c0"):
            values = np.array(getattr(self, name), dtype=float)
            if values.ndim != 1 or not np.all(np.isfinite(values)):
                raise ValueError(f"{name} must be a finite per-cell array")
            values.setflags(write=False)
            object.__setattr__(self, name, values)
        if not (self.psi.size == self.p.size == self.c0.size):
            raise ValueError(f"psi, p and c0 sizes differ: {self.psi.size}, {self.p.size}, {self.c0.size}")
        if np.any(self.psi <= 0):
            raise ValueError(f"Porosity must satisfy psi > 0 cellwise, got min {self.psi.min()}")
        if np.any(self.c0 < 0) or np.any(self.c0 > 1):
            raise ValueError(f"Initial concentration must lie in [0, 1], got [{self.c0.min()}, {self.c0.max()}]")
        if self.g is not None:
            g = np.array(self.g, dtype=float)
            g.setflags(write=False)
            object.__setattr__(self, "g", g)

    @property
    def psi_minus(self) -> float:
        return float(self.psi.min())

    @property
    def psi_plus(self) -> float:
        return float(self.psi.max())

    @property
    def n_cells(self) -> int:
        return self.psi.size


@dataclass(frozen=True, eq=False)
class TransportState:
    n: int
    t: float
    c: P0Field
    vc: RT0Field


class LedgerRow(NamedTuple):
    step: int
    t: float
    increments_c: float
    sup_vc: float
    increments_vc: float
    div_flux: float
    space_time: float
    min_c: float


@dataclass
class StabilityLedger:
    """Running sums of the discrete energy estimates, all nondecreasing in n"""

    increments_c: float = 0.0
    sup_vc: float = 0.0
    increments_vc: float = 0.0
    div_flux: float = 0.0
    space_time: float = 0.0
    rows: List[LedgerRow] = field(default_factory=list)
    negativity: List[float] = field(default_factory=list)

    def start(self, state: TransportState, vc_norm_sq: float) -> None:
        self.sup_vc = max(self.sup_vc, vc_norm_sq)

    def record(
        self,
        state: TransportState,
        tau: float,
        dc_norm_sq: float,
        dvc_norm_sq: float,
        c_norm_sq: float,
        vc_norm_sq: float,
        div_norm_sq: float,
    ) -> LedgerRow:
        self.increments_c += dc_norm_sq / tau
        self.sup_vc = max(self.sup_vc, vc_norm_sq)
        self.increments_vc += dvc_norm_sq
        self.div_flux += tau * div_norm_sq
        self.space_time += tau * (c_norm_sq + vc_norm_sq)
        min_c = min(0.0, float(np.min(state.c)))
        self.negativity.append(min_c)
        row = LedgerRow(
            state.n, state.t, self.increments_c, self.sup_vc, self.increments_vc, self.div_flux, self.space_time, min_c
        )
        self.rows.append(row)
        return row

    @property
    def worst_negativity(self) -> float:
        return min(self.negativity, default=0.0)

    def summary(self, vmax: float) -> dict:
        return {
            "increments_c": self.increments_c,
            "sup_vc": self.sup_vc,
            "increments_vc": self.increments_vc,
            "div_flux": self.div_flux,
            "space_time": self.space_time,
            "bound_surrogate": 1.0 + vmax + vmax**2,
            "min_c": self.worst_negativity,
        }


class CFLCondition(NamedTuple):
    epsilon: float = 0.1
    C_CFL: float = 1.0


def _check_cfl_inputs(h: float, N: int, epsilon: float, C_CFL: float) -> None:
    if not h > 0:
        raise ValueError(f"Mesh size must be positive, got h={h}")
    if N not in (2, 3):
        raise ValueError(f"Space dimension must be 2 or 3, got N={N}")
    if not 0 < epsilon < 1:
        raise ValueError(f"CFL exponent must satisfy 0 < epsilon < 1, got {epsilon}")
    if not C_CFL > 0:
        raise ValueError(f"CFL constant must be positive, got C_CFL={C_CFL}")


def cfl_ratio(tau: float, h: float, N: int, epsilon: float) -> float:
    return tau ** (1.0 - epsilon) / h**N


def cfl_timestep(h: float, N: int = SPACE_DIM, epsilon: float = 0.1, C_CFL: float = 1.0) -> float:
    """Largest tau with tau^(1-eps) / h^N <= C_CFL, exact in floating point"""
    _check_cfl_inputs(h, N, epsilon, C_CFL)
    tau = (C_CFL * h**N) ** (1.0 / (1.0 - epsilon))
    while cfl_ratio(tau, h, N, epsilon) > C_CFL:
        tau = float(np.nextafter(tau, 0.0))
    return tau


def solvability_threshold(
    h: float,
    R: float,
    psi_minus: float,
    psi_plus: float,
    C_disp: float,
    inverse_constant: float = 1.0,
    N: int = SPACE_DIM,
) -> float:
    """
    Time step below which 1/psi_+ - 2 C_inv^2 tau C_disp^2 / (h^{N/2} R psi_-^3)
    stays positive and the step matrix is provably invertible.
    """
    if C_disp == 0:
        return float("inf")
    return h ** (N / 2.0) * R * psi_minus**3 / (2.0 * inverse_constant**2 * C_disp**2 * psi_plus)


class TransportOperator:
    """Assembled and factored step matrix for one (mesh, params, Darcy field, tau)"""

    def __init__(
        self,
        mesh: Mesh,
        params: TransportParams,
        darcy: DarcySolution,
        tau: float,
        inverse_constant: float = 1.0,
        cfl: Optional[CFLCondition] = None,
    ):
        self.logger = logging.getLogger(f"{__name__}.TransportOperator")
        if params.n_cells != mesh.n_cells:
            raise ValueError(f"Transport data has {params.n_cells} cells, mesh has {mesh.n_cells}")
        if darcy.v.shape != (mesh.n_edges,):
            raise ValueError("Darcy solution does not belong to this mesh")
        if not (np.isfinite(tau) and tau > 0):
            raise StepRefusedError(f"Time step must be positive and finite, got {tau}", tau=tau)

        self.mesh = mesh
        self.params = params
        self.darcy = darcy
        self.tau = float(tau)
        self.cfl = cfl
        self._check_divergence()

        self.bounds: BoundConstants = bound_constants(params.dispersion, darcy.vmax)
        self.threshold = solvability_threshold(
            mesh.h, params.R, params.psi_minus, params.psi_plus, self.bounds["C_disp"], inverse_constant
        )
        self._guard()

        self._assemble()
        self._factor()

    # ------------------------------------------------------------------ guards
    def _check_divergence(self) -> None:
        if self.params.g is None:
            return
        g = check_p0(self.mesh, self.params.g, "transport g")
        mismatch = np.abs(self.darcy.divergence() - g).max()
        if mismatch > DIVERGENCE_MISMATCH_TOL * max(1.0, np.abs(g).max()):
            self.logger.warning(f"Darcy velocity does not satisfy div v = g: max mismatch {mismatch:.3e}")

    def _guard(self) -> None:
        if self.cfl is not None:
            ratio = cfl_ratio(self.tau, self.mesh.h, SPACE_DIM, self.cfl.epsilon)
            if ratio > self.cfl.C_CFL:
                raise StepRefusedError(
                    f"CFL condition violated: tau^(1-eps)/h^N = {ratio:.6e} > C_CFL = {self.cfl.C_CFL}",
                    tau=self.tau,
                    threshold=self.threshold,
                )
        else:
            self.logger.debug(f"No CFL coupling; Darcy velocity bounded by |v_h|_inf = {self.darcy.vmax:.4e}")
        if self.tau >= self.threshold:
            raise StepRefusedError(
                "Time step at or above the solvability threshold",
                tau=self.tau,
                threshold=self.threshold,
            )

    # ---------------------------------------------------------------- assembly
    def _assemble(self) -> None:
        mesh, params = self.mesh, self.params
        velocity = self.darcy.centroid_velocities
        psi = params.psi
        S_sqrt = tensor_field(params.dispersion, velocity, TensorKind.SQRT)
        S_inv_sqrt = tensor_field(params.dispersion, velocity, TensorKind.INV_SQRT)
        coupling = tensor_inv_times_v(params.dispersion, velocity) / psi[:, None]

        self.mass = assemble_p0_mass(mesh, params.R * psi)
        self.unit_mass = assemble_p0_mass(mesh)
        self.flux_mass = assemble_rt0_weighted_mass(mesh)

        A = assemble_rt0_weighted_mass(mesh, S_inv_sqrt / psi[:, None, None])
        D = assemble_weighted_div(mesh, S_sqrt)
        BG = (assemble_div(mesh).T + assemble_vector_coupling(mesh, coupling)).tocsc()

        if params.chi is TransportBoundary.NEUMANN:
            P = zero_trace_prolongation(mesh)
            A, D, BG = (P.T @ A @ P).tocsc(), (D @ P).tocsc(), (P.T @ BG).tocsc()
        else:
            P = sps.diags_array(np.ones(mesh.n_edges), format="csc")
        self.prolongation = P
        self.A, self.D, self.BG = A, D, BG
        self.system = sps.block_array([[self.mass, self.tau * D], [-BG, A]], format="csc")

    def _factor(self) -> None:
        try:
            self._lu = spla.splu(sps.csc_matrix(self.system))
            self._flux_lu = spla.splu(sps.csc_matrix(self.A))
        except RuntimeError as e:
            raise TransportStepError(
                f"Factorization of the step matrix failed: {e}", tau=self.tau, threshold=self.threshold
            ) from e
        self.logger.debug(
            f"Factored step matrix of size {self.system.shape[0]} (nnz={self.system.nnz}), "
            f"tau={self.tau:.4e}, threshold={self.threshold:.4e}"
        )

    # ---------------------------------------------------------------- stepping
    @property
    def n_flux(self) -> int:
        return self.A.shape[0]

    def initial_state(self, c0: Optional[P0Field] = None) -> TransportState:
        """State at t = 0 with the flux consistent with c0"""
        c0 = self.params.c0 if c0 is None else check_p0(self.mesh, c0, "initial concentration")
        vc = self.prolongation @ self._flux_lu.solve(self.BG @ c0)
        return TransportState(0, 0.0, np.array(c0, dtype=float), vc)

    def rhs(self, c_prev: P0Field) -> np.ndarray:
        reaction = isotherm_eval(self.params.isotherm, c_prev)
        top = self.mass @ c_prev - self.tau * (self.unit_mass @ reaction) + self.tau * (self.unit_mass @ self.params.p)
        return np.concatenate([top, np.zeros(self.n_flux)])

    def step(self, state: TransportState) -> TransportState:
        solution = self._lu.solve(self.rhs(np.asarray(state.c, dtype=float)))
        if not np.all(np.isfinite(solution)):
            raise TransportStepError(
                "Step produced non-finite values", tau=self.tau, threshold=self.threshold, step=state.n + 1
            )
        n_cells = self.mesh.n_cells
        c = solution[:n_cells]
        vc = self.prolongation @ solution[n_cells:]
        return TransportState(state.n + 1, (state.n + 1) * self.tau, c, vc)

    def mass_balance_defect(self, previous: TransportState, current: TransportState) -> float:
        """Row sum of the first block equation, relative to its scale"""
        storage = self.mass @ (current.c - previous.c)
        flux = self.tau * (self.D @ (self.prolongation.T @ current.vc))
        source = self.tau * (
            self.unit_mass @ (self.params.p - isotherm_eval(self.params.isotherm, previous.c))
        )
        scale = max(np.abs(storage).sum() + np.abs(flux).sum() + np.abs(source).sum(), 1e-300)
        return float(abs(np.sum(storage + flux - source)) / scale)

    def flux_divergence_sq(self, vc: RT0Field) -> float:
        """|div(S^1/2 v_c)|^2 with S frozen per cell"""
        cell_integrals = self.D @ (self.prolongation.T @ vc)
        return float(np.sum(cell_integrals**2 / self.mesh.areas))


def step(
    state: TransportState,
    params: TransportParams,
    darcy: DarcySolution,
    tau: float,
    operator: Optional[TransportOperator] = None,
    **operator_kwargs,
) -> TransportState:
    if operator is None:
        operator = TransportOperator(darcy.mesh, params, darcy, tau, **operator_kwargs)
    elif operator.tau != tau or operator.params is not params:
        raise ValueError("Operator was built for different parameters or time step")
    return operator.step(state)


def time_grid(tau: float, T_final: float) -> Tuple[int, float]:
    """Number of steps and the uniform step T_final/n, never larger than tau"""
    if not (tau > 0 and T_final > 0):
        raise ValueError(f"Need tau > 0 and T_final > 0, got tau={tau}, T_final={T_final}")
    n_steps = max(1, math.ceil(T_final / tau - 1e-9))
    if T_final / n_steps > tau:
        n_steps += 1
    return n_steps, T_final / n_steps


@dataclass
class TransportRun:
    trajectory: List[TransportState]
    ledger: StabilityLedger
    tau: float
    n_steps: int
    vmax: float
    mass_defects: List[float]

    @property
    def final(self) -> TransportState:
        return self.trajectory[-1]

    def summary(self) -> dict:
        return self.ledger.summary(self.vmax)


def _norms_sq(operator: TransportOperator, c, vc) -> Tuple[float, float]:
    c_sq = float(c @ (operator.unit_mass @ c))
    vc_sq = float(vc @ (operator.flux_mass @ vc))
    return c_sq, vc_sq


def run(
    params: TransportParams,
    darcy: DarcySolution,
    tau: float,
    T_final: float,
    inverse_constant: float = 1.0,
    cfl: Optional[CFLCondition] = None,
    on_step: Optional[Callable[[TransportState, LedgerRow], None]] = None,
) -> TransportRun:
    n_steps, tau_used = time_grid(tau, T_final)
    operator = TransportOperator(darcy.mesh, params, darcy, tau_used, inverse_constant, cfl)
    ledger = StabilityLedger()

    state = operator.initial_state()
    trajectory = [state]
    mass_defects = []
    ledger.start(state, _norms_sq(operator, state.c, state.vc)[1])
    logger.info(f"Transport run: {n_steps} steps of tau={tau_used:.4e} to T={T_final}")

    for _ in range(n_steps):
        new = operator.step(state)
        c_sq, vc_sq = _norms_sq(operator, new.c, new.vc)
        dc_sq, dvc_sq = _norms_sq(operator, new.c - state.c, new.vc - state.vc)
        row = ledger.record(
            new,
            tau_used,
            dc_sq,
            dvc_sq,
            c_sq,
            vc_sq,
            operator.flux_divergence_sq(new.vc),
        )
        mass_defects.append(operator.mass_balance_defect(state, new))
        if row.min_c < 0:
            logger.debug(f"Step {new.n}: negative concentration {row.min_c:.3e}")
        logger.debug(
            f"Step {new.n} t={new.t:.5f}: sum|dc|^2/tau={row.increments_c:.4e} sup|vc|^2={row.sup_vc:.4e}"
        )
        if on_step is not None:
            on_step(new, row)
        trajectory.append(new)
        state = new

    if ledger.worst_negativity < 0:
        logger.warning(f"Concentration went negative during the run, worst value {ledger.worst_negativity:.3e}")
    return TransportRun(trajectory, ledger, tau_used, n_steps, darcy.vmax, mass_defects)


ScenarioBuilder = Callable[[Mesh], Tuple[TransportParams, DarcySolution]]


def transport_self_convergence(
    build: ScenarioBuilder,
    levels: Sequence[int],
    reference_level: int,
    T_final: float,
    cfl: CFLCondition = CFLCondition(),
    domain: Rectangle = Rectangle(),
    inverse_constant: float = 1.0,
) -> ConvergenceTable:
    """Coarse CFL-coupled runs against a fine reference run, compared through P_h"""
    reference_mesh = build_structured_mesh(reference_level, domain)
    params, darcy = build(reference_mesh)
    tau = cfl_timestep(reference_mesh.h, SPACE_DIM, cfl.epsilon, cfl.C_CFL)
    reference = run(params, darcy, tau, T_final, inverse_constant, cfl)

    table = ConvergenceTable(("c_L2",))
    for n in levels:
        if reference_level % n:
            raise ValueError(f"Level n={n} is not nested in the reference n={reference_level}")
        mesh = build_structured_mesh(n, domain)
        params, darcy = build(mesh)
        tau = cfl_timestep(mesh.h, SPACE_DIM, cfl.epsilon, cfl.C_CFL)
        coarse = run(params, darcy, tau, T_final, inverse_constant, cfl)
        error = space_time_l2_error(
            mesh, coarse.trajectory, reference.trajectory, restriction_matrix(reference_mesh, mesh)
        )
        table.add(mesh.h, {"c_L2": error}, tau=coarse.tau)
        logger.info(f"Self-convergence n={n}: tau={coarse.tau:.3e}, L2(L2) error {error:.4e}")
    return table
