"""
Property suites behind `aquitrans verify`. Each suite is a function of a
numpy Generator that raises VerificationError on the first failed check and
returns the number of checks it ran.
"""
import logging
import tempfile
import time
from pathlib import Path
from typing import Callable, Dict, List, NamedTuple, Optional

import numpy as np

from aquitrans.analysis.convergence import observed_orders
from aquitrans.analysis.norms import discrete_h1_norm, time_interpolant
from aquitrans.discretization.assembly import (
    assemble_div,
    assemble_rt0_weighted_mass,
    assemble_vector_coupling,
    integrate_cells,
    project_Pi_h,
    rt0_local_basis,
)
from aquitrans.discretization.mesh import build_structured_mesh
from aquitrans.discretization.quadrature import STRANG_FIX_7
from aquitrans.errors import StepRefusedError, VerificationError
from aquitrans.physics.darcy import (
    DarcySolution,
    darcy_convergence_study,
    linear_case,
    sinsin_case,
    solve_darcy,
)
from aquitrans.physics.dispersion import (
    DispersionParams,
    TensorKind,
    bound_constants,
    tensor_field,
    tensor_inv_times_v,
)
from aquitrans.physics.isotherms import Isotherm
from aquitrans.physics.transport import (
    TransportOperator,
    TransportParams,
    TransportState,
    cfl_ratio,
    cfl_timestep,
    run,
)
from aquitrans.scenario_io.config import parse_config_text
from aquitrans.scenario_io.output import LEDGER_HEADER, step_name
from aquitrans.workflow import cmd_run

logger = logging.getLogger(__name__)


class SuiteResult(NamedTuple):
    name: str
    passed: bool
    checks: int
    seconds: float
    message: str


class _Checks:
    def __init__(self, suite: str):
        self.suite = suite
        self.count = 0

    def __call__(self, condition, message: str) -> None:
        self.count += 1
        if not bool(condition):
            raise VerificationError(f"{self.suite}: {message}")


def _random_params(rng: np.random.Generator) -> DispersionParams:
    S_m = rng.uniform(1e-3, 1.0)
    alpha_T = rng.uniform(0.0, 0.5)
    alpha_L = alpha_T + (1.0 - alpha_T) * (1.0 - rng.uniform(0.0, 1.0))
    return DispersionParams(S_m, max(alpha_L, np.nextafter(alpha_T, 1.0)), alpha_T)


def suite_dispersion(rng: np.random.Generator) -> int:
    check = _Checks("dispersion")
    for _ in range(1000):
        params = _random_params(rng)
        dim = int(rng.integers(2, 4))
        v = rng.normal(size=dim)
        v *= rng.uniform(0.0, 1.0) / max(np.linalg.norm(v), 1e-300)
        speed = np.linalg.norm(v)

        S = tensor_field(params, v)
        root = tensor_field(params, v, TensorKind.SQRT)
        inv = tensor_field(params, v, TensorKind.INV)
        check(np.abs(root @ root - S).max() <= 1e-12, "sqrt(S)^2 != S")
        check(np.abs(S @ inv - np.eye(dim)).max() <= 1e-12, "S S^-1 != Id")

        expected = np.sort([params.S_m + params.alpha_L * speed] + [params.S_m + params.alpha_T * speed] * (dim - 1))
        check(np.abs(np.linalg.eigvalsh(S) - expected).max() <= 1e-10, "spectrum mismatch")

        xi = rng.normal(size=(10, dim))
        quad = np.einsum("qi,ij,qj->q", xi, S, xi)
        norms = np.linalg.norm(xi, axis=1)
        check(np.all(quad - (params.S_m + params.alpha_T * speed) * norms**2 >= -1e-12), "lower spectral bound")
        check(
            np.all(np.linalg.norm(xi @ S, axis=1) - (params.S_m + params.alpha_L * speed) * norms <= 1e-12),
            "upper spectral bound",
        )
        C = bound_constants(params, speed)["C"]
        check(
            np.all(np.linalg.norm(xi @ root, axis=1) <= C * (1.0 + np.sqrt(speed)) * norms * (1 + 1e-12) + 1e-15),
            "square-root growth bound",
        )
        check(np.linalg.norm(tensor_inv_times_v(params, v)) <= 1.0 / params.alpha_L + 1e-12, "|S^-1 v| <= 1/alpha_L")

        if dim == 2:
            angle = rng.uniform(0.0, 2.0 * np.pi)
            rot = np.array([[np.cos(angle), -np.sin(angle)], [np.sin(angle), np.cos(angle)]])
            check(np.abs(tensor_field(params, rot @ v) - rot @ S @ rot.T).max() <= 1e-12, "rotation equivariance")
    return check.count


def suite_mesh(rng: np.random.Generator) -> int:
    check = _Checks("mesh")
    for n in (1, 2, 3, 5):
        mesh = build_structured_mesh(n)
        check(mesh.n_cells == 2 * n * n, f"cell count n={n}")
        check(mesh.n_vertices == (n + 1) ** 2, f"vertex count n={n}")
        check(mesh.n_edges == 3 * n * n + 2 * n, f"edge count n={n}")
        check(mesh.n_vertices - mesh.n_edges + mesh.n_cells == 1, f"Euler relation n={n}")
        check(np.all(mesh.areas > 0), "positive orientation")
        check(np.all(mesh.sigma > 0) and np.all(np.isfinite(mesh.sigma)), "admissible transmissibilities")
        check(np.isclose(mesh.metrics()["quasi_uniformity"], 1.0 + np.sqrt(2.0)), "quasi-uniformity")
    single = build_structured_mesh(1)
    check(np.isclose(single.sigma[single.interior_edges][0], 3.0), "centroid fallback on the diagonal")
    return check.count


def suite_assembly(rng: np.random.Generator) -> int:
    check = _Checks("assembly")
    mesh = build_structured_mesh(4)
    for cell in rng.choice(mesh.n_cells, size=8, replace=False):
        basis = rt0_local_basis(mesh, int(cell))
        check(np.abs(basis.facet_flux_averages() - np.eye(3)).max() <= 1e-12, "unit normal flux per facet")

    mass = assemble_rt0_weighted_mass(mesh)
    oracle = assemble_rt0_weighted_mass(mesh, rule=STRANG_FIX_7)
    check(abs(mass - oracle).max() <= 1e-12, "midpoint rule agrees with 7-point rule")
    check(abs(mass - mass.T).max() == 0.0, "mass matrix symmetry")
    check(np.linalg.eigvalsh(mass.toarray())[0] > 0, "mass matrix positive definite")

    def field(x, y):
        return x**2, x * y

    div_integrals = assemble_div(mesh) @ project_Pi_h(mesh, field)
    check(np.abs(div_integrals - integrate_cells(mesh, lambda x, y: 3.0 * x)).max() <= 1e-12, "commuting diagram")

    q = rng.normal(size=(mesh.n_cells, 2))
    G = assemble_vector_coupling(mesh, q).toarray()
    check(np.all(np.isfinite(G)), "finite coupling")
    check(abs(assemble_rt0_weighted_mass(mesh) - mass).max() == 0.0, "bit-identical reassembly")
    return check.count


def suite_darcy(rng: np.random.Generator) -> int:
    check = _Checks("darcy")
    mesh = build_structured_mesh(4)
    case = linear_case(kappa=np.array([[2.0, 0.5], [0.5, 1.0]]))
    solution = solve_darcy(case.problem(mesh))
    check(np.abs(solution.v - project_Pi_h(mesh, case.velocity)).max() <= 1e-10, "constant-velocity patch test")

    sinsin = sinsin_case()
    problem = sinsin.problem(build_structured_mesh(8))
    solution = solve_darcy(problem)
    div = assemble_div(problem.mesh) @ solution.v
    check(np.abs(div - problem.source * problem.mesh.areas).max() <= 1e-11, "local conservation")
    energy = solution.v @ (assemble_rt0_weighted_mass(problem.mesh) @ solution.v)
    work = np.sum(problem.source * problem.mesh.areas * solution.phi)
    check(abs(energy - work) <= 1e-10 * abs(work), "energy identity")

    table = darcy_convergence_study(sinsin, [8, 16, 32])
    check(table.last_order("v_exact") >= 0.9, f"velocity order {table.last_order('v_exact'):.3f} < 0.9")
    return check.count


def suite_transport(rng: np.random.Generator) -> int:
    check = _Checks("transport")
    mesh = build_structured_mesh(4)
    ones = np.ones(mesh.n_cells)
    dispersion = DispersionParams(0.01, 0.1, 0.01)

    k, R, psi, tau = 0.5, 2.0, 0.3, 0.01
    params = TransportParams(R, psi * ones, dispersion, Isotherm.linear(k), 0.0 * ones, 0.8 * ones)
    result = run(params, DarcySolution.at_rest(mesh), tau, 100 * tau)
    expected = 0.8 * (1.0 - tau * k / (R * psi)) ** np.arange(result.n_steps + 1)
    actual = np.array([s.c for s in result.trajectory])
    check(np.abs(actual - expected[:, None]).max() <= 1e-12, "uniform-data recurrence")

    c0 = 0.5 + 0.4 * np.sin(np.arange(mesh.n_cells))
    v = project_Pi_h(mesh, lambda x, y: (1.0 + 0 * x, 0.5 + 0 * y))
    darcy = DarcySolution.from_velocity(mesh, v)
    params = TransportParams(1.0, psi * ones, dispersion, Isotherm.linear(0.0), 0.0 * ones, c0)
    operator = TransportOperator(mesh, params, darcy, 0.005)
    state = operator.initial_state()
    first = operator.step(state)
    again = operator.step(state)
    check(np.abs(first.c - again.c).max() <= 1e-12, "repeated step agrees")
    check(operator.mass_balance_defect(state, first) <= 1e-10, "discrete mass balance")

    zero = TransportParams(1.0, psi * ones, dispersion, Isotherm.langmuir(1.0, 1.0), 0.0 * ones, 0.0 * ones)
    quiet = run(zero, darcy, 0.005, 0.05)
    check(all(np.abs(s.c).max() == 0.0 for s in quiet.trajectory), "zero-source steady state")

    tau_cfl = cfl_timestep(mesh.h, 2, 0.1, 1.0)
    check(cfl_ratio(tau_cfl, mesh.h, 2, 0.1) <= 1.0, "CFL step satisfies its own guard")

    fast = DarcySolution.from_velocity(mesh, project_Pi_h(mesh, lambda x, y: (100.0 + 0 * x, 0 * y)))
    sharp = TransportParams(1.0, psi * ones, DispersionParams(0.01, 0.05, 0.01), Isotherm.linear(0.0), 0 * ones, c0)
    reference = TransportOperator(mesh, sharp, fast, 1e-8)
    try:
        TransportOperator(mesh, sharp, fast, 2.0 * reference.threshold)
        refused = False
    except StepRefusedError:
        refused = True
    check(refused, "step above the solvability threshold was not refused")
    TransportOperator(mesh, sharp, fast, 0.5 * reference.threshold).step(
        TransportState(0, 0.0, c0, np.zeros(mesh.n_edges))
    )
    return check.count


def suite_analysis(rng: np.random.Generator) -> int:
    check = _Checks("analysis")
    mesh = build_structured_mesh(4)
    check(discrete_h1_norm(mesh, np.full(mesh.n_cells, 3.0)) <= 1e-14, "seminorm vanishes on constants")
    for _ in range(10):
        c = rng.normal(size=mesh.n_cells)
        check(discrete_h1_norm(mesh, c, dirichlet=True) > 0, "Dirichlet norm positive on nonzero fields")
        alpha = rng.normal()
        check(
            np.isclose(discrete_h1_norm(mesh, alpha * c), abs(alpha) * discrete_h1_norm(mesh, c), rtol=1e-12),
            "homogeneity",
        )

    states = [
        TransportState(n, 0.1 * n, rng.normal(size=mesh.n_cells), rng.normal(size=mesh.n_edges)) for n in range(4)
    ]
    for n in range(4):
        c, vc = time_interpolant(states, 0.1 * n)
        check(np.array_equal(c, states[n].c), "interpolant exact at nodes")
    for n in range(1, 4):
        for t in rng.uniform(0.1 * (n - 1), 0.1 * n, size=10):
            theta = (t - states[n - 1].t) / (states[n].t - states[n - 1].t)
            c, _ = time_interpolant(states, t)
            check(np.abs(c - (theta * states[n].c + (1 - theta) * states[n - 1].c)).max() <= 1e-14, "linearity")

    orders = observed_orders([1.0, 0.5, 0.25], [4.0, 2.0, 1.0])
    check(np.allclose(orders, 1.0), "orders of halving errors")
    check(np.allclose(observed_orders([1.0, 0.5, 0.25], [40.0, 20.0, 10.0]), orders), "scale invariance")
    return check.count


CLI_IO_SCENARIO = (
    "mesh.n = 4\n"
    "time.tau = 0.05\n"
    "time.T_final = 0.1\n"
    "darcy.g.kind = sinsin\n"
    "transport.c0.kind = gaussian\n"
    "transport.isotherm = langmuir\n"
    "transport.isotherm.k = 0.5\n"
    "transport.isotherm.k_prime = 2.0\n"
)


def _first_line(path: Path) -> str:
    with open(path, encoding="utf-8") as f:
        return f.readline().rstrip("\n")


def suite_cli_io(rng: np.random.Generator) -> int:
    check = _Checks("cli_io")
    config = parse_config_text(CLI_IO_SCENARIO)
    echoed = parse_config_text("\n".join(config.echo_lines()))
    check(echoed == config, "echoed configuration parses back to itself")
    check(echoed.echo_lines() == config.echo_lines(), "echo is a fixed point")

    with tempfile.TemporaryDirectory() as tmp:
        runs = []
        for name in ("first", "second"):
            report = cmd_run(config.with_output_directory(Path(tmp) / name), log_dir=None)
            runs.append(report.output_dir)

        first, second = runs
        check(_first_line(first / step_name("c", 0, "csv")) == "cell,x,y,c", "concentration header")
        check(_first_line(first / step_name("flux", 0, "csv")) == "edge,coefficient", "flux header")
        check(_first_line(first / "ledger.csv") == ",".join(LEDGER_HEADER), "ledger header")

        written = sorted(p.name for p in first.glob("*.csv"))
        check(written == sorted(p.name for p in second.glob("*.csv")), "reruns write the same files")
        for name in written:
            check((first / name).read_bytes() == (second / name).read_bytes(), f"{name} differs between reruns")

        report_text = (first / "report.txt").read_text(encoding="utf-8")
        check(all(line in report_text for line in config.echo_lines()), "report echoes the configuration")
    return check.count


SUITES: Dict[str, Callable[[np.random.Generator], int]] = {
    "dispersion": suite_dispersion,
    "mesh": suite_mesh,
    "assembly": suite_assembly,
    "darcy": suite_darcy,
    "transport": suite_transport,
    "analysis": suite_analysis,
    "cli_io": suite_cli_io,
}


def cmd_verify(suite_filter: Optional[str] = None, seed: int = 0) -> List[SuiteResult]:
    if suite_filter is not None and suite_filter not in SUITES:
        raise VerificationError(f"Unknown suite '{suite_filter}', choose from {list(SUITES)}")
    names = [suite_filter] if suite_filter else list(SUITES)
    results = []
    for name in names:
        rng = np.random.default_rng(seed)
        start = time.perf_counter()
        try:
            count = SUITES[name](rng)
            results.append(SuiteResult(name, True, count, time.perf_counter() - start, "ok"))
        except VerificationError as e:
            results.append(SuiteResult(name, False, 0, time.perf_counter() - start, str(e)))
        except Exception as e:
            logger.error(f"Suite {name} crashed: {str(e)}")
            results.append(SuiteResult(name, False, 0, time.perf_counter() - start, f"{type(e).__name__}: {e}"))
        logger.info(f"Suite {name}: {results[-1].message}")
    return results
