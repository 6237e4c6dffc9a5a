import numpy as np
import pytest

from aquitrans.discretization.assembly import (
    assemble_div,
    assemble_rt0_weighted_mass,
    project_P_h,
    project_Pi_h,
)
from aquitrans.discretization.mesh import build_structured_mesh
from aquitrans.errors import AssemblyError, DarcySolveError
from aquitrans.physics.darcy import (
    DarcyProblem,
    DarcySolution,
    HeadBoundary,
    darcy_convergence_study,
    linear_case,
    sinsin_case,
    solve_darcy,
)

ANISOTROPIC = np.array([[2.0, 0.5], [0.5, 1.0]])


def test_zero_source_gives_zero_solution(mesh4):
    solution = solve_darcy(DarcyProblem(mesh4, np.eye(2), 0.0))
    assert np.all(solution.v == 0.0)
    assert np.all(solution.phi == 0.0)
    assert solution.vmax == 0.0


@pytest.mark.parametrize("kappa", [np.eye(2), ANISOTROPIC])
def test_affine_head_is_reproduced(mesh4, kappa):
    case = linear_case(kappa)
    solution = solve_darcy(case.problem(mesh4))
    assert np.abs(solution.v - project_Pi_h(mesh4, case.velocity)).max() <= 1e-10
    assert np.abs(solution.phi - project_P_h(mesh4, case.head)).max() <= 1e-10
    assert np.allclose(solution.centroid_velocities, -kappa @ np.array([1.0, -0.5]))


def test_local_conservation(mesh8):
    case = sinsin_case(ANISOTROPIC)
    problem = case.problem(mesh8)
    solution = solve_darcy(problem)
    assert np.abs(solution.divergence() - problem.source).max() <= 1e-10 * max(1.0, np.abs(problem.source).max())


def test_energy_identity(mesh8):
    problem = sinsin_case().problem(mesh8)
    solution = solve_darcy(problem)
    A = assemble_rt0_weighted_mass(mesh8)
    energy = solution.v @ (A @ solution.v)
    work = solution.phi @ (assemble_div(mesh8) @ solution.v)
    assert energy == pytest.approx(work, rel=1e-10)
    assert work == pytest.approx(solution.phi @ (problem.source * mesh8.areas), rel=1e-10)


def test_neumann_mode(mesh8):
    source = project_P_h(mesh8, lambda x, y: x - 0.5)
    problem = DarcyProblem(mesh8, ANISOTROPIC, source, HeadBoundary.NEUMANN)
    assert abs(problem.compatibility_defect) <= 1e-14
    solution = solve_darcy(problem)
    assert abs(np.sum(solution.phi * mesh8.areas)) <= 1e-12
    assert np.all(solution.v[mesh8.boundary_edges] == 0.0)
    assert np.allclose(solution.divergence(), source, atol=1e-10)


def test_neumann_mode_rejects_incompatible_source(mesh4):
    with pytest.raises(DarcySolveError, match="int g = 0"):
        solve_darcy(DarcyProblem(mesh4, np.eye(2), 1.0, "neumann"))


def test_neumann_mode_rejects_head_data(mesh4):
    with pytest.raises(DarcySolveError):
        DarcyProblem(mesh4, np.eye(2), 0.0, HeadBoundary.NEUMANN, head_boundary=lambda x, y: x)


def test_problem_validation(mesh4):
    with pytest.raises(AssemblyError):
        DarcyProblem(mesh4, -np.eye(2), 0.0)
    with pytest.raises(AssemblyError):
        DarcyProblem(mesh4, np.eye(2), np.zeros(3))
    with pytest.raises(DarcySolveError):
        DarcyProblem(mesh4, np.eye(2), np.full(mesh4.n_cells, np.nan))
    problem = DarcyProblem(mesh4, ANISOTROPIC, 0.0)
    eig = np.linalg.eigvalsh(ANISOTROPIC)
    assert problem.kappa_minus == pytest.approx(eig[0])
    assert problem.kappa_plus == pytest.approx(eig[1])


def test_solution_is_read_only(mesh4):
    solution = solve_darcy(sinsin_case().problem(mesh4))
    with pytest.raises(ValueError):
        solution.v[0] = 1.0


def test_prescribed_velocity():
    mesh = build_structured_mesh(2)
    v = project_Pi_h(mesh, lambda x, y: (np.full_like(x, 3.0), np.full_like(y, 4.0)))
    solution = DarcySolution.from_velocity(mesh, v)
    assert solution.vmax == pytest.approx(5.0)
    assert np.allclose(solution.divergence(), 0.0, atol=1e-12)
    assert DarcySolution.at_rest(mesh).vmax == 0.0


def test_head_postprocessing_is_constant_for_constant_head(mesh4):
    solution = DarcySolution.from_velocity(mesh4, np.zeros(mesh4.n_edges), np.full(mesh4.n_cells, 2.0))
    assert np.allclose(solution.head_p1(), 2.0)


def test_study_needs_three_nested_levels():
    with pytest.raises(ValueError, match="at least 3"):
        darcy_convergence_study(sinsin_case(), [4, 8])
    with pytest.raises(ValueError, match="nested"):
        darcy_convergence_study(sinsin_case(), [4, 6, 12])


def test_sinsin_rates_on_coarse_meshes():
    table = darcy_convergence_study(sinsin_case(), [4, 8, 16])
    assert table.last_order("v_exact") > 0.85
    assert table.last_order("phi_exact") > 0.85
    assert table.last_order("phi_interp") > 1.5
    assert all(row.extras["vmax"] > 0 for row in table.rows)


@pytest.mark.slow
@pytest.mark.parametrize("kappa", [np.eye(2), ANISOTROPIC])
def test_sinsin_rates(kappa):
    table = darcy_convergence_study(sinsin_case(kappa), [8, 16, 32, 64])
    for order in table.orders("v_exact") + table.orders("phi_exact"):
        assert 0.9 < order < 1.2
    for order in table.orders("phi_interp"):
        assert order > 1.8
    assert all(order > 0.9 for order in table.orders("v_interp"))
    assert not [flag for flag in table.flags if "Non-monotone" in flag]


def test_linear_study_errors_vanish():
    table = darcy_convergence_study(linear_case(), [2, 4, 8])
    assert table.column("v_interp").max() <= 1e-10
    assert table.column("phi_interp").max() <= 1e-10
