import math

import numpy as np
import pytest

from aquitrans.analysis.convergence import ConvergenceTable, locate_points, observed_orders, restriction_matrix
from aquitrans.analysis.norms import (
    check_majorization,
    discrete_h1_norm,
    error_norms,
    majorization_spread,
    norm_report,
    space_time_l2_error,
    time_interpolant,
)
from aquitrans.discretization.assembly import project_P_h, project_Pi_h
from aquitrans.discretization.mesh import build_structured_mesh
from aquitrans.errors import AssemblyError
from aquitrans.physics.darcy import DarcySolution
from aquitrans.physics.dispersion import DispersionParams
from aquitrans.physics.isotherms import Isotherm
from aquitrans.physics.transport import TransportParams, TransportState, run


def smooth(x, y):
    return 0.5 + 0.25 * np.cos(np.pi * x) * np.cos(np.pi * y)


def states(mesh, times, values):
    return [
        TransportState(n, t, np.full(mesh.n_cells, float(c)), np.full(mesh.n_edges, 2.0 * float(c)))
        for n, (t, c) in enumerate(zip(times, values))
    ]


@pytest.mark.parametrize("dirichlet", [False, True])
def test_h1_norm_vanishes_only_where_expected(mesh4, dirichlet):
    constant = np.full(mesh4.n_cells, 0.7)
    value = discrete_h1_norm(mesh4, constant, dirichlet)
    if dirichlet:
        assert value > 0
    else:
        assert value == 0.0


def test_h1_norm_two_cells(two_cell_square):
    assert discrete_h1_norm(two_cell_square, [1.0, 0.0]) == pytest.approx(math.sqrt(3.0))
    # cell 0 owns two unit legs, each at distance 1/2 from the circumcenter
    assert discrete_h1_norm(two_cell_square, [1.0, 0.0], dirichlet=True) == pytest.approx(math.sqrt(7.0))


def test_h1_norm_single_cell_dirichlet(unit_triangle):
    assert discrete_h1_norm(unit_triangle, [1.0]) == 0.0
    assert discrete_h1_norm(unit_triangle, [1.0], dirichlet=True) == pytest.approx(math.sqrt(10.0))


def test_h1_norm_is_homogeneous(rng, mesh8):
    c = rng.normal(size=mesh8.n_cells)
    base = discrete_h1_norm(mesh8, c)
    for alpha in (-3.0, 0.5, 2.0):
        assert discrete_h1_norm(mesh8, alpha * c) == pytest.approx(abs(alpha) * base)


def test_norm_report_zero_state(mesh4):
    report = norm_report(mesh4, np.zeros(mesh4.n_cells), np.zeros(mesh4.n_edges))
    assert report.ratio is None
    assert report.h1 == report.c_l2 == report.vc_l2 == 0.0


def test_majorization_of_zero_trajectory_is_undefined(mesh4):
    assert check_majorization(mesh4, states(mesh4, [0.0, 1.0], [0.0, 0.0])) is None


def test_majorization_spread():
    assert majorization_spread([1.0, None, 1.2]) == pytest.approx(0.2)
    with pytest.raises(ValueError):
        majorization_spread([1.0, None])


def test_time_interpolant(mesh4):
    trajectory = states(mesh4, [0.0, 0.5, 1.0], [0.0, 1.0, 0.5])
    c, vc = time_interpolant(trajectory, 0.25)
    assert np.allclose(c, 0.5)
    assert np.allclose(vc, 1.0)
    c, _ = time_interpolant(trajectory, 0.75)
    assert np.allclose(c, 0.75)
    c, _ = time_interpolant(trajectory, 0.5)
    assert np.array_equal(c, trajectory[1].c)
    for t in (-0.1, 1.1):
        with pytest.raises(ValueError):
            time_interpolant(trajectory, t)


def test_observed_orders():
    assert observed_orders([1.0, 0.5, 0.25], [1.0, 0.25, 0.0625]) == pytest.approx([2.0, 2.0])
    orders = observed_orders([1.0, 0.5], [0.0, 0.1])
    assert math.isnan(orders[0])
    with pytest.raises(ValueError):
        observed_orders([1.0, 0.5], [1.0])


def test_convergence_table():
    table = ConvergenceTable(["L2", "H1"], extras=["vmax"])
    table.add(0.5, {"L2": 0.4, "H1": 1.0}, tau=0.1, vmax=1.0)
    table.add(0.25, {"L2": 0.1, "H1": 1.2}, tau=0.05, vmax=1.0)
    assert table.last_order("L2") == pytest.approx(2.0)
    assert len(table.flags) == 1 and "H1" in table.flags[0]
    assert table.header == ["h", "tau", "L2", "L2_order", "H1", "H1_order", "vmax"]
    assert table.as_records()[0] == [0.5, 0.1, 0.4, None, 1.0, None, 1.0]
    assert np.array_equal(table.column("L2"), [0.4, 0.1])
    with pytest.raises(ValueError, match="strictly decrease"):
        table.add(0.25, {"L2": 0.05, "H1": 0.5})
    with pytest.raises(ValueError, match="Missing"):
        table.add(0.1, {"L2": 0.05})


def test_locate_points(mesh4):
    cells = locate_points(mesh4, np.vstack([mesh4.centroids, [[2.0, 2.0]]]))
    assert np.array_equal(cells[:-1], np.arange(mesh4.n_cells))
    assert cells[-1] == -1


def test_restriction_preserves_cell_averages(mesh4, mesh8):
    restriction = restriction_matrix(mesh8, mesh4)
    assert restriction.shape == (mesh4.n_cells, mesh8.n_cells)
    assert np.allclose(restriction.sum(axis=1), 1.0)
    affine = lambda x, y: 1.0 + x - 2.0 * y  # noqa: E731
    assert np.allclose(restriction @ project_P_h(mesh8, affine), project_P_h(mesh4, affine))


def test_restriction_rejects_non_nested_meshes(mesh4):
    with pytest.raises(AssemblyError):
        restriction_matrix(build_structured_mesh(3), mesh4)


def test_error_norms(mesh4, mesh8):
    projected = project_P_h(mesh4, smooth)
    closed_form = error_norms(mesh4, projected, smooth)
    assert closed_form["L2"] > 0
    assert closed_form["H1"] == pytest.approx(0.0, abs=1e-14)

    same_mesh = error_norms(mesh4, projected, projected)
    assert same_mesh == {"L2": 0.0, "H1": 0.0}

    fine = project_P_h(mesh8, smooth)
    restricted = error_norms(mesh4, projected, fine, restriction=restriction_matrix(mesh8, mesh4))
    assert restricted["L2"] <= 1e-3
    with pytest.raises(ValueError):
        error_norms(mesh4, projected, fine)


def test_space_time_error(mesh4):
    trajectory = states(mesh4, [0.0, 0.5, 1.0], [0.0, 1.0, 0.5])
    assert space_time_l2_error(mesh4, trajectory, trajectory) == 0.0
    shifted = states(mesh4, [0.0, 0.5, 1.0], [1.0, 2.0, 1.5])
    # unit square, unit offset at both later steps
    assert space_time_l2_error(mesh4, trajectory, shifted) == pytest.approx(1.0)


@pytest.mark.slow
def test_majorization_ratio_is_mesh_independent():
    ratios = []
    for n in (8, 16, 32):
        mesh = build_structured_mesh(n)
        params = TransportParams(
            R=1.0,
            psi=np.full(mesh.n_cells, 0.5),
            dispersion=DispersionParams(0.1, 0.2, 0.05),
            isotherm=Isotherm.linear(0.5),
            p=np.zeros(mesh.n_cells),
            c0=project_P_h(mesh, smooth),
        )
        v = project_Pi_h(mesh, lambda x, y: (np.full_like(x, 0.1), np.zeros_like(y)))
        result = run(params, DarcySolution.from_velocity(mesh, v), 0.005, 0.1)
        ratios.append(check_majorization(mesh, result.trajectory))
    assert majorization_spread(ratios) <= 0.25
