import numpy as np
import pytest

from aquitrans.discretization.mesh import (
    Mesh,
    Rectangle,
    build_structured_mesh,
    circumcenter,
    load_mesh,
    mesh_metrics,
    write_mesh,
)
from aquitrans.errors import MeshError


@pytest.mark.parametrize("n", [1, 2, 4, 7])
def test_structured_counts(n):
    mesh = build_structured_mesh(n)
    assert mesh.n_cells == 2 * n * n
    assert mesh.n_vertices == (n + 1) ** 2
    assert mesh.n_edges == 3 * n * n + 2 * n
    assert mesh.n_vertices - mesh.n_edges + mesh.n_cells == 1
    assert len(mesh.boundary_edges) == 4 * n


def test_structured_mesh_rejects_bad_n():
    with pytest.raises(MeshError):
        build_structured_mesh(0)
    with pytest.raises(MeshError):
        build_structured_mesh(2.5)


def test_cells_positively_oriented_and_cover_domain():
    domain = Rectangle(-1.0, 0.0, 2.0, 0.5)
    mesh = build_structured_mesh(5, domain)
    assert np.all(mesh.areas > 0)
    assert mesh.areas.sum() == pytest.approx(domain.area, rel=1e-14)


def test_clockwise_cell_is_reoriented():
    mesh = Mesh(np.array([[0.0, 0.0], [0.0, 1.0], [1.0, 0.0]]), np.array([[0, 1, 2]]))
    assert mesh.areas[0] == pytest.approx(0.5)


def test_normals_are_unit_and_outward_on_boundary(mesh4):
    assert np.allclose(np.linalg.norm(mesh4.normals, axis=1), 1.0)
    boundary = mesh4.boundary_edges
    outward = mesh4.edge_midpoints[boundary] - mesh4.centroids[mesh4.edge_cells[boundary, 0]]
    assert np.all(np.einsum("ed,ed->e", outward, mesh4.normals[boundary]) > 0)


def test_edge_orientation_from_lower_to_higher_cell(mesh4):
    interior = mesh4.interior_edges
    first, second = mesh4.edge_cells[interior, 0], mesh4.edge_cells[interior, 1]
    assert np.all(first < second)
    direction = mesh4.centroids[second] - mesh4.centroids[first]
    assert np.all(np.einsum("ed,ed->e", direction, mesh4.normals[interior]) > 0)


def test_local_edge_is_opposite_vertex(mesh4):
    for cell in range(mesh4.n_cells):
        for k in range(3):
            edge_vertices = set(mesh4.edges[mesh4.cell_edges[cell, k]].tolist())
            assert mesh4.cells[cell, k] not in edge_vertices


def test_diagonal_uses_centroid_fallback(two_cell_square):
    # right triangles share their circumcenter on the hypotenuse
    mesh = two_cell_square
    interior = mesh.interior_edges
    assert interior.size == 1
    assert mesh.distance_fallback[interior[0]]
    assert mesh.sigma[interior[0]] == pytest.approx(3.0)


def test_boundary_distance_is_circumcenter_to_edge(two_cell_square):
    mesh = two_cell_square
    boundary = mesh.boundary_edges
    # circumcenter (0.5, 0.5) lies half a unit from every side of the square
    assert np.allclose(mesh.distances[boundary], 0.5)
    assert not mesh.distance_fallback[boundary].any()


def test_quasi_uniformity():
    assert mesh_metrics(build_structured_mesh(3))["quasi_uniformity"] == pytest.approx(1.0 + np.sqrt(2.0))
    equilateral = Mesh(np.array([[0.0, 0.0], [1.0, 0.0], [0.5, np.sqrt(3.0) / 2]]), np.array([[0, 1, 2]]))
    assert equilateral.metrics()["quasi_uniformity"] == pytest.approx(np.sqrt(3.0))


def test_circumcenter_of_right_triangle():
    assert np.allclose(circumcenter([[0.0, 0.0], [2.0, 0.0], [0.0, 2.0]]), [1.0, 1.0])
    with pytest.raises(MeshError):
        circumcenter([[0.0, 0.0], [1.0, 1.0], [2.0, 2.0]])


def test_arrays_are_read_only(mesh4):
    with pytest.raises(ValueError):
        mesh4.areas[0] = 1.0


@pytest.mark.parametrize(
    "cells, message",
    [
        ([[0, 1, 5]], "outside"),
        ([[0, 1, 1]], "repeats"),
        ([[0, 1, 2], [0, 1, 2]], "Non-conforming"),
    ],
)
def test_invalid_connectivity(cells, message):
    vertices = np.array([[0.0, 0.0], [1.0, 0.0], [0.0, 1.0], [1.0, 1.0]])
    with pytest.raises(MeshError, match=message):
        Mesh(vertices, np.array(cells))


def test_edge_shared_by_three_cells_is_rejected():
    vertices = np.array([[0.0, 0.0], [1.0, 0.0], [0.5, 1.0], [0.5, -1.0], [0.5, 2.0]])
    with pytest.raises(MeshError):
        Mesh(vertices, np.array([[0, 1, 2], [0, 1, 3], [0, 1, 4]]))


def test_degenerate_cell_is_rejected():
    vertices = np.array([[0.0, 0.0], [1.0, 0.0], [2.0, 0.0]])
    with pytest.raises(MeshError):
        Mesh(vertices, np.array([[0, 1, 2]]))


def test_file_round_trip(tmp_path, mesh4):
    path = write_mesh(mesh4, tmp_path / "square.mesh")
    assert load_mesh(path) == mesh4


def test_file_errors_report_line(tmp_path):
    path = tmp_path / "bad.mesh"
    path.write_text("vertices 3 cells 1\n0 0\n1 0\n0 x\n0 1 2\n")
    with pytest.raises(MeshError) as info:
        load_mesh(path)
    assert info.value.line == 4


def test_file_with_out_of_range_cell_reports_line(tmp_path):
    path = tmp_path / "bad.mesh"
    path.write_text("vertices 3 cells 1\n\n0 0\n1 0\n0 1\n0 1 3\n")
    with pytest.raises(MeshError) as info:
        load_mesh(path)
    assert info.value.line == 6


HANGING_NODE_MESH = """vertices 5 cells 3
0 0
1 0
1 1
0 1
0.5 0.5
0 1 4
0 4 3
1 2 3
"""


def test_hanging_node_file_reports_line(tmp_path):
    path = tmp_path / "hanging.mesh"
    path.write_text(HANGING_NODE_MESH)
    with pytest.raises(MeshError, match="hanging node") as info:
        load_mesh(path)
    assert info.value.line == 9


def test_hanging_node_in_memory():
    vertices = np.array([[0.0, 0.0], [1.0, 0.0], [1.0, 1.0], [0.0, 1.0], [0.5, 0.5]])
    with pytest.raises(MeshError, match="Non-conforming") as info:
        Mesh(vertices, np.array([[0, 1, 4], [0, 4, 3], [1, 2, 3]]))
    assert info.value.line is None


def test_refined_neighbour_is_conforming():
    vertices = np.array([[0.0, 0.0], [1.0, 0.0], [1.0, 1.0], [0.0, 1.0], [0.5, 0.5]])
    mesh = Mesh(vertices, np.array([[0, 1, 4], [0, 4, 3], [1, 2, 4], [4, 2, 3]]))
    assert mesh.boundary.sum() == 4
    assert mesh.areas.sum() == pytest.approx(1.0)
