import numpy as np
import pytest

from aquitrans.discretization.mesh import Mesh, build_structured_mesh
from aquitrans.physics.dispersion import DispersionParams


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


@pytest.fixture
def unit_triangle():
    return Mesh(np.array([[0.0, 0.0], [1.0, 0.0], [0.0, 1.0]]), np.array([[0, 1, 2]]))


@pytest.fixture
def two_cell_square():
    return build_structured_mesh(1)


@pytest.fixture
def mesh4():
    return build_structured_mesh(4)


@pytest.fixture
def mesh8():
    return build_structured_mesh(8)


@pytest.fixture
def reference_params():
    return DispersionParams(S_m=1.0, alpha_L=2.0, alpha_T=1.0)


@pytest.fixture
def write_scenario(tmp_path):
    """Write scenario text to a file and return its path"""

    def write(text: str, name: str = "scenario.cfg"):
        path = tmp_path / name
        path.write_text(text, encoding="utf-8")
        return path

    return write
