from pathlib import Path

import numpy as np
import pytest

from aquitrans.discretization.mesh import Rectangle, build_structured_mesh, write_mesh
from aquitrans.errors import ConfigError
from aquitrans.physics.darcy import HeadBoundary
from aquitrans.physics.isotherms import IsothermKind
from aquitrans.physics.transport import CFLCondition, TransportBoundary
from aquitrans.scenario_io.config import KEYS, load_defaults, parse_config, parse_config_text
from aquitrans.scenario_io.profiles import Profile, ProfileKind

MINIMAL = "mesh.n = 4\ntime.tau = 0.01\n"


def test_minimal_scenario_takes_defaults():
    config = parse_config_text(MINIMAL)
    assert config.mesh.n == 4
    assert config.mesh.file is None
    assert config.darcy.boundary is HeadBoundary.DIRICHLET
    assert np.array_equal(config.darcy.kappa_matrix, np.eye(2))
    assert config.darcy.g == Profile.constant(0.0)
    assert config.transport.boundary is TransportBoundary.NEUMANN
    assert config.transport.psi == Profile.constant(0.3)
    assert config.transport.isotherm.kind is IsothermKind.LINEAR
    assert config.time.tau == 0.01
    assert config.time.cfl is None
    assert config.output.formats == ("csv",)
    assert config.study.levels == (8, 16, 32, 64)

    echo = config.echo_lines()
    assert "dispersion.S_m = 0.01" in echo
    assert "transport.psi.value = 0.3" in echo
    assert "time.tau = 0.01" in echo


def test_defaults_file_only_sets_known_keys():
    defaults, profiles = load_defaults()
    assert set(defaults) <= set(KEYS)
    assert set(profiles) == {kind.value for kind in ProfileKind}


def test_echo_round_trip():
    text = (
        "mesh.n = 6\n"
        "mesh.x1 = 2.0\n"
        "darcy.kappa = 2.0,0.1,1.0\n"
        "darcy.g.kind = sinsin\n"
        "dispersion.alpha_L = 0.3\n"
        "transport.c0.kind = gaussian\n"
        "transport.c0.width = 0.2\n"
        "transport.isotherm = langmuir\n"
        "transport.isotherm.k = 0.5\n"
        "transport.isotherm.k_prime = 2.0\n"
        "time.cfl = true\n"
        "time.cfl.epsilon = 0.2\n"
        "output.formats = csv,vtk\n"
    )
    config = parse_config_text(text)
    again = parse_config_text("\n".join(config.echo_lines()))
    assert again == config
    assert again.echo_lines() == config.echo_lines()
    assert config.time.cfl == CFLCondition(0.2, 1.0)


def test_echo_keeps_full_precision():
    config = parse_config_text("mesh.n = 2\ntime.tau = 0.1234567890123456789\ndispersion.S_m = 1e-7\n")
    again = parse_config_text("\n".join(config.echo_lines()))
    assert again.time.tau == config.time.tau
    assert again.transport.dispersion.S_m == 1e-7


def test_comments_and_blank_lines():
    config = parse_config_text("# scenario\n\nmesh.n = 3   # three\n  time.tau=0.5\n")
    assert config.mesh.n == 3
    assert config.time.tau == 0.5


def test_tau_and_cfl_are_mutually_exclusive():
    with pytest.raises(ConfigError) as info:
        parse_config_text("mesh.n = 4\ntime.tau = 0.01\ntime.cfl = true\n")
    assert "time.tau" in str(info.value) and "time.cfl" in str(info.value)
    assert info.value.line == 3


def test_time_step_is_required():
    with pytest.raises(ConfigError, match="Exactly one"):
        parse_config_text("mesh.n = 4\n")
    with pytest.raises(ConfigError, match="Exactly one"):
        parse_config_text("mesh.n = 4\ntime.cfl = false\n")


def test_mesh_source_is_required():
    with pytest.raises(ConfigError, match="mesh.n"):
        parse_config_text("time.tau = 0.1\n")


def test_dispersivity_ordering_is_rejected():
    with pytest.raises(ConfigError) as info:
        parse_config_text(MINIMAL + "dispersion.alpha_T = 0.2\n")
    assert info.value.key == "dispersion.alpha_T"
    assert info.value.line == 3
    assert "alpha_L > alpha_T" in str(info.value)


def test_unknown_key_reports_line():
    with pytest.raises(ConfigError) as info:
        parse_config_text("mesh.n = 4\n\ntransport.retardation = 2\ntime.tau = 0.1\n")
    assert info.value.key == "transport.retardation"
    assert info.value.line == 3


@pytest.mark.parametrize(
    "line, key",
    [
        ("mesh.n = four", "mesh.n"),
        ("mesh.n = 0", "mesh.n"),
        ("time.T_final = -1", "time.T_final"),
        ("transport.R = 0", "transport.R"),
        ("darcy.kappa = 1,2,1", "darcy.kappa"),
        ("darcy.kappa = 1,2", "darcy.kappa"),
        ("transport.isotherm = bet", "transport.isotherm"),
        ("output.formats = csv,xml", "output.formats"),
        ("output.cadence = 0", "output.cadence"),
        ("time.cfl.epsilon = 0.5", "time.cfl.epsilon"),
        ("dispersion.S_m = nan", "dispersion.S_m"),
    ],
)
def test_invalid_values_name_their_key(line, key):
    text = MINIMAL.replace("mesh.n = 4\n", "") if key == "mesh.n" else MINIMAL
    with pytest.raises(ConfigError) as info:
        parse_config_text(text + line + "\n")
    assert info.value.key == key


def test_duplicate_key():
    with pytest.raises(ConfigError, match="Duplicate"):
        parse_config_text(MINIMAL + "mesh.n = 5\n")


def test_line_without_equals():
    with pytest.raises(ConfigError) as info:
        parse_config_text("mesh.n 4\n")
    assert info.value.line == 1


def test_profile_parameters_follow_kind():
    config = parse_config_text(MINIMAL + "transport.c0.kind = box\ntransport.c0.value = 0.4\n")
    assert config.transport.c0.kind is ProfileKind.BOX
    assert config.transport.c0.params == {"value": 0.4, "x0": 0.25, "y0": 0.25, "x1": 0.75, "y1": 0.75}

    config = parse_config_text(MINIMAL + "transport.c0.kind = sinsin\n")
    assert config.transport.c0.params == {"amplitude": 1.0}

    with pytest.raises(ConfigError) as info:
        parse_config_text(MINIMAL + "transport.c0.kind = sinsin\ntransport.c0.width = 0.1\n")
    assert info.value.key == "transport.c0.width"


@pytest.mark.parametrize(
    "extra, key, line",
    [
        ("transport.c0.value = 1.5\n", "transport.c0.value", 3),
        ("transport.psi.value = 0.0\n", "transport.psi.value", 3),
        ("transport.psi.kind = box\n", "transport.psi.kind", 3),
        ("transport.psi.kind = sinsin\n", "transport.psi.kind", 3),
        ("transport.c0.kind = gaussian\ntransport.c0.amplitude = 2.0\n", "transport.c0.amplitude", 4),
        ("mesh.x0 = -1.0\ntransport.c0.kind = sinsin\n", "transport.c0.kind", 4),
    ],
)
def test_porosity_and_initial_concentration_ranges(extra, key, line):
    with pytest.raises(ConfigError) as info:
        parse_config_text(MINIMAL + extra)
    assert info.value.key == key
    assert info.value.line == line


@pytest.mark.parametrize(
    "extra",
    [
        "transport.c0.kind = gaussian\n",
        "transport.c0.kind = sinsin\n",
        "transport.c0.kind = box\ntransport.c0.value = 1.0\n",
        "transport.psi.kind = box\ntransport.psi.x0 = 0\ntransport.psi.y0 = 0\ntransport.psi.x1 = 1\ntransport.psi.y1 = 1\n",
        "transport.psi.kind = gaussian\ntransport.psi.width = 0.5\n",
    ],
)
def test_admissible_profiles_parse_and_sample(extra):
    config = parse_config_text(MINIMAL + extra)
    params = config.transport.params(build_structured_mesh(4))
    assert params.psi.min() > 0
    assert 0 <= params.c0.min() and params.c0.max() <= 1


def test_profile_value_range():
    unit = Rectangle()
    lo, hi = Profile(ProfileKind.SINSIN, (("amplitude", 2.0),)).value_range(unit)
    assert lo == pytest.approx(0.0, abs=1e-15) and hi == pytest.approx(2.0)
    lo, hi = Profile(ProfileKind.SINSIN, (("amplitude", 1.0),)).value_range(Rectangle(-1.0, 0.0, 1.0, 1.0))
    assert (lo, hi) == pytest.approx((-1.0, 1.0))

    gaussian = Profile(ProfileKind.GAUSSIAN, (("amplitude", 1.0), ("center_x", 2.0), ("center_y", 0.5), ("width", 1.0)))
    lo, hi = gaussian.value_range(unit)
    assert hi == pytest.approx(np.exp(-0.5))
    assert lo == pytest.approx(np.exp(-(4.0 + 0.25) / 2.0))

    box = Profile(ProfileKind.BOX, (("value", 0.7), ("x0", 0.2), ("y0", 0.2), ("x1", 0.4), ("y1", 0.4)))
    assert box.value_range(unit) == (0.0, 0.7)
    assert box.value_range(Rectangle(0.25, 0.25, 0.35, 0.35)) == (0.7, 0.7)
    assert box.value_range(Rectangle(2.0, 2.0, 3.0, 3.0)) == (0.0, 0.0)


def test_profile_range_uses_mesh_file_extent(tmp_path, write_scenario):
    write_mesh(build_structured_mesh(2, Rectangle(1.0, 0.0, 2.0, 1.0)), tmp_path / "shifted.mesh")
    path = write_scenario("mesh.file = shifted.mesh\ntime.tau = 0.1\ntransport.c0.kind = sinsin\n")
    with pytest.raises(ConfigError) as info:
        parse_config(path)
    assert info.value.key == "transport.c0.kind"
    assert info.value.line == 3


def test_mesh_file_resolves_against_scenario_directory(tmp_path, write_scenario):
    write_mesh(build_structured_mesh(2), tmp_path / "square.mesh")
    path = write_scenario("mesh.file = square.mesh\ntime.tau = 0.1\n")
    config = parse_config(path)
    assert config.mesh.file == (tmp_path / "square.mesh").resolve()
    assert config.mesh.build().n_cells == 8
    assert config.source == path


def test_missing_mesh_file(write_scenario):
    path = write_scenario("mesh.file = nowhere.mesh\ntime.tau = 0.1\n")
    with pytest.raises(ConfigError) as info:
        parse_config(path)
    assert info.value.key == "mesh.file"


def test_mesh_n_and_file_conflict(tmp_path, write_scenario):
    write_mesh(build_structured_mesh(2), tmp_path / "square.mesh")
    path = write_scenario("mesh.n = 2\nmesh.file = square.mesh\ntime.tau = 0.1\n")
    with pytest.raises(ConfigError, match="mutually exclusive"):
        parse_config(path)


def test_missing_scenario_file(tmp_path):
    with pytest.raises(ConfigError):
        parse_config(tmp_path / "absent.cfg")


def test_output_directory_override():
    config = parse_config_text(MINIMAL).with_output_directory("elsewhere")
    assert config.output.directory == Path("elsewhere")


def test_cfl_time_step_from_mesh_size():
    config = parse_config_text("mesh.n = 8\ntime.cfl = true\ntime.cfl.epsilon = 0.3333333333333333\n")
    assert config.time.timestep(1.0 / 8.0) == pytest.approx(1.0 / 512.0, rel=1e-12)
