"""
Scenario files: flat `key = value` lines with dotted section prefixes.

    # comments and blank lines are ignored
    mesh.n = 16
    transport.isotherm = langmuir
    transport.isotherm.k = 0.5
    time.cfl = true

Unset keys fall back to the packaged defaults.yaml. Every error names the
offending key and, when it comes from the file, its line.
"""
import logging
from dataclasses import dataclass, field, replace
from importlib import resources
from pathlib import Path
from typing import Callable, Dict, List, Optional, Tuple, Union

import numpy as np
import yaml

from aquitrans.discretization.mesh import Mesh, Rectangle, build_structured_mesh, load_mesh
from aquitrans.errors import ConfigError
from aquitrans.physics.darcy import MANUFACTURED_CASES, DarcyProblem, HeadBoundary
from aquitrans.physics.dispersion import DispersionParams
from aquitrans.physics.isotherms import Isotherm, IsothermKind
from aquitrans.physics.transport import CFLCondition, TransportBoundary, TransportParams, cfl_timestep
from aquitrans.scenario_io.profiles import PROFILE_PARAMETERS, Profile, ProfileKind

logger = logging.getLogger(__name__)

PROFILE_KEYS = ("darcy.g", "transport.psi", "transport.p", "transport.c0")
OUTPUT_FORMATS = ("csv", "vtk")


# ------------------------------------------------------------------ converters
def _to_int(text: str) -> int:
    return int(text)


def _to_float(text: str) -> float:
    value = float(text)
    if not np.isfinite(value):
        raise ValueError(f"expected a finite number, got '{text}'")
    return value


def _to_bool(text: str) -> bool:
    lowered = text.strip().lower()
    if lowered in ("true", "yes", "1"):
        return True
    if lowered in ("false", "no", "0"):
        return False
    raise ValueError(f"expected true or false, got '{text}'")


def _to_str(text: str) -> str:
    return text.strip()


def _to_kappa(text: str) -> Tuple[float, float, float]:
    parts = [_to_float(p) for p in text.split(",")]
    if len(parts) == 1:
        return (parts[0], 0.0, parts[0])
    if len(parts) == 3:
        return tuple(parts)
    raise ValueError(f"expected a scalar or 'kxx,kxy,kyy', got '{text}'")


def _to_int_list(text: str) -> Tuple[int, ...]:
    return tuple(int(p) for p in text.split(",") if p.strip())


def _to_formats(text: str) -> Tuple[str, ...]:
    formats = tuple(p.strip().lower() for p in text.split(",") if p.strip())
    unknown = [f for f in formats if f not in OUTPUT_FORMATS]
    if unknown:
        raise ValueError(f"unknown output formats {unknown}, choose from {list(OUTPUT_FORMATS)}")
    return formats


def _choice(*choices: str) -> Callable[[str], str]:
    def convert(text: str) -> str:
        value = text.strip().lower()
        if value not in choices:
            raise ValueError(f"expected one of {list(choices)}, got '{text}'")
        return value

    return convert


KEYS: Dict[str, Callable[[str], object]] = {
    "mesh.n": _to_int,
    "mesh.file": _to_str,
    "mesh.x0": _to_float,
    "mesh.y0": _to_float,
    "mesh.x1": _to_float,
    "mesh.y1": _to_float,
    "darcy.boundary": _choice(*(b.value for b in HeadBoundary)),
    "darcy.kappa": _to_kappa,
    "dispersion.S_m": _to_float,
    "dispersion.alpha_L": _to_float,
    "dispersion.alpha_T": _to_float,
    "transport.R": _to_float,
    "transport.boundary": _choice(*(b.value for b in TransportBoundary)),
    "transport.isotherm": _choice(*(k.value for k in IsothermKind)),
    "transport.isotherm.k": _to_float,
    "transport.isotherm.k_prime": _to_float,
    "transport.inverse_constant": _to_float,
    "time.tau": _to_float,
    "time.cfl": _to_bool,
    "time.cfl.epsilon": _to_float,
    "time.cfl.C_CFL": _to_float,
    "time.T_final": _to_float,
    "output.directory": _to_str,
    "output.cadence": _to_int,
    "output.formats": _to_formats,
    "study.levels": _to_int_list,
    "study.case": _choice(*MANUFACTURED_CASES),
}
for _prefix in PROFILE_KEYS:
    KEYS[f"{_prefix}.kind"] = _choice(*(k.value for k in ProfileKind))
    for _name in sorted({n for names in PROFILE_PARAMETERS.values() for n in names}):
        KEYS[f"{_prefix}.{_name}"] = _to_float


def load_defaults() -> Tuple[Dict[str, str], Dict[str, Dict[str, float]]]:
    """Scenario defaults and per-kind profile parameter defaults from defaults.yaml"""
    text = resources.files("aquitrans").joinpath("defaults.yaml").read_text(encoding="utf-8")
    data = yaml.safe_load(text)
    defaults = {key: str(value) for key, value in data["default"].items()}
    unknown = set(defaults) - set(KEYS)
    if unknown:
        raise ConfigError(f"defaults.yaml sets unknown keys {sorted(unknown)}")
    profiles = {kind: {k: float(v) for k, v in params.items()} for kind, params in data["profiles"].items()}
    return defaults, profiles


# --------------------------------------------------------------- config types
@dataclass(frozen=True)
class MeshSpec:
    n: Optional[int]
    file: Optional[Path]
    domain: Rectangle

    def build(self) -> Mesh:
        if self.file is not None:
            return load_mesh(self.file)
        return build_structured_mesh(self.n, self.domain)


@dataclass(frozen=True)
class DarcySpec:
    boundary: HeadBoundary
    kappa: Tuple[float, float, float]
    g: Profile

    @property
    def kappa_matrix(self) -> np.ndarray:
        kxx, kxy, kyy = self.kappa
        return np.array([[kxx, kxy], [kxy, kyy]])

    def problem(self, mesh: Mesh) -> DarcyProblem:
        return DarcyProblem(mesh, self.kappa_matrix, self.g.sample(mesh), self.boundary)


@dataclass(frozen=True)
class TransportSpec:
    R: float
    boundary: TransportBoundary
    psi: Profile
    p: Profile
    c0: Profile
    isotherm: Isotherm
    dispersion: DispersionParams
    inverse_constant: float

    def params(self, mesh: Mesh, g=None) -> TransportParams:
        return TransportParams(
            R=self.R,
            psi=self.psi.sample(mesh),
            dispersion=self.dispersion,
            isotherm=self.isotherm,
            p=self.p.sample(mesh),
            c0=self.c0.sample(mesh),
            chi=self.boundary,
            g=g,
        )


@dataclass(frozen=True)
class TimeSpec:
    tau: Optional[float]
    cfl: Optional[CFLCondition]
    T_final: float

    def timestep(self, h: float) -> float:
        if self.cfl is not None:
            return cfl_timestep(h, 2, self.cfl.epsilon, self.cfl.C_CFL)
        return self.tau


@dataclass(frozen=True)
class OutputSpec:
    directory: Path
    cadence: int
    formats: Tuple[str, ...]


@dataclass(frozen=True)
class StudySpec:
    levels: Tuple[int, ...]
    case: str


@dataclass(frozen=True)
class ScenarioConfig:
    mesh: MeshSpec
    darcy: DarcySpec
    transport: TransportSpec
    time: TimeSpec
    output: OutputSpec
    study: StudySpec
    source: Optional[Path] = field(default=None, compare=False)

    def with_output_directory(self, directory: Union[str, Path]) -> "ScenarioConfig":
        return replace(self, output=replace(self.output, directory=Path(directory)))

    def echo_lines(self) -> List[str]:
        """Resolved configuration as scenario-file lines"""
        lines = []
        if self.mesh.file is not None:
            lines.append(f"mesh.file = {self.mesh.file}")
        else:
            lines.append(f"mesh.n = {self.mesh.n}")
        d = self.mesh.domain
        lines += [f"mesh.x0 = {d.x0!r}", f"mesh.y0 = {d.y0!r}", f"mesh.x1 = {d.x1!r}", f"mesh.y1 = {d.y1!r}"]

        lines.append(f"darcy.boundary = {self.darcy.boundary.value}")
        lines.append("darcy.kappa = " + ",".join(repr(k) for k in self.darcy.kappa))
        lines += self.darcy.g.echo("darcy.g")

        t = self.transport
        lines += [
            f"dispersion.S_m = {t.dispersion.S_m!r}",
            f"dispersion.alpha_L = {t.dispersion.alpha_L!r}",
            f"dispersion.alpha_T = {t.dispersion.alpha_T!r}",
            f"transport.R = {t.R!r}",
            f"transport.boundary = {t.boundary.value}",
        ]
        lines += t.psi.echo("transport.psi") + t.p.echo("transport.p") + t.c0.echo("transport.c0")
        lines += [
            f"transport.isotherm = {t.isotherm.kind.value}",
            f"transport.isotherm.k = {t.isotherm.k!r}",
            f"transport.isotherm.k_prime = {t.isotherm.k_prime!r}",
            f"transport.inverse_constant = {t.inverse_constant!r}",
        ]

        if self.time.cfl is not None:
            lines += [
                "time.cfl = true",
                f"time.cfl.epsilon = {self.time.cfl.epsilon!r}",
                f"time.cfl.C_CFL = {self.time.cfl.C_CFL!r}",
            ]
        else:
            lines.append(f"time.tau = {self.time.tau!r}")
        lines.append(f"time.T_final = {self.time.T_final!r}")

        lines += [
            f"output.directory = {self.output.directory}",
            f"output.cadence = {self.output.cadence}",
            "output.formats = " + ",".join(self.output.formats),
            "study.levels = " + ",".join(str(n) for n in self.study.levels),
            f"study.case = {self.study.case}",
        ]
        return lines


# --------------------------------------------------------------------- parser
class _Entries:
    """Parsed values with the line each came from (None for defaults)"""

    def __init__(self):
        self.values: Dict[str, object] = {}
        self.lines: Dict[str, Optional[int]] = {}

    def set(self, key: str, raw: str, line: Optional[int]) -> None:
        if key not in KEYS:
            raise ConfigError("Unknown key", key=key, line=line)
        if line is not None and self.lines.get(key) is not None:
            raise ConfigError(f"Duplicate key, first set on line {self.lines[key]}", key=key, line=line)
        try:
            self.values[key] = KEYS[key](raw)
        except ValueError as e:
            raise ConfigError(f"Invalid value '{raw}': {e}", key=key, line=line) from e
        self.lines[key] = line

    def given(self, key: str) -> bool:
        return self.lines.get(key) is not None

    def line(self, key: str) -> Optional[int]:
        return self.lines.get(key)

    def __getitem__(self, key: str):
        return self.values[key]

    def get(self, key: str, default=None):
        return self.values.get(key, default)


def _read_lines(text: str, entries: _Entries) -> None:
    for number, raw in enumerate(text.splitlines(), start=1):
        content = raw.split("#", 1)[0].strip()
        if not content:
            continue
        if "=" not in content:
            raise ConfigError(f"Expected 'key = value', got '{content}'", line=number)
        key, value = (part.strip() for part in content.split("=", 1))
        if not key:
            raise ConfigError("Missing key before '='", line=number)
        entries.set(key, value, number)


def _constraint(entries: _Entries, key: str, build: Callable):
    """Run a domain constructor, reporting ValueError against key"""
    try:
        return build()
    except ConfigError:
        raise
    except ValueError as e:
        raise ConfigError(str(e), key=key, line=entries.line(key)) from e


def _profile(entries: _Entries, prefix: str, profile_defaults: Dict[str, Dict[str, float]]) -> Profile:
    kind = ProfileKind(entries[f"{prefix}.kind"])
    allowed = PROFILE_PARAMETERS[kind]
    for key in entries.values:
        if key.startswith(prefix + ".") and key != f"{prefix}.kind":
            name = key[len(prefix) + 1 :]
            if name not in allowed and entries.given(key):
                raise ConfigError(
                    f"Parameter '{name}' does not apply to profile kind '{kind.value}'", key=key, line=entries.line(key)
                )
    # scenario-level defaults only hold for the default kind
    kind_overridden = entries.given(f"{prefix}.kind")
    params = []
    for name in allowed:
        key = f"{prefix}.{name}"
        if entries.given(key) or (key in entries.values and not kind_overridden):
            value = entries[key]
        else:
            value = profile_defaults[kind.value][name]
        params.append((name, value))
    return _constraint(entries, f"{prefix}.kind", lambda: Profile(kind, tuple(params)))


def _profile_key(entries: _Entries, prefix: str, profile: Profile) -> str:
    """The key a range error on this profile is reported against: the first one the scenario set"""
    keys = [f"{prefix}.{name}" for name in PROFILE_PARAMETERS[profile.kind]] + [f"{prefix}.kind"]
    return next((key for key in keys if entries.given(key)), f"{prefix}.kind")


def _check_range(
    entries: _Entries,
    prefix: str,
    profile: Profile,
    domain: Rectangle,
    admissible: Callable[[float, float], bool],
    requirement: str,
) -> None:
    lo, hi = profile.value_range(domain)
    if not admissible(lo, hi):
        key = _profile_key(entries, prefix, profile)
        raise ConfigError(
            f"{requirement}, but profile '{profile.kind.value}' ranges over [{lo!r}, {hi!r}] on the domain",
            key=key,
            line=entries.line(key),
        )


def _profile_domain(mesh: MeshSpec) -> Rectangle:
    """The structured domain, or the bounding box of a mesh file"""
    if mesh.file is None:
        return mesh.domain
    vertices = mesh.build().vertices
    (x0, y0), (x1, y1) = vertices.min(axis=0), vertices.max(axis=0)
    return Rectangle(float(x0), float(y0), float(x1), float(y1))


def _exactly_one(entries: _Entries, first: str, second: str, has_second: bool) -> None:
    has_first = entries.given(first)
    if has_first and has_second:
        raise ConfigError(
            f"Keys '{first}' and '{second}' are mutually exclusive", key=second, line=entries.line(second)
        )
    if not (has_first or has_second):
        raise ConfigError(f"Exactly one of '{first}' or '{second}' must be set", key=first)


def parse_config_text(
    text: str, base_dir: Optional[Path] = None, source: Optional[Path] = None
) -> ScenarioConfig:
    defaults, profile_defaults = load_defaults()
    entries = _Entries()
    for key, raw in defaults.items():
        entries.set(key, raw, None)
    _read_lines(text, entries)
    base_dir = Path.cwd() if base_dir is None else Path(base_dir)

    # mesh
    _exactly_one(entries, "mesh.n", "mesh.file", entries.given("mesh.file"))
    mesh_file = None
    if entries.given("mesh.file"):
        mesh_file = Path(entries["mesh.file"])
        if not mesh_file.is_absolute():
            mesh_file = (base_dir / mesh_file).resolve()
        if not mesh_file.is_file():
            raise ConfigError(f"Mesh file {mesh_file} does not exist", key="mesh.file", line=entries.line("mesh.file"))
    n = entries.get("mesh.n") if entries.given("mesh.n") else None
    if n is not None and n < 1:
        raise ConfigError(f"Structured mesh needs n >= 1, got {n}", key="mesh.n", line=entries.line("mesh.n"))
    domain = _constraint(
        entries,
        "mesh.x1",
        lambda: Rectangle(entries["mesh.x0"], entries["mesh.y0"], entries["mesh.x1"], entries["mesh.y1"]),
    )
    mesh = MeshSpec(n, mesh_file, domain)

    # darcy
    kxx, kxy, kyy = entries["darcy.kappa"]
    if not (kxx > 0 and kxx * kyy - kxy**2 > 0):
        raise ConfigError(
            f"Permeability must be symmetric positive definite, got {entries['darcy.kappa']}",
            key="darcy.kappa",
            line=entries.line("darcy.kappa"),
        )
    darcy = DarcySpec(
        HeadBoundary(entries["darcy.boundary"]),
        entries["darcy.kappa"],
        _profile(entries, "darcy.g", profile_defaults),
    )

    # transport
    dispersion = _constraint(
        entries,
        "dispersion.alpha_T",
        lambda: DispersionParams(
            entries["dispersion.S_m"], entries["dispersion.alpha_L"], entries["dispersion.alpha_T"]
        ),
    )
    isotherm = _constraint(
        entries,
        "transport.isotherm",
        lambda: Isotherm(
            IsothermKind(entries["transport.isotherm"]),
            entries["transport.isotherm.k"],
            entries["transport.isotherm.k_prime"],
        ),
    )
    for key in ("transport.R", "transport.inverse_constant"):
        if not entries[key] > 0:
            raise ConfigError(f"Must be positive, got {entries[key]}", key=key, line=entries.line(key))
    psi = _profile(entries, "transport.psi", profile_defaults)
    c0 = _profile(entries, "transport.c0", profile_defaults)
    if psi.kind is ProfileKind.CONSTANT and c0.kind is ProfileKind.CONSTANT:
        profile_domain = mesh.domain
    else:
        profile_domain = _profile_domain(mesh)
    _check_range(entries, "transport.psi", psi, profile_domain, lambda lo, hi: lo > 0, "Porosity must be positive")
    _check_range(
        entries,
        "transport.c0",
        c0,
        profile_domain,
        lambda lo, hi: lo >= 0 and hi <= 1,
        "Initial concentration must lie in [0, 1]",
    )
    transport = TransportSpec(
        R=entries["transport.R"],
        boundary=TransportBoundary(entries["transport.boundary"]),
        psi=psi,
        p=_profile(entries, "transport.p", profile_defaults),
        c0=c0,
        isotherm=isotherm,
        dispersion=dispersion,
        inverse_constant=entries["transport.inverse_constant"],
    )

    # time
    _exactly_one(entries, "time.tau", "time.cfl", entries.given("time.cfl") and entries["time.cfl"])
    cfl = None
    if entries.given("time.cfl") and entries["time.cfl"]:
        cfl = CFLCondition(entries["time.cfl.epsilon"], entries["time.cfl.C_CFL"])
        if not 0 < cfl.epsilon < 1:
            raise ConfigError(
                f"Must satisfy 0 < epsilon < 1, got {cfl.epsilon}",
                key="time.cfl.epsilon",
                line=entries.line("time.cfl.epsilon"),
            )
        if not cfl.C_CFL > 0:
            raise ConfigError(
                f"Must be positive, got {cfl.C_CFL}", key="time.cfl.C_CFL", line=entries.line("time.cfl.C_CFL")
            )
    else:
        for key in ("time.cfl.epsilon", "time.cfl.C_CFL"):
            if entries.given(key):
                raise ConfigError("Only applies with time.cfl = true", key=key, line=entries.line(key))
    tau = entries.get("time.tau") if entries.given("time.tau") else None
    if tau is not None and not tau > 0:
        raise ConfigError(f"Must be positive, got {tau}", key="time.tau", line=entries.line("time.tau"))
    if not entries["time.T_final"] > 0:
        raise ConfigError("Must be positive", key="time.T_final", line=entries.line("time.T_final"))
    time = TimeSpec(tau, cfl, entries["time.T_final"])

    # output and study
    if entries["output.cadence"] < 1:
        raise ConfigError(
            f"Must be at least 1, got {entries['output.cadence']}",
            key="output.cadence",
            line=entries.line("output.cadence"),
        )
    output = OutputSpec(Path(entries["output.directory"]), entries["output.cadence"], entries["output.formats"])
    study = StudySpec(entries["study.levels"], entries["study.case"])

    return ScenarioConfig(mesh, darcy, transport, time, output, study, source=source)


def parse_config(path: Union[str, Path]) -> ScenarioConfig:
    path = Path(path)
    if not path.is_file():
        raise ConfigError(f"Scenario file {path} does not exist")
    config = parse_config_text(path.read_text(encoding="utf-8"), base_dir=path.parent, source=path)
    logger.info(f"Parsed scenario {path}")
    return config
