"""
Named scalar profiles for P0 scenario data (porosity, sources, initial
concentration), sampled onto a mesh by cell averaging.
"""
import math
from dataclasses import dataclass
from enum import Enum
from typing import Dict, Tuple

import numpy as np

from aquitrans.discretization.assembly import P0Field, ScalarFunction, project_P_h
from aquitrans.discretization.mesh import Mesh, Rectangle


def _sin_range(a: float, b: float) -> Tuple[float, float]:
    """Range of sin(pi t) for t in [a, b]"""
    values = [math.sin(math.pi * a), math.sin(math.pi * b)]
    for k in range(math.ceil(a - 0.5), math.floor(b - 0.5) + 1):
        values.append(math.sin(math.pi * (0.5 + k)))
    return min(values), max(values)


class ProfileKind(Enum):
    CONSTANT = "constant"
    SINSIN = "sinsin"
    GAUSSIAN = "gaussian"
    BOX = "box"


PROFILE_PARAMETERS: Dict[ProfileKind, Tuple[str, ...]] = {
    ProfileKind.CONSTANT: ("value",),
    ProfileKind.SINSIN: ("amplitude",),
    ProfileKind.GAUSSIAN: ("amplitude", "center_x", "center_y", "width"),
    ProfileKind.BOX: ("value", "x0", "y0", "x1", "y1"),
}


@dataclass(frozen=True)
class Profile:
    kind: ProfileKind
    parameters: Tuple[Tuple[str, float], ...]

    def __post_init__(self):
        object.__setattr__(self, "kind", ProfileKind(self.kind))
        given = dict(self.parameters)
        expected = PROFILE_PARAMETERS[self.kind]
        if set(given) != set(expected):
            raise ValueError(f"Profile '{self.kind.value}' takes parameters {list(expected)}, got {sorted(given)}")
        object.__setattr__(self, "parameters", tuple((name, float(given[name])) for name in expected))
        if self.kind is ProfileKind.GAUSSIAN and not self.params["width"] > 0:
            raise ValueError(f"Gaussian width must be positive, got {self.params['width']}")
        if self.kind is ProfileKind.BOX and not (
            self.params["x0"] < self.params["x1"] and self.params["y0"] < self.params["y1"]
        ):
            raise ValueError("Box profile needs x0 < x1 and y0 < y1")

    @classmethod
    def constant(cls, value: float) -> "Profile":
        return cls(ProfileKind.CONSTANT, (("value", value),))

    @property
    def params(self) -> Dict[str, float]:
        return dict(self.parameters)

    def function(self) -> ScalarFunction:
        p = self.params
        if self.kind is ProfileKind.CONSTANT:
            return lambda x, y: np.full(np.broadcast(x, y).shape, p["value"])
        if self.kind is ProfileKind.SINSIN:
            return lambda x, y: p["amplitude"] * np.sin(np.pi * x) * np.sin(np.pi * y)
        if self.kind is ProfileKind.GAUSSIAN:
            return lambda x, y: p["amplitude"] * np.exp(
                -((x - p["center_x"]) ** 2 + (y - p["center_y"]) ** 2) / (2.0 * p["width"] ** 2)
            )
        # zero outside the box
        return lambda x, y: np.where(
            (x >= p["x0"]) & (x <= p["x1"]) & (y >= p["y0"]) & (y <= p["y1"]), p["value"], 0.0
        )

    def value_range(self, domain: Rectangle) -> Tuple[float, float]:
        """
        Smallest and largest value the profile takes on the closed rectangle.
        Cell averages from sample() lie in this range.
        """
        p = self.params
        if self.kind is ProfileKind.CONSTANT:
            return p["value"], p["value"]
        if self.kind is ProfileKind.SINSIN:
            sx, sy = _sin_range(domain.x0, domain.x1), _sin_range(domain.y0, domain.y1)
            products = [p["amplitude"] * a * b for a in sx for b in sy]
            return min(products), max(products)
        if self.kind is ProfileKind.GAUSSIAN:
            near_x = max(domain.x0 - p["center_x"], 0.0, p["center_x"] - domain.x1)
            near_y = max(domain.y0 - p["center_y"], 0.0, p["center_y"] - domain.y1)
            far_x = max(abs(domain.x0 - p["center_x"]), abs(domain.x1 - p["center_x"]))
            far_y = max(abs(domain.y0 - p["center_y"]), abs(domain.y1 - p["center_y"]))
            bump = self.function()
            ends = [float(bump(p["center_x"] + dx, p["center_y"] + dy)) for dx, dy in ((near_x, near_y), (far_x, far_y))]
            return min(ends), max(ends)
        covers = p["x0"] <= domain.x0 and p["x1"] >= domain.x1 and p["y0"] <= domain.y0 and p["y1"] >= domain.y1
        if covers:
            return p["value"], p["value"]
        disjoint = p["x1"] < domain.x0 or p["x0"] > domain.x1 or p["y1"] < domain.y0 or p["y0"] > domain.y1
        if disjoint:
            return 0.0, 0.0
        return min(0.0, p["value"]), max(0.0, p["value"])

    def sample(self, mesh: Mesh) -> P0Field:
        if self.kind is ProfileKind.CONSTANT:
            return np.full(mesh.n_cells, self.params["value"])
        return project_P_h(mesh, self.function())

    def echo(self, prefix: str) -> list:
        return [f"{prefix}.kind = {self.kind.value}"] + [f"{prefix}.{k} = {v!r}" for k, v in self.parameters]
