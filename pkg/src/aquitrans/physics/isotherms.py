"""
Reaction isotherms r(c): linear k c, Freundlich k c^k', Langmuir k c / (1 + k' c).

Concentrations are clamped to [0, inf) before evaluation since the scheme
does not preserve positivity and Freundlich / Langmuir are not defined
(or not concave) for c < 0.
"""
import logging
from dataclasses import dataclass
from enum import Enum

import numpy as np

logger = logging.getLogger(__name__)


class IsothermKind(Enum):
    LINEAR = "linear"
    FREUNDLICH = "freundlich"
    LANGMUIR = "langmuir"


@dataclass(frozen=True)
class Isotherm:
    kind: IsothermKind
    k: float
    k_prime: float = 0.0

    def __post_init__(self):
        object.__setattr__(self, "kind", IsothermKind(self.kind))
        if not (np.isfinite(self.k) and np.isfinite(self.k_prime)):
            raise ValueError("Isotherm parameters must be finite")
        if self.k < 0 or self.k_prime < 0:
            raise ValueError(f"Isotherm parameters must be nonnegative, got k={self.k}, k'={self.k_prime}")
        if self.kind is IsothermKind.FREUNDLICH and self.k_prime == 0:
            raise ValueError("Freundlich exponent k' must be positive")
        if self.unbounded_derivative:
            logger.warning(
                f"Freundlich isotherm with k'={self.k_prime} < 1 has an unbounded derivative at c=0; "
                "the bounded-derivative assumption of the stability estimates does not hold"
            )

    @property
    def unbounded_derivative(self) -> bool:
        return self.kind is IsothermKind.FREUNDLICH and self.k_prime < 1.0

    @classmethod
    def linear(cls, k: float) -> "Isotherm":
        return cls(IsothermKind.LINEAR, k)

    @classmethod
    def freundlich(cls, k: float, k_prime: float) -> "Isotherm":
        return cls(IsothermKind.FREUNDLICH, k, k_prime)

    @classmethod
    def langmuir(cls, k: float, k_prime: float) -> "Isotherm":
        return cls(IsothermKind.LANGMUIR, k, k_prime)


def isotherm_eval(isotherm: Isotherm, c) -> np.ndarray:
    c = np.maximum(np.asarray(c, dtype=float), 0.0)
    if isotherm.kind is IsothermKind.LINEAR:
        return isotherm.k * c
    if isotherm.kind is IsothermKind.FREUNDLICH:
        return isotherm.k * np.power(c, isotherm.k_prime)
    return isotherm.k * c / (1.0 + isotherm.k_prime * c)


def isotherm_lipschitz(isotherm: Isotherm, c_max: float) -> float:
    """sup |r'| on [0, c_max]; inf for Freundlich with k' < 1"""
    if c_max < 0:
        raise ValueError(f"c_max must be nonnegative, got {c_max}")
    k, kp = isotherm.k, isotherm.k_prime
    if isotherm.kind is IsothermKind.LINEAR:
        return float(k)
    if isotherm.kind is IsothermKind.LANGMUIR:
        # r' = k / (1 + k' c)^2 is largest at c = 0
        return float(k)
    if kp < 1.0:
        return float("inf") if k > 0 else 0.0
    if kp == 1.0:
        return float(k)
    return float(k * kp * c_max ** (kp - 1.0))
