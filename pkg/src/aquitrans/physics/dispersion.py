"""
Scheidegger dispersion tensor

    S(v) = S_m Id + |v| (alpha_L P_v + alpha_T (Id - P_v)),   P_v = v (x) v / |v|^2

and everything derived from it in closed spectral form: the symmetric square
root, inverse, inverse square root, S(v)^{-1} v and the uniform bounds used
by the transport step guard.

v is the longitudinal eigenvector (eigenvalue S_m + alpha_L |v|); every
vector orthogonal to it has eigenvalue S_m + alpha_T |v|. All functions work
for N = 2 and N = 3 and accept a batch of velocities (..., N).
"""
import logging
from dataclasses import dataclass
from enum import Enum
from typing import TypedDict

import numpy as np

logger = logging.getLogger(__name__)

# below this speed the projector is undefined and S(v) = S_m Id
ZERO_SPEED = 1e-14


@dataclass(frozen=True)
class DispersionParams:
    S_m: float
    alpha_L: float
    alpha_T: float

    def __post_init__(self):
        values = (self.S_m, self.alpha_L, self.alpha_T)
        if not all(np.isfinite(values)):
            raise ValueError(f"Dispersion parameters must be finite, got {values}")
        if self.S_m <= 0:
            raise ValueError(f"Molecular diffusion must satisfy S_m > 0, got S_m={self.S_m}")
        if not self.alpha_L > self.alpha_T >= 0:
            raise ValueError(
                "Dispersivities must satisfy alpha_L > alpha_T >= 0, "
                f"got alpha_L={self.alpha_L}, alpha_T={self.alpha_T}"
            )


class SymTensor:
    """
    Symmetric N x N tensor stored by its upper triangle (row-major), so
    symmetry holds exactly by construction.
    """

    def __init__(self, upper, dim: int):
        upper = np.asarray(upper, dtype=float)
        if dim not in (2, 3) or upper.shape != (dim * (dim + 1) // 2,):
            raise ValueError(f"Upper triangle of a {dim}x{dim} tensor needs {dim * (dim + 1) // 2} entries")
        self.dim = dim
        self.upper = upper
        self.upper.setflags(write=False)

    @classmethod
    def from_matrix(cls, matrix) -> "SymTensor":
        matrix = np.asarray(matrix, dtype=float)
        dim = matrix.shape[0]
        rows, cols = np.triu_indices(dim)
        return cls(matrix[rows, cols], dim)

    @property
    def matrix(self) -> np.ndarray:
        rows, cols = np.triu_indices(self.dim)
        out = np.empty((self.dim, self.dim))
        out[rows, cols] = self.upper
        out[cols, rows] = self.upper
        return out

    def __array__(self, dtype=None, copy=None):
        return self.matrix if dtype is None else self.matrix.astype(dtype)

    def __matmul__(self, other):
        if isinstance(other, SymTensor):
            return self.matrix @ other.matrix
        return self.matrix @ np.asarray(other)

    def eigenvalues(self) -> np.ndarray:
        return np.linalg.eigvalsh(self.matrix)

    def __repr__(self) -> str:
        return f"SymTensor({self.matrix.tolist()})"


class TensorKind(Enum):
    TENSOR = "tensor"
    SQRT = "sqrt"
    INV = "inv"
    INV_SQRT = "inv_sqrt"


_EXPONENTS = {
    TensorKind.TENSOR: 1.0,
    TensorKind.SQRT: 0.5,
    TensorKind.INV: -1.0,
    TensorKind.INV_SQRT: -0.5,
}


def eigenvalues(params: DispersionParams, speed) -> tuple:
    """(longitudinal, transverse) eigenvalues for a speed |v|"""
    speed = np.asarray(speed, dtype=float)
    return params.S_m + params.alpha_L * speed, params.S_m + params.alpha_T * speed


def tensor_field(params: DispersionParams, velocities, kind: TensorKind = TensorKind.TENSOR) -> np.ndarray:
    """
    Spectral evaluation of S(v)^p for p in {1, 1/2, -1, -1/2} on a batch of
    velocities (..., N). Returns dense (..., N, N) arrays, exactly symmetric.
    """
    v = np.asarray(velocities, dtype=float)
    dim = v.shape[-1]
    if dim not in (2, 3):
        raise ValueError(f"Velocity must have 2 or 3 components, got {dim}")
    if not np.all(np.isfinite(v)):
        raise ValueError("Velocity must be finite")

    p = _EXPONENTS[kind]
    speed = np.linalg.norm(v, axis=-1)
    lam_L, lam_T = eigenvalues(params, speed)
    f_L = lam_L**p
    f_T = lam_T**p

    moving = speed >= ZERO_SPEED
    safe = np.where(moving, speed, 1.0)
    unit = v / safe[..., None]
    projector = unit[..., :, None] * unit[..., None, :]
    projector = np.where(moving[..., None, None], projector, 0.0)

    identity = np.eye(dim)
    return f_L[..., None, None] * projector + f_T[..., None, None] * (identity - projector)


def _single(params: DispersionParams, v, kind: TensorKind) -> SymTensor:
    v = np.asarray(v, dtype=float)
    if v.ndim != 1:
        raise ValueError(f"Expected one velocity vector, got shape {v.shape}")
    return SymTensor.from_matrix(tensor_field(params, v, kind))


def tensor(params: DispersionParams, v) -> SymTensor:
    return _single(params, v, TensorKind.TENSOR)


def tensor_sqrt(params: DispersionParams, v) -> SymTensor:
    return _single(params, v, TensorKind.SQRT)


def tensor_inv(params: DispersionParams, v) -> SymTensor:
    return _single(params, v, TensorKind.INV)


def tensor_inv_sqrt(params: DispersionParams, v) -> SymTensor:
    return _single(params, v, TensorKind.INV_SQRT)


def tensor_inv_times_v(params: DispersionParams, v) -> np.ndarray:
    """S(v)^{-1} v = v / (S_m + alpha_L |v|); works on batches (..., N)"""
    v = np.asarray(v, dtype=float)
    speed = np.linalg.norm(v, axis=-1)
    return v / (params.S_m + params.alpha_L * speed)[..., None]


class BoundConstants(TypedDict):
    lambda_min: float
    lambda_max: float
    M_minus: float
    M_plus: float
    C: float
    C_disp: float


def bound_constants(params: DispersionParams, v_max: float) -> BoundConstants:
    """
    Uniform spectral bounds of S(v) over the ball |v| <= v_max.

    C bounds |S(v)^{1/2} xi| <= C (1 + |v|^{1/2}) |xi|. With t = |v|^{1/2},
    (S_m + alpha_L t^2) / (1 + t)^2 has a single interior minimum at
    t = S_m / alpha_L, so the supremum sits at one of the ends.
    """
    if not np.isfinite(v_max) or v_max < 0:
        raise ValueError(f"Speed cap must be finite and nonnegative, got {v_max}")
    S_m, a_L = params.S_m, params.alpha_L
    lambda_max = S_m + a_L * v_max
    M_plus = min(v_max / lambda_max, 1.0 / a_L)
    C = max(np.sqrt(S_m), np.sqrt(lambda_max) / (1.0 + np.sqrt(v_max)))
    return BoundConstants(
        lambda_min=S_m,
        lambda_max=lambda_max,
        M_minus=1.0 / lambda_max,
        M_plus=M_plus,
        C=float(C),
        C_disp=float(M_plus * C),
    )
