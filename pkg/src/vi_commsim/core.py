"""Dense vectors, the distributed operator oracle, proximal maps and metrics.

Vectors are plain 1-D float64 numpy arrays.  The global operator is always
the arithmetic mean of the device operators, accumulated in ascending device
order with a sequential left fold so that repeated runs are bit-identical.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Optional, Sequence

import numpy as np

from .errors import DimensionError


def as_vector(x, dim: Optional[int] = None) -> np.ndarray:
    v = np.ascontiguousarray(x, dtype=np.float64)
    if v.ndim != 1:
        raise DimensionError(f"expected a 1-D vector, got shape {v.shape}")
    if dim is not None and v.shape[0] != dim:
        raise DimensionError(f"expected length {dim}, got {v.shape[0]}")
    return v


def check_same_dim(u: np.ndarray, v: np.ndarray) -> None:
    if u.shape != v.shape:
        raise DimensionError(f"shape mismatch: {u.shape} vs {v.shape}")


def dist_sq(z: np.ndarray, z_star: np.ndarray) -> float:
    """Squared Euclidean distance."""
    check_same_dim(z, z_star)
    diff = z - z_star
    return float(np.dot(diff, diff))


def fold_mean(rows: np.ndarray) -> np.ndarray:
    """Mean over axis 0 as a sequential left fold (sum in row order, then /M).

    numpy's pairwise summation may regroup terms; the explicit fold pins the
    floating-point result so runs are reproducible bit for bit.
    """
    acc = rows[0].astype(np.float64, copy=True)
    for m in range(1, rows.shape[0]):
        acc += rows[m]
    acc /= rows.shape[0]
    return acc


@dataclass(frozen=True)
class ProblemConstants:
    """Measured constants of a distributed operator.

    L bounds ||F(u)-F(v)|| / ||u-v||, mu lower-bounds <F(u)-F(v), u-v> /
    ||u-v||^2, and delta bounds the deviation of each device operator from the
    mean, ||(F_m-F)(u)-(F_m-F)(v)|| / ||u-v||.
    """

    L: float
    mu: float
    delta: float

    def __post_init__(self):
        if not self.mu > 0:
            raise ValueError(f"mu must be positive, got {self.mu}")
        if self.L < 0 or self.delta < 0:
            raise ValueError("L and delta must be nonnegative")
        if self.mu > self.L * (1 + 1e-12):
            raise ValueError(f"mu={self.mu} exceeds L={self.L}")


class OperatorOracle:
    """Operator distributed over n_devices workers; the global operator is the
    arithmetic mean of the device operators."""

    def __init__(
        self,
        n_devices: int,
        dim: int,
        eval_all_fn: Optional[Callable[[np.ndarray], np.ndarray]] = None,
        local_fns: Optional[Sequence[Callable[[np.ndarray], np.ndarray]]] = None,
        constants=None,
    ):
        if n_devices < 1 or dim < 1:
            raise ValueError("n_devices and dim must be positive")
        if (eval_all_fn is None) == (local_fns is None):
            raise ValueError("provide exactly one of eval_all_fn / local_fns")
        if local_fns is not None and len(local_fns) != n_devices:
            raise ValueError("need one local function per device")
        self.n_devices = n_devices
        self.dim = dim
        self._constants = constants  # ProblemConstants or a provider callable
        self._eval_all_fn = eval_all_fn
        self._local_fns = list(local_fns) if local_fns is not None else None

    @property
    def constants(self) -> Optional[ProblemConstants]:
        if callable(self._constants):
            self._constants = self._constants()
        return self._constants

    def eval_all(self, z: np.ndarray) -> np.ndarray:
        """All device operator values at z, stacked as an (n_devices, dim) array."""
        z = as_vector(z, self.dim)
        if self._eval_all_fn is not None:
            out = np.asarray(self._eval_all_fn(z), dtype=np.float64)
        else:
            out = np.stack([as_vector(f(z), self.dim) for f in self._local_fns])
        if out.shape != (self.n_devices, self.dim):
            raise DimensionError(
                f"device evaluations have shape {out.shape}, "
                f"expected {(self.n_devices, self.dim)}"
            )
        return out

    def eval_local(self, m: int, z: np.ndarray) -> np.ndarray:
        """Value of device m's operator at z (m in range(n_devices))."""
        if not 0 <= m < self.n_devices:
            raise IndexError(f"device index {m} out of range(0, {self.n_devices})")
        return self.eval_all(z)[m].copy()

    def eval_global(self, z: np.ndarray) -> np.ndarray:
        """Mean of the device operators at z (ascending-device left fold)."""
        return fold_mean(self.eval_all(z))


# ---------------------------------------------------------------------------
# composite terms g and their closed-form proximal maps
# ---------------------------------------------------------------------------


class CompositeTerm:
    """Convex term g handled through its proximal map prox_{eta g}."""

    def prox(self, eta: float, v: np.ndarray) -> np.ndarray:
        raise NotImplementedError


class Zero(CompositeTerm):
    """g = 0; the prox is the identity."""

    def prox(self, eta: float, v: np.ndarray) -> np.ndarray:
        _check_eta(eta)
        return as_vector(v).copy()


class IndicatorBall(CompositeTerm):
    """Indicator of a Euclidean ball; the prox is the projection onto it."""

    def __init__(self, radius: float, center):
        if not radius > 0:
            raise ValueError("radius must be positive")
        self.radius = float(radius)
        self.center = as_vector(center)

    def prox(self, eta: float, v: np.ndarray) -> np.ndarray:
        _check_eta(eta)
        v = as_vector(v, self.center.shape[0])
        offset = v - self.center
        norm = float(np.linalg.norm(offset))
        if norm <= self.radius:
            return v.copy()
        return self.center + offset * (self.radius / norm)


class ScaledL2(CompositeTerm):
    """g(u) = (c/2) ||u||^2; the prox shrinks v by 1/(1 + eta c)."""

    def __init__(self, coefficient: float):
        if coefficient < 0:
            raise ValueError("coefficient must be nonnegative")
        self.coefficient = float(coefficient)

    def prox(self, eta: float, v: np.ndarray) -> np.ndarray:
        _check_eta(eta)
        return as_vector(v) / (1.0 + eta * self.coefficient)


def _check_eta(eta: float) -> None:
    if not eta > 0:
        raise ValueError(f"prox step eta must be positive, got {eta}")


def prox(g: CompositeTerm, eta: float, v: np.ndarray) -> np.ndarray:
    """argmin_u { eta*g(u) + 0.5 ||u - v||^2 }, in closed form."""
    return g.prox(eta, v)
