"""Synthetic distributed problem families with exactly known constants.

Two affine families are provided: a distributed bilinear saddle problem
(strongly convex-strongly concave, the workhorse for experiments) and a
distributed strongly convex quadratic.  Both expose their operator oracle,
measured constants (L, mu, delta) and the exact solution from a direct
linear solve.
"""

from __future__ import annotations

import os
import tempfile
from dataclasses import dataclass
from functools import cached_property

import numpy as np

from .core import OperatorOracle, ProblemConstants
from .errors import DimensionError, LinearSolveError, PowerIterationError
from .rng import CounterRng

_POWIT_SEED = 0x504F5749  # fixed start-vector stream, independent of instances


def power_iteration_norm(mat, tol: float = 1e-8, max_iter: int = 10_000) -> float:
    """Spectral norm of a dense matrix by power iteration on mat^T mat.

    Deterministic: the start vector comes from a fixed counter stream keyed by
    the column count.  Stops when successive estimates agree to a relative
    tolerance; raises PowerIterationError if the budget runs out.
    """
    mat = np.asarray(mat, dtype=np.float64)
    if mat.ndim != 2:
        raise DimensionError(f"expected a matrix, got shape {mat.shape}")
    cols = mat.shape[1]
    v = CounterRng(_POWIT_SEED, cols, "powit").generator().standard_normal(cols)
    v /= np.linalg.norm(v)
    est_prev = None
    for iteration in range(1, max_iter + 1):
        w = mat @ v
        v = mat.T @ w
        s = float(np.linalg.norm(v))  # -> sigma_max^2 as v aligns
        if s == 0.0:
            return 0.0
        est = float(np.sqrt(s))
        v /= s
        if est_prev is not None and abs(est - est_prev) <= tol * max(est, 1e-30):
            return est
        est_prev = est
    raise PowerIterationError(
        f"power iteration did not converge in {max_iter} iterations "
        f"(last estimate {est_prev!r})",
        iterations=max_iter,
        estimate=est_prev,
        last_change=abs(est - est_prev) if est_prev is not None else None,
    )


@dataclass(frozen=True)
class BilinearSaddleInstance:
    """Distributed bilinear saddle problem.

    Device m holds f_m(x, y) = x^T A[m] y + a[m]^T x + b[m]^T y
    + (lam/2)||x||^2 - (lam/2)||y||^2 with x, y of length block_dim; the
    solver works on the concatenated point z = (x, y).
    """

    n_devices: int
    block_dim: int
    A: np.ndarray  # (n_devices, block_dim, block_dim)
    a: np.ndarray  # (n_devices, block_dim)
    b: np.ndarray  # (n_devices, block_dim)
    lam: float
    sigma: float
    seed: int

    def __post_init__(self):
        M, d = self.n_devices, self.block_dim
        if self.A.shape != (M, d, d) or self.a.shape != (M, d) or self.b.shape != (M, d):
            raise DimensionError("instance arrays do not match (n_devices, block_dim)")
        # lam = 0 leaves the operator well defined (pure rotation); measuring
        # constants then fails because strong monotonicity is lost
        if self.lam < 0:
            raise ValueError("lam must be nonnegative")

    @property
    def dim(self) -> int:
        return 2 * self.block_dim

    @cached_property
    def A_bar(self) -> np.ndarray:
        return self.A.mean(axis=0)

    def _eval_all(self, z: np.ndarray) -> np.ndarray:
        d = self.block_dim
        x, y = z[:d], z[d:]
        fx = self.A @ y + self.a + self.lam * x
        fy = -np.tensordot(x, self.A, axes=([0], [1])) - self.b + self.lam * y
        return np.concatenate([fx, fy], axis=1)

    @cached_property
    def constants(self) -> ProblemConstants:
        return measure_constants(self)

    @cached_property
    def oracle(self) -> OperatorOracle:
        return OperatorOracle(
            self.n_devices, self.dim, eval_all_fn=self._eval_all,
            constants=lambda: self.constants,
        )

    @cached_property
    def solution(self) -> np.ndarray:
        return solve_star(self)


@dataclass(frozen=True)
class QuadraticInstance:
    """Distributed strongly convex quadratic; device m holds
    f_m(z) = 0.5 z^T C[m] z - c[m]^T z, so its operator is C[m] z - c[m]."""

    n_devices: int
    dim: int
    C: np.ndarray  # (n_devices, dim, dim), symmetric positive definite
    c: np.ndarray  # (n_devices, dim)
    seed: int

    def __post_init__(self):
        M, d = self.n_devices, self.dim
        if self.C.shape != (M, d, d) or self.c.shape != (M, d):
            raise DimensionError("instance arrays do not match (n_devices, dim)")

    @cached_property
    def C_bar(self) -> np.ndarray:
        return self.C.mean(axis=0)

    def _eval_all(self, z: np.ndarray) -> np.ndarray:
        return self.C @ z - self.c

    @cached_property
    def constants(self) -> ProblemConstants:
        return measure_constants(self)

    @cached_property
    def oracle(self) -> OperatorOracle:
        return OperatorOracle(
            self.n_devices, self.dim, eval_all_fn=self._eval_all,
            constants=lambda: self.constants,
        )

    @cached_property
    def solution(self) -> np.ndarray:
        return solve_star(self)


def generate_bilinear(
    n_devices: int,
    block_dim: int,
    target_norm_A: float,
    sigma: float,
    lam: float,
    seed: int,
) -> BilinearSaddleInstance:
    """Random bilinear instance, fully determined by the seed.

    The shared matrix A gets i.i.d. standard normal entries and is rescaled so
    its power-iteration spectral norm equals target_norm_A exactly; device
    matrices are A plus i.i.d. N(0, sigma^2) perturbations.  The perturbation
    draws do not depend on sigma, so the device spread scales linearly in
    sigma for a fixed seed.
    """
    if n_devices < 1 or block_dim < 1:
        raise ValueError("n_devices and block_dim must be positive")
    if not target_norm_A > 0:
        raise ValueError("target_norm_A must be positive")
    if sigma < 0:
        raise ValueError("sigma must be nonnegative")
    M, d = n_devices, block_dim
    A = CounterRng(seed, 0, "A").generator().standard_normal((d, d))
    A *= target_norm_A / power_iteration_norm(A)
    a = CounterRng(seed, 0, "avec").generator().standard_normal((M, d))
    b = CounterRng(seed, 0, "bvec").generator().standard_normal((M, d))
    B = sigma * CounterRng(seed, 0, "B").generator().standard_normal((M, d, d))
    return BilinearSaddleInstance(M, d, A + B, a, b, float(lam), float(sigma), seed)


def generate_quadratic(
    n_devices: int,
    dim: int,
    mu_min: float,
    L_max: float,
    seed: int,
    spread: float = 0.0,
) -> QuadraticInstance:
    """Random quadratic instance with eigenvalues of each C[m] in [mu_min, L_max].

    spread perturbs the shared eigenbasis per device (0 = identical bases).
    """
    if not 0 < mu_min <= L_max:
        raise ValueError("need 0 < mu_min <= L_max")
    gen = CounterRng(seed, 0, "qmat").generator()
    base = np.linalg.qr(gen.standard_normal((dim, dim)))[0]
    C = np.empty((n_devices, dim, dim))
    for m in range(n_devices):
        Q, _ = np.linalg.qr(base + spread * gen.standard_normal((dim, dim)))
        eigs = gen.uniform(mu_min, L_max, size=dim)
        eigs[0], eigs[-1] = mu_min, L_max
        sym = (Q * eigs) @ Q.T
        C[m] = 0.5 * (sym + sym.T)
    c = CounterRng(seed, 0, "qvec").generator().standard_normal((n_devices, dim))
    return QuadraticInstance(n_devices, dim, C, c, seed)


def saddle_operator(inst: BilinearSaddleInstance) -> OperatorOracle:
    """Oracle for (grad_x f_m, -grad_y f_m) on the concatenated point."""
    return inst.oracle


def measure_constants(inst) -> ProblemConstants:
    """Exact constants of an affine instance.

    Bilinear: mu = lam; L = sqrt(lam^2 + ||A_bar||^2) because the operator's
    Jacobian [[lam I, A_bar], [-A_bar^T, lam I]] is normal with that spectral
    norm (the plain coupling norm ||A_bar|| would undershoot L by the lam
    term); delta = max_m ||A[m] - A_bar||.  Spectral norms come from power
    iteration at tolerance 1e-8.
    """
    if isinstance(inst, BilinearSaddleInstance):
        norm_A = power_iteration_norm(inst.A_bar)
        L = float(np.hypot(inst.lam, norm_A))
        if inst.n_devices == 1:
            delta = 0.0
        else:
            delta = max(
                power_iteration_norm(inst.A[m] - inst.A_bar)
                for m in range(inst.n_devices)
            )
        return ProblemConstants(L=L, mu=inst.lam, delta=delta)
    if isinstance(inst, QuadraticInstance):
        L = power_iteration_norm(inst.C_bar)
        mu = float(np.linalg.eigvalsh(inst.C_bar)[0])
        if inst.n_devices == 1:
            delta = 0.0
        else:
            delta = max(
                power_iteration_norm(inst.C[m] - inst.C_bar)
                for m in range(inst.n_devices)
            )
        return ProblemConstants(L=L, mu=mu, delta=delta)
    raise TypeError(f"unsupported instance type {type(inst).__name__}")


def solve_star(inst) -> np.ndarray:
    """Exact solution of F(z*) = 0 by a direct dense solve, residual-checked."""
    if isinstance(inst, BilinearSaddleInstance):
        d = inst.block_dim
        eye = np.eye(d)
        J = np.block([[inst.lam * eye, inst.A_bar], [-inst.A_bar.T, inst.lam * eye]])
        rhs = -np.concatenate([inst.a.mean(axis=0), -inst.b.mean(axis=0)])
    elif isinstance(inst, QuadraticInstance):
        J = inst.C_bar
        rhs = inst.c.mean(axis=0)
    else:
        raise TypeError(f"unsupported instance type {type(inst).__name__}")
    try:
        z_star = np.linalg.solve(J, rhs)
    except np.linalg.LinAlgError as exc:
        raise LinearSolveError(f"singular system: {exc}") from exc
    residual = float(np.linalg.norm(inst.oracle.eval_global(z_star)))
    bound = 1e-8 * (1.0 + float(np.linalg.norm(rhs)))
    if residual > bound:
        raise LinearSolveError(
            f"solution residual {residual:.3e} exceeds bound {bound:.3e}"
        )
    return z_star


# ---------------------------------------------------------------------------
# portable instance container
# ---------------------------------------------------------------------------


def save_instance(inst, path: str) -> None:
    """Serialize an instance to an .npz container (atomic write)."""
    if isinstance(inst, BilinearSaddleInstance):
        payload = dict(
            kind="bilinear",
            n_devices=inst.n_devices,
            block_dim=inst.block_dim,
            A=inst.A,
            a=inst.a,
            b=inst.b,
            lam=inst.lam,
            sigma=inst.sigma,
            seed=inst.seed,
        )
    elif isinstance(inst, QuadraticInstance):
        payload = dict(
            kind="quadratic",
            n_devices=inst.n_devices,
            dim=inst.dim,
            C=inst.C,
            c=inst.c,
            seed=inst.seed,
        )
    else:
        raise TypeError(f"unsupported instance type {type(inst).__name__}")
    directory = os.path.dirname(os.path.abspath(path))
    os.makedirs(directory, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=directory, suffix=".npz.tmp")
    try:
        with os.fdopen(fd, "wb") as fh:
            np.savez(fh, **payload)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def load_instance(path: str):
    with np.load(path) as data:
        kind = str(data["kind"])
        if kind == "bilinear":
            return BilinearSaddleInstance(
                n_devices=int(data["n_devices"]),
                block_dim=int(data["block_dim"]),
                A=data["A"],
                a=data["a"],
                b=data["b"],
                lam=float(data["lam"]),
                sigma=float(data["sigma"]),
                seed=int(data["seed"]),
            )
        if kind == "quadratic":
            return QuadraticInstance(
                n_devices=int(data["n_devices"]),
                dim=int(data["dim"]),
                C=data["C"],
                c=data["c"],
                seed=int(data["seed"]),
            )
    raise ValueError(f"unknown instance kind {kind!r} in {path}")
