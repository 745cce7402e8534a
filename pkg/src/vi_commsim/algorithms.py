"""Solvers: compressed optimistic method with anchor resyncs, and the
uncompressed extragradient baseline.

One round of the compressed method, starting from iterate z and anchor w:

    delta_m = F_m(z) - F_m(w_prev) + alpha * (F_m(z) - F_m(z_prev))   per device
    D       = (1/M) sum_m Q_m(delta_m) + F(w_prev)                    aggregate
    z_next  = prox_{eta g}( z + gamma * (w - z) - eta * D )
    with probability gamma: w_next = z and all devices exchange full
    operator values at the new anchor; otherwise w_next = w.

w_prev here is the anchor of the previous round: a freshly exchanged anchor
becomes usable one round later, which is why the state carries operator
caches for both the previous and the current anchor.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .compressors import PERMUTATION, aggregate, derive_round, validate_kind
from .core import CompositeTerm, OperatorOracle, ProblemConstants, as_vector, fold_mean
from .errors import ConfigError, DivergenceError
from .rng import sync_bit

DIVERGENCE_NORM_BOUND = 1e12


@dataclass(frozen=True)
class TheoremParams:
    """Solver parameters (gamma, alpha, eta)."""

    gamma: float
    alpha: float
    eta: float

    def __post_init__(self):
        if not 0 < self.gamma <= 0.125:
            raise ConfigError(f"gamma must lie in (0, 1/8], got {self.gamma}")
        if not 0 < self.alpha < 1:
            raise ConfigError(f"alpha must lie in (0, 1), got {self.alpha}")
        if not self.eta > 0:
            raise ConfigError(f"eta must be positive, got {self.eta}")


def theorem_params(
    constants: ProblemConstants,
    n_devices: int,
    gamma_override: float | None = None,
) -> TheoremParams:
    """Parameter schedule derived from the measured constants.

    gamma defaults to min(1/M, 1/8) (the communication-optimal refresh rate,
    capped), alpha is 1/2, and eta = min(sqrt(alpha*gamma)/(2 delta),
    1/(8 (L + delta))); with delta = 0 the first branch is vacuous and
    eta = 1/(8 L).
    """
    if gamma_override is not None:
        if not 0 < gamma_override <= 0.125:
            raise ConfigError(
                f"gamma override must lie in (0, 1/8], got {gamma_override}"
            )
        gamma = float(gamma_override)
    else:
        gamma = min(1.0 / n_devices, 0.125)
    alpha = 0.5
    cap = 1.0 / (8.0 * (constants.L + constants.delta))
    if constants.delta > 0:
        eta = min(np.sqrt(alpha * gamma) / (2.0 * constants.delta), cap)
    else:
        eta = cap
    return TheoremParams(gamma=gamma, alpha=alpha, eta=float(eta))


@dataclass(frozen=True)
class SolverState:
    """Iterate triple plus the operator caches one round of the compressed
    method needs.  F_w_prev / F_dev_w_prev belong to the previous anchor (the
    one the next round differences against); F_w_curr / F_dev_w_curr belong to
    the current anchor and rotate into the previous slot after each round."""

    z: np.ndarray
    z_prev: np.ndarray
    w: np.ndarray
    k: int
    F_w_prev: np.ndarray
    F_w_curr: np.ndarray
    F_dev_z_prev: np.ndarray  # (n_devices, dim)
    F_dev_w_prev: np.ndarray
    F_dev_w_curr: np.ndarray


@dataclass(frozen=True)
class StepOutcome:
    new_state: SolverState
    uplink_scalars: int  # per device: compressed payload + full exchange if synced
    synced: bool
    delta_k: np.ndarray  # the aggregated update direction, for diagnostics


def optimistic_masha_init(
    oracle: OperatorOracle,
    g: CompositeTerm,
    params: TheoremParams,
    seed: int,
    z0: np.ndarray | None = None,
    compressor_kind: str = PERMUTATION,
) -> tuple[SolverState, int]:
    """Initial state from the starting point (default: the zero vector).

    All devices evaluate and exchange their full operator values once, so the
    returned uplink charge is dim scalars per device.  Initialization is
    deterministic; the seed only feeds the per-round draws later.
    """
    del seed  # rounds are keyed individually; nothing random happens here
    validate_kind(compressor_kind, oracle.dim, oracle.n_devices)
    z0 = np.zeros(oracle.dim) if z0 is None else as_vector(z0, oracle.dim).copy()
    if not np.all(np.isfinite(z0)):
        raise DivergenceError(0, float(np.linalg.norm(z0)))
    F_dev = oracle.eval_all(z0)
    F_bar = fold_mean(F_dev)
    state = SolverState(
        z=z0,
        z_prev=z0.copy(),
        w=z0.copy(),
        k=0,
        F_w_prev=F_bar,
        F_w_curr=F_bar.copy(),
        F_dev_z_prev=F_dev,
        F_dev_w_prev=F_dev.copy(),
        F_dev_w_curr=F_dev.copy(),
    )
    return state, oracle.dim


def optimistic_masha_step(
    state: SolverState,
    oracle: OperatorOracle,
    g: CompositeTerm,
    params: TheoremParams,
    seed: int,
    compressor_kind: str = PERMUTATION,
) -> StepOutcome:
    """One round; see the module docstring for the update."""
    k = state.k
    F_dev_z = oracle.eval_all(state.z)
    deltas = F_dev_z - state.F_dev_w_prev + params.alpha * (
        F_dev_z - state.F_dev_z_prev
    )
    round_ = derive_round(compressor_kind, seed, k, oracle.dim, oracle.n_devices)
    delta_k = aggregate(round_, deltas) + state.F_w_prev
    z_next = g.prox(
        params.eta,
        state.z + params.gamma * (state.w - state.z) - params.eta * delta_k,
    )
    _check_iterate(z_next, k)

    synced = sync_bit(seed, k, params.gamma)
    uplink = round_.scalars_per_message
    if synced:
        w_next = state.z.copy()
        F_dev_w_next = F_dev_z.copy()
        F_w_next = fold_mean(F_dev_z)
        uplink += oracle.dim
    else:
        w_next = state.w
        F_dev_w_next = state.F_dev_w_curr
        F_w_next = state.F_w_curr

    new_state = SolverState(
        z=z_next,
        z_prev=state.z,
        w=w_next,
        k=k + 1,
        F_w_prev=state.F_w_curr,
        F_w_curr=F_w_next,
        F_dev_z_prev=F_dev_z,
        F_dev_w_prev=state.F_dev_w_curr,
        F_dev_w_curr=F_dev_w_next,
    )
    return StepOutcome(new_state, uplink, synced, delta_k)


def extra_gradient_step(
    z: np.ndarray,
    oracle: OperatorOracle,
    g: CompositeTerm,
    eta: float,
) -> tuple[np.ndarray, int]:
    """One extragradient round: probe with F(z), correct with F(z_half).

    Both operator evaluations require every device to upload its full value,
    so the per-device uplink charge is 2*dim scalars.
    """
    if not eta > 0:
        raise ConfigError(f"eta must be positive, got {eta}")
    z = as_vector(z, oracle.dim)
    z_half = g.prox(eta, z - eta * oracle.eval_global(z))
    z_next = g.prox(eta, z - eta * oracle.eval_global(z_half))
    _check_iterate(z_next, None)
    return z_next, 2 * oracle.dim


def default_extragradient_eta(constants: ProblemConstants) -> float:
    return 1.0 / (2.0 * constants.L)


def lyapunov_value(
    z_new: np.ndarray,
    z_old: np.ndarray,
    w_old: np.ndarray,
    w_new: np.ndarray,
    oracle: OperatorOracle,
    params: TheoremParams,
    z_star: np.ndarray,
) -> float:
    """Composite potential of one round transition (z_old, w_old) -> (z_new, w_new).

    Psi = (1 + 2 mu eta) ||z_new - z*||^2
        + ((gamma + eta mu) / gamma) ||w_new - z*||^2
        + 2 eta <F(z_old) - F(z_new), z_new - z*>
        + gamma ||w_old - z_new||^2
        + (1/8) ||z_new - z_old||^2

    With eta <= 1/(8L) this dominates 0.5 ||z_new - z*||^2 for any states, so
    it doubles as a runtime sanity monitor.
    """
    if oracle.constants is None:
        raise ValueError("oracle.constants required to evaluate the potential")
    mu, eta, gamma = oracle.constants.mu, params.eta, params.gamma
    dzs = z_new - z_star
    F_old = oracle.eval_global(z_old)
    F_new = oracle.eval_global(z_new)
    value = (1.0 + 2.0 * mu * eta) * float(np.dot(dzs, dzs))
    dws = w_new - z_star
    value += (gamma + eta * mu) / gamma * float(np.dot(dws, dws))
    value += 2.0 * eta * float(np.dot(F_old - F_new, dzs))
    dwz = w_old - z_new
    value += gamma * float(np.dot(dwz, dwz))
    dzz = z_new - z_old
    value += 0.125 * float(np.dot(dzz, dzz))
    return value


def contraction_factor(constants: ProblemConstants, params: TheoremParams) -> float:
    """Per-round factor bounding the expected decay of the potential."""
    mu, eta, gamma = constants.mu, params.eta, params.gamma
    return max(
        1.0 - mu * eta / 2.0,
        1.0 - 1.0 / (1.0 / (eta * mu) + 1.0 / gamma),
        params.alpha,
        0.5,
    )


def _check_iterate(z: np.ndarray, round_index) -> None:
    norm = float(np.linalg.norm(z))
    if not np.isfinite(norm) or norm > DIVERGENCE_NORM_BOUND:
        raise DivergenceError(round_index, norm)
