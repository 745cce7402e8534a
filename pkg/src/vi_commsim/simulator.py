"""Experiment harness: run a solver on an instance, log per-round metrics,
aggregate across seeds, and read/write the portable CSV schema."""

from __future__ import annotations

import os
import tempfile
import time
from dataclasses import dataclass, field, replace
from typing import Optional, Sequence

import numpy as np

from .algorithms import (
    TheoremParams,
    contraction_factor,
    default_extragradient_eta,
    extra_gradient_step,
    lyapunov_value,
    optimistic_masha_init,
    optimistic_masha_step,
    theorem_params,
)
from .compressors import PERMUTATION, validate_kind
from .core import CompositeTerm, Zero, dist_sq
from .errors import ConfigError, DivergedSeedsError, DivergenceError

ALG_OPTIMISTIC_MASHA = "OptimisticMasha"
ALG_EXTRA_GRADIENT = "ExtraGradient"
ALGORITHMS = (ALG_OPTIMISTIC_MASHA, ALG_EXTRA_GRADIENT)

CSV_COLUMNS = ("k", "uplink_scalars", "dist_sq", "rel_dist_sq", "lyapunov",
               "sync", "wall_time_ns")
CSV_HEADER = ",".join(CSV_COLUMNS)


@dataclass
class RunConfig:
    """One solver run: algorithm, parameter overrides (None means derive from
    the measured constants), stopping rules and the PRNG seed."""

    algorithm: str
    compressor: str = PERMUTATION
    gamma: Optional[float] = None
    eta: Optional[float] = None
    alpha: Optional[float] = None
    max_rounds: Optional[int] = None
    target_rel_dist_sq: Optional[float] = None
    seed: int = 0
    log_every: int = 1
    z0: Optional[np.ndarray] = None

    def __post_init__(self):
        if self.algorithm not in ALGORITHMS:
            raise ConfigError(
                f"unknown algorithm {self.algorithm!r}, expected one of {ALGORITHMS}"
            )
        if self.max_rounds is None and self.target_rel_dist_sq is None:
            raise ConfigError("set max_rounds and/or target_rel_dist_sq")
        if self.max_rounds is not None and self.max_rounds < 0:
            raise ConfigError("max_rounds must be nonnegative")
        if self.target_rel_dist_sq is not None and not 0 < self.target_rel_dist_sq:
            raise ConfigError("target_rel_dist_sq must be positive")
        if self.log_every < 1:
            raise ConfigError("log_every must be >= 1")


@dataclass
class RunMetrics:
    """Per-round log of one run.  Rows exist for round 0, every log_every-th
    round and the final round.  sync on row k is the resync coin of the round
    that produced iterate k (0 on the initial row).  wall_time_ns is excluded
    from reproducibility comparisons."""

    algorithm: str
    seed: int
    params: dict
    k: np.ndarray
    uplink_scalars: np.ndarray
    dist_sq: np.ndarray
    rel_dist_sq: np.ndarray
    lyapunov: np.ndarray
    sync: np.ndarray
    wall_time_ns: np.ndarray
    diverged: bool = False

    def __len__(self):
        return len(self.k)


class _RowBuffer:
    def __init__(self):
        self.rows = []
        self.t0 = time.perf_counter_ns()

    def append(self, k, uplink, dsq, rel, lyap, sync):
        self.rows.append(
            (k, uplink, dsq, rel, lyap, sync, time.perf_counter_ns() - self.t0)
        )

    def build(self, algorithm, seed, params, diverged=False) -> RunMetrics:
        cols = list(zip(*self.rows)) if self.rows else [[]] * 7
        return RunMetrics(
            algorithm=algorithm,
            seed=seed,
            params=params,
            k=np.asarray(cols[0], dtype=np.int64),
            uplink_scalars=np.asarray(cols[1], dtype=np.int64),
            dist_sq=np.asarray(cols[2], dtype=np.float64),
            rel_dist_sq=np.asarray(cols[3], dtype=np.float64),
            lyapunov=np.asarray(cols[4], dtype=np.float64),
            sync=np.asarray(cols[5], dtype=np.int64),
            wall_time_ns=np.asarray(cols[6], dtype=np.int64),
            diverged=diverged,
        )


def resolve_params(config: RunConfig, instance) -> dict:
    """Numeric parameters the run will use, derived where not overridden."""
    constants = instance.constants
    if config.algorithm == ALG_OPTIMISTIC_MASHA:
        base = theorem_params(
            constants, instance.oracle.n_devices, gamma_override=config.gamma
        )
        params = TheoremParams(
            gamma=base.gamma,
            alpha=base.alpha if config.alpha is None else config.alpha,
            eta=base.eta if config.eta is None else config.eta,
        )
        return {
            "gamma": params.gamma,
            "alpha": params.alpha,
            "eta": params.eta,
            "compressor": config.compressor,
        }
    eta = config.eta if config.eta is not None else default_extragradient_eta(constants)
    if not eta > 0:
        raise ConfigError(f"eta must be positive, got {eta}")
    return {"eta": float(eta)}


def run(config: RunConfig, instance, g: Optional[CompositeTerm] = None) -> RunMetrics:
    """Run one solver until a stopping rule fires.

    Deterministic in (config, instance): byte-identical metrics apart from
    wall_time_ns.  On divergence the collected rows are attached to the raised
    error as partial_metrics.
    """
    g = Zero() if g is None else g
    oracle = instance.oracle
    z_star = instance.solution
    params_dict = resolve_params(config, instance)
    buf = _RowBuffer()

    if config.algorithm == ALG_OPTIMISTIC_MASHA:
        params = TheoremParams(
            params_dict["gamma"], params_dict["alpha"], params_dict["eta"]
        )
        validate_kind(config.compressor, oracle.dim, oracle.n_devices)
        try:
            return _run_masha(config, instance, g, params, params_dict, buf)
        except DivergenceError as err:
            err.partial_metrics = buf.build(
                config.algorithm, config.seed, params_dict, diverged=True
            )
            raise
    try:
        return _run_extragradient(config, instance, g, params_dict, buf)
    except DivergenceError as err:
        err.partial_metrics = buf.build(
            config.algorithm, config.seed, params_dict, diverged=True
        )
        raise


def _rel_of(dsq: float, d0: float) -> float:
    # z0 == z* makes the run trivially converged; report 0 instead of 0/0
    return 0.0 if d0 == 0.0 else dsq / d0


def _stop(config: RunConfig, k: int, rel: float, d0: float) -> bool:
    if d0 == 0.0:
        return True  # started at the solution; every method keeps it fixed
    if config.target_rel_dist_sq is not None and rel <= config.target_rel_dist_sq:
        return True
    return config.max_rounds is not None and k >= config.max_rounds


def _run_masha(config, instance, g, params, params_dict, buf) -> RunMetrics:
    oracle, z_star = instance.oracle, instance.solution
    state, uplink = optimistic_masha_init(
        oracle, g, params, config.seed, z0=config.z0,
        compressor_kind=config.compressor,
    )
    cumulative = uplink
    d0 = dist_sq(state.z, z_star)
    psi = lyapunov_value(state.z, state.z, state.w, state.w, oracle, params, z_star)
    rel = 1.0 if d0 > 0 else 0.0
    buf.append(0, cumulative, d0, rel, psi, 0)
    if _stop(config, 0, rel, d0):
        return buf.build(config.algorithm, config.seed, params_dict)
    while True:
        z_old, w_old = state.z, state.w
        outcome = optimistic_masha_step(
            state, oracle, g, params, config.seed, compressor_kind=config.compressor
        )
        state = outcome.new_state
        cumulative += outcome.uplink_scalars
        k = state.k
        dsq = dist_sq(state.z, z_star)
        rel = _rel_of(dsq, d0)
        stop = _stop(config, k, rel, d0)
        if stop or k % config.log_every == 0:
            psi = lyapunov_value(state.z, z_old, w_old, state.w, oracle, params, z_star)
            buf.append(k, cumulative, dsq, rel, psi, int(outcome.synced))
        if stop:
            return buf.build(config.algorithm, config.seed, params_dict)


def _run_extragradient(config, instance, g, params_dict, buf) -> RunMetrics:
    oracle, z_star = instance.oracle, instance.solution
    eta = params_dict["eta"]
    z = np.zeros(oracle.dim) if config.z0 is None else np.asarray(config.z0, float)
    cumulative = 0
    d0 = dist_sq(z, z_star)
    rel = 1.0 if d0 > 0 else 0.0
    buf.append(0, cumulative, d0, rel, float("nan"), 0)
    if _stop(config, 0, rel, d0):
        return buf.build(config.algorithm, config.seed, params_dict)
    k = 0
    while True:
        z, uplink = extra_gradient_step(z, oracle, g, eta)
        cumulative += uplink
        k += 1
        dsq = dist_sq(z, z_star)
        rel = _rel_of(dsq, d0)
        stop = _stop(config, k, rel, d0)
        if stop or k % config.log_every == 0:
            buf.append(k, cumulative, dsq, rel, float("nan"), 0)
        if stop:
            return buf.build(config.algorithm, config.seed, params_dict)


def floats_to_accuracy(metrics: RunMetrics, eps_rel: float) -> Optional[int]:
    """Smallest logged cumulative uplink with rel_dist_sq <= eps_rel, if any."""
    if not 0 < eps_rel < 1:
        raise ValueError(f"eps_rel must lie in (0, 1), got {eps_rel}")
    hits = np.nonzero(metrics.rel_dist_sq <= eps_rel)[0]
    if hits.size == 0:
        return None
    return int(metrics.uplink_scalars[hits[0]])


@dataclass
class SeedAggregate:
    """Pointwise cross-seed statistics on a shared uplink grid (step-function
    interpolation; cumulative cost is a counting process, so no smoothing)."""

    grid: np.ndarray
    rel_mean: np.ndarray
    rel_min: np.ndarray
    rel_max: np.ndarray
    lyapunov_mean: np.ndarray
    lyapunov_min: np.ndarray
    lyapunov_max: np.ndarray
    seeds: list = field(default_factory=list)


def _sample_step(x: np.ndarray, y: np.ndarray, grid: np.ndarray) -> np.ndarray:
    idx = np.searchsorted(x, grid, side="right") - 1
    return y[np.clip(idx, 0, len(y) - 1)]


def aggregate_seeds(
    configs: Sequence[RunConfig], instance, g: Optional[CompositeTerm] = None
) -> SeedAggregate:
    """Run configs differing only in seed and average their curves."""
    if len(configs) < 2:
        raise ConfigError("aggregation needs at least two seeds")
    base = replace(configs[0], seed=0)
    for cfg in configs[1:]:
        if replace(cfg, seed=0) != base:
            raise ConfigError("configs passed to aggregate_seeds must differ "
                              "only in seed")
    metrics, diverged = [], []
    for cfg in configs:
        try:
            metrics.append(run(cfg, instance, g))
        except DivergenceError:
            diverged.append(cfg.seed)
    if diverged:
        raise DivergedSeedsError(diverged)
    return aggregate_metrics(metrics)


def aggregate_metrics(metrics: Sequence[RunMetrics]) -> SeedAggregate:
    if not metrics:
        raise ConfigError("no runs to aggregate")
    grid = np.unique(np.concatenate([m.uplink_scalars for m in metrics]))
    rel = np.stack(
        [_sample_step(m.uplink_scalars, m.rel_dist_sq, grid) for m in metrics]
    )
    lyap = np.stack(
        [_sample_step(m.uplink_scalars, m.lyapunov, grid) for m in metrics]
    )
    return SeedAggregate(
        grid=grid,
        rel_mean=rel.mean(axis=0),
        rel_min=rel.min(axis=0),
        rel_max=rel.max(axis=0),
        lyapunov_mean=lyap.mean(axis=0),
        lyapunov_min=lyap.min(axis=0),
        lyapunov_max=lyap.max(axis=0),
        seeds=[m.seed for m in metrics],
    )


def seed_mean_psi_ratios(metrics: Sequence[RunMetrics]) -> np.ndarray:
    """Per-round ratios of the seed-averaged potential over the common prefix.

    Requires contiguous per-round logs (log_every == 1).
    """
    n = min(len(m) for m in metrics)
    for m in metrics:
        if not np.array_equal(m.k[:n], np.arange(n)):
            raise ValueError("per-round logs required (log_every=1)")
    mean = np.stack([m.lyapunov[:n] for m in metrics]).mean(axis=0)
    return mean[1:] / mean[:-1]


def contraction_summary(instance, metrics: Sequence[RunMetrics]) -> Optional[dict]:
    """Theoretical decay factor next to the worst observed seed-mean ratio."""
    masha = [m for m in metrics if m.algorithm == ALG_OPTIMISTIC_MASHA]
    if not masha:
        return None
    p = masha[0].params
    params = TheoremParams(p["gamma"], p["alpha"], p["eta"])
    rho = contraction_factor(instance.constants, params)
    try:
        ratios = seed_mean_psi_ratios(masha)
        observed = float(ratios.max()) if ratios.size else None
    except ValueError:
        observed = None
    return {"rho_theoretical": rho, "max_mean_psi_ratio": observed}


# ---------------------------------------------------------------------------
# CSV schema
# ---------------------------------------------------------------------------


def _fmt(x: float) -> str:
    return format(x, ".17g")


def write_csv(metrics: RunMetrics, path: str) -> None:
    """Write the metrics rows (atomic: write to a temp file, then rename)."""
    lines = [CSV_HEADER]
    for i in range(len(metrics)):
        lines.append(
            f"{metrics.k[i]},{metrics.uplink_scalars[i]},"
            f"{_fmt(metrics.dist_sq[i])},{_fmt(metrics.rel_dist_sq[i])},"
            f"{_fmt(metrics.lyapunov[i])},{metrics.sync[i]},"
            f"{metrics.wall_time_ns[i]}"
        )
    text = "\n".join(lines) + "\n"
    directory = os.path.dirname(os.path.abspath(path))
    os.makedirs(directory, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=directory, suffix=".csv.tmp")
    try:
        with os.fdopen(fd, "w") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def read_csv(path: str) -> dict:
    """Columns of a metrics CSV as numpy arrays."""
    with open(path) as fh:
        header = fh.readline().strip()
        if header != CSV_HEADER:
            raise ValueError(f"unexpected CSV header in {path}: {header!r}")
        raw = [line.strip().split(",") for line in fh if line.strip()]
    cols = list(zip(*raw)) if raw else [[]] * len(CSV_COLUMNS)
    out = {}
    for name, col in zip(CSV_COLUMNS, cols):
        dtype = np.int64 if name in ("k", "uplink_scalars", "sync",
                                     "wall_time_ns") else np.float64
        out[name] = np.asarray(col, dtype=dtype)
    return out


def csv_comparable_bytes(path: str) -> bytes:
    """File content with the wall_time_ns column stripped, for repro checks."""
    with open(path, "rb") as fh:
        lines = fh.read().splitlines()
    return b"\n".join(line.rsplit(b",", 1)[0] for line in lines)
