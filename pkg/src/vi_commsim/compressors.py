"""Permutation compressors with a shared per-round permutation.

For d >= M (d = qM) the round draws one permutation pi of range(d); device m
rescales and keeps the q coordinates pi[q*m : q*(m+1)], so the device blocks
are disjoint and jointly cover every coordinate exactly once:

    Q_m(u) = M * sum_{i in block m} u[pi[i]] e_{pi[i]}

For d <= M (M = qd, M > 1) the round draws a permutation pi of the multiset
holding each coordinate q times; device m keeps the single coordinate pi[m]:

    Q_m(u) = d * u[pi[m]] e_{pi[m]}

All devices derive the identical pi from (seed, round), so a receiver can
reconstruct coordinate positions without them being transmitted; a message
costs q scalars (d >= M) or 1 scalar (d <= M).
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass
from typing import Iterator, Optional, Sequence, Tuple

import numpy as np

from .core import as_vector, fold_mean
from .errors import ConfigError, DimensionError, EnumerationSizeError
from .rng import PERM_PURPOSE, CounterRng

PERMUTATION = "permutation"
IDENTITY = "identity"
KINDS = (PERMUTATION, IDENTITY)

_MAX_ENUMERATION = 1_000_000


def validate_kind(kind: str, d: int, n_devices: int) -> None:
    """Check divisibility constraints; raises ConfigError when unusable."""
    if kind not in KINDS:
        raise ConfigError(f"unknown compressor kind {kind!r}, expected one of {KINDS}")
    if d < 1 or n_devices < 1:
        raise ConfigError("dimension and device count must be positive")
    if kind == PERMUTATION:
        if d >= n_devices:
            if d % n_devices != 0:
                raise ConfigError(
                    f"permutation compressor needs n_devices | dim, "
                    f"got dim={d}, n_devices={n_devices}"
                )
        else:
            if n_devices % d != 0:
                raise ConfigError(
                    f"permutation compressor needs dim | n_devices, "
                    f"got dim={d}, n_devices={n_devices}"
                )
            if n_devices <= 1:
                raise ConfigError("dim <= n_devices branch requires n_devices > 1")


@dataclass(frozen=True)
class CompressorRound:
    """One round's realized compressor shared by all devices.

    pi is a permutation of range(d) when d >= n_devices, a length-n_devices
    arrangement of the coordinate multiset when d < n_devices, and None for
    the identity kind.  scalars_per_message is the uplink cost of one device
    message in transmitted scalars.
    """

    kind: str
    round_index: int
    d: int
    n_devices: int
    q: int
    pi: Optional[np.ndarray]
    scalars_per_message: int

    @classmethod
    def from_permutation(cls, round_index, d, n_devices, pi) -> "CompressorRound":
        validate_kind(PERMUTATION, d, n_devices)
        pi = np.asarray(pi, dtype=np.int64)
        if d >= n_devices:
            q = d // n_devices
            if pi.shape != (d,) or not np.array_equal(np.sort(pi), np.arange(d)):
                raise ValueError("pi must be a permutation of range(d)")
            cost = q
        else:
            q = n_devices // d
            if pi.shape != (n_devices,) or not np.array_equal(
                np.sort(pi), np.repeat(np.arange(d), q)
            ):
                raise ValueError(
                    "pi must arrange the multiset with each coordinate q times"
                )
            cost = 1
        return cls(PERMUTATION, round_index, d, n_devices, q, pi, cost)


def derive_round(
    kind: str, seed: int, round_index: int, d: int, n_devices: int
) -> CompressorRound:
    """Derive the round's shared compressor from (seed, round_index).

    Every device calling this with the same arguments obtains the identical
    permutation, so no coordinate indices ever need to be communicated.
    """
    validate_kind(kind, d, n_devices)
    if kind == IDENTITY:
        return CompressorRound(IDENTITY, round_index, d, n_devices, d, None, d)
    rng = CounterRng(seed, round_index, PERM_PURPOSE)
    if d >= n_devices:
        pi = rng.permutation(d)
        return CompressorRound(
            PERMUTATION, round_index, d, n_devices, d // n_devices, pi,
            d // n_devices,
        )
    q = n_devices // d
    slots = rng.permutation(n_devices)
    pi = slots // q  # arrangement of {0,...,d-1} each repeated q times
    return CompressorRound(PERMUTATION, round_index, d, n_devices, q, pi, 1)


def compress(round_: CompressorRound, m: int, u: np.ndarray) -> np.ndarray:
    """Device m's compressed message as a full-length sparse-support vector."""
    if not 0 <= m < round_.n_devices:
        raise IndexError(f"device index {m} out of range(0, {round_.n_devices})")
    u = as_vector(u, round_.d)
    if round_.kind == IDENTITY:
        return u.copy()
    out = np.zeros(round_.d)
    if round_.d >= round_.n_devices:
        block = round_.pi[round_.q * m : round_.q * (m + 1)]
        out[block] = round_.n_devices * u[block]
    else:
        j = round_.pi[m]
        out[j] = round_.d * u[j]
    return out


def aggregate(round_: CompressorRound, inputs: np.ndarray) -> np.ndarray:
    """(1/M) sum_m Q_m(inputs[m]), evaluated without the M*(...)/M round trip.

    For d >= M the device blocks partition the coordinates, so the scale-by-M
    inside Q_m cancels the 1/M of the average exactly; placing the raw values
    keeps that cancellation exact in floating point as well.
    """
    inputs = np.asarray(inputs, dtype=np.float64)
    if inputs.shape != (round_.n_devices, round_.d):
        raise DimensionError(
            f"expected inputs of shape {(round_.n_devices, round_.d)}, "
            f"got {inputs.shape}"
        )
    if round_.kind == IDENTITY:
        return fold_mean(inputs)
    if round_.d >= round_.n_devices:
        blocks = round_.pi.reshape(round_.n_devices, round_.q)
        out = np.empty(round_.d)
        out[blocks] = inputs[np.arange(round_.n_devices)[:, None], blocks]
        return out
    out = np.zeros(round_.d)
    picked = round_.d * inputs[np.arange(round_.n_devices), round_.pi]
    np.add.at(out, round_.pi, picked)
    out /= round_.n_devices
    return out


# ---------------------------------------------------------------------------
# exact enumeration oracles
# ---------------------------------------------------------------------------


def _distinct_multiset_permutations(counts: list) -> Iterator[Tuple[int, ...]]:
    """All distinct arrangements of a multiset given per-value counts."""
    total = sum(counts)
    arrangement = [0] * total

    def rec(pos):
        if pos == total:
            yield tuple(arrangement)
            return
        for value, c in enumerate(counts):
            if c == 0:
                continue
            counts[value] -= 1
            arrangement[pos] = value
            yield from rec(pos + 1)
            counts[value] += 1

    yield from rec(0)


def enumeration_size(d: int, n_devices: int) -> int:
    if d >= n_devices:
        return math.factorial(d)
    q = n_devices // d
    return math.factorial(n_devices) // (math.factorial(q) ** d)


def enumerate_rounds(d: int, n_devices: int) -> Iterator[CompressorRound]:
    """Every realizable round, each with equal probability under derive_round."""
    validate_kind(PERMUTATION, d, n_devices)
    size = enumeration_size(d, n_devices)
    if size > _MAX_ENUMERATION:
        raise EnumerationSizeError(
            f"{size} permutations exceed the enumeration limit {_MAX_ENUMERATION}"
        )
    if d >= n_devices:
        for pi in itertools.permutations(range(d)):
            yield CompressorRound.from_permutation(0, d, n_devices, np.array(pi))
    else:
        q = n_devices // d
        for pi in _distinct_multiset_permutations([q] * d):
            yield CompressorRound.from_permutation(0, d, n_devices, np.array(pi))


def enumerate_unbiasedness(
    d: int, n_devices: int, inputs: Sequence[np.ndarray]
) -> Tuple[np.ndarray, np.ndarray]:
    """Exact expectation of (1/M) sum_m Q_m(a_m) next to the plain mean.

    Averages the aggregate over every permutation with equal weight; the two
    return values agreeing is the unbiasedness of the compressor family.
    """
    stacked = _stack_inputs(d, n_devices, inputs)
    total = np.zeros(d)
    count = 0
    for round_ in enumerate_rounds(d, n_devices):
        total += aggregate(round_, stacked)
        count += 1
    return total / count, fold_mean(stacked)


def variance_gap(
    d: int, n_devices: int, inputs: Sequence[np.ndarray]
) -> Tuple[float, float]:
    """Exact compression variance next to its empirical-variance bound.

    lhs = E ||(1/M) sum_m Q_m(a_m) - mean||^2 over all permutations;
    rhs = (1/M) sum_m ||a_m - mean||^2.  The compressor family guarantees
    lhs <= rhs.
    """
    stacked = _stack_inputs(d, n_devices, inputs)
    mean = fold_mean(stacked)
    total = 0.0
    count = 0
    for round_ in enumerate_rounds(d, n_devices):
        dev = aggregate(round_, stacked) - mean
        total += float(np.dot(dev, dev))
        count += 1
    lhs = total / count
    rhs = 0.0
    for m in range(n_devices):
        dev = stacked[m] - mean
        rhs += float(np.dot(dev, dev))
    rhs /= n_devices
    return lhs, rhs


def _stack_inputs(d: int, n_devices: int, inputs: Sequence[np.ndarray]) -> np.ndarray:
    if len(inputs) != n_devices:
        raise DimensionError(f"expected {n_devices} inputs, got {len(inputs)}")
    return np.stack([as_vector(a, d) for a in inputs])
