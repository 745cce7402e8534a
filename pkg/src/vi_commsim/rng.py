"""Counter-based deterministic randomness.

Every random decision in a simulated run is derived from a Philox counter
cipher keyed by ``(seed, purpose)`` with the round index placed in the
counter block.  Draws for one (seed, round, purpose) triple are therefore
independent of how many draws any other triple consumed, which is what lets
every simulated device reconstruct the same per-round permutation, and lets
the sync coin flips stay fixed when the permutation stream is ablated.
"""

from __future__ import annotations

import numpy as np

# purpose tags used by the solver
PERM_PURPOSE = "perm"
SYNC_PURPOSE = "sync"

_KEY_SALT = 0x9E3779B97F4A7C15  # 2^64 / golden ratio, decorrelates short seeds
_U64 = np.uint64


def _purpose_word(purpose: str) -> int:
    raw = purpose.encode("utf-8")
    if not 1 <= len(raw) <= 8:
        raise ValueError(f"purpose tag must be 1..8 bytes, got {purpose!r}")
    return int.from_bytes(raw.ljust(8, b"\0"), "little")


def _philox(seed: int, round_index: int, purpose: str) -> np.random.Philox:
    if round_index < 0:
        raise ValueError("round index must be nonnegative")
    key = np.array([seed & 0xFFFFFFFFFFFFFFFF, _KEY_SALT], dtype=_U64)
    # counter word 0 is incremented by the generator itself as words are drawn
    counter = np.array(
        [0, round_index, _purpose_word(purpose), 0x5649434F4D4D5349], dtype=_U64
    )
    return np.random.Philox(counter=counter, key=key)


class CounterRng:
    """Deterministic word stream for one (seed, round, purpose) triple."""

    _CHUNK = 64

    def __init__(self, seed: int, round_index: int, purpose: str):
        self._bitgen = _philox(seed, round_index, purpose)
        self._buf = np.empty(0, dtype=_U64)
        self._pos = 0

    def _refill(self, n: int) -> None:
        self._buf = self._bitgen.random_raw(max(n, self._CHUNK))
        self._pos = 0

    def raw_words(self, n: int) -> np.ndarray:
        """Next n raw 64-bit words of the stream."""
        if self._pos + n > len(self._buf):
            left = np.asarray(self._buf[self._pos:], dtype=_U64)
            self._refill(n - len(left))
            self._buf = np.concatenate([left, self._buf])
        out = self._buf[self._pos : self._pos + n]
        self._pos += n
        return out

    def uniform(self) -> float:
        # top 53 bits -> [0, 1), the standard double conversion
        return float(int(self.raw_words(1)[0]) >> 11) * 2.0**-53

    def bernoulli(self, p: float) -> bool:
        return self.uniform() < p

    def permutation(self, n: int) -> np.ndarray:
        """Uniform permutation of range(n) via Fisher-Yates.

        Swap targets are drawn with masked rejection so each is exactly
        uniform; the rejection passes consume words in slot order, which keeps
        the stream layout platform-independent.
        """
        if n <= 0:
            raise ValueError("permutation size must be positive")
        if n == 1:
            return np.zeros(1, dtype=np.int64)
        bounds = np.arange(n, 1, -1, dtype=_U64)  # i+1 for i = n-1 .. 1
        masks = (
            _U64(1) << _U64(np.ceil(np.log2(bounds.astype(np.float64))))
        ) - _U64(1)
        draws = np.empty(n - 1, dtype=_U64)
        pending = np.arange(n - 1)
        while pending.size:
            cand = self.raw_words(pending.size) & masks[pending]
            ok = cand < bounds[pending]
            draws[pending[ok]] = cand[ok]
            pending = pending[~ok]
        perm = list(range(n))
        for slot, j in enumerate(draws.tolist()):
            i = n - 1 - slot
            perm[i], perm[j] = perm[j], perm[i]
        return np.array(perm, dtype=np.int64)

    def generator(self) -> np.random.Generator:
        """numpy Generator over the remaining stream (bulk normal draws etc.)."""
        return np.random.Generator(self._bitgen)


def round_rng(seed: int, round_index: int, purpose: str) -> CounterRng:
    return CounterRng(seed, round_index, purpose)


def sync_bit(seed: int, round_index: int, gamma: float) -> bool:
    """The shared Bernoulli(gamma) bit for one round."""
    return CounterRng(seed, round_index, SYNC_PURPOSE).bernoulli(gamma)


def round_permutation(seed: int, round_index: int, n: int) -> np.ndarray:
    """The shared permutation for one round."""
    return CounterRng(seed, round_index, PERM_PURPOSE).permutation(n)
