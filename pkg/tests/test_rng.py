import itertools

import numpy as np
import pytest

from vi_commsim.rng import (
    PERM_PURPOSE,
    SYNC_PURPOSE,
    CounterRng,
    round_permutation,
    sync_bit,
)


def test_same_key_same_stream():
    a = CounterRng(123, 5, PERM_PURPOSE).raw_words(32)
    b = CounterRng(123, 5, PERM_PURPOSE).raw_words(32)
    assert np.array_equal(a, b)


def test_streams_differ_across_rounds_and_purposes():
    base = CounterRng(123, 5, PERM_PURPOSE).raw_words(8)
    other_round = CounterRng(123, 6, PERM_PURPOSE).raw_words(8)
    other_purpose = CounterRng(123, 5, SYNC_PURPOSE).raw_words(8)
    other_seed = CounterRng(124, 5, PERM_PURPOSE).raw_words(8)
    assert not np.array_equal(base, other_round)
    assert not np.array_equal(base, other_purpose)
    assert not np.array_equal(base, other_seed)


def test_buffered_reads_match_one_shot():
    one = CounterRng(9, 0, "t").raw_words(150)
    rng = CounterRng(9, 0, "t")
    parts = [rng.raw_words(n) for n in (1, 2, 96, 51)]
    assert np.array_equal(one, np.concatenate(parts))


@pytest.mark.parametrize("n", [1, 2, 3, 5, 17, 64, 200])
def test_permutation_is_valid(n):
    for k in range(5):
        pi = CounterRng(77, k, PERM_PURPOSE).permutation(n)
        assert sorted(pi.tolist()) == list(range(n))


def test_permutation_deterministic_and_round_keyed():
    p1 = round_permutation(42, 3, 12)
    p2 = round_permutation(42, 3, 12)
    p3 = round_permutation(42, 4, 12)
    assert np.array_equal(p1, p2)
    assert not np.array_equal(p1, p3)


def test_permutation_uniform_frequencies():
    # 10^4 rounds at n=4: every one of the 24 permutations should land within
    # 1/24 +- 0.01 (about 4.9 sigma for a multinomial at this sample size)
    counts = {p: 0 for p in itertools.permutations(range(4))}
    rounds = 10_000
    for k in range(rounds):
        counts[tuple(round_permutation(2024, k, 4).tolist())] += 1
    for p, c in counts.items():
        assert abs(c / rounds - 1 / 24) <= 0.01, (p, c)


def test_sync_bit_frequency_sane():
    draws = [sync_bit(5150, k, 0.25) for k in range(2000)]
    freq = np.mean(draws)
    # 4 sigma band around 0.25
    assert abs(freq - 0.25) <= 4 * np.sqrt(0.25 * 0.75 / 2000)


def test_sync_bits_independent_of_permutation_draws():
    bits = [sync_bit(31, k, 0.5) for k in range(50)]
    # consuming permutation randomness must not shift the sync stream
    for k in range(50):
        round_permutation(31, k, 16)
    assert bits == [sync_bit(31, k, 0.5) for k in range(50)]


def test_uniform_in_unit_interval():
    rng = CounterRng(1, 0, "u")
    xs = [rng.uniform() for _ in range(1000)]
    assert all(0.0 <= x < 1.0 for x in xs)
    assert 0.4 < np.mean(xs) < 0.6


def test_purpose_tag_limits():
    with pytest.raises(ValueError):
        CounterRng(1, 0, "way-too-long-tag")
    with pytest.raises(ValueError):
        CounterRng(1, -1, "x")
