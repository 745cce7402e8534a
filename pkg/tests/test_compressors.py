import numpy as np
import pytest

from vi_commsim import (
    ConfigError,
    CompressorRound,
    DimensionError,
    EnumerationSizeError,
    aggregate,
    compress,
    derive_round,
    enumerate_unbiasedness,
    variance_gap,
)
from vi_commsim.compressors import (
    IDENTITY,
    PERMUTATION,
    enumerate_rounds,
    enumeration_size,
    validate_kind,
)
from vi_commsim.core import fold_mean


def test_divisibility_validation():
    validate_kind(PERMUTATION, 4, 2)
    validate_kind(PERMUTATION, 2, 4)
    validate_kind(PERMUTATION, 1, 1)  # d >= M branch with q = 1
    validate_kind(PERMUTATION, 6, 6)
    with pytest.raises(ConfigError):
        validate_kind(PERMUTATION, 4, 3)
    with pytest.raises(ConfigError):
        validate_kind(PERMUTATION, 3, 7)
    with pytest.raises(ConfigError):
        derive_round(PERMUTATION, 0, 0, 10, 4)
    with pytest.raises(ConfigError):
        validate_kind("nope", 4, 2)


def test_derive_round_deterministic():
    r1 = derive_round(PERMUTATION, 7, 3, 8, 2)
    r2 = derive_round(PERMUTATION, 7, 3, 8, 2)
    assert np.array_equal(r1.pi, r2.pi)
    assert r1.q == 4 and r1.scalars_per_message == 4
    r3 = derive_round(PERMUTATION, 7, 4, 8, 2)
    assert not np.array_equal(r1.pi, r3.pi)


def test_derive_round_multiset_branch():
    r = derive_round(PERMUTATION, 9, 0, 2, 4)
    assert r.pi.shape == (4,)
    assert sorted(r.pi.tolist()) == [0, 0, 1, 1]
    assert r.q == 2 and r.scalars_per_message == 1


def test_compress_hand_example_blocks():
    # d=4, M=2, u=(1,2,3,4), coordinate order (3,1,4,2) in 1-based terms
    u = np.array([1.0, 2.0, 3.0, 4.0])
    r = CompressorRound.from_permutation(0, 4, 2, np.array([2, 0, 3, 1]))
    assert np.array_equal(compress(r, 0, u), [2.0, 0.0, 6.0, 0.0])
    assert np.array_equal(compress(r, 1, u), [0.0, 4.0, 0.0, 8.0])
    mean = 0.5 * (compress(r, 0, u) + compress(r, 1, u))
    assert np.array_equal(mean, u)


def test_compress_zero_vector():
    r = derive_round(PERMUTATION, 1, 0, 4, 2)
    for m in range(2):
        assert np.array_equal(compress(r, m, np.zeros(4)), np.zeros(4))


def test_compress_hand_example_multiset():
    # d=2, M=4, arrangement (2,1,1,2) in 1-based terms
    r = CompressorRound.from_permutation(0, 2, 4, np.array([1, 0, 0, 1]))
    u = np.array([5.0, 7.0])
    outs = [compress(r, m, u) for m in range(4)]
    assert np.array_equal(outs[0], [0.0, 14.0])
    assert np.array_equal(outs[1], [10.0, 0.0])
    assert np.array_equal(outs[2], [10.0, 0.0])
    assert np.array_equal(outs[3], [0.0, 14.0])
    assert np.allclose(fold_mean(np.stack(outs)), u, atol=1e-15)


def test_compress_support_size():
    r = derive_round(PERMUTATION, 5, 2, 12, 3)
    u = np.arange(1.0, 13.0)
    for m in range(3):
        assert np.count_nonzero(compress(r, m, u)) == 4
    r2 = derive_round(PERMUTATION, 5, 2, 3, 6)
    for m in range(6):
        assert np.count_nonzero(compress(r2, m, np.array([1.0, 2.0, 3.0]))) == 1


def test_compress_errors():
    r = derive_round(PERMUTATION, 0, 0, 4, 2)
    with pytest.raises(IndexError):
        compress(r, 2, np.zeros(4))
    with pytest.raises(DimensionError):
        compress(r, 0, np.zeros(5))


@pytest.mark.parametrize("d,n_devices", [(4, 2), (6, 3), (8, 4), (9, 3), (12, 3)])
def test_partition_identity_bitwise(d, n_devices):
    # same input everywhere: the aggregate reproduces it bit for bit,
    # including device counts that are not powers of two
    rng = np.random.default_rng(17)
    for k in range(50):
        r = derive_round(PERMUTATION, 23, k, d, n_devices)
        u = rng.standard_normal(d) * 10.0 ** float(rng.integers(-6, 7))
        agg = aggregate(r, np.tile(u, (n_devices, 1)))
        assert np.array_equal(agg, u)


def test_aggregate_matches_literal_definition():
    rng = np.random.default_rng(18)
    for d, M in [(4, 2), (6, 3), (2, 4), (3, 6)]:
        for k in range(20):
            r = derive_round(PERMUTATION, 5, k, d, M)
            inputs = rng.standard_normal((M, d))
            literal = fold_mean(np.stack([compress(r, m, inputs[m]) for m in range(M)]))
            assert np.allclose(aggregate(r, inputs), literal, atol=1e-12)


def test_identity_round():
    r = derive_round(IDENTITY, 0, 0, 5, 3)
    u = np.arange(5.0)
    assert np.array_equal(compress(r, 1, u), u)
    assert r.scalars_per_message == 5
    inputs = np.random.default_rng(3).standard_normal((3, 5))
    assert np.array_equal(aggregate(r, inputs), fold_mean(inputs))


def test_enumeration_size_and_guard():
    assert enumeration_size(4, 2) == 24
    assert enumeration_size(2, 4) == 6
    with pytest.raises(EnumerationSizeError):
        list(enumerate_rounds(12, 2))


def test_enumerate_rounds_multiset_content():
    rounds = list(enumerate_rounds(2, 4))
    assert len(rounds) == 6
    seen = {tuple(r.pi.tolist()) for r in rounds}
    assert len(seen) == 6
    for pi in seen:
        assert sorted(pi) == [0, 0, 1, 1]


def test_derived_round_is_member_of_enumeration():
    members = {tuple(r.pi.tolist()) for r in enumerate_rounds(4, 2)}
    for k in range(30):
        r = derive_round(PERMUTATION, 99, k, 4, 2)
        assert tuple(r.pi.tolist()) in members


def test_unbiasedness_equal_inputs_every_realization():
    u = np.array([0.3, -1.2, 4.0, 0.07])
    for r in enumerate_rounds(4, 2):
        assert np.array_equal(aggregate(r, np.tile(u, (2, 1))), u)
    est, true = enumerate_unbiasedness(4, 2, [u, u])
    assert np.allclose(est, true, atol=1e-15)


def test_unbiasedness_hand_case():
    est, true = enumerate_unbiasedness(
        2, 2, [np.array([1.0, 0.0]), np.array([0.0, 1.0])]
    )
    assert np.allclose(est, [0.5, 0.5], atol=1e-15)
    assert np.allclose(true, [0.5, 0.5], atol=1e-15)


def test_unbiasedness_multiset_random():
    rng = np.random.default_rng(4)
    for _ in range(10):
        inputs = [rng.standard_normal(2) for _ in range(4)]
        est, true = enumerate_unbiasedness(2, 4, inputs)
        assert np.allclose(est, true, atol=1e-12)


def test_variance_gap_zero_case():
    u = np.array([1.0, 2.0, 3.0, 4.0])
    lhs, rhs = variance_gap(4, 2, [u, u])
    assert lhs == 0.0 and rhs == 0.0


def test_variance_gap_hand_case_equality():
    lhs, rhs = variance_gap(2, 2, [np.array([1.0, 0.0]), np.array([0.0, 1.0])])
    assert abs(lhs - 0.5) <= 1e-15
    assert abs(rhs - 0.5) <= 1e-15


def test_variance_gap_bound_random():
    rng = np.random.default_rng(5)
    for _ in range(100):
        inputs = [rng.standard_normal(4) for _ in range(2)]
        lhs, rhs = variance_gap(4, 2, inputs)
        assert lhs <= rhs + 1e-12
