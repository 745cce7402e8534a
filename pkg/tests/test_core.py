import numpy as np
import pytest

from vi_commsim import (
    DimensionError,
    IndicatorBall,
    OperatorOracle,
    ProblemConstants,
    ScaledL2,
    Zero,
    dist_sq,
    prox,
)
from vi_commsim.core import fold_mean

from helpers import scalar_hand_instance


def test_dist_sq_examples():
    assert dist_sq(np.zeros(2), np.zeros(2)) == 0.0
    assert dist_sq(np.array([1.0, 0]), np.array([0, 1.0])) == 2.0
    assert dist_sq(np.array([3.0, 4.0]), np.zeros(2)) == 25.0


def test_dist_sq_dimension_mismatch():
    with pytest.raises(DimensionError):
        dist_sq(np.zeros(2), np.zeros(3))


def test_prox_zero_is_identity():
    v = np.array([3.0, -2.0])
    assert np.array_equal(prox(Zero(), 0.1, v), v)


def test_prox_ball_radial_projection():
    g = IndicatorBall(1.0, np.zeros(2))
    out = prox(g, 1.0, np.array([3.0, 4.0]))
    assert np.allclose(out, [0.6, 0.8], atol=1e-15)
    # interior points are untouched
    v = np.array([0.1, -0.2])
    assert np.array_equal(prox(g, 1.0, v), v)


def test_prox_scaled_l2_shrinkage():
    out = prox(ScaledL2(1.0), 1.0, np.array([4.0]))
    assert np.array_equal(out, [2.0])


def test_prox_rejects_bad_eta():
    for g in (Zero(), IndicatorBall(1.0, np.zeros(1)), ScaledL2(1.0)):
        with pytest.raises(ValueError):
            g.prox(0.0, np.zeros(1))


def test_prox_nonexpansive():
    rng = np.random.default_rng(7)
    terms = [
        Zero(),
        IndicatorBall(1.3, rng.standard_normal(6)),
        ScaledL2(2.5),
    ]
    for g in terms:
        for _ in range(200):
            u = 3 * rng.standard_normal(6)
            v = 3 * rng.standard_normal(6)
            eta = float(rng.uniform(0.01, 5.0))
            lhs = np.linalg.norm(g.prox(eta, u) - g.prox(eta, v))
            assert lhs <= np.linalg.norm(u - v) + 1e-12


def test_ball_output_feasible():
    rng = np.random.default_rng(8)
    center = rng.standard_normal(5)
    g = IndicatorBall(0.7, center)
    for _ in range(200):
        out = g.prox(1.0, 10 * rng.standard_normal(5))
        assert np.linalg.norm(out - center) <= 0.7 + 1e-12


def test_oracle_mean_of_linear_devices():
    oracle = OperatorOracle(2, 1, local_fns=[lambda z: 2 * z, lambda z: 0 * z])
    assert np.array_equal(oracle.eval_global(np.array([1.0])), [1.0])
    assert np.array_equal(oracle.eval_local(0, np.array([1.0])), [2.0])


def test_oracle_symmetric_cancellation():
    oracle = OperatorOracle(2, 1, local_fns=[lambda z: z + 1, lambda z: z - 1])
    assert np.array_equal(oracle.eval_global(np.zeros(1)), [0.0])


def test_oracle_single_device_degeneracy():
    oracle = OperatorOracle(1, 3, local_fns=[lambda z: 3 * z])
    z = np.array([1.0, -2.0, 0.5])
    assert np.array_equal(oracle.eval_global(z), oracle.eval_local(0, z))


def test_oracle_index_and_dim_errors():
    oracle = OperatorOracle(2, 2, local_fns=[lambda z: z, lambda z: z])
    with pytest.raises(IndexError):
        oracle.eval_local(2, np.zeros(2))
    with pytest.raises(IndexError):
        oracle.eval_local(-1, np.zeros(2))
    with pytest.raises(DimensionError):
        oracle.eval_global(np.zeros(3))


def test_scalar_instance_evaluations():
    inst = scalar_hand_instance()
    oracle = inst.oracle
    assert np.array_equal(oracle.eval_global(np.zeros(2)), [1.0, 1.0])
    z_star = np.array([6 / 17, -10 / 17])
    assert np.linalg.norm(oracle.eval_global(z_star)) <= 1e-10


def test_mean_consistency_exact():
    # the global value must equal the ascending left fold of the locals exactly
    rng = np.random.default_rng(11)
    mats = rng.standard_normal((13, 4, 4))
    oracle = OperatorOracle(
        13, 4, local_fns=[(lambda z, A=A: A @ z) for A in mats]
    )
    for _ in range(20):
        z = rng.standard_normal(4)
        rows = np.stack([oracle.eval_local(m, z) for m in range(13)])
        assert np.array_equal(oracle.eval_global(z), fold_mean(rows))


def test_constants_validation():
    with pytest.raises(ValueError):
        ProblemConstants(L=1.0, mu=0.0, delta=0.0)
    with pytest.raises(ValueError):
        ProblemConstants(L=1.0, mu=2.0, delta=0.0)
    with pytest.raises(ValueError):
        ProblemConstants(L=1.0, mu=0.5, delta=-1.0)
    ProblemConstants(L=1.0, mu=1.0, delta=0.0)
