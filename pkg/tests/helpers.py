"""Shared test fixtures and independent oracles."""

import numpy as np

from vi_commsim import BilinearSaddleInstance


def scalar_hand_instance(lam=0.5, sigma=0.0):
    """Single-device bilinear instance with A=2, a=1, b=-1 (solvable by hand)."""
    return BilinearSaddleInstance(
        n_devices=1,
        block_dim=1,
        A=np.array([[[2.0]]]),
        a=np.array([[1.0]]),
        b=np.array([[-1.0]]),
        lam=lam,
        sigma=sigma,
        seed=0,
    )


def svd_norm(mat):
    """Dense SVD spectral norm; the oracle power iteration is checked against."""
    return float(np.linalg.svd(np.asarray(mat, float), compute_uv=False)[0])


def enumerate_delta_stats(inst, z, z_prev, w_prev, alpha):
    """Exact mean/variance of the aggregated update direction over every
    permutation, computed straight from the definitions."""
    from vi_commsim.compressors import aggregate, enumerate_rounds

    oracle = inst.oracle
    F_z = oracle.eval_all(z)
    F_zp = oracle.eval_all(z_prev)
    F_wp = oracle.eval_all(w_prev)
    deltas = F_z - F_wp + alpha * (F_z - F_zp)
    F_w_prev = oracle.eval_global(w_prev)
    realizations = [
        aggregate(r, deltas) + F_w_prev
        for r in enumerate_rounds(oracle.dim, oracle.n_devices)
    ]
    stacked = np.stack(realizations)
    mean = stacked.mean(axis=0)
    var = float(np.mean([np.dot(d, d) for d in stacked - mean]))
    return mean, var
