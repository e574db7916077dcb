import math

import numpy as np
import pytest
from scipy.linalg import expm

from scale_evolve.errors import InvalidInput, TimeOrderViolation
from scale_evolve.evolution_core import (
    DiagonalGenerator,
    Propagator,
    PropagatorSpec,
    diag_propagate,
    estimate_K,
    oracle_propagate,
    residual_A3,
    sparse_rk4,
)
from scale_evolve.scale_operator import (
    OperatorFamily,
    OperatorMatrix,
    band_matrix,
    diagonal_matrix,
)
from scale_evolve.scale_space import ScaleVector

RNG = np.random.default_rng(7)


def test_diag_propagate_closed_form():
    g = DiagonalGenerator(np.array([0.0, 1.0, 2.0]))
    u = ScaleVector(np.array([1.0, 1.0, 1.0]), tail_alpha=2.0, tail_bound=0.5)
    out = diag_propagate(g, 0.0, 0.7, u)
    assert np.allclose(out.entries[:3], np.exp(-0.7 * np.array([0.0, 1.0, 2.0])))
    assert out.tail_bound == 0.5 and out.tail_alpha == 2.0


def test_diag_propagate_rejects_reversed_times():
    g = DiagonalGenerator(np.array([1.0]))
    with pytest.raises(TimeOrderViolation):
        diag_propagate(g, 1.0, 0.0, ScaleVector(np.array([1.0])))


def test_oracle_propagate_matches_matrix_exponential():
    N = 10
    a = RNG.normal(size=(N, N)) * 0.5
    B = OperatorMatrix.from_dense(a)
    u = ScaleVector(RNG.normal(size=N))
    out = oracle_propagate(B, N, 0.0, 0.8, u, tol=1e-12)
    expect = expm(0.8 * a) @ u.entries
    assert np.allclose(out.entries[:N], expect, rtol=1e-8, atol=1e-10)


def test_propagator_caches_and_transposes():
    a = RNG.normal(size=(6, 6)) * 0.3
    spec = PropagatorSpec("truncated_matrix", OperatorMatrix.from_dense(a))
    prop = Propagator(spec, 6)
    v = RNG.normal(size=6)
    assert np.allclose(prop.act(0.4, v), expm(0.4 * a) @ v)
    assert np.allclose(prop.transposed().dense(0.4), expm(0.4 * a).T)
    assert np.allclose(prop.act(0.0, v), v)


def test_sparse_rk4_fourth_order_accuracy():
    N = 8
    a = RNG.normal(size=(N, N)) * 0.4
    B = OperatorMatrix.from_dense(a)
    u0 = RNG.normal(size=N)
    exact = expm(1.0 * a) @ u0
    errs = []
    for steps in (8, 16, 32):
        got = sparse_rk4(B, u0, 0.0, 1.0, steps)[-1]
        errs.append(float(np.max(np.abs(got - exact))))
    # each halving of h should cut the error by roughly 2^4
    assert errs[0] / errs[1] > 10.0
    assert errs[1] / errs[2] > 10.0


def test_sparse_rk4_truncation_is_bitwise_invariant_on_invariant_blocks():
    # couplings vanish across index 4, so the first block evolves
    # identically no matter how many trailing zero coordinates ride along
    sub = np.zeros(3)
    sub[:] = [0.5, -0.25, 0.125]
    up = np.zeros(7)
    up[:3] = [0.3, 0.6, -0.2]
    B = band_matrix(8, {1: up, -1: np.concatenate([sub, np.zeros(4)])})
    u_small = np.zeros(8)
    u_small[:3] = [1.0, -2.0, 0.5]
    small = sparse_rk4(B, u_small[:5].copy(), 0.0, 1.0, 64)
    big = sparse_rk4(B, u_small, 0.0, 1.0, 64)
    assert np.array_equal(small[:, :5], big[:, :5])
    assert np.all(big[:, 5:] == 0.0)


def test_sparse_rk4_rejects_off_grid_record_points():
    B = diagonal_matrix(np.array([-1.0]))
    with pytest.raises(InvalidInput):
        sparse_rk4(B, np.array([1.0]), 0.0, 1.0, 10, record_at=np.array([0.05]))


def test_estimate_K_diagonal_is_one():
    spec = PropagatorSpec("diagonal", DiagonalGenerator(np.arange(5.0)))
    assert estimate_K(spec, [(0.5, 1.0)], [0.1, 0.2]) == 1.0


def test_estimate_K_bounds_sampled_propagator_norms():
    a = -np.eye(6) + 0.1 * RNG.normal(size=(6, 6))
    spec = PropagatorSpec("truncated_matrix", OperatorMatrix.from_dense(a))
    K = estimate_K(spec, [(0.25, 1.0), (0.5, 1.5)], np.linspace(0.0, 1.0, 9))
    from scale_evolve.scale_operator import operator_norm

    for tau in np.linspace(0.0, 1.0, 9):
        m = OperatorMatrix.from_dense(expm(tau * a))
        assert operator_norm(m, 1.0, 0.25) <= K + 1e-12
        assert operator_norm(m, 1.5, 0.5) <= K + 1e-12


@pytest.mark.parametrize("direction", ["forward", "backward"])
def test_residual_A3_small_for_true_generator(direction):
    N = 8
    a = RNG.normal(size=(N, N)) * 0.3
    spec = PropagatorSpec("truncated_matrix", OperatorMatrix.from_dense(a))
    fam = OperatorFamily("constant", [OperatorMatrix.from_dense(a)], [0.0])
    u = ScaleVector(RNG.normal(size=N))
    r = residual_A3(spec, fam, 0.0, 0.6, u, direction, 1.0, 0.6, 0.25, panels=64)
    assert r < 1e-9


def test_residual_A3_detects_wrong_generator():
    N = 6
    a = RNG.normal(size=(N, N)) * 0.3
    spec = PropagatorSpec("truncated_matrix", OperatorMatrix.from_dense(a))
    fam = OperatorFamily("constant", [OperatorMatrix.from_dense(2.0 * a)], [0.0])
    u = ScaleVector(RNG.normal(size=N))
    r = residual_A3(spec, fam, 0.0, 0.6, u, "forward", 1.0, 0.6, 0.25)
    assert r > 1e-3


def test_residual_A3_converges_with_panels():
    N = 6
    a = RNG.normal(size=(N, N)) * 0.4
    spec = PropagatorSpec("truncated_matrix", OperatorMatrix.from_dense(a))
    fam = OperatorFamily("constant", [OperatorMatrix.from_dense(a)], [0.0])
    u = ScaleVector(RNG.normal(size=N))
    r16 = residual_A3(spec, fam, 0.0, 0.8, u, "forward", 1.0, 0.6, 0.25, panels=16)
    r64 = residual_A3(spec, fam, 0.0, 0.8, u, "forward", 1.0, 0.6, 0.25, panels=64)
    assert r64 < r16


def test_rates_pad_with_zeros_beyond_support():
    g = DiagonalGenerator(np.array([1.0, 2.0, 4.0]))
    assert np.array_equal(g.rates(3), [1.0, 2.0, 4.0])
    assert np.array_equal(g.rates(5)[3:], [0.0, 0.0])
    with pytest.raises(InvalidInput):
        DiagonalGenerator(np.array([-1.0]))
