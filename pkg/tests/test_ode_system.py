import math

import numpy as np
import pytest

from scale_evolve.errors import ContractionCertificateFailed, InvalidInput
from scale_evolve.evolution_core import DiagonalGenerator, oracle_propagate
from scale_evolve.fixtures import (
    decaying_column_model,
    invariant_block_model,
    random_ode_model,
)
from scale_evolve.ode_system import (
    OdeModel,
    build_horizon,
    contraction_propagator,
    solve_system,
    truncation_study,
    validate_conditions,
)
from scale_evolve.ovcyannikov import EvolveOptions
from scale_evolve.scale_operator import OperatorMatrix, band_matrix
from scale_evolve.scale_space import ScaleVector, norm_alpha

EMPTY = OperatorMatrix.from_coo([])


def pure_death(N: int = 8) -> OdeModel:
    return OdeModel(DiagonalGenerator(np.arange(1.0, N + 1.0)), EMPTY, EMPTY, 0.0)


def test_q_is_zero_without_birth():
    m = pure_death()
    rep = validate_conditions(m, [0.5, 1.0, 2.0], [0.1, 0.5])
    assert all(q == 0.0 for _, q in rep.q_values)
    assert rep.q_pass and rep.M.is_zero()
    assert rep.passed


def test_q_closed_form_for_proportional_subdiagonal():
    # b_{k+1,k} = beta d_k gives q(alpha) = beta e^alpha exactly
    N, beta = 10, 0.2
    d = np.arange(1.0, N + 1.0)
    b = band_matrix(N, {1: beta * d[:-1]})
    m = OdeModel(DiagonalGenerator(d), b, EMPTY, 0.0)
    rep = validate_conditions(m, [0.5, 1.0], [0.5])
    for a, q in rep.q_values:
        assert q == pytest.approx(beta * math.exp(a), rel=1e-13)
    assert rep.q_pass  # 0.2 e < 1 at alpha = 0.5; 0.2 e at 1.0 still < 1


def test_q_detects_violation():
    N = 6
    d = np.ones(N)
    b = band_matrix(N, {1: 2.0 * np.ones(N - 1)})
    m = OdeModel(DiagonalGenerator(d), b, EMPTY, 0.0)
    rep = validate_conditions(m, [1.0], [0.5])
    assert not rep.q_pass


def test_growth_samples_flag_increasing_tail():
    N = 64
    d = np.exp(0.5 * np.arange(N))  # grows faster than e^{0.2 n}
    m = OdeModel(DiagonalGenerator(d), EMPTY, EMPTY, 0.0)
    rep = validate_conditions(m, [1.0], [0.2, 1.0])
    trends = {nu: trend for nu, _, trend in rep.e3_values}
    assert trends[0.2] is True and trends[1.0] is False


def test_contraction_certificate_failure():
    # strong birth with weak death pushes the sampled semigroup norm past 1
    N = 8
    d = 0.1 * np.ones(N)
    b = band_matrix(N, {1: 5.0 * np.ones(N - 1)})
    m = OdeModel(DiagonalGenerator(d), b, EMPTY, 0.0)
    with pytest.raises(ContractionCertificateFailed):
        contraction_propagator(m)


def test_pure_death_closed_form():
    m = pure_death(6)
    x = ScaleVector(np.eye(6)[0])
    res = solve_system(m, x, 1.0, 0.25, 0.7)
    assert res.value.entries[0] == pytest.approx(math.exp(-0.7), rel=1e-12)
    assert np.allclose(res.value.entries[1:6], 0.0)


@pytest.mark.parametrize("seed", [0, 1, 2])
def test_solve_matches_dense_oracle(seed):
    m, x = random_ode_model(seed, N=32)
    alpha, ap = 1.0, 0.25
    hz = build_horizon(m, np.linspace(0.3, 1.5, 10))
    t = 0.5 * hz.T(ap, alpha)
    res = solve_system(m, x, alpha, ap, t, EvolveOptions(tol=1e-10), horizon=hz)
    oracle = oracle_propagate(m.full_matrix(32), 32, 0.0, t, x, tol=1e-12)
    gap = norm_alpha(ScaleVector(res.value.entries[:32] - oracle.entries[:32]), ap)
    assert gap < 1e-8


def test_solve_without_coupling_is_exact_contraction_flow():
    m, x = random_ode_model(4, N=24)
    m0 = OdeModel(m.d, m.b, EMPTY, m.alpha_star)
    hz = build_horizon(m, np.linspace(0.3, 1.5, 8))
    t = 0.3 * hz.T(0.25, 1.0)
    res = solve_system(m0, x, 1.0, 0.25, t, EvolveOptions(tol=1e-10))
    oracle = oracle_propagate(m0.full_matrix(24), 24, 0.0, t, x, tol=1e-12)
    gap = norm_alpha(ScaleVector(res.value.entries[:24] - oracle.entries[:24]), 0.25)
    assert gap < 1e-10
    assert res.series_tail == 0.0  # no perturbation terms


def test_truncation_errors_shrink_geometrically():
    m, x = decaying_column_model(N=128)
    rep = truncation_study(m, x, 1.0, 0.25, 0.5, [16, 32, 64, 128], steps=128)
    assert rep.errors[-1] == 0.0  # reference compared to itself
    e = rep.errors[:-1]
    assert e[0] > e[1] > e[2] > 0.0
    assert e[2] < 1e-6 * e[0]


def test_truncation_study_bitwise_invariance():
    m, x, N0 = invariant_block_model(N=48, N0=12)
    rep = truncation_study(m, x, 1.0, 0.25, 0.5, [16, 32, 48], steps=96)
    assert rep.errors == (0.0, 0.0, 0.0)


def test_truncation_study_rejects_unsorted_lists():
    m, x = decaying_column_model(N=32)
    with pytest.raises(InvalidInput):
        truncation_study(m, x, 1.0, 0.25, 0.5, [32, 16])


def test_study_report_serialization():
    m, x = decaying_column_model(N=32)
    rep = truncation_study(m, x, 1.0, 0.25, 0.25, [16, 32], steps=64)
    csv = rep.to_csv()
    assert csv.splitlines()[0] == "N,e_N"
    assert len(csv.splitlines()) == 3
    d = rep.to_dict()
    assert d["N"] == [16, 32] and len(d["e_N"]) == 2


def test_model_requires_positive_death_rates():
    with pytest.raises(InvalidInput):
        OdeModel(DiagonalGenerator(np.array([0.0, 1.0])), EMPTY, EMPTY, 0.0)
