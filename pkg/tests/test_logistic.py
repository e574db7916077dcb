import itertools
import math

import numpy as np
import pytest
from scipy.linalg import expm

from scale_evolve.errors import (
    InvalidInput,
    InvalidScalePair,
    TruncationUnsoundWarning,
)
from scale_evolve.fixtures import random_logistic_params
from scale_evolve.logistic import (
    Hierarchy,
    HierarchyOperator,
    LogisticParams,
    build_discrete_operators,
    check_G,
    continuum_bounds,
    correlation_norm,
    evolve_hierarchy,
    flatten_hierarchy,
    flatten_operator,
    hierarchy_norm,
    hierarchy_pairing,
    k_inverse,
    k_transform,
    kernel_matrix,
    lp_integral,
    random_hierarchy,
    stacked_generator,
    symmetrize_component,
    symmetrize_kernel,
    unflatten_hierarchy,
)
from scale_evolve.ovcyannikov import EvolveOptions
from scale_evolve.scale_operator import operator_norm
from scale_evolve.scale_space import dual_pairing

E = math.e


def indicator_hierarchy(L: int, N_max: int, h: float) -> Hierarchy:
    """G(eta) = 1 for every configuration up to N_max."""
    comps = [np.ones((L,) * n) for n in range(N_max + 1)]
    return Hierarchy(tuple(comps), kind="quasiobservable", h=h)


def test_symmetrize_kernel_is_bitwise_symmetric():
    rng = np.random.default_rng(0)
    for L in (3, 8, 17):
        a = symmetrize_kernel(rng.random(L))
        for j in range(L):
            assert a[j] == a[(L - j) % L]


def test_params_reject_asymmetric_kernels():
    with pytest.raises(InvalidInput):
        LogisticParams(
            m=1.0,
            a_plus=np.array([0.0, 1.0, 0.0, 0.0]),
            a_minus=np.zeros(4),
            theta=1.0,
        )


def test_lp_integral_of_indicators():
    # sum_n (Lh)^n / n! -> e^{Lh} truncated; with weight alpha it is
    # sum (Lh e^alpha)^n / n!
    L, h, N = 4, 0.5, 3
    G = indicator_hierarchy(L, N, h)
    expect = sum((L * h) ** n / math.factorial(n) for n in range(N + 1))
    assert lp_integral(G, 0.0) == pytest.approx(expect, rel=1e-14)
    a = 0.3
    expect_a = sum(
        (L * h * math.exp(a)) ** n / math.factorial(n) for n in range(N + 1)
    )
    assert lp_integral(G, a) == pytest.approx(expect_a, rel=1e-14)
    assert hierarchy_norm(G, a) == pytest.approx(expect_a, rel=1e-14)


def test_correlation_norm_is_weighted_sup():
    comps = (np.array(2.0), np.array([1.0, -3.0]), np.full((2, 2), 0.5))
    k = Hierarchy(comps, kind="correlation")
    a = 0.7
    expect = max(2.0, 3.0 * math.exp(-a), 0.5 * math.exp(-2 * a))
    assert correlation_norm(k, a) == pytest.approx(expect)


def test_k_transform_counts_subsets():
    # G = indicator: (KG)(gamma) = number of subsets of gamma up to N_max
    L, N = 5, 3
    G = indicator_hierarchy(L, N, 1.0)
    gamma = (0, 2, 4)
    assert k_transform(G, gamma) == pytest.approx(8.0)  # 2^3 subsets
    assert k_transform(G, ()) == pytest.approx(1.0)


def test_k_transform_warns_on_truncated_subset_sum():
    G = indicator_hierarchy(3, 1, 1.0)
    with pytest.warns(TruncationUnsoundWarning):
        k_transform(G, (0, 1))


def test_k_inverse_recovers_hierarchy():
    rng = np.random.default_rng(3)
    G = random_hierarchy(rng, L=4, N_max=2)
    for eta in [(), (1,), (0, 2), (3, 3)]:
        recovered = k_inverse(lambda xi: k_transform(G, xi), eta)
        assert recovered == pytest.approx(G.value(eta), abs=1e-12)


def test_k_transform_of_vacuum_constant():
    c = 2.5
    comps = (np.array(c), np.zeros(3), np.zeros((3, 3)))
    G = Hierarchy(comps, kind="quasiobservable")
    for gamma in [(), (0,), (0, 1), (2, 2)]:
        assert k_transform(G, gamma) == pytest.approx(c)


def test_check_G_passes_for_dominating_competition():
    L = 8
    a_plus = symmetrize_kernel(np.full(L, 0.1))
    a_minus = symmetrize_kernel(np.full(L, 0.5))
    p = LogisticParams(m=1.0, a_plus=a_plus, a_minus=a_minus, theta=2.0, b=0.0)
    rep = check_G(p, n_max=4, n_samples=200, seed=1)
    assert rep.passed and rep.pairwise_ok
    assert rep.min_margin >= 0.0


def test_check_G_fails_when_dispersal_dominates():
    L = 8
    a_plus = symmetrize_kernel(np.full(L, 1.0))
    a_minus = symmetrize_kernel(np.full(L, 0.01))
    p = LogisticParams(m=1.0, a_plus=a_plus, a_minus=a_minus, theta=2.0, b=0.0)
    rep = check_G(p, n_max=4, n_samples=200, seed=1)
    assert not rep.passed and not rep.pairwise_ok
    assert rep.min_margin < 0.0


def test_check_G_b_offset_rescues_margin():
    L = 6
    a_plus = symmetrize_kernel(np.full(L, 0.2))
    a_minus = symmetrize_kernel(np.full(L, 0.1))
    deficit = 2.0 * 0.2 - 0.1  # theta a+ - a- per kernel entry (theta = 2)
    p_fail = LogisticParams(m=1.0, a_plus=a_plus, a_minus=a_minus, theta=2.0, b=0.0)
    assert not check_G(p_fail, n_max=2, n_samples=100, seed=0).pairwise_ok
    p_ok = LogisticParams(
        m=1.0, a_plus=a_plus, a_minus=a_minus, theta=2.0, b=deficit + 1e-9
    )
    assert check_G(p_ok, n_max=2, n_samples=100, seed=0).pairwise_ok


def test_continuum_bounds_closed_form():
    # unit mortality and vanishing kernels at gap 1: m/(e gap) = 1/e;
    # adding unit sup kernels contributes 1/(4 e^2) each.
    L = 4
    zero = np.zeros(L)
    p = LogisticParams(m=1.0, a_plus=zero, a_minus=zero, theta=1.0)
    b0, b1 = continuum_bounds(p, 1.0, 0.0)
    assert b0 == pytest.approx(1.0 / E)
    assert b1 == 0.0
    ones = symmetrize_kernel(np.ones(L))
    p2 = LogisticParams(m=1.0, a_plus=ones, a_minus=ones, theta=1.0, h=1.0)
    b0, b1 = continuum_bounds(p2, 1.0, 0.0)
    assert b0 == pytest.approx(1.0 / E + 2.0 / (4.0 * E**2))
    assert b1 == pytest.approx((L * math.exp(1.0) + L) / E)
    with pytest.raises(InvalidScalePair):
        continuum_bounds(p, 0.5, 0.5)


def test_continuum_bounds_blow_up_as_gap_closes():
    p = random_logistic_params(0, L=8)
    gaps = [1.0, 0.5, 0.25]
    vals = [continuum_bounds(p, 1.0, 1.0 - g) for g in gaps]
    assert vals[0][0] < vals[1][0] < vals[2][0]
    assert vals[0][1] < vals[1][1] < vals[2][1]


def test_flatten_norms_and_pairing_agree():
    rng = np.random.default_rng(5)
    p = random_logistic_params(5, L=4)
    G = random_hierarchy(rng, 4, 3, kind="quasiobservable", h=p.h)
    k = random_hierarchy(rng, 4, 3, kind="correlation", h=p.h)
    fg, fk = flatten_hierarchy(G), flatten_hierarchy(k)
    from scale_evolve.scale_space import dual_norm, norm_alpha

    assert norm_alpha(fg, 0.6) == pytest.approx(hierarchy_norm(G, 0.6), rel=1e-12)
    assert dual_norm(fk, 0.6) == pytest.approx(correlation_norm(k, 0.6), rel=1e-12)
    assert dual_pairing(fg, fk) == pytest.approx(hierarchy_pairing(G, k), rel=1e-12)
    G2 = unflatten_hierarchy(fg.entries, 4, 3, "quasiobservable", p.h)
    for a, b in zip(G.comps, G2.comps):
        assert np.allclose(a, b)


@pytest.mark.parametrize("seed", [0, 1, 2])
def test_flattened_duality_is_transpose_on_symmetric_data(seed):
    # the adjoint tensor rules agree with the matrix transpose up to an
    # antisymmetric part that no symmetric observable can see
    p = random_logistic_params(seed, L=4)
    L0, L1, D0, D1 = build_discrete_operators(p, 2)
    dim = 1 + 4 + 16
    rng = np.random.default_rng(seed)
    for hat_op, del_op in ((L0, D0), (L1, D1)):
        m_hat, _ = flatten_operator(hat_op, 4, 2)
        m_del, _ = flatten_operator(del_op, 4, 2)
        A = m_hat.to_dense(dim, dim)
        B = m_del.to_dense(dim, dim)
        for s in range(3):
            k = random_hierarchy(rng, 4, 2, kind="correlation", h=p.h)
            fk = flatten_hierarchy(k).entries
            diff = unflatten_hierarchy(A.T @ fk - B @ fk, 4, 2,
                                       "correlation", p.h)
            for c in diff.comps:
                assert np.max(np.abs(symmetrize_component(np.asarray(c)))) < 1e-12


@pytest.mark.parametrize("seed", [3, 4])
def test_pairing_duality_of_hierarchy_operators(seed):
    rng = np.random.default_rng(seed)
    p = random_logistic_params(seed, L=5)
    G = random_hierarchy(rng, 5, 3, kind="quasiobservable", top_level=2, h=p.h)
    k = random_hierarchy(rng, 5, 3, kind="correlation", h=p.h)
    L0, L1, D0, D1 = build_discrete_operators(p, 3)
    for hat_op, del_op in ((L0, D0), (L1, D1)):
        hg, _ = hat_op.apply(G)
        dk, _ = del_op.apply(k)
        lhs = hierarchy_pairing(hg, k)
        rhs = hierarchy_pairing(G, dk)
        assert lhs == pytest.approx(rhs, rel=1e-11, abs=1e-12)


def test_flattened_perturbation_respects_scale_bound():
    p = random_logistic_params(7, L=6)
    op = HierarchyOperator(p, "Lhat1")
    mat, defect = flatten_operator(op, 6, 3)
    assert defect == 0.0  # Lhat1 never leaves the truncation
    a_star = p.alpha_star
    for alpha, ap in [(1.0, 0.3), (1.5, 0.5), (0.8, 0.0)]:
        if ap <= a_star:
            continue
        measured = operator_norm(mat, alpha, ap)
        _, bound = continuum_bounds(p, alpha, ap)
        assert measured <= bound * (1 + 1e-12)


def test_operator_preserves_permutation_symmetry():
    rng = np.random.default_rng(9)
    p = random_logistic_params(9, L=4)
    G = random_hierarchy(rng, 4, 3, kind="quasiobservable", h=p.h)
    for which in ("Lhat0", "Lhat1"):
        out, _ = HierarchyOperator(p, which).apply(G)
        for c in out.comps:
            assert np.allclose(c, symmetrize_component(c), atol=1e-12)


def test_mortality_only_evolution_is_exact():
    L = 4
    zero = np.zeros(L)
    m = 1.3
    p = LogisticParams(m=m, a_plus=zero, a_minus=zero, theta=1.5, b=0.0, h=0.5)
    rng = np.random.default_rng(11)
    G0 = random_hierarchy(rng, L, 2, kind="quasiobservable", h=p.h)
    t = 0.4
    out, res = evolve_hierarchy(p, G0, t, alpha=1.4, alpha_prime=0.9)
    for n, c in enumerate(out.comps):
        assert np.allclose(c, math.exp(-m * n * t) * G0.comps[n], atol=1e-12)
    assert res.series_tail == 0.0


def test_evolution_identity_at_time_zero():
    p = random_logistic_params(2, L=4)
    rng = np.random.default_rng(2)
    G0 = random_hierarchy(rng, 4, 2, kind="quasiobservable", h=p.h)
    out, res = evolve_hierarchy(p, G0, 0.0, alpha=0.8, alpha_prime=0.2)
    for a, b in zip(out.comps, G0.comps):
        assert np.array_equal(a, b)


def test_closure_defect_reported_for_populated_top_level():
    p = random_logistic_params(6, L=4)
    op = HierarchyOperator(p, "Lhat0")
    rng = np.random.default_rng(6)
    G = random_hierarchy(rng, 4, 2, kind="quasiobservable", h=p.h)
    _, defect = op.apply(G)
    assert defect > 0.0
    G_low = random_hierarchy(rng, 4, 2, kind="quasiobservable", top_level=1, h=p.h)
    _, defect_low = op.apply(G_low)
    assert defect_low == 0.0


def test_quasiobservable_evolution_matches_stacked_oracle():
    p = random_logistic_params(1, L=4)
    rng = np.random.default_rng(1)
    G0 = random_hierarchy(rng, 4, 2, kind="quasiobservable", h=p.h)
    gen = stacked_generator(p, 4, 2)
    # include the closure: the truncated flat system is the oracle target
    flat0 = flatten_hierarchy(G0).entries
    t = 0.08
    out, res = evolve_hierarchy(p, G0, t, alpha=1.2, alpha_prime=0.4,
                                opts=EvolveOptions(tol=1e-11))
    expect = unflatten_hierarchy(expm(t * gen) @ flat0, 4, 2,
                                 "quasiobservable", p.h)
    for a, b in zip(out.comps, expect.comps):
        assert np.allclose(a, b, rtol=1e-7, atol=1e-9)


def test_correlation_evolution_is_adjoint_of_observable_flow():
    p = random_logistic_params(8, L=4)
    rng = np.random.default_rng(8)
    k0 = random_hierarchy(rng, 4, 2, kind="correlation", h=p.h)
    gen = stacked_generator(p, 4, 2)
    flat0 = flatten_hierarchy(k0).entries
    t = 0.06
    out, res = evolve_hierarchy(p, k0, t, alpha=1.2, alpha_prime=0.4,
                                opts=EvolveOptions(tol=1e-11))
    expect = unflatten_hierarchy(expm(t * gen).T @ flat0, 4, 2,
                                 "correlation", p.h)
    for a, b in zip(out.comps, expect.comps):
        assert np.allclose(a, b, rtol=1e-7, atol=1e-9)


def test_pairing_is_invariant_under_dual_pair_evolution():
    p = random_logistic_params(10, L=4)
    rng = np.random.default_rng(10)
    G0 = random_hierarchy(rng, 4, 2, kind="quasiobservable", h=p.h)
    k0 = random_hierarchy(rng, 4, 2, kind="correlation", h=p.h)
    t = 0.05
    Gt, _ = evolve_hierarchy(p, G0, t, 1.2, 0.4, EvolveOptions(tol=1e-11))
    kt, _ = evolve_hierarchy(p, k0, t, 1.2, 0.4, EvolveOptions(tol=1e-11))
    # <W G0, k0> == <G0, W* k0>
    lhs = hierarchy_pairing(Gt, k0)
    rhs = hierarchy_pairing(G0, kt)
    assert lhs == pytest.approx(rhs, rel=1e-8, abs=1e-10)


def test_kernel_matrix_convention():
    a = symmetrize_kernel(np.array([1.0, 2.0, 3.0, 2.0]))
    P = kernel_matrix(a)
    L = 4
    for x, y in itertools.product(range(L), repeat=2):
        assert P[x, y] == a[(x - y) % L]
    assert np.array_equal(P, P.T)
