import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra import numpy as hnp

from scale_evolve.errors import InvalidInput, RangeOverflow
from scale_evolve.scale_space import (
    DualVector,
    ScaleVector,
    basis_vector,
    dual_norm,
    dual_pairing,
    norm_alpha,
    truncate,
    weights,
)

finite_entries = hnp.arrays(
    np.float64,
    st.integers(1, 20),
    elements=st.floats(-1e6, 1e6, allow_nan=False),
)

alphas = st.floats(-2.0, 2.0, allow_nan=False)


def test_norm_matches_direct_sum():
    u = ScaleVector(np.array([1.0, -2.0, 0.5]))
    expected = 1.0 + 2.0 * math.e + 0.5 * math.e**2
    assert norm_alpha(u, 1.0) == pytest.approx(expected, rel=1e-15)


def test_dual_norm_matches_direct_sup():
    l = DualVector(np.array([3.0, -4.0]))
    assert dual_norm(l, 1.0) == pytest.approx(max(3.0, 4.0 * math.exp(-1.0)))


@given(finite_entries, alphas, alphas)
def test_norm_monotone_in_alpha(entries, a, b):
    lo, hi = min(a, b), max(a, b)
    u = ScaleVector(entries)
    assert norm_alpha(u, lo) <= norm_alpha(u, hi) * (1 + 1e-12)


@given(finite_entries, alphas, alphas)
def test_dual_norm_antitone_in_alpha(entries, a, b):
    lo, hi = min(a, b), max(a, b)
    l = DualVector(entries)
    assert dual_norm(l, hi) <= dual_norm(l, lo) * (1 + 1e-12)


@given(finite_entries, finite_entries, alphas)
def test_pairing_bounded_by_norm_product(ue, le, alpha):
    u = ScaleVector(ue)
    l = DualVector(le)
    lhs = abs(dual_pairing(u, l))
    rhs = norm_alpha(u, alpha) * dual_norm(l, alpha)
    assert lhs <= rhs * (1 + 1e-12)


def test_pairing_zero_extends_shorter_vector():
    u = ScaleVector(np.array([1.0, 2.0, 3.0]))
    l = DualVector(np.array([1.0, 1.0]))
    assert dual_pairing(u, l) == pytest.approx(3.0)


def test_weights_overflow_guard():
    with pytest.raises(RangeOverflow):
        weights(10.0, np.arange(100, dtype=np.float64))


def test_weights_respect_levels():
    lv = np.array([0.0, 2.0])
    w = weights(1.0, lv)
    assert w[1] == pytest.approx(math.e**2)


@given(finite_entries, st.integers(1, 10), st.floats(0.1, 2.0))
def test_truncate_certifies_dropped_mass(entries, N, alpha_max):
    u = ScaleVector(entries)
    v = truncate(u, N, alpha_max)
    assert v.support_len <= N
    dropped = entries[N:]
    if dropped.size:
        mass = float(
            np.sum(np.abs(dropped) * np.exp(alpha_max * np.arange(N, entries.size)))
        )
        assert v.tail_bound >= mass * (1 - 1e-12)


def test_truncate_bound_conservative_below_tail_alpha():
    entries = np.array([1.0, 1.0, 2.0, 3.0])
    u = ScaleVector(entries)
    v = truncate(u, 2, 1.0)
    for alpha in (0.0, 0.5, 1.0):
        kept = np.zeros_like(entries)
        kept[:2] = entries[:2]
        diff = ScaleVector(entries - kept)
        assert norm_alpha(diff, alpha) <= v.tail_bound * (1 + 1e-12)


def test_json_roundtrip():
    u = ScaleVector(np.array([1.5, -0.25]), tail_alpha=0.7, tail_bound=0.1,
                    levels=np.array([0.0, 2.0]))
    v = ScaleVector.from_json(u.to_json())
    assert np.array_equal(u.entries, v.entries)
    assert v.tail_alpha == u.tail_alpha and v.tail_bound == u.tail_bound
    assert np.array_equal(u.levels, v.levels)


def test_basis_vector():
    e = basis_vector(2, 4)
    assert e.entries.tolist() == [0.0, 0.0, 1.0, 0.0]
    assert norm_alpha(e, 0.5) == pytest.approx(math.exp(1.0))


def test_entries_are_immutable():
    u = ScaleVector(np.array([1.0]))
    with pytest.raises(ValueError):
        u.entries[0] = 2.0


def test_nonfinite_entries_rejected():
    with pytest.raises(InvalidInput):
        ScaleVector(np.array([np.nan]))
    with pytest.raises(InvalidInput):
        ScaleVector(np.array([1.0]), tail_bound=-1.0)
