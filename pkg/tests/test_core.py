import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from marginalpriv import core
from marginalpriv.core import (
    AccuracyParams,
    Database,
    MarginalVector,
    PrivacyParams,
    compute_marginals,
    group_privacy,
    l1_error,
    linf_error,
    sample_complexity_bounds,
)
from marginalpriv.errors import DimensionError, DomainError, ParameterError

small_bits = st.integers(1, 20).flatmap(
    lambda n: st.integers(1, 20).flatmap(lambda d: arrays(np.bool_, (n, d)))
)


# --- Database -------------------------------------------------------------

def test_all_ones_marginals():
    for n, d in [(1, 1), (3, 17), (50, 64)]:
        assert np.array_equal(compute_marginals(Database.constant(n, d, 1)).values, np.ones(d))


def test_symmetric_pair_is_zero():
    db = Database.from_signs([[1], [-1]])
    assert compute_marginals(db).values.tolist() == [0.0]


def test_hand_summed_example():
    db = Database.from_signs([[1, 1], [1, -1], [-1, -1], [1, 1]])
    assert compute_marginals(db).values.tolist() == [0.5, 0.0]


@given(small_bits)
def test_marginals_match_mean_of_signs(bits):
    db = Database.from_bits(bits)
    expected = (2.0 * bits - 1).mean(axis=0)
    np.testing.assert_allclose(compute_marginals(db).values, expected, rtol=0, atol=1e-15)
    assert np.all(np.abs(compute_marginals(db).values) <= 1)


@given(small_bits)
def test_bits_round_trip(bits):
    db = Database.from_bits(bits)
    assert np.array_equal(db.bits(), bits)
    assert np.array_equal(db.signs(), np.where(bits, 1, -1))
    assert db.shape == bits.shape


@given(small_bits, st.data())
def test_with_row_updates_counts(bits, data):
    db = Database.from_bits(bits)
    i = data.draw(st.integers(0, bits.shape[0] - 1))
    row = data.draw(arrays(np.bool_, bits.shape[1]))
    changed = db.with_row(i, np.where(row, 1, -1))
    fresh = bits.copy()
    fresh[i] = row
    assert np.array_equal(changed.column_counts(), fresh.sum(axis=0))
    assert changed == Database.from_bits(fresh)
    # Neighbouring databases move each marginal by at most 2/n.
    diff = np.abs(compute_marginals(changed).values - compute_marginals(db).values)
    assert np.all(diff <= 2 / bits.shape[0] + 1e-15)


def test_database_is_immutable_and_copies_input():
    bits = np.ones((3, 9), dtype=bool)
    db = Database.from_bits(bits)
    bits[0, 0] = False
    assert db.bits()[0, 0]
    with pytest.raises(ValueError):
        db.packed[0, 0] = 0


def test_padding_bits_are_masked():
    packed = np.full((2, 1), 0xFF, dtype=np.uint8)
    db = Database(packed, 3)
    assert db.column_counts().tolist() == [2, 2, 2]
    assert db == Database.constant(2, 3)


def test_random_extreme_bias():
    rng = np.random.default_rng(0)
    assert Database.random(5, 11, rng, p=1.0) == Database.constant(5, 11, 1)
    assert Database.random(5, 11, rng, p=0.0) == Database.constant(5, 11, -1)


def test_database_rejects_bad_input():
    with pytest.raises(ParameterError):
        Database.from_signs([[1, 0]])
    with pytest.raises((ParameterError, DimensionError)):
        Database.from_bits(np.zeros((0, 3), dtype=bool))


def test_iter_signs_covers_all_rows():
    db = Database.random(37, 5, np.random.default_rng(2))
    blocks = list(db.iter_signs(chunk=8))
    assert np.array_equal(np.vstack(blocks), db.signs())


# --- MarginalVector and errors --------------------------------------------

def test_marginal_vector_validates():
    with pytest.raises(ParameterError):
        MarginalVector(np.array([1.5]))
    with pytest.raises(ParameterError):
        MarginalVector(np.array([np.nan]))
    v = MarginalVector(np.array([0.5, -1.0]))
    assert v.d == 2 and len(v) == 2 and v[1] == -1.0
    with pytest.raises(ValueError):
        v.values[0] = 0.0


@pytest.mark.parametrize("a,b,l1,linf", [
    ([0.3, -0.2], [0.3, -0.2], 0.0, 0.0),
    ([1, 1], [-1, 0], 3.0, 2.0),
    ([0.5], [0.25], 0.25, 0.25),
])
def test_error_examples(a, b, l1, linf):
    assert l1_error(a, b) == pytest.approx(l1)
    assert linf_error(a, b) == pytest.approx(linf)


@given(arrays(np.float64, 6, elements=st.floats(-1, 1)), arrays(np.float64, 6, elements=st.floats(-1, 1)))
def test_error_norms_are_metrics(a, b):
    assert l1_error(a, b) == pytest.approx(l1_error(b, a))
    assert linf_error(a, b) <= l1_error(a, b) + 1e-12
    assert l1_error(a, b) <= 6 * linf_error(a, b) + 1e-12
    assert linf_error(a, b) == pytest.approx(np.max(np.abs(a - b)))


def test_error_dimension_mismatch():
    with pytest.raises(DimensionError):
        l1_error([0.0, 0.0], [0.0])
    with pytest.raises(DimensionError):
        linf_error(MarginalVector(np.zeros(3)), np.zeros(2))


# --- parameters and group privacy -----------------------------------------

def test_param_validation():
    with pytest.raises(ParameterError):
        PrivacyParams(-1.0)
    with pytest.raises(ParameterError):
        PrivacyParams(1.0, 1.0)
    with pytest.raises(ParameterError):
        AccuracyParams(0.0, 0.1)
    assert PrivacyParams(1.0).pure and not PrivacyParams(1.0, 1e-6).pure


def test_group_privacy_examples():
    p = PrivacyParams(0.7, 1e-5)
    g = group_privacy(p, 1)
    assert (g.epsilon_k, g.delta_k) == (0.7, 1e-5)
    g2 = group_privacy(PrivacyParams(1.0, 1e-6), 2)
    assert g2.epsilon_k == 2.0
    assert g2.delta_k == pytest.approx((math.e + 1) * 1e-6, rel=1e-12)
    for k in (1, 3, 17):
        g = group_privacy(PrivacyParams(0.3, 0.0), k)
        assert g.epsilon_k == pytest.approx(0.3 * k) and g.delta_k == 0.0


@given(st.floats(1e-3, 3), st.floats(1e-12, 1e-3), st.integers(1, 30))
def test_group_privacy_monotone_in_k(eps, delta, k):
    a, b = group_privacy(PrivacyParams(eps, delta), k), group_privacy(PrivacyParams(eps, delta), k + 1)
    assert b.epsilon_k > a.epsilon_k and b.delta_k >= a.delta_k


def test_group_privacy_empirical_laplace():
    """Laplace noise on databases differing in two rows: loss never exceeds 2 eps."""
    n, d, eps = 20, 3, 0.8
    rng = np.random.default_rng(5)
    db = Database.random(n, d, rng)
    other = db.with_row(0, -db.row(0)).with_row(1, -db.row(1))
    b = 2 * d / (n * eps)
    a_true, b_true = compute_marginals(db).values, compute_marginals(other).values
    from marginalpriv.mechanisms import laplace_privacy_loss
    outputs = a_true + rng.laplace(0, b, size=(20000, d))
    loss = laplace_privacy_loss(outputs, a_true, b_true, b)
    assert np.max(np.abs(loss)) <= group_privacy(PrivacyParams(eps), 2).epsilon_k + 1e-9


# --- sample complexity -----------------------------------------------------

def test_bounds_examples():
    b = sample_complexity_bounds(100, 0.1, 1.0, math.exp(-100))
    assert b.approx_lower == pytest.approx(1000)
    assert b.laplace_approx_upper == pytest.approx(1000)
    assert core.pure_dp_rows(1, 1, 1) == 1
    assert core.linf_pure_rows(10, 0.125, 1) == pytest.approx(320)
    assert core.packing_lower_rows(50, 2.0) == 25


def test_bounds_without_delta():
    b = sample_complexity_bounds(100, 0.1, 1.0)
    assert b.approx_lower is None and b.gauss_sv_upper is None and b.laplace_approx_upper is None
    assert b.pure_lower == 100 and b.laplace_pure_upper == 1000
    with pytest.raises(DomainError):
        core.approx_dp_rows(10, 0.1, 1.0, 0.0)
    with pytest.raises(DomainError):
        core.gauss_sv_rows(2, 0.1, 1.0, 1e-6)


@given(st.integers(1, 10**6), st.floats(1e-3, 1), st.floats(1e-3, 10), st.floats(1e-30, 0.5), st.floats(0.01, 1))
def test_bounds_nondecreasing_as_delta_shrinks(d, alpha, eps, delta, shrink):
    smaller = delta * shrink
    hi, lo = sample_complexity_bounds(d, alpha, eps, smaller), sample_complexity_bounds(d, alpha, eps, delta)
    assert hi.approx_lower >= lo.approx_lower
    assert hi.laplace_approx_upper >= lo.laplace_approx_upper
    if d >= 3:
        assert hi.gauss_sv_upper >= lo.gauss_sv_upper


@settings(max_examples=50)
@given(st.integers(1, 10**5), st.floats(1e-3, 1), st.floats(1e-3, 10))
def test_upper_bounds_dominate_lower(d, alpha, eps):
    b = sample_complexity_bounds(d, alpha, eps, 1e-9)
    assert b.laplace_pure_upper >= b.pure_lower
    assert b.laplace_approx_upper >= b.approx_lower - 1e-9 * b.approx_lower


def test_explicit_packing_lower():
    assert core.packing_lower_explicit(8000, 1.0) == pytest.approx(10 - math.log(20))
