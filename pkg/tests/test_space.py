from math import e, log

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from npconvex import (
    DensityVector,
    DimensionError,
    FiniteProbSpace,
    InvalidInputError,
    expectation,
    kl_divergence,
    likelihood_ratio_partition,
)

probs2 = st.floats(0.01, 0.99)


def test_space_rejects_bad_weights():
    with pytest.raises(InvalidInputError):
        FiniteProbSpace([])
    with pytest.raises(InvalidInputError):
        FiniteProbSpace([0.0, 1.0])
    with pytest.raises(InvalidInputError):
        FiniteProbSpace([0.5, 0.6])
    with pytest.raises(DimensionError):
        FiniteProbSpace([0.5, 0.5], labels=("a",))
    FiniteProbSpace([0.5, 0.5 + 5e-13])


def test_space_is_immutable(half):
    with pytest.raises(AttributeError):
        half.mu = np.ones(2)
    with pytest.raises(ValueError):
        half.mu[0] = 0.7


def test_density_mass_check(half):
    with pytest.raises(InvalidInputError):
        half.density([1.0, 1.5])
    with pytest.raises(InvalidInputError):
        half.density([-0.5, 2.5])
    d = half.density_from_probabilities([0.25, 0.75])
    assert np.allclose(d.values, [0.5, 1.5], rtol=0.0)


def test_expectation_examples(half):
    x = half.variable([3.0, 5.0])
    assert expectation(half.density([1, 1]), x) == 4.0
    assert expectation(half.density([2, 0]), x) == 3.0
    q = half.density([6 / (e + 3), 2 * e / (e + 3)])
    assert abs(expectation(q, half.variable([1.0, 0.0])) - 3 / (e + 3)) < 1e-15


def test_expectation_space_mismatch(half):
    other = FiniteProbSpace([0.25, 0.75])
    with pytest.raises(DimensionError):
        expectation(half.density([1, 1]), other.variable([1, 2]))


@given(st.lists(st.floats(-10, 10), min_size=3, max_size=3), st.floats(-10, 10), st.floats(-10, 10))
def test_expectation_linear(vals, a, b):
    space = FiniteProbSpace([0.2, 0.3, 0.5])
    d = space.density([2.0, 1.0, 0.6])
    x = space.variable(vals)
    y = space.variable(vals[::-1])
    lhs = expectation(d, a * x + b * y)
    rhs = a * expectation(d, x) + b * expectation(d, y)
    assert abs(lhs - rhs) <= 1e-9 * max(1.0, abs(rhs))


def test_kl_example31(half):
    q0 = half.density([1.5, 0.5])
    q = 3 / (e + 3)
    dq = half.density([2 * q, 2 * (1 - q)])
    closed = q * log(q) + (1 - q) * log(1 - q) - q * log(3) + 2 * log(2)
    assert abs(kl_divergence(dq, q0) - closed) < 1e-14
    assert kl_divergence(q0, q0) == 0.0


def test_kl_example41_reduction():
    b = (e - 2) / (e - 1)
    space = FiniteProbSpace([b, 1 - b])
    q = space.density([e / (e - 1), 1 / (e - 1)])
    expected = (e * e - 2 * e) / (e - 1) ** 2 - log(e - 1)
    assert abs(kl_divergence(q, space.reference()) - expected) < 1e-14
    assert abs(expected - 0.119978) < 1e-6


def test_kl_infinite_off_support(half):
    assert kl_divergence(half.density([1.0, 1.0]), half.density([2.0, 0.0])) == np.inf
    # zero atoms of q contribute nothing
    assert np.isfinite(kl_divergence(half.density([2.0, 0.0]), half.density([1.0, 1.0])))


@given(probs2, probs2)
def test_kl_nonnegative_and_zero_iff_equal(p, q):
    space = FiniteProbSpace([0.5, 0.5])
    a = space.density_from_probabilities([p, 1 - p])
    b = space.density_from_probabilities([q, 1 - q])
    k = kl_divergence(a, b)
    assert k >= 0.0
    if abs(p - q) > 1e-6:
        assert k > 0.0


def test_kl_nonnegative_random_pairs():
    rng = np.random.default_rng(3)
    space = FiniteProbSpace([0.1, 0.2, 0.3, 0.4])
    for _ in range(1000):
        a = space.density_from_probabilities(rng.dirichlet(np.ones(4)))
        b = space.density_from_probabilities(rng.dirichlet(np.ones(4)))
        assert kl_divergence(a, b) >= -1e-15
        assert kl_divergence(a, a) == 0.0


@given(probs2, probs2, st.floats(0, 1))
def test_kl_convex_in_first_argument(p1, p2, lam):
    space = FiniteProbSpace([0.5, 0.5])
    q0 = space.density([1.5, 0.5])
    q1 = space.density_from_probabilities([p1, 1 - p1])
    q2 = space.density_from_probabilities([p2, 1 - p2])
    mix = space.density(lam * q1.values + (1 - lam) * q2.values)
    assert kl_divergence(mix, q0) <= lam * kl_divergence(q1, q0) + (1 - lam) * kl_divergence(q2, q0) + 1e-9


def test_kl_lower_semicontinuous_with_vanishing_atom():
    space = FiniteProbSpace([0.5, 0.5])
    q0 = space.density([1.5, 0.5])
    limit = space.density([2.0, 0.0])
    target = kl_divergence(limit, q0)
    for k in range(2, 2000):
        qk = space.density_from_probabilities([1 - 1 / k, 1 / k])
        # the vanishing atom contributes (1/k) ln(4/k) -> 0
        assert target <= kl_divergence(qk, q0) + 4 * log(k) / k
    # limit gains a q0-null atom: the sequence sits at +inf, the limit too
    q0_null = space.density([2.0, 0.0])
    seq = [space.density_from_probabilities([1 - 1 / k, 1 / k]) for k in range(2, 50)]
    assert all(kl_divergence(q, q0_null) == np.inf for q in seq)
    assert kl_divergence(limit, q0_null) == 0.0


def test_partition_trivial_cases(half):
    g = half.density([0.5, 1.5])
    h = half.density([1.2, 0.8])
    assert likelihood_ratio_partition(g, h, 0.0) == ((), (), (0, 1))
    assert likelihood_ratio_partition(g, g, 1.0) == ((), (0, 1), ())
    with pytest.raises(InvalidInputError):
        likelihood_ratio_partition(g, h, -1.0)


def test_partition_example33(half):
    g = half.density([2 * e / (e + 3), 6 / (e + 3)])
    h = half.density([6 / (e + 3), 2 * e / (e + 3)])
    part = likelihood_ratio_partition(g, h, 3 / e)
    # z h_1 - g_1 = 3/e * 2e/(e+3) - 6/(e+3) = 0 exactly: atom 1 is a tie
    assert part.greater == (0,)
    assert part.equal == (1,)
    assert part.less == ()


@given(st.floats(0.1, 10), st.floats(0, 5), probs2, probs2)
def test_partition_scale_invariant(c, z, p, q):
    space = FiniteProbSpace([0.5, 0.5])
    g = space.density_from_probabilities([p, 1 - p]).values
    h = space.density_from_probabilities([q, 1 - q]).values
    from npconvex.space import partition_arrays

    a = partition_arrays(g, h, z)
    b = partition_arrays(c * g, c * h, z)
    # the band is relative once both sides exceed 1; only compare clear-cut atoms
    diff = np.abs(z * h - g)
    clear = diff > 1e-6 * np.maximum(1.0, c)
    for i in np.flatnonzero(clear):
        assert (i in a.greater) == (i in b.greater)
        assert (i in a.less) == (i in b.less)


def test_density_hash_and_equality(half):
    a = half.density([1.0, 1.0])
    b = DensityVector(half, [1.0, 1.0])
    assert a == b and hash(a) == hash(b)
