"""Enumeration tables for the expansion terms."""
import math

import numpy as np
import pytest

from kdesearch.multiindex import monomial_tables, n_coefficients


def test_term_count_matches_binomial():
    """The number of terms up to a total degree follows the stars-and-bars count."""
    for d in (1, 2, 3, 5):
        for p in (0, 1, 2, 4, 7):
            assert n_coefficients(d, p) == math.comb(p + d, d)


def test_alphas_unique_and_complete():
    """Every multi-index of total degree <= order appears exactly once."""
    t = monomial_tables(3, 4)
    seen = {tuple(a) for a in t.alphas}
    assert len(seen) == t.n_terms == n_coefficients(3, 4)
    for a in seen:
        assert sum(a) <= 4
    assert all(a >= 0 for alpha in seen for a in alpha)


def test_alphas_degree_graded():
    """Terms are ordered by total degree, then within a degree block."""
    t = monomial_tables(2, 6)
    degrees = t.alphas.sum(axis=1)
    assert np.all(np.diff(degrees) >= 0)
    np.testing.assert_array_equal(degrees, t.degrees)


def test_within_degree_first_coordinate_descends():
    """Inside one degree block the leading exponent decreases."""
    t = monomial_tables(2, 5)
    for g in range(6):
        block = t.alphas[t.degrees == g]
        assert np.all(np.diff(block[:, 0]) == -1)
        np.testing.assert_array_equal(block.sum(axis=1), g)


def test_two_dim_slot_formula():
    """For d=2 the slot of (a, b) with g = a + b is g(g+1)/2 + b."""
    t = monomial_tables(2, 9)
    for slot, alpha in enumerate(t.alphas):
        a, b = int(alpha[0]), int(alpha[1])
        g = a + b
        assert g * (g + 1) // 2 + b == slot


def test_parent_recurrence_links():
    """Each nonconstant term equals its parent with one exponent bumped."""
    for d, p in ((2, 4), (3, 3), (4, 2)):
        t = monomial_tables(d, p)
        assert t.parents[0] == 0
        for b in range(1, t.n_terms):
            child = t.alphas[b].copy()
            child[t.pdims[b]] -= 1
            np.testing.assert_array_equal(t.alphas[t.parents[b]], child)
            assert t.parents[b] < b


def test_inverse_factorials():
    """invfact[b] is 1 / prod(alpha_i!)."""
    t = monomial_tables(3, 5)
    for b in range(t.n_terms):
        expected = 1.0
        for a in t.alphas[b]:
            expected /= math.factorial(int(a))
        assert np.isclose(t.invfact[b], expected, rtol=1e-15)


def test_monomial_recurrence_reproduces_direct_powers():
    """Chained one-multiply evaluation equals direct exponentiation."""
    rng = np.random.default_rng(0)
    for d, p in ((2, 6), (3, 4)):
        t = monomial_tables(d, p)
        for _ in range(5):
            u = rng.uniform(-2.0, 2.0, size=d)
            mono = np.empty(t.n_terms)
            mono[0] = 1.0
            for b in range(1, t.n_terms):
                mono[b] = mono[t.parents[b]] * u[t.pdims[b]]
            direct = np.array([np.prod(u ** t.alphas[b]) for b in range(t.n_terms)])
            np.testing.assert_allclose(mono, direct, rtol=1e-12)


def test_invalid_arguments_are_rejected():
    """Nonpositive dimension or negative order is an error."""
    with pytest.raises(ValueError):
        monomial_tables(0, 3)
    with pytest.raises(ValueError):
        monomial_tables(2, -1)
    with pytest.raises(ValueError):
        n_coefficients(-1, 2)


def test_tables_are_cached():
    """Repeated lookups return the identical table object."""
    assert monomial_tables(2, 4) is monomial_tables(2, 4)
