from fractions import Fraction
from math import factorial

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from sbdfcut.polybasis import (
    QUAD,
    TRIANGLE,
    element_rule,
    monomials,
    nodal_coeffs,
    reference_nodes,
    to_monomial,
)


def exact_square(a, b):
    return Fraction(1, (a + 1) * (b + 1))


def exact_triangle(a, b):
    return Fraction(factorial(a) * factorial(b), factorial(a + b + 2))


@pytest.mark.parametrize("k", [1, 2, 3, 4])
@pytest.mark.parametrize("kind", [QUAD, TRIANGLE])
def test_nodal_basis_is_kronecker(kind, k):
    X = reference_nodes(kind, k)
    V = monomials(X, k) @ nodal_coeffs(kind, k)
    np.testing.assert_allclose(V, np.eye(len(X)), atol=1e-11)


@pytest.mark.parametrize("k", [1, 2, 3, 4])
def test_square_rule_exact_to_degree_2k_plus_1(k):
    xi, w = element_rule(QUAD, k)
    for a in range(2 * k + 2):
        for b in range(2 * k + 2):
            got = np.sum(w * xi[:, 0] ** a * xi[:, 1] ** b)
            assert abs(got - float(exact_square(a, b))) < 1e-14


@pytest.mark.parametrize("k", [1, 2, 3, 4])
def test_triangle_rule_exact_to_degree_2k_plus_1(k):
    xi, w = element_rule(TRIANGLE, k)
    assert np.all(w > 0)
    assert np.all(xi.sum(axis=1) <= 1.0)
    for a in range(2 * k + 2):
        for b in range(2 * k + 2 - a):
            got = np.sum(w * xi[:, 0] ** a * xi[:, 1] ** b)
            assert abs(got - float(exact_triangle(a, b))) < 1e-14


@settings(max_examples=40, deadline=None)
@given(
    k=st.integers(1, 4),
    kind=st.sampled_from([QUAD, TRIANGLE]),
    seed=st.integers(0, 2**31 - 1),
)
def test_interpolation_reproduces_polynomials(k, kind, seed):
    rng = np.random.default_rng(seed)
    nodes = reference_nodes(kind, k)
    # a random polynomial from the element's own space
    coef = rng.standard_normal(((k + 1) ** 2, 2))
    if kind == TRIANGLE:
        p, q = np.divmod(np.arange((k + 1) ** 2), k + 1)
        coef[p + q > k] = 0.0
    vals = monomials(nodes, k) @ coef
    back = to_monomial(vals, kind, k)
    np.testing.assert_allclose(back, coef, atol=1e-9)
