import numpy as np
import pytest
import sympy as sp
from hypothesis import given, strategies as st

from hormander_lab.errors import InputError
from hormander_lab.polynomial import Polynomial

DIM = 2
terms = st.lists(
    st.tuples(st.tuples(st.integers(0, 2), st.integers(0, 2)), st.integers(-3, 3)),
    max_size=4,
)
polys = terms.map(lambda items: Polynomial(DIM, tuple(items)))
POINTS = np.array([[0.0, 0.0], [0.5, -1.0], [1.5, 2.0], [-2.0, 0.25]])


def test_terms_are_canonical():
    p = Polynomial(2, (((1, 0), 2.0), ((0, 1), 1.0), ((1, 0), -2.0)))
    assert p.terms == (((0, 1), 1.0),)
    assert Polynomial(2, (((0, 0), 0.0),)).is_zero()


def test_bad_exponents_rejected():
    with pytest.raises(InputError):
        Polynomial(2, (((1,), 1.0),))
    with pytest.raises(InputError):
        Polynomial(2, (((-1, 0), 1.0),))


def test_evaluation_and_degree():
    x = Polynomial.variable(2, 0)
    y = Polynomial.variable(2, 1)
    p = x * x * y + 3
    assert p.degree() == 3
    assert p(np.array([2.0, 0.5])) == pytest.approx(5.0)
    np.testing.assert_allclose(p(POINTS), POINTS[:, 0] ** 2 * POINTS[:, 1] + 3)


def test_dimension_mismatch():
    with pytest.raises(InputError):
        Polynomial.variable(2, 0) + Polynomial.variable(3, 0)
    with pytest.raises(InputError):
        Polynomial.variable(2, 0)(np.zeros(3))


def test_sympy_bridge():
    x, y = sp.symbols("x y")
    p = Polynomial.from_sympy(x**2 - 3 * x * y + 1, (x, y))
    assert p.coefficient((1, 1)) == -3.0
    assert sp.simplify(p.to_sympy((x, y)) - (x**2 - 3 * x * y + 1)) == 0


@given(polys, polys)
def test_sum_and_product_evaluate_pointwise(p, q):
    np.testing.assert_allclose((p + q)(POINTS), p(POINTS) + q(POINTS))
    np.testing.assert_allclose((p * q)(POINTS), p(POINTS) * q(POINTS))


@given(polys)
def test_difference_with_itself_is_zero(p):
    assert (p - p).is_zero()


@given(polys, polys)
def test_product_rule(p, q):
    for j in range(DIM):
        assert (p * q).derivative(j) == p.derivative(j) * q + p * q.derivative(j)


def test_coefficients_combine_exactly():
    x = Polynomial.variable(2, 0)
    p = x * 0.1 + x * 0.2 - x * 0.3
    # 0.1 + 0.2 - 0.3 in binary rationals is 2^-55, not the float result 2^-54
    assert p.coefficient((1, 0)) == 2.0**-55


def test_compose_substitutes_polynomials():
    x = Polynomial.variable(2, 0)
    y = Polynomial.variable(2, 1)
    p = x * x * y + 3
    moved = p.compose([x + 1, y * 2])
    np.testing.assert_allclose(moved(POINTS), (POINTS[:, 0] + 1) ** 2 * 2 * POINTS[:, 1] + 3)
    with pytest.raises(InputError):
        p.compose([x])


@given(polys, polys)
def test_compose_with_identity_is_neutral(p, q):
    ident = [Polynomial.variable(DIM, j) for j in range(DIM)]
    assert p.compose(ident) == p
    assert (p * q).compose(ident) == p * q
