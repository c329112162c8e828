import numpy as np
import pytest

from hormander_lab.errors import InputError
from hormander_lab.expressions import default_variables, parse_function

PTS = np.array([[0.5, 0.25], [-1.0, 2.0]])


def test_caret_is_power():
    fn = parse_function("x^2 + 3*t", ("x", "t"))
    np.testing.assert_allclose(fn(PTS), PTS[:, 0] ** 2 + 3 * PTS[:, 1])


def test_polynomials_carry_exact_form():
    assert parse_function("x**2 - 2*x*t", ("x", "t")).polynomial is not None
    assert parse_function("sin(x)", ("x", "t")).polynomial is None


def test_constant_broadcasts():
    fn = parse_function("2", ("x", "t"))
    np.testing.assert_allclose(fn(PTS), [2.0, 2.0])


def test_transcendental_functions():
    fn = parse_function("exp(x) * sqrt(abs(t))", ("x", "t"))
    np.testing.assert_allclose(fn(PTS), np.exp(PTS[:, 0]) * np.sqrt(np.abs(PTS[:, 1])))


@pytest.mark.parametrize("text", ["foo(x)", "x + z", "x +* 2"])
def test_rejects_unknown_or_malformed(text):
    with pytest.raises(InputError):
        parse_function(text, ("x", "t"))


def test_default_variables():
    assert default_variables(3) == ("x0", "x1", "x2")
