import math

import numpy as np
import pandas as pd
import pytest

from hormander_lab.errors import InputError
from hormander_lab.moduli import (ModulusOfContinuity, dini_bound_shape, dini_integral, parse_modulus,
                                  tail_integral)


def test_parse_kinds():
    assert parse_modulus("pow:0.5").alpha == 0.5
    assert parse_modulus("pow:0.5:3").scale == 3.0
    assert parse_modulus("log").kind == "log"
    assert parse_modulus("zero").kind == "zero"
    assert parse_modulus("pow:0.5").label == "pow:0.5"


@pytest.mark.parametrize("text", ["pow:2", "pow:abc", "weird", "log:x"])
def test_parse_errors(text):
    with pytest.raises(InputError):
        parse_modulus(text)


def test_log_modulus_values():
    omega = ModulusOfContinuity.logarithmic()
    np.testing.assert_allclose(omega(np.array([0.0, 1.0, math.exp(-1.0)])), [0.0, 1.0, 0.5])
    with pytest.raises(InputError):
        omega(np.array([-0.1]))


def test_power_dini_integral_closed_form():
    assert dini_integral(ModulusOfContinuity.power(0.5), 0.0, 1.0).value == pytest.approx(2.0)
    assert dini_integral(ModulusOfContinuity.power(0.5, 3.0), 0.0, 0.25).value == pytest.approx(3.0)
    assert dini_integral(ModulusOfContinuity.zero(), 0.0, 1.0).value == 0.0


def test_log_modulus_is_not_dini():
    omega = ModulusOfContinuity.logarithmic()
    assert dini_integral(omega, 0.0, 1.0).divergent
    assert dini_integral(omega, 0.01, 1.0).value == pytest.approx(math.log(1.0 - math.log(0.01)))


def test_quadrature_matches_closed_form():
    custom = parse_modulus("expr:r**0.5")
    result = dini_integral(custom, 0.0, 1.0)
    assert not result.divergent
    assert result.value == pytest.approx(2.0, rel=1e-8)
    assert tail_integral(custom, 0.25) == pytest.approx(2.0, rel=1e-8)


def test_quadrature_flags_divergence():
    assert dini_integral(parse_modulus("expr:1/log(E/r)"), 0.0, 1.0).divergent


def test_tail_integrals():
    assert tail_integral(ModulusOfContinuity.power(0.5), 0.25) == pytest.approx(2.0)
    assert tail_integral(ModulusOfContinuity.power(1.0), 0.1) == pytest.approx(math.log(10.0))
    assert tail_integral(ModulusOfContinuity.zero(), 0.1) == 0.0
    with pytest.raises(InputError):
        tail_integral(ModulusOfContinuity.power(0.5), 0.0)


def test_bound_shape_adds_four_terms():
    omega = ModulusOfContinuity.power(0.5)
    d = 0.25
    expected = d * 2.0 + d * 3.0 + 2.0 * math.sqrt(d) + d * 2.0
    assert dini_bound_shape(omega, d, 2.0, 3.0) == pytest.approx(expected)


def test_sampled_modulus_interpolates_log_log():
    omega = ModulusOfContinuity.sampled([0.1, 1.0], [0.1, 1.0])
    np.testing.assert_allclose(omega(np.array([0.5, 0.01, 2.0])), [0.5, 0.01, 1.0])
    with pytest.raises(InputError):
        ModulusOfContinuity.sampled([0.1, 1.0], [1.0, 0.1])


def test_sampled_modulus_from_table(tmp_path):
    path = tmp_path / "omega.csv"
    pd.DataFrame({"r": [0.01, 0.1, 1.0], "omega": [0.1, 0.316, 1.0]}).to_csv(path, index=False)
    omega = parse_modulus(f"file:{path}")
    assert omega.kind == "sampled"
    assert omega(np.array([0.1]))[0] == pytest.approx(0.316)
