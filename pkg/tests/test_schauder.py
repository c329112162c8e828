import math

import numpy as np
import pytest

from hormander_lab.errors import InputError
from hormander_lab.grid import DirichletProblem, dirichlet_solve
from hormander_lab.models import CoefficientField, Cylinder, get_model
from hormander_lab.moduli import ModulusOfContinuity
from hormander_lab.schauder import (TrigSum, apriori_derivative_check, dini_modulus_of_second_derivatives,
                                    log_oracle, mean_value_check, oracle_for, power_oracle, random_trials,
                                    second_order_increment, tail_sums, variable_coefficient_experiment,
                                    wang_iteration)


@pytest.fixture(scope="module")
def heat():
    return get_model("heat-1d")


@pytest.fixture(scope="module")
def power_ledger(heat):
    u, f = power_oracle(0.5)
    return wang_iteration(heat, u, f, ModulusOfContinuity.power(0.5), levels=4, resolution=17)


def test_power_oracle_solves_the_equation():
    model = get_model("kolmogorov")
    u, f = power_oracle(0.5)
    pts = np.array([[0.5, 0.1, 0.2], [-0.3, 0.0, -0.1]])
    np.testing.assert_allclose(model.apply(u, pts), f(pts), atol=1e-5)
    with pytest.raises(InputError):
        power_oracle(1.5)


def test_log_oracle_second_derivative():
    u, f = log_oracle()
    x, h = 0.3, 1e-4
    pts = np.array([[x - h, 0.0], [x, 0.0], [x + h, 0.0]])
    vals = u(pts)
    second = (vals[0] - 2.0 * vals[1] + vals[2]) / h**2
    assert second == pytest.approx(1.0 / math.log(math.e / x), abs=1e-5)
    assert f(pts[1:2])[0] == pytest.approx(1.0 / math.log(math.e / x))


def test_oracle_needs_closed_form():
    with pytest.raises(InputError):
        oracle_for(ModulusOfContinuity.sampled([0.1, 1.0], [0.1, 1.0]))


def test_random_trials_respect_the_maximum_principle(heat):
    reports = random_trials(heat, trials=6, rng=np.random.default_rng(3), resolution=13)
    assert all(r.passed for r in reports)
    assert any(r.subsolution is not None for r in reports)


def test_power_iteration_scales(power_ledger):
    assert power_ledger.complete
    assert power_ledger.decay_exponent("sup_v") == pytest.approx(2.5, abs=0.05)
    assert power_ledger.decay_exponent("second_increment") == pytest.approx(0.5, abs=0.05)
    assert power_ledger.telescoping_error() <= 1e-12
    assert power_ledger.passed


def test_power_iteration_saturates(heat):
    u, f = power_oracle(0.5)
    ledger = wang_iteration(heat, u, f, ModulusOfContinuity.power(0.5), levels=6, resolution=17)
    q = math.sqrt(0.5)
    expected = q**6 / sum(q**k for k in range(7))
    assert ledger.last_share() == pytest.approx(expected, rel=1e-4)
    assert ledger.saturated


def test_constant_right_side_has_no_increments(heat):
    u, f = oracle_for(ModulusOfContinuity.zero())
    ledger = wang_iteration(heat, u, f, ModulusOfContinuity.zero(), levels=3, resolution=13)
    assert np.max(ledger.series("second_increment")) < 1e-6
    assert np.max(ledger.series("sup_v")) < 1e-8


def test_ledger_rejects_unknown_series(power_ledger):
    with pytest.raises(InputError):
        power_ledger.series("third_increment")
    assert len(power_ledger.rows()) == power_ledger.levels + 1


def test_constant_ledger_checks_its_bound(power_ledger):
    assert power_ledger.bound_kind == "constant"
    assert power_ledger.bound_ratio() <= 1.0 + 0.2
    assert power_ledger.to_dict()["bound_ratio"] == power_ledger.bound_ratio()


def test_tail_sums():
    assert all(math.isinf(t) for t in tail_sums(ModulusOfContinuity.logarithmic(), 0.5, 3))
    tails = tail_sums(ModulusOfContinuity.power(1.0), 0.5, 2)
    assert tails[0] == pytest.approx(2.0)
    assert tails[1] == pytest.approx(1.0)


def test_variable_coefficients_report_ellipticity(heat):
    coefficients = CoefficientField.from_strings([["1 + x**2/4"]], heat.variables)
    ledger = variable_coefficient_experiment(
        heat, coefficients, ModulusOfContinuity.power(1.0, 0.25), 0.0, ModulusOfContinuity.zero(),
        levels=2, boundary=heat.function("exp(x)"), resolution=9, reference_resolution=17)
    lam, big = ledger.ellipticity
    assert lam == pytest.approx(1.0)
    assert 1.1 < big <= 1.25
    assert ledger.eta > 0.0
    assert ledger.levels == 2
    assert ledger.bound_kind == "variable"
    assert math.isfinite(ledger.bound_ratio())
    assert ledger.bounds_hold
    row = ledger.rows()[1]
    assert row["bound_v"] == pytest.approx(4.0 * 0.25 * (0.25 * 0.5 * ledger.eta))


def test_variable_experiment_needs_data(heat):
    with pytest.raises(InputError):
        variable_coefficient_experiment(heat, CoefficientField.identity(1), ModulusOfContinuity.zero(), 0.0,
                                        ModulusOfContinuity.zero())


def test_dini_modulus_of_caloric_cubic(heat):
    report = dini_modulus_of_second_derivatives(heat, 0.0, ModulusOfContinuity.zero(),
                                                boundary=heat.function("x**3 + 6*x*t"), resolution=65,
                                                rng=np.random.default_rng(7))
    assert report.exponent == pytest.approx(1.0, abs=0.25)
    assert all(b.count >= 10 for b in report.bins)


def test_second_order_increment_vanishes_on_the_diagonal(heat):
    sol = dirichlet_solve(DirichletProblem(heat, Cylinder((0.0, 0.0), 1.0), heat.function("x**3 + 6*x*t")),
                          resolution=13)
    z = np.array([[0.1, 0.05], [-0.2, 0.1]])
    np.testing.assert_allclose(second_order_increment(heat, sol, z, z), 0.0, atol=1e-12)


def test_mean_value_constant_is_scale_free(heat):
    report = mean_value_check(heat, pool=[lambda h: np.atleast_2d(h)[:, 0]], resolution=13, fixed=())
    assert report.constant == pytest.approx(1.2, rel=1e-6)
    assert report.stability == pytest.approx(1.0, abs=1e-6)
    assert report.passed


def test_apriori_exponents_match_degrees(heat):
    pool = [TrigSum.random(heat.dimension, np.random.default_rng(k)) for k in range(2)]
    report = apriori_derivative_check(heat, pool=pool, resolution=13, fixed=())
    for exponent, degree in zip(report.exponents().values(), report.degrees):
        assert exponent == pytest.approx(-degree, abs=0.05)
    assert report.passed


def test_fixed_functions_show_the_prefactor_growing(heat):
    report = mean_value_check(heat, pool=[], resolution=13)
    assert report.members == ("fixed:x", "fixed:x**2 + 2*t")
    assert report.stability == pytest.approx(1.0, abs=1e-6)
    for slope in report.prefactor_slopes().values():
        assert slope == pytest.approx(-1.0, abs=1e-6)
    rows = [r for r in report.rows() if r["member"] == "fixed:x"]
    assert rows[1]["prefactor"] == pytest.approx(2.0 * rows[0]["prefactor"], rel=1e-6)
    assert report.passed


def test_apriori_skips_vanishing_derivatives(heat):
    report = apriori_derivative_check(heat, pool=[lambda h: np.atleast_2d(h)[:, 0]], resolution=13, fixed=())
    exponents = report.exponents()
    assert exponents["Y0:X1"] == pytest.approx(-1.0, abs=0.05)
    assert math.isnan(exponents["Y1:X0"])
    assert math.isnan(exponents["X1X1"])
    assert not report.measured()[0, 1]
    assert report.passed


def test_apriori_fixed_pool_matches_degrees(heat):
    report = apriori_derivative_check(heat, pool=[], resolution=13)
    for exponent, degree in zip(report.exponents().values(), report.degrees):
        assert exponent == pytest.approx(-degree, abs=0.05)
    measured = report.measured()
    assert measured[1].all()          # x**2 + 2t moves in every direction
    assert not measured[0, 2]         # x has no second derivative
    assert report.passed


@pytest.mark.slow
def test_kolmogorov_power_iteration():
    model = get_model("kolmogorov")
    u, f = power_oracle(0.5)
    ledger = wang_iteration(model, u, f, ModulusOfContinuity.power(0.5), levels=3, resolution=13)
    assert ledger.decay_exponent("sup_v") == pytest.approx(2.5, abs=0.1)
    assert ledger.telescoping_error() <= 1e-12


@pytest.mark.slow
def test_kolmogorov_apriori_exponents_include_the_bracket_direction():
    model = get_model("kolmogorov")
    report = apriori_derivative_check(model, resolution=13)
    exponents = report.exponents()
    assert list(report.degrees[:3]) == [1, 2, 3]
    for name, degree in zip(list(exponents)[:3], report.degrees):
        assert exponents[name] == pytest.approx(-degree, abs=0.3)
    assert report.passed
