import math

import numpy as np
import pytest

from hormander_lab.errors import InputError
from hormander_lab.models import (CoefficientField, Cylinder, GaussianKernel, cutoff, get_model, kolmogorov_gamma,
                                  load_model, smoothstep_down)


def test_heat_kernel_value():
    heat = get_model("heat-1d")
    value = heat.kernel(np.array([0.0, 1.0]), np.zeros(2))[0]
    assert value == pytest.approx(1.0 / math.sqrt(4.0 * math.pi))
    assert heat.kernel(np.array([0.0, -1.0]), np.zeros(2))[0] == 0.0


def test_kolmogorov_covariance():
    kernel = get_model("kolmogorov").kernel
    np.testing.assert_allclose(kernel.covariance(1.0), [[2.0, 1.0], [1.0, 2.0 / 3.0]])


def test_kolmogorov_closed_form_matches_kernel():
    model = get_model("kolmogorov")
    z = np.array([0.3, 0.1, 1.0])
    expected = math.sqrt(3.0) / (2.0 * math.pi) * math.exp(-0.03)
    assert kolmogorov_gamma(z, np.zeros(3))[0] == pytest.approx(expected, rel=1e-10)
    assert model.kernel(z, np.zeros(3))[0] == pytest.approx(expected, rel=1e-10)


def test_kernel_needs_nilpotent_drift():
    with pytest.raises(InputError):
        GaussianKernel(np.eye(1), np.eye(1))


def test_caloric_polynomial_is_annihilated():
    heat = get_model("heat-1d")
    pts = np.random.default_rng(0).uniform(-1.0, 1.0, size=(10, 2))
    np.testing.assert_allclose(heat.apply(heat.function("x**2 + 2*t"), pts), 0.0, atol=1e-12)


def test_operator_on_kolmogorov():
    model = get_model("kolmogorov")
    pts = np.array([[0.5, 0.0, 0.0], [-1.0, 2.0, 3.0]])
    # L y = -x, L x**2 = 2
    np.testing.assert_allclose(model.apply(model.function("y"), pts), [-0.5, 1.0])
    np.testing.assert_allclose(model.apply(model.function("x**2"), pts), [2.0, 2.0])


def test_finite_difference_operator_matches_exact():
    heat = get_model("heat-1d")
    pts = np.array([[0.2, 0.1], [0.4, -0.3]])
    # sin(x) e^{-t} is caloric; only difference errors remain
    np.testing.assert_allclose(heat.apply(heat.function("sin(x)*exp(-t)"), pts), 0.0, atol=1e-5)


def test_unknown_model():
    with pytest.raises(InputError):
        get_model("wave")
    with pytest.raises(InputError):
        load_model("no-such-model.json")


def test_coefficients():
    with pytest.raises(InputError):
        CoefficientField.from_matrix([[1.0, 2.0], [0.0, 1.0]])
    field = CoefficientField.from_strings([["1 + x**2/4"]], ("x", "t"))
    lam, big, _ = field.ellipticity(np.array([[0.0, 0.0], [1.0, 0.0]]))
    assert lam == pytest.approx(1.0)
    assert big == pytest.approx(1.25)
    np.testing.assert_allclose(field.frozen([1.0, 0.0]).at([0.0, 0.0]), [[1.25]])


def test_cylinder_radius_range():
    with pytest.raises(InputError):
        Cylinder((0.0, 0.0), 1.5)


def test_cutoff_is_one_near_center_and_zero_outside():
    chart = get_model("heat-1d").chart()
    for kind in ("regularized", "smooth"):
        eta = cutoff(0.5, chart, kind)
        values = eta(np.array([[0.0, 0.0], [0.9, 0.0]]))
        assert values[0] == pytest.approx(1.0)
        assert values[1] == pytest.approx(0.0)


def test_smoothstep_down():
    np.testing.assert_allclose(smoothstep_down([0.0, 0.5, 2.0], 0.5, 1.0), [1.0, 1.0, 0.0])
    assert smoothstep_down(0.75, 0.5, 1.0) == pytest.approx(0.5)
