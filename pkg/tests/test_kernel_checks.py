from math import lcm

import numpy as np
import pytest
from scipy.special import gamma as gamma_fn

from hormander_lab.errors import InputError
from hormander_lab.kernel_checks import (QUADRATURE_TOL, annulus_estimates, bump_density, convolution_check,
                                          gamma_bound_check, kernel_homogeneity, kernel_jet, kernel_residual_check,
                                          representation_check, second_derivative_potential_bound, shell_nodes,
                                          sphere_nodes)
from hormander_lab.models import CUTOFF_INNER, Cylinder, cutoff, get_model


@pytest.mark.parametrize("name", ["heat-1d", "kolmogorov"])
def test_kernel_is_homogeneous_of_degree_two_minus_q(name):
    report = kernel_homogeneity(get_model(name), rng=np.random.default_rng(1))
    assert report["samples"] > 0
    assert report["max_deviation"] < 1e-9


def test_models_without_kernel_are_refused():
    model = get_model("heisenberg-time")
    with pytest.raises(InputError):
        kernel_homogeneity(model)
    with pytest.raises(InputError):
        kernel_residual_check(model)


def test_bump_density():
    pts = np.array([[0.0, 0.5], [0.0, 1.5], [1.0, 0.5]])
    np.testing.assert_allclose(bump_density(pts), [1.0, 0.0, np.exp(-0.5)])


def test_potential_of_constant_density_has_no_spatial_curvature():
    # with g = 1 the potential is t + R^2
    report = second_derivative_potential_bound(get_model("heat-1d"), points=3, density=lambda p: np.ones(len(p)))
    assert len(report.rows()) == 3
    for row in report.rows():
        assert row["second"] < 1e-8


# ---------- analytic jets ----------
def test_heat_log_derivatives_match_closed_form():
    model = get_model("heat-1d")
    z = np.array([[0.3, 0.5], [-0.2, 0.1], [0.0, 0.0]])
    zeta = np.array([[0.1, 0.2], [0.1, 0.0], [0.0, 0.3]])
    logs, grad, hess = model.kernel.log_derivatives(z, zeta)
    w, s = z[:2, 0] - zeta[:2, 0], z[:2, 1] - zeta[:2, 1]
    np.testing.assert_allclose(logs[:2], -w**2 / (4 * s) - 0.5 * np.log(4 * np.pi * s), rtol=1e-12)
    np.testing.assert_allclose(grad[:2, 0], -w / (2 * s), rtol=1e-12)
    np.testing.assert_allclose(grad[:2, 1], w**2 / (4 * s**2) - 1 / (2 * s), rtol=1e-12)
    np.testing.assert_allclose(hess[:2, 0, 0], -1 / (2 * s), rtol=1e-12)
    np.testing.assert_allclose(hess[:2, 0, 1], w / (2 * s**2), rtol=1e-12)
    np.testing.assert_allclose(hess[:2, 1, 1], -w**2 / (2 * s**3) + 1 / (2 * s**2), rtol=1e-12)
    # pole in the future
    assert logs[2] == -np.inf
    assert not grad[2].any() and not hess[2].any()


def test_kolmogorov_log_derivatives_match_differences():
    kernel = get_model("kolmogorov").kernel
    z = np.array([[0.3, 0.1, 0.5], [-0.2, 0.3, 0.4]])
    zeta = np.array([[0.1, 0.05, 0.2], [0.0, 0.1, 0.1]])
    _, grad, hess = kernel.log_derivatives(z, zeta)
    h = 1e-5
    for k in range(3):
        e = np.zeros(3)
        e[k] = h
        fd = (np.log(kernel(z + e, zeta)) - np.log(kernel(z - e, zeta))) / (2 * h)
        np.testing.assert_allclose(fd, grad[:, k], rtol=1e-6, atol=1e-6)
        d_grad = (kernel.log_derivatives(z + e, zeta)[1] - kernel.log_derivatives(z - e, zeta)[1]) / (2 * h)
        np.testing.assert_allclose(d_grad, hess[:, :, k], rtol=1e-5, atol=1e-5)


def test_heat_jet_solves_the_equation():
    model = get_model("heat-1d")
    jet = kernel_jet(model, [[0.3, 0.5]], [[0.1, 0.2]])
    w, s = 0.2, 0.3
    assert jet.first[0, 0] == pytest.approx(-w / (2 * s))
    assert jet.second[0, 0, 0] == pytest.approx(w**2 / (4 * s**2) - 1 / (2 * s))
    assert jet.drift[0] == pytest.approx(jet.second[0, 0, 0])
    assert not jet.underflow[0]


def test_jet_ratios_survive_kernel_underflow():
    # s = 1e-4 and x - xi = 1: Gamma is about exp(-1e4)
    model = get_model("kolmogorov")
    jet = kernel_jet(model, [[1.0, 0.0, 1e-4]], [[0.0, 0.0, 0.0]])
    assert jet.underflow[0]
    assert jet.gamma[0] == 0.0
    assert jet.first[0, 0] == pytest.approx(-2e4, rel=1e-6)
    horizontal, drift = jet.second[0, 0, 0], jet.drift[0]
    assert np.isfinite(horizontal) and np.isfinite(drift)
    assert abs(horizontal - drift) < 1e-4 * (abs(horizontal) + abs(drift))


# ---------- oracles on the shipped kernels ----------
@pytest.mark.parametrize("name", ["heat-1d", "euclidean-heat", "kolmogorov"])
def test_kernel_residual_vanishes(name):
    report = kernel_residual_check(get_model(name), samples=100)
    assert report.samples > 50
    assert report.max_relative < 1e-6
    assert report.to_dict()["underflow"] == report.underflow
    assert report.passed


def test_kolmogorov_closed_form_agrees_with_the_gaussian_kernel():
    report = kernel_residual_check(get_model("kolmogorov"), samples=50)
    assert report.closed_form_gap < 1e-8


def test_kolmogorov_convolution_reproduces_the_density():
    report = convolution_check(get_model("kolmogorov"), points=6)
    assert len(report.rows()) == 6
    assert report.max_error < 1e-2
    assert report.passed


def test_kolmogorov_gamma_bounds_are_finite():
    report = gamma_bound_check(get_model("kolmogorov"), samples=500)
    assert report.q == 6
    assert report.samples == (500, 2000)
    for small, large in report.sups.values():
        assert np.isfinite(small) and np.isfinite(large)
        assert small > 0.0 and large > 0.0
    raw = report.to_dict()
    assert len(raw["underflow"]) == 2
    assert {row["family"] for row in raw["families"]} == {"gamma", "first", "second", "drift"}


@pytest.mark.slow
def test_kolmogorov_gamma_bounds_are_stable():
    report = gamma_bound_check(get_model("kolmogorov"))
    assert report.samples == (10000, 40000)
    assert report.passed


# ---------- annuli ----------
def test_annulus_columns_are_scale_free_on_kolmogorov():
    report = annulus_estimates(get_model("kolmogorov"), radii=(1.0, 0.5), samples=300)
    assert "kernel_first_fresh" in report.keys
    assert report.spread("kernel_first") < 1.0 + 1e-6
    for key in report.keys:
        if key.endswith("_fresh"):
            assert all(np.isfinite(row[key]) for row in report.rows())
        else:
            assert report.spread(key) < 1.05


def test_annulus_without_fresh_columns():
    report = annulus_estimates(get_model("heat-1d"), radii=(1.0, 0.5), samples=200, fresh=False)
    assert not any(key.endswith("_fresh") for key in report.keys)
    assert report.passed


# ---------- representation quadrature ----------
@pytest.mark.parametrize("dimension, area", [(2, 2 * np.pi), (3, 4 * np.pi), (4, 2 * np.pi**2)])
def test_sphere_nodes_integrate_the_sphere(dimension, area):
    theta, weights = sphere_nodes(dimension, 16)
    np.testing.assert_allclose(np.linalg.norm(theta, axis=1), 1.0, rtol=1e-12)
    assert weights.sum() == pytest.approx(area, rel=1e-10)
    # second moments: area / n on each axis
    for k in range(dimension):
        assert np.sum(weights * theta[:, k] ** 2) == pytest.approx(area / dimension, rel=1e-10)


@pytest.mark.parametrize("name", ["heat-1d", "euclidean-heat", "kolmogorov"])
def test_shell_nodes_carry_the_shell_volume(name):
    model = get_model(name)
    chart = model.chart()
    radius = 0.5
    cut = cutoff(radius, chart, kind="smooth")
    h, pts, vol = shell_nodes(cut, 48)
    norm = cut.chart.smooth_gauge(h)
    assert np.all(norm >= CUTOFF_INNER * radius - 1e-12) and np.all(norm <= radius + 1e-12)
    # {sum |h_i|^p_i <= 1} with p_i = 2D/deg_i; the chart map preserves volume on these models
    big = lcm(*chart.degrees)
    powers = [2 * big / d for d in chart.degrees]
    unit = 2 ** len(powers) * np.prod([gamma_fn(1 + 1 / p) for p in powers]) / gamma_fn(1 + sum(1 / p for p in powers))
    expected = unit * radius ** chart.q * (1 - CUTOFF_INNER ** chart.q)
    assert vol.sum() == pytest.approx(expected, rel=1e-4)
    assert len(pts) == len(h)


def test_shell_nodes_need_the_smooth_cutoff():
    chart = get_model("heat-1d").chart()
    with pytest.raises(InputError):
        shell_nodes(cutoff(0.5, chart), 8)


@pytest.mark.parametrize("text", ["x", "1", "x**2 + 2*t"])
def test_heat_representation_reproduces_solutions(text):
    model = get_model("heat-1d")
    radius = 0.5
    report = representation_check(model, model.function(text), radius, points=6)
    d, ok = Cylinder(tuple(model.origin), radius).distance(model.chart(), np.array(report.points))
    assert ok.all() and np.all(d < 0.5 * radius + 1e-9)
    assert report.relative_error < QUADRATURE_TOL
    assert report.passed


@pytest.mark.slow
@pytest.mark.parametrize("text", ["x", "1"])
def test_kolmogorov_representation_reproduces_solutions(text):
    model = get_model("kolmogorov")
    report = representation_check(model, model.function(text), 0.5, points=6)
    assert report.relative_error < QUADRATURE_TOL
    assert report.passed
