import numpy as np
import pytest

from hormander_lab.errors import InputError
from hormander_lab.grid import CylinderGrid, DirichletProblem, dirichlet_solve, second_order_directions
from hormander_lab.models import CoefficientField, Cylinder, get_model


def zero(points):
    return np.zeros(len(points))


def one(points):
    return np.ones(len(points))


@pytest.fixture(scope="module")
def heat():
    return get_model("heat-1d")


@pytest.fixture(scope="module")
def caloric_solution(heat):
    problem = DirichletProblem(heat, Cylinder((0.0, 0.0), 0.5), heat.function("x**2 + 2*t"))
    return dirichlet_solve(problem, resolution=13)


def test_constants_are_reproduced():
    model = get_model("kolmogorov")
    sol = dirichlet_solve(DirichletProblem(model, Cylinder((0.0, 0.0, 0.0), 0.5), one), resolution=9)
    np.testing.assert_allclose(sol.values, 1.0, atol=1e-9)


def test_caloric_polynomial_is_exact(caloric_solution):
    pts = caloric_solution.grid.points
    np.testing.assert_allclose(caloric_solution.values, pts[:, 0] ** 2 + 2.0 * pts[:, 1], atol=1e-8)


def test_spline_readout_is_exact_on_quadratics(caloric_solution):
    points = np.array([[0.1, 0.05], [-0.2, -0.1], [0.33, 0.0]])
    np.testing.assert_allclose(caloric_solution(points), points[:, 0] ** 2 + 2.0 * points[:, 1], atol=1e-8)


def test_center_jet(caloric_solution, heat):
    jet = caloric_solution.center_jet(heat)
    assert jet["X1X1"] == pytest.approx(2.0, abs=1e-6)
    assert jet["X0"] == pytest.approx(2.0, abs=1e-6)


def test_barrier_bounds_kolmogorov():
    model = get_model("kolmogorov")
    radius = 0.5
    sol = dirichlet_solve(DirichletProblem(model, Cylinder((0.0, 0.0, 0.0), radius), zero, rhs=1.0), resolution=13)
    assert np.all(sol.values <= 1e-8)
    assert np.all(sol.values >= -radius**2 / 2.0 - 1e-8)
    assert sol.drift_rate[0] == pytest.approx(1.0)


def test_jacobi_matches_direct(heat):
    problem = DirichletProblem(heat, Cylinder((0.0, 0.0), 0.5), heat.function("sin(3*x) + t"))
    direct = dirichlet_solve(problem, resolution=9)
    jacobi = dirichlet_solve(problem, resolution=9, method="jacobi")
    np.testing.assert_allclose(jacobi.values, direct.values, atol=1e-5)
    assert len(jacobi.history) > 1


def test_rejects_bad_input(heat):
    chart = heat.chart()
    with pytest.raises(InputError):
        CylinderGrid(chart, 0.5, 8)
    with pytest.raises(InputError):
        CylinderGrid(chart, 0.5, 9, width=0)
    problem = DirichletProblem(heat, Cylinder((0.0, 0.0), 0.5), zero)
    with pytest.raises(InputError):
        dirichlet_solve(problem, resolution=9, method="gauss-seidel")
    negative = DirichletProblem(heat, Cylinder((0.0, 0.0), 0.5), zero, coefficients=CoefficientField.from_matrix([[-1.0]]))
    with pytest.raises(InputError):
        dirichlet_solve(negative, resolution=9)


def test_interior_is_the_gauge_ball(heat):
    grid = CylinderGrid(heat.chart(), 0.5, 9)
    assert grid.interior[grid.center_index]
    assert not grid.interior.all()
    assert np.all(grid.gauge[grid.interior] < 0.5)


def test_mixed_coefficients_split_into_nonnegative_weights():
    gens = get_model("heisenberg-time").generators
    a = np.array([[[1.0, 0.3], [0.3, 1.0]]])
    parts = second_order_directions(gens, a)
    weights = np.array([c[0] for _, c in parts])
    np.testing.assert_allclose(weights, [0.7, 0.7, 0.3])
