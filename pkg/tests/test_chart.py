import json

import numpy as np
import pytest
from hypothesis import given, strategies as st

from hormander_lab.chart import ExpChart, dilation, gauge, load_chart, quasi_triangle_constant, smooth_gauge
from hormander_lab.errors import ChartRadiusError, InputError, RankDeficientError
from hormander_lab.models import get_model

DEGREES = (1, 2, 3)
coords = st.lists(st.floats(-1.0, 1.0), min_size=3, max_size=3).map(np.array)


@given(coords, st.floats(0.01, 10.0))
def test_gauge_is_homogeneous(h, r):
    assert gauge(dilation(h, r, DEGREES), DEGREES) == pytest.approx(r * gauge(h, DEGREES), rel=1e-9, abs=1e-12)


@given(coords)
def test_smooth_gauge_brackets_gauge(h):
    n = smooth_gauge(h, DEGREES)
    assert n <= gauge(h, DEGREES) + 1e-12
    assert gauge(h, DEGREES) <= len(DEGREES) * n + 1e-12


def test_heat_distance_closed_form():
    chart = get_model("heat-1d").chart()
    assert chart.quasi_distance(np.array([0.1, 0.04])) == pytest.approx(0.3, abs=1e-9)
    assert chart.quasi_distance(np.zeros(2)) == pytest.approx(0.0, abs=1e-12)


@pytest.mark.parametrize("name", ["heat-1d", "kolmogorov", "heisenberg-time"])
def test_jacobian_at_origin_is_the_basis(name):
    assert get_model(name).chart().jacobian_defect() < 1e-6


@pytest.mark.parametrize("name", ["kolmogorov", "heisenberg-time"])
def test_log_inverts_e(name):
    chart = get_model(name).chart()
    report = chart.round_trip_error(200, np.random.default_rng(5))
    assert report["failures"] == 0
    assert report["max_error"] < 1e-8


def test_kolmogorov_chart_commutes_with_dilation():
    chart = get_model("kolmogorov").chart()
    zeta = chart.e_map(np.array([0.1, -0.02, 0.003]))
    r = 0.5
    np.testing.assert_allclose(chart.dilate(r, zeta), zeta * np.array([r, r**3, r**2]), atol=1e-9)


def test_e_map_enforces_radius():
    chart = get_model("kolmogorov").chart()
    with pytest.raises(ChartRadiusError):
        chart.e_map(np.array([0.6, 0.0, 0.0]))


def test_quasi_triangle_is_seeded():
    chart = get_model("kolmogorov").chart()
    first = quasi_triangle_constant(chart, 300, np.random.default_rng(11))
    second = quasi_triangle_constant(chart, 300, np.random.default_rng(11))
    assert first == second
    assert 0.0 < first["C_d"] < np.inf


@pytest.mark.parametrize("name", ["kolmogorov", "heisenberg-time"])
def test_chart_dump_round_trips_through_json(name, tmp_path):
    model = get_model(name)
    chart = model.chart(np.full(model.dimension, 0.1))
    path = tmp_path / "chart.json"
    path.write_text(json.dumps(chart.to_dict()))
    loaded = load_chart(path, model.generators)
    assert [w.label() for w in loaded.basis.words] == [w.label() for w in chart.basis.words]
    assert loaded.base_point == chart.base_point
    assert loaded.radius == chart.radius
    h = chart.sample_coordinates(50, np.random.default_rng(3), chart.radius / 2.0)
    np.testing.assert_allclose(loaded.e_map(h), chart.e_map(h), atol=1e-12)


def test_chart_dump_carries_integrator_settings():
    model = get_model("kolmogorov")
    raw = model.chart().to_dict()
    raw["integrator"]["flow_integrator"] = "rk4"
    raw["integrator"]["steps_per_unit"] = 128
    loaded = ExpChart.from_dict(raw, model.generators)
    assert loaded.settings.flow_integrator == "rk4"
    assert loaded.settings.steps_per_unit == 128


def test_chart_dump_rejects_bad_words():
    model = get_model("kolmogorov")
    raw = model.chart().to_dict()
    wrong_degrees = dict(raw, degrees=[1, 1, 3])
    with pytest.raises(InputError):
        ExpChart.from_dict(wrong_degrees, model.generators)
    dependent = dict(raw, words=["X1", "X0", "X1"], degrees=[1, 2, 1])
    with pytest.raises(RankDeficientError):
        ExpChart.from_dict(dependent, model.generators)
    with pytest.raises(InputError):
        ExpChart.from_dict({"words": raw["words"]}, model.generators)
