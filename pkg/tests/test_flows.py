import numpy as np
import pytest

from hormander_lab.config import LabSettings
from hormander_lab.errors import FlowEscapeError, InputError
from hormander_lab.flows import (composite_flow, composite_sequence, exp_star, flow, flow_batch, flow_commutator_defect, invert_sequence,
                                 lie_series, run_sequence)
from hormander_lab.models import get_model
from hormander_lab.polynomial import Polynomial
from hormander_lab.vectorfields import CommutatorWord, VectorField

KOLMOGOROV = get_model("kolmogorov")


def test_drift_flow_is_exact():
    x0 = KOLMOGOROV.drift
    z = np.array([0.3, -0.1, 0.2])
    np.testing.assert_allclose(flow(x0, 0.5, z), [0.3, -0.1 + 0.15, 0.7])


def test_rk4_agrees_with_lie_series():
    x0 = KOLMOGOROV.drift
    pts = np.array([[0.3, -0.1, 0.2], [-1.0, 0.5, 0.0]])
    series, _ = flow_batch(x0, 0.7, pts)
    rk4, ok = flow_batch(x0, 0.7, pts, LabSettings(flow_integrator="rk4"))
    assert ok.all()
    np.testing.assert_allclose(rk4, series, atol=1e-12)


def test_non_nilpotent_field_has_no_series():
    y = Polynomial.variable(2, 1)
    rotation = VectorField((-y, Polynomial.variable(2, 0)))
    assert lie_series(rotation, 8) is None
    end = flow(rotation, np.pi / 2, np.array([1.0, 0.0]))
    np.testing.assert_allclose(end, [0.0, 1.0], atol=1e-7)


def test_escape_is_reported():
    x = Polynomial.variable(1, 0)
    blowup = VectorField((x * x,))
    _, ok = flow_batch(blowup, 2.0, np.array([[1.0]]), LabSettings(flow_integrator="rk4"))
    assert not ok[0]
    with pytest.raises(FlowEscapeError):
        flow(blowup, 2.0, np.array([1.0]), LabSettings(flow_integrator="rk4"))


def test_dimension_mismatch():
    with pytest.raises(InputError):
        flow_batch(KOLMOGOROV.drift, 0.1, np.zeros((1, 2)))


def test_inverse_sequence_returns_home():
    gens = KOLMOGOROV.generators
    seq = composite_sequence(0.3, (1, 0))
    z = np.array([[0.2, 0.1, -0.3]])
    there, _ = run_sequence(seq, gens, z)
    back, _ = run_sequence(invert_sequence(seq), gens, there)
    np.testing.assert_allclose(back, z, atol=1e-14)


def test_exp_star_realizes_the_bracket_direction():
    gens = KOLMOGOROV.generators
    word = CommutatorWord.nested([1, 0])
    z = np.array([0.2, 0.1, -0.3])
    np.testing.assert_allclose(exp_star(0.008, word, z, gens), z + [0.0, 0.008, 0.0], atol=1e-14)
    np.testing.assert_allclose(exp_star(-0.008, word, z, gens), z - [0.0, 0.008, 0.0], atol=1e-14)


def test_commutator_defect_is_third_order():
    one = Polynomial.constant(2, 1.0)
    x = Polynomial.variable(2, 0)
    x1 = VectorField((one, Polynomial.zero(2)))
    x2 = VectorField((Polynomial.zero(2), x * x))
    z = np.array([0.3, 0.1])
    for a in (1e-3, 1e-2, 1e-1):
        assert flow_commutator_defect(x1, x2, a, z) == pytest.approx(a**3, rel=1e-6)


def test_heisenberg_commutator_is_exact():
    model = get_model("heisenberg-time")
    _, x1, x2 = model.generators
    assert flow_commutator_defect(x1, x2, 0.1, np.array([0.2, -0.1, 0.3, 0.0])) < 1e-14


def test_composite_flow_on_commuting_fields():
    gens = get_model("heat-1d").generators
    np.testing.assert_allclose(composite_flow(0.3, [1], [0.0, 0.0], gens), [0.3, 0.0], atol=1e-12)
    z = np.array([0.2, -0.1])
    np.testing.assert_allclose(composite_flow(0.4, [1, 0], z, gens), z, atol=1e-10)
    with pytest.raises(InputError):
        composite_flow(0.3, [], z, gens)
