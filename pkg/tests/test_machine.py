import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from fdidse.machine import (
    GeneratorParams,
    electrical_power,
    electromagnetic_torque,
    equilibrium_emfs,
    measurement_fn,
    measurement_jacobian,
    power_partials,
    state_derivative,
    stator_currents,
)

P = GeneratorParams()

angles = st.floats(-3.0, 3.0)
states = st.tuples(angles, st.floats(0.9, 1.1), st.floats(0.3, 1.6), st.floats(-0.8, 0.8))
inputs = st.tuples(st.floats(0.0, 1.5), st.floats(0.5, 3.0), st.floats(0.5, 1.3), angles)


def test_currents_vanish_when_emf_matches_terminal():
    i_d, i_q = stator_currents([0.4, 1.0, 1.05, 0.0], [0.8, 1.5, 1.05, 0.4], P)
    assert i_d == pytest.approx(0.0, abs=1e-15)
    assert i_q == pytest.approx(0.0, abs=1e-15)


def test_currents_quarter_turn():
    i_d, i_q = stator_currents([math.pi / 2, 1.0, 1.0, 0.0], [0.0, 0.0, 1.0, 0.0], P)
    assert i_d == pytest.approx(1 / 0.3, rel=1e-12)
    assert i_q == pytest.approx(2.0, rel=1e-12)


def test_against_symbolic_oracle(frozen):
    for pt in frozen["machine"]:
        x, u = pt["x"], pt["u"]
        i_d, i_q = stator_currents(x, u, P)
        assert i_d == pytest.approx(pt["i_d"], rel=1e-12)
        assert i_q == pytest.approx(pt["i_q"], rel=1e-12)
        assert electrical_power(x, u, P) == pytest.approx(pt["pe"], rel=1e-12, abs=1e-14)
        assert electromagnetic_torque(x, u, P) == pytest.approx(pt["te"], rel=1e-12, abs=1e-14)
        np.testing.assert_allclose(state_derivative(x, u, P), pt["f"], rtol=1e-11, atol=1e-13)
        np.testing.assert_allclose(measurement_jacobian(x, u, P), pt["H"], rtol=1e-11, atol=1e-13)
        _, _, _, d_u, d_phi = power_partials(x, u, P)
        assert d_u == pytest.approx(pt["dpe_du"], rel=1e-11, abs=1e-13)
        assert d_phi == pytest.approx(pt["dpe_dphi"], rel=1e-11, abs=1e-13)


def test_zero_power_point():
    x, u = [0.3, 1.0, 1.0, 0.0], [0.0, 1.0, 1.0, 0.3]
    assert electrical_power(x, u, P) == pytest.approx(0.0, abs=1e-15)
    assert electromagnetic_torque(x, u, P) == pytest.approx(0.0, abs=1e-15)
    np.testing.assert_allclose(measurement_fn(x, u, P), [0.3, 1.0, 0.0], atol=1e-15)


@settings(max_examples=300, deadline=None)
@given(states, inputs)
def test_power_equals_airgap_torque(x, u):
    pe = electrical_power(x, u, P)
    te = electromagnetic_torque(x, u, P)
    assert abs(pe - te) <= 1e-12 * max(1.0, abs(te))


@settings(max_examples=200, deadline=None)
@given(states, inputs)
def test_measurement_identity_rows(x, u):
    z = measurement_fn(x, u, P)
    assert z[0] == x[0] and z[1] == x[1]
    assert z[2] == electrical_power(x, u, P)
    H = measurement_jacobian(x, u, P)
    assert H[0].tolist() == [1, 0, 0, 0] and H[1].tolist() == [0, 1, 0, 0]
    assert H[2, 1] == 0.0


def test_jacobian_aligned_rotor():
    # With the rotor aligned to the terminal phasor, dPe/dEq vanishes and
    # dPe/dEd = -U/Xq' (the sign that makes the power terminal power).
    H = measurement_jacobian([0.2, 1.0, 1.1, 0.1], [0.8, 1.5, 1.02, 0.2], P)
    assert H[2, 2] == pytest.approx(0.0, abs=1e-15)
    assert H[2, 3] == pytest.approx(-1.02 / 0.5, rel=1e-14)


def _fd_jacobian(x, u, h=1e-6):
    x = np.asarray(x, dtype=float)
    J = np.empty((3, 4))
    for j in range(4):
        e = np.zeros(4)
        e[j] = h
        J[:, j] = (measurement_fn(x + e, u, P) - measurement_fn(x - e, u, P)) / (2 * h)
    return J


@settings(max_examples=200, deadline=None)
@given(states, inputs)
def test_jacobian_matches_finite_differences(x, u):
    H = measurement_jacobian(x, u, P)
    J = _fd_jacobian(x, u)
    scale = max(1.0, np.abs(H[2]).max())
    assert np.abs(H - J).max() <= 1e-6 * scale


def _equilibrium():
    u = np.array([0.0, 1.8, 1.0, 0.25])
    delta = 0.9
    eq_p, ed_p = equilibrium_emfs(delta, u, P)
    x = np.array([delta, 1.0, eq_p, ed_p])
    u[0] = electromagnetic_torque(x, u, P)
    return x, u


def test_equilibrium_derivative_is_zero():
    x, u = _equilibrium()
    np.testing.assert_allclose(state_derivative(x, u, P), 0.0, atol=1e-14)


def test_speed_deviation_damping():
    x, u = _equilibrium()
    x = x.copy()
    x[1] = 1.01
    assert state_derivative(x, u, P)[1] == pytest.approx(-2 * 0.01 / 10, rel=1e-12)


def test_angle_rate_modes():
    x, u = [0.1, 1.01, 1.0, 0.0], [0.5, 1.5, 1.0, 0.0]
    fast = state_derivative(x, u, P)[0]
    slow = state_derivative(x, u, GeneratorParams(angle_rate="paper_literal"))[0]
    assert slow == pytest.approx(0.01, rel=1e-12)
    assert fast == pytest.approx(2 * math.pi * 50 * 0.01, rel=1e-12)


def test_vectorised_matches_pointwise():
    rng = np.random.default_rng(3)
    X = np.column_stack([rng.uniform(-1, 1, 8), rng.uniform(0.95, 1.05, 8),
                         rng.uniform(0.8, 1.2, 8), rng.uniform(-0.3, 0.3, 8)])
    u = [0.8, 1.5, 1.0, 0.1]
    batch = state_derivative(X, u, P)
    for k in range(8):
        np.testing.assert_array_equal(batch[k], state_derivative(X[k], u, P))


@pytest.mark.parametrize("field,value", [("T_J", 0.0), ("X_d_p", -1.0), ("D", -0.1), ("X_d", 0.1)])
def test_invalid_params_rejected(field, value):
    with pytest.raises(ValueError):
        GeneratorParams(**{field: value})
