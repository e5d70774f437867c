import math

import numpy as np
import pytest

from fdidse.dynamics import (
    FaultInterval,
    SmibNetwork,
    TruthTrajectory,
    load_trajectory,
    rk4,
    rk4_step,
    save_trajectory,
    simulate_smib,
    smib_operating_point,
    smib_terminal,
)
from fdidse.errors import Divergence, GridError, ParseError
from fdidse.machine import GeneratorParams, electrical_power, state_derivative, stator_currents

P = GeneratorParams()


def test_rk4_exponential(frozen):
    # One step reproduces the 4th-order Taylor polynomial of exp(-0.1)
    # exactly; its distance to the closed form is the local error h^5/120.
    x = rk4(lambda s: -s, np.array([1.0]), 0.1)
    assert x[0] == pytest.approx(1 - 0.1 + 0.1**2 / 2 - 0.1**3 / 6 + 0.1**4 / 24, abs=1e-15)
    assert abs(x[0] - frozen["rk4_exp"]) < 0.1**5 / 120 * 1.01
    y = np.array([1.0])
    for _ in range(10):
        y = rk4(lambda s: -s, y, 0.01)
    assert abs(y[0] - 0.90483742) < 1e-8


def test_rk4_fourth_order_convergence():
    def run(dt, horizon=2.0):
        x = np.array([1.0, 0.0])
        f = lambda s: np.array([s[1], -math.sin(s[0])])  # pendulum
        for _ in range(int(round(horizon / dt))):
            x = rk4(f, x, dt)
        return x

    ref = run(0.2 / 64)
    e1 = np.abs(run(0.2) - ref).max()
    e2 = np.abs(run(0.1) - ref).max()
    assert 3.7 <= math.log2(e1 / e2) <= 4.3


def test_equilibrium_is_fixed_point():
    x0, u0 = smib_operating_point(SmibNetwork(), P)
    np.testing.assert_allclose(state_derivative(x0, u0, P), 0.0, atol=1e-12)
    for dt in (0.001, 0.02, 0.5):
        np.testing.assert_allclose(rk4_step(x0, u0, P, dt), x0, atol=1e-12)


def test_operating_point_matches_power_flow(frozen):
    net = SmibNetwork()
    x0, u0 = smib_operating_point(net, P)
    op = frozen["operating_point"]
    assert x0[0] == pytest.approx(op["delta"], rel=1e-12)
    assert u0[3] == pytest.approx(op["theta"], rel=1e-12)
    U, phi = smib_terminal(x0, net, P, 0.0)
    assert U == pytest.approx(1.0, rel=1e-12)
    assert phi == pytest.approx(op["theta"], rel=1e-12)
    assert electrical_power(x0, u0, P) == pytest.approx(0.8, rel=1e-12)


def test_terminal_consistent_with_stator_circuit():
    net = SmibNetwork(X_e=0.35, V_inf=1.02)
    x = np.array([0.7, 1.0, 1.1, 0.25])
    U, phi = smib_terminal(x, net, P, 0.0)
    i_d, i_q = stator_currents(x, [0, 0, U, phi], P)
    # Series circuit to the infinite bus, solved independently.
    s, c = math.sin(x[0]), math.cos(x[0])
    assert i_d == pytest.approx((x[2] - 1.02 * c) / (P.X_d_p + 0.35), abs=1e-10)
    assert i_q == pytest.approx((1.02 * s - x[3]) / (P.X_q_p + 0.35), abs=1e-10)


def test_terminal_at_vanishing_reactance():
    U, phi = smib_terminal([0.6, 1.0, 1.2, 0.1], SmibNetwork(X_e=1e-12, V_inf=1.0), P, 0.0)
    assert U == pytest.approx(1.0, abs=1e-9)
    assert phi == pytest.approx(0.0, abs=1e-9)


def test_no_fault_stays_at_rest():
    traj = simulate_smib(P, SmibNetwork(), 20.0)
    assert len(traj) == 1001
    np.testing.assert_allclose(traj.x, np.broadcast_to(traj.x[0], traj.x.shape), atol=1e-9)


def test_fault_excites_swing(truth):
    pre = truth.x[0, 0]
    assert truth.x[:, 0].max() > pre
    assert truth.x[:, 1].max() > 1.0 + 1e-4
    assert len(truth) == 1001 and truth.dt == pytest.approx(0.02)


def test_substep_convergence():
    net = SmibNetwork(fault_schedule=(FaultInterval(1.2, 1.3, 0.2, 0.0),))
    a = simulate_smib(P, net, 5.0, n_sub=10)
    b = simulate_smib(P, net, 5.0, n_sub=20)
    assert np.abs(a.x[-1] - b.x[-1]).max() < 1e-8


def test_divergence_detected():
    with pytest.raises(Divergence):
        # A long bolted fault on an undamped machine runs it out of step.
        simulate_smib(GeneratorParams(D=0.0), SmibNetwork(fault_schedule=(FaultInterval(0.1, 9.0, 0.2, 0.0),)), 10.0)


def test_roundtrip(tmp_path, truth):
    path = tmp_path / "truth.csv"
    save_trajectory(truth, path)
    back = load_trajectory(path)
    np.testing.assert_array_equal(back.t, truth.t)
    np.testing.assert_array_equal(back.x, truth.x)
    np.testing.assert_array_equal(back.u, truth.u)


def test_missing_column(tmp_path):
    path = tmp_path / "bad.csv"
    path.write_text("t,delta,omega,eq_p,ed_p,tm,ef,u\n0,0,1,1,0,0.8,1.5,1\n0.02,0,1,1,0,0.8,1.5,1\n")
    with pytest.raises(ParseError, match="phi"):
        load_trajectory(path)


def test_non_uniform_grid(tmp_path):
    rows = "\n".join(f"{t},0.5,1,1,0,0.8,1.5,1,0.1" for t in (0, 0.02, 0.05))
    path = tmp_path / "g.csv"
    path.write_text("t,delta,omega,eq_p,ed_p,tm,ef,u,phi\n" + rows + "\n")
    with pytest.raises(GridError):
        load_trajectory(path)


def test_malformed_row(tmp_path):
    path = tmp_path / "m.csv"
    path.write_text("t,delta,omega,eq_p,ed_p,tm,ef,u,phi\n0,0.5,1,1,0,0.8,1.5,1,abc\n")
    with pytest.raises(ParseError):
        load_trajectory(path)


def test_network_schedule():
    net = SmibNetwork(fault_schedule=(FaultInterval(1.0, 1.05, 0.2, 0.0), FaultInterval(1.05, 1.1, 0.6, 1.0)))
    assert net.at(0.5) == (0.4, 1.0)
    assert net.at(1.0) == (0.2, 0.0)
    assert net.at(1.07) == (0.6, 1.0)
    assert net.at(1.1) == (0.4, 1.0)


def test_trajectory_needs_two_samples():
    with pytest.raises(GridError):
        TruthTrajectory([0.0], np.zeros((1, 4)), np.zeros((1, 4)))


def test_smib_self_convergence_order():
    net = SmibNetwork()
    x0, _ = smib_operating_point(net, P)
    x0 = x0 + np.array([0.2, 0.005, 0.0, 0.0])

    def end(n_sub):
        return simulate_smib(P, net, 1.0, dt=0.02, n_sub=n_sub, x0=x0).x[-1]

    ref = end(64)
    e1 = np.abs(end(1) - ref).max()
    e2 = np.abs(end(2) - ref).max()
    assert 3.7 <= math.log2(e1 / e2) <= 4.3


def test_speed_peaks_decay_without_fault():
    net = SmibNetwork()
    x0, _ = smib_operating_point(net, P)
    traj = simulate_smib(P, net, 10.0, x0=x0 + np.array([0.0, 0.01, 0.0, 0.0]))
    dev = np.abs(traj.x[:, 1] - 1.0)
    peaks = [dev[k] for k in range(1, len(dev) - 1) if dev[k] >= dev[k - 1] and dev[k] > dev[k + 1]]
    assert len(peaks) >= 3
    assert all(b <= a for a, b in zip(peaks, peaks[1:]))
