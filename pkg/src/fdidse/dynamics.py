"""Ground-truth trajectories for a single machine.

The machine is closed either by a single-machine-infinite-bus network
(:class:`SmibNetwork`) or by states and terminal quantities read from a CSV
file produced elsewhere (:func:`load_trajectory`).
"""

import csv
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import Divergence, GridError, ParseError
from .machine import GeneratorParams, state_derivative

OMEGA_BAND = (0.5, 1.5)
TRAJECTORY_COLUMNS = ("t", "delta", "omega", "eq_p", "ed_p", "tm", "ef", "u", "phi")


@dataclass(frozen=True)
class FaultInterval:
    t_start: float
    t_end: float
    X_e: float
    V_inf: float


@dataclass(frozen=True)
class SmibNetwork:
    """External reactance to an infinite bus plus scripted disturbances.

    ``p_e0`` and ``u0`` fix the pre-disturbance operating point (terminal
    active power and voltage magnitude).
    """

    X_e: float = 0.4
    V_inf: float = 1.0
    fault_schedule: tuple = ()
    p_e0: float = 0.8
    u0: float = 1.0

    def __post_init__(self):
        if self.X_e <= 0 or self.V_inf <= 0:
            raise ValueError("X_e and V_inf must be positive")
        last_end = -math.inf
        for f in sorted(self.fault_schedule, key=lambda f: f.t_start):
            if f.t_end <= f.t_start:
                raise ValueError(f"fault interval {f} is empty")
            if f.t_start < last_end:
                raise ValueError("fault intervals overlap")
            if f.X_e <= 0 or f.V_inf < 0:
                raise ValueError(f"fault interval {f} has invalid network values")
            last_end = f.t_end

    def at(self, t):
        """Effective ``(X_e, V_inf)`` at time ``t``."""
        for f in self.fault_schedule:
            if f.t_start <= t < f.t_end:
                return f.X_e, f.V_inf
        return self.X_e, self.V_inf


@dataclass
class TruthTrajectory:
    t: np.ndarray
    x: np.ndarray  # (N, 4)
    u: np.ndarray  # (N, 4)
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        self.t = np.asarray(self.t, dtype=float)
        self.x = np.asarray(self.x, dtype=float)
        self.u = np.asarray(self.u, dtype=float)
        n = len(self.t)
        if n < 2:
            raise GridError("trajectory needs at least two samples")
        if self.x.shape != (n, 4) or self.u.shape != (n, 4):
            raise ValueError("state and control arrays must be (N, 4)")

    def __len__(self):
        return len(self.t)

    @property
    def dt(self):
        return float(self.t[1] - self.t[0])


def rk4(fun, x, dt):
    """One classical Runge-Kutta step of the autonomous system ``dx/dt = fun(x)``."""
    k1 = fun(x)
    k2 = fun(x + 0.5 * dt * k1)
    k3 = fun(x + 0.5 * dt * k2)
    k4 = fun(x + dt * k3)
    return x + (dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)


def check_state(x):
    x = np.asarray(x)
    if not np.all(np.isfinite(x)):
        raise Divergence(f"non-finite state {x}")
    omega = x[..., 1]
    if np.any(omega < OMEGA_BAND[0]) or np.any(omega > OMEGA_BAND[1]):
        raise Divergence(f"omega left {OMEGA_BAND}: {omega}")


def rk4_step(x, u, p: GeneratorParams, dt, check=True):
    """Advance the machine by ``dt`` with the control input held constant.

    ``x`` may be a stack of states.  With ``check`` the result is screened
    for divergence; the estimators switch it off because a cubature point
    far outside the band is not an error of the underlying system.
    """
    if dt <= 0:
        raise ValueError("dt must be positive")
    u = np.asarray(u, dtype=float)
    out = rk4(lambda s: state_derivative(s, u, p), np.asarray(x, dtype=float), dt)
    if check:
        check_state(out)
    return out


def _series_circuit(x, X_e, V_inf, p):
    delta, _, eq_p, ed_p = x[0], x[1], x[2], x[3]
    s, c = math.sin(delta), math.cos(delta)
    i_d = (eq_p - V_inf * c) / (p.X_d_p + X_e)
    i_q = (V_inf * s - ed_p) / (p.X_q_p + X_e)
    u_q = V_inf * c + X_e * i_d
    u_d = V_inf * s - X_e * i_q
    return i_d, i_q, u_d, u_q


def smib_terminal(x, net: SmibNetwork, p: GeneratorParams, t):
    """Terminal voltage magnitude and phase (infinite bus at angle zero)."""
    X_e, V_inf = net.at(t)
    _, _, u_d, u_q = _series_circuit(x, X_e, V_inf, p)
    mag = math.hypot(u_d, u_q)
    if mag <= 1e-6:
        raise Divergence(f"terminal voltage collapsed at t={t}")
    return mag, x[0] - math.atan2(u_d, u_q)


def smib_operating_point(net: SmibNetwork, p: GeneratorParams):
    """Steady state that delivers ``net.p_e0`` at terminal magnitude ``net.u0``.

    Returns ``(x0, u0)`` with the control vector carrying the mechanical
    torque and excitation that hold the machine at rest.
    """
    ratio = net.p_e0 * net.X_e / (net.u0 * net.V_inf)
    if abs(ratio) >= 1.0:
        raise Divergence("operating point beyond the steady-state transfer limit")
    theta = math.asin(ratio)
    v_t = net.u0 * complex(math.cos(theta), math.sin(theta))
    current = (v_t - net.V_inf) / complex(0.0, net.X_e)
    delta = math.atan2((v_t + 1j * p.X_q * current).imag, (v_t + 1j * p.X_q * current).real)
    rot = complex(math.cos(delta - math.pi / 2), -math.sin(delta - math.pi / 2))
    i_dq = current * rot
    v_dq = v_t * rot
    i_d, i_q = i_dq.real, i_dq.imag
    ed_p = v_dq.real - p.X_q_p * i_q
    eq_p = v_dq.imag + p.X_d_p * i_d
    ef = eq_p + (p.X_d - p.X_d_p) * i_d
    x0 = np.array([delta, 1.0, eq_p, ed_p])
    u0 = np.array([net.p_e0, ef, net.u0, theta])
    return x0, u0


def simulate_smib(p: GeneratorParams, net: SmibNetwork, horizon, dt=0.02, n_sub=10, x0=None):
    """Integrate the SMIB-closed machine and sample it every ``dt`` seconds.

    Mechanical torque and excitation stay at their pre-disturbance values.
    The network is frozen within each sub-step at its value at the sub-step
    midpoint, so fault edges that fall on the sub-step grid are honoured
    exactly.
    """
    if horizon <= 0 or dt <= 0 or n_sub < 1:
        raise ValueError("horizon, dt and n_sub must be positive")
    x_eq, u_eq = smib_operating_point(net, p)
    x = x_eq.copy() if x0 is None else np.asarray(x0, dtype=float).copy()
    tm, ef = u_eq[0], u_eq[1]
    n = int(round(horizon / dt)) + 1
    h = dt / n_sub
    t = np.arange(n) * dt
    xs = np.empty((n, 4))
    us = np.empty((n, 4))

    def closed_loop(net_xv, state):
        X_e, V_inf = net_xv
        i_d, i_q, _, _ = _series_circuit(state, X_e, V_inf, p)
        t_e = state[3] * i_d + state[2] * i_q + (p.X_q_p - p.X_d_p) * i_d * i_q
        return np.array(
            [
                p.angle_rate_scale * (state[1] - 1.0),
                (tm - t_e - p.D * (state[1] - 1.0)) / p.T_J,
                (ef - state[2] - (p.X_d - p.X_d_p) * i_d) / p.T_d0_p,
                (-state[3] + (p.X_q - p.X_q_p) * i_q) / p.T_q0_p,
            ]
        )

    for k in range(n):
        mag, phase = smib_terminal(x, net, p, t[k])
        xs[k] = x
        us[k] = (tm, ef, mag, phase)
        if k == n - 1:
            break
        for j in range(n_sub):
            net_xv = net.at(t[k] + (j + 0.5) * h)
            x = rk4(lambda s: closed_loop(net_xv, s), x, h)
            check_state(x)
    return TruthTrajectory(t, xs, us, meta={"source": "smib", "n_sub": n_sub})


def save_trajectory(traj: TruthTrajectory, path):
    path = Path(path)
    with path.open("w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(TRAJECTORY_COLUMNS)
        for k in range(len(traj)):
            row = [traj.t[k], *traj.x[k], *traj.u[k]]
            w.writerow([repr(float(v)) for v in row])


def load_trajectory(path, expected_dt=None):
    """Read a trajectory CSV; columns may appear in any order."""
    path = Path(path)
    with path.open(newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = [h.strip() for h in next(reader)]
        except StopIteration:
            raise ParseError(f"{path}: empty file") from None
        missing = [c for c in TRAJECTORY_COLUMNS if c not in header]
        if missing:
            raise ParseError(f"{path}: missing column(s) {', '.join(missing)}")
        idx = [header.index(c) for c in TRAJECTORY_COLUMNS]
        rows = []
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            try:
                rows.append([float(row[i]) for i in idx])
            except (ValueError, IndexError):
                raise ParseError(f"{path}:{lineno}: malformed row {row!r}") from None
    data = np.array(rows, dtype=float).reshape(-1, len(TRAJECTORY_COLUMNS))
    if len(data) < 2:
        raise GridError(f"{path}: need at least two samples")
    if not np.all(np.isfinite(data)):
        raise ParseError(f"{path}: non-finite values")
    t = data[:, 0]
    steps = np.diff(t)
    dt = steps[0]
    if dt <= 0 or np.max(np.abs(steps - dt)) > 1e-9 * max(1.0, abs(dt)):
        raise GridError(f"{path}: timestamps are not on a uniform grid")
    if expected_dt is not None and abs(dt - expected_dt) > 1e-9:
        raise GridError(f"{path}: sample interval {dt} differs from configured dt {expected_dt}")
    return TruthTrajectory(t, data[:, 1:5], data[:, 5:9], meta={"source": str(path)})
