"""Two-axis synchronous generator model.

States are ordered ``[delta, omega, eq_p, ed_p]`` and control inputs
``[tm, ef, u, phi]``.  Every function accepts anything ``np.asarray`` can
digest, including stacked arrays whose last axis holds the components, so
the same code evaluates a single operating point or a whole batch of
cubature points.
"""

from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

DELTA, OMEGA, EQ_P, ED_P = range(4)
TM, EF, U, PHI = range(4)

STATE_NAMES = ("delta", "omega", "eq_p", "ed_p")
CONTROL_NAMES = ("tm", "ef", "u", "phi")
MEASUREMENT_NAMES = ("delta_z", "omega_z", "pe_z")

ANGLE_RATE_MODES = ("synchronous", "paper_literal")


class MachineState(NamedTuple):
    delta: float
    omega: float
    eq_p: float
    ed_p: float


class ControlInput(NamedTuple):
    tm: float
    ef: float
    u: float
    phi: float


@dataclass(frozen=True)
class GeneratorParams:
    """Machine constants in per unit on the machine base.

    ``angle_rate`` selects how the rotor angle integrates speed deviation:
    ``"synchronous"`` uses ``omega_s * (omega - 1)`` (angle in electrical
    radians, time in seconds) and ``"paper_literal"`` uses ``omega - 1``.
    """

    T_J: float = 10.0
    D: float = 2.0
    X_d: float = 1.2
    X_d_p: float = 0.3
    X_q: float = 1.0
    X_q_p: float = 0.5
    T_d0_p: float = 6.0
    T_q0_p: float = 0.5
    omega_s: float = 2 * np.pi * 50.0
    angle_rate: str = "synchronous"

    def __post_init__(self):
        for name in ("T_J", "X_d", "X_d_p", "X_q", "X_q_p", "T_d0_p", "T_q0_p", "omega_s"):
            value = getattr(self, name)
            if not np.isfinite(value) or value <= 0:
                raise ValueError(f"{name} must be strictly positive, got {value}")
        if not np.isfinite(self.D) or self.D < 0:
            raise ValueError(f"D must be non-negative, got {self.D}")
        if self.X_d < self.X_d_p:
            raise ValueError("X_d must not be smaller than X_d_p")
        if self.X_q < self.X_q_p:
            raise ValueError("X_q must not be smaller than X_q_p")
        if self.angle_rate not in ANGLE_RATE_MODES:
            raise ValueError(f"angle_rate must be one of {ANGLE_RATE_MODES}")

    @property
    def angle_rate_scale(self):
        return self.omega_s if self.angle_rate == "synchronous" else 1.0


def _split(x, u):
    x = np.asarray(x, dtype=float)
    u = np.asarray(u, dtype=float)
    return x[..., DELTA], x[..., OMEGA], x[..., EQ_P], x[..., ED_P], u[..., U], u[..., PHI]


def stator_currents(x, u, p: GeneratorParams):
    """Return ``(i_d, i_q)`` from the algebraic stator equations."""
    delta, _, eq_p, ed_p, v, phi = _split(x, u)
    i_d = (eq_p - v * np.cos(delta - phi)) / p.X_d_p
    i_q = (v * np.sin(delta - phi) - ed_p) / p.X_q_p
    return i_d, i_q


def electrical_power(x, u, p: GeneratorParams):
    """Active power delivered at the terminal.

    The d-axis EMF term carries a minus sign so that this expression is the
    terminal power ``U_d i_d + U_q i_q`` implied by :func:`stator_currents`.
    """
    delta, _, eq_p, ed_p, v, phi = _split(x, u)
    ang = delta - phi
    return (
        0.5 * v**2 * np.sin(2.0 * ang) * (1.0 / p.X_q_p - 1.0 / p.X_d_p)
        + v * np.sin(ang) * eq_p / p.X_d_p
        - v * np.cos(ang) * ed_p / p.X_q_p
    )


def electromagnetic_torque(x, u, p: GeneratorParams):
    """Air-gap torque ``E'd i_d + E'q i_q + (X'q - X'd) i_d i_q`` in pu."""
    x = np.asarray(x, dtype=float)
    i_d, i_q = stator_currents(x, u, p)
    return x[..., ED_P] * i_d + x[..., EQ_P] * i_q + (p.X_q_p - p.X_d_p) * i_d * i_q


def state_derivative(x, u, p: GeneratorParams):
    x = np.asarray(x, dtype=float)
    u = np.asarray(u, dtype=float)
    i_d, i_q = stator_currents(x, u, p)
    omega = x[..., OMEGA]
    eq_p = x[..., EQ_P]
    ed_p = x[..., ED_P]
    t_e = ed_p * i_d + eq_p * i_q + (p.X_q_p - p.X_d_p) * i_d * i_q
    dx = np.empty(np.broadcast_shapes(x.shape, u.shape))
    dx[..., DELTA] = p.angle_rate_scale * (omega - 1.0)
    dx[..., OMEGA] = (u[..., TM] - t_e - p.D * (omega - 1.0)) / p.T_J
    dx[..., EQ_P] = (u[..., EF] - eq_p - (p.X_d - p.X_d_p) * i_d) / p.T_d0_p
    dx[..., ED_P] = (-ed_p + (p.X_q - p.X_q_p) * i_q) / p.T_q0_p
    return dx


def measurement_fn(x, u, p: GeneratorParams):
    """Noise-free PMU measurement ``[delta, omega, P_e]``."""
    x = np.asarray(x, dtype=float)
    pe = electrical_power(x, u, p)
    z = np.empty(np.broadcast_shapes(x.shape[:-1], np.shape(pe)) + (3,))
    z[..., 0] = x[..., DELTA]
    z[..., 1] = x[..., OMEGA]
    z[..., 2] = pe
    return z


def power_partials(x, u, p: GeneratorParams):
    """Partial derivatives of P_e with respect to (delta, eq_p, ed_p, U, phi)."""
    delta, _, eq_p, ed_p, v, phi = _split(x, u)
    ang = delta - phi
    s, c = np.sin(ang), np.cos(ang)
    k = 1.0 / p.X_q_p - 1.0 / p.X_d_p
    d_delta = v**2 * np.cos(2.0 * ang) * k + v * c * eq_p / p.X_d_p + v * s * ed_p / p.X_q_p
    d_eq = v * s / p.X_d_p
    d_ed = -v * c / p.X_q_p
    d_u = v * np.sin(2.0 * ang) * k + s * eq_p / p.X_d_p - c * ed_p / p.X_q_p
    return d_delta, d_eq, d_ed, d_u, -d_delta


def measurement_jacobian(x, u, p: GeneratorParams):
    """3x4 Jacobian of :func:`measurement_fn` with respect to the state."""
    l1, l2, l3, _, _ = power_partials(x, u, p)
    return np.array(
        [
            [1.0, 0.0, 0.0, 0.0],
            [0.0, 1.0, 0.0, 0.0],
            [float(l1), 0.0, float(l2), float(l3)],
        ]
    )


def equilibrium_emfs(delta, u, p: GeneratorParams):
    """Transient EMFs that zero the EMF derivatives for given ``delta`` and ``u``.

    Uses the excitation ``u.ef`` to fix ``eq_p``; ``ed_p`` follows from the
    q-axis balance ``ed_p = (X_q - X_q_p) i_q``.
    """
    u = np.asarray(u, dtype=float)
    ang = delta - u[PHI]
    eq_p = (u[EF] * p.X_d_p + (p.X_d - p.X_d_p) * u[U] * np.cos(ang)) / p.X_d
    ed_p = (p.X_q - p.X_q_p) * u[U] * np.sin(ang) / p.X_q
    return eq_p, ed_p
