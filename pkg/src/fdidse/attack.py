"""Stealthy false-data-injection vectors built from the linearised measurement model.

An attacker who knows the measurement Jacobian ``H`` at some linearisation
point picks a state error ``c`` and injects ``a = H c``.  On the linear
surrogate the residual ``z_a - H (x_hat + c)`` equals the clean residual, so
a residual-norm detector cannot tell the two apart.
"""

from dataclasses import dataclass

import numpy as np

from .machine import GeneratorParams, measurement_jacobian

REDRAW_POLICIES = ("per_step", "hold")
KNOWLEDGE_POLICIES = ("truth", "estimator_feedback", "fixed_point")

CASE_SIGMAS = {"none": 0.0, "case1": 0.01, "case2": 0.1, "case3": 1.0}


@dataclass(frozen=True)
class AttackCase:
    sigma_c: float = 0.0
    window: tuple = (4.0, 12.0)
    redraw_policy: str = "per_step"
    knowledge: str = "truth"
    name: str = "custom"

    def __post_init__(self):
        if not np.isfinite(self.sigma_c) or self.sigma_c < 0:
            raise ValueError("sigma_c must be non-negative")
        if not self.window[0] < self.window[1]:
            raise ValueError("attack window must satisfy t_start < t_end")
        if self.redraw_policy not in REDRAW_POLICIES:
            raise ValueError(f"redraw_policy must be one of {REDRAW_POLICIES}")
        if self.knowledge not in KNOWLEDGE_POLICIES:
            raise ValueError(f"knowledge must be one of {KNOWLEDGE_POLICIES}")

    @classmethod
    def named(cls, name, **kw):
        return cls(sigma_c=CASE_SIGMAS[name], name=name, **kw)

    def active(self, t):
        # Half-open window with slack for sample times like k * 0.02.
        return self.window[0] - 1e-9 <= t < self.window[1] - 1e-9


@dataclass(frozen=True)
class AttackVector:
    a: np.ndarray
    c: np.ndarray


def draw_error_vector(case: AttackCase, rng):
    # Draw unit normals then scale, so cases with different sigma but the
    # same seed share one pattern.
    return case.sigma_c * rng.standard_normal(4)


def attack_vector(H, c):
    H = np.asarray(H, dtype=float)
    c = np.asarray(c, dtype=float)
    return AttackVector(a=H @ c, c=c)


def linearize_at(x0, u, p: GeneratorParams):
    """Jacobian the attacker uses, evaluated at its linearisation point ``x0``."""
    return measurement_jacobian(x0, u, p)


class Attacker:
    """Applies one :class:`AttackCase` to a measurement stream, sample by sample."""

    def __init__(self, case: AttackCase, rng):
        self.case = case
        self.rng = rng
        self._held = None

    def error_vector(self):
        if self.case.redraw_policy == "hold":
            if self._held is None:
                self._held = draw_error_vector(self.case, self.rng)
            return self._held
        return draw_error_vector(self.case, self.rng)

    def apply(self, z, H, t):
        """Return ``(z_a, vector)``; ``vector`` is None outside the window."""
        return apply_attack(z, self.case, H, self, t)


def apply_attack(z, case: AttackCase, H, rng, t):
    """Inject ``a = H c`` when ``t`` lies in the attack window.

    ``rng`` is either a numpy Generator or an :class:`Attacker`, which
    remembers a held error vector across calls.
    """
    z = np.asarray(z, dtype=float)
    if not case.active(t):
        return z, None
    c = rng.error_vector() if isinstance(rng, Attacker) else draw_error_vector(case, rng)
    vec = attack_vector(H, c)
    return z + vec.a, vec
