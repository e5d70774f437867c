"""Synthetic PMU measurements and the measurement-noise covariance."""

import math
from dataclasses import dataclass

import numpy as np

from .machine import GeneratorParams, U, PHI, measurement_fn, power_partials

STREAMS = {"measurement": 1, "terminal": 2, "attack": 3, "init": 4, "gross": 5}

R_FLOOR = 1e-12


def stream_rng(seed, stream):
    """Counter-based generator for one named sub-stream of a scenario seed.

    The Philox key depends only on ``(seed, stream)``, so draws on one stream
    never shift another stream's sequence.
    """
    key = np.random.SeedSequence([int(seed), STREAMS[stream]])
    return np.random.Generator(np.random.Philox(key))


@dataclass(frozen=True)
class NoiseModel:
    """PMU error model.

    ``sigma_U`` / ``sigma_phi`` parametrise the P_e variance model, while
    ``terminal_sigma_U`` / ``terminal_sigma_phi`` set the noise actually
    injected into the terminal voltage phasor handed to the estimator.
    Magnitude stds are relative; angles are in radians.
    """

    sigma_delta: float = math.radians(2.0)
    sigma_omega: float = 1e-3
    sigma_U: float = 0.002
    sigma_phi: float = math.radians(0.2)
    terminal_sigma_U: float = 0.001
    terminal_sigma_phi: float = math.radians(0.1)
    seed: int = 0

    def __post_init__(self):
        for name in ("sigma_delta", "sigma_omega", "sigma_U", "sigma_phi",
                     "terminal_sigma_U", "terminal_sigma_phi"):
            v = getattr(self, name)
            if not np.isfinite(v) or v < 0:
                raise ValueError(f"{name} must be a non-negative finite number")

    @classmethod
    def silent(cls, seed=0):
        return cls(0.0, 0.0, 0.0, 0.0, 0.0, 0.0, seed)


def measurement_variances(x, u, p: GeneratorParams, nm: NoiseModel):
    """Unfloored variances of (delta_z, omega_z, pe_z)."""
    _, _, _, d_u, d_phi = power_partials(x, u, p)
    v = float(np.asarray(u, dtype=float)[U])
    var_pe = (float(d_u) * nm.sigma_U * v) ** 2 + (float(d_phi) * nm.sigma_phi) ** 2
    return np.array([nm.sigma_delta**2, nm.sigma_omega**2, var_pe])


def measurement_noise_cov(x, u, p: GeneratorParams, nm: NoiseModel):
    """Diagonal covariance R; every entry is floored so R stays positive definite."""
    return np.diag(np.maximum(measurement_variances(x, u, p, nm), R_FLOOR))


def sample_measurement(x, u, p: GeneratorParams, nm: NoiseModel, rng):
    """Noise-corrupted ``[delta_z, omega_z, pe_z]``.

    Always consumes three standard normals so the stream position depends
    only on the sample index.
    """
    std = np.sqrt(measurement_variances(x, u, p, nm))
    return measurement_fn(x, u, p) + std * rng.standard_normal(3)


def sample_terminal_pmu(u, nm: NoiseModel, rng):
    """Noisy ``(U, phi)`` as reported by the terminal PMU."""
    u = np.asarray(u, dtype=float)
    e = rng.standard_normal(2)
    return u[U] * (1.0 + nm.terminal_sigma_U * e[0]), u[PHI] + nm.terminal_sigma_phi * e[1]


@dataclass
class MeasurementStream:
    """Clean (pre-attack) PMU data on the sample grid."""

    t: np.ndarray
    z: np.ndarray       # (N, 3)
    u_meas: np.ndarray  # (N, 4): tm, ef exact; U, phi as measured


def synthesize(truth, p: GeneratorParams, nm: NoiseModel, seed):
    """Generate the full measurement stream for one seed."""
    rng_z = stream_rng(seed, "measurement")
    rng_u = stream_rng(seed, "terminal")
    n = len(truth)
    z = np.empty((n, 3))
    u_meas = truth.u.copy()
    for k in range(n):
        z[k] = sample_measurement(truth.x[k], truth.u[k], p, nm, rng_z)
        u_meas[k, U], u_meas[k, PHI] = sample_terminal_pmu(truth.u[k], nm, rng_u)
    return MeasurementStream(truth.t.copy(), z, u_meas)


def inject_gross_error(stream: MeasurementStream, k, channel, magnitude):
    """Copy of ``stream`` with ``magnitude`` added to one channel at sample ``k``."""
    z = stream.z.copy()
    z[k, channel] += magnitude
    return MeasurementStream(stream.t, z, stream.u_meas)
