"""Cubature Kalman filter (CKF) and its median-robustified variant (RCKF).

Both filters share the third-degree spherical-radial rule: ``2n`` equally
weighted points ``x_hat +/- sqrt(n) S e_i`` with ``P = S S^T``.  The state map
is one RK4 step of the generator model over the PMU interval, the
measurement map is :func:`fdidse.machine.measurement_fn`.
"""

import time
from dataclasses import dataclass, field

import numpy as np

from .attack import AttackCase, Attacker, apply_attack, linearize_at
from .detection import DetectionConfig, ResidualScale, residual_norm
from .dynamics import TruthTrajectory, rk4_step
from .errors import DegenerateScale, Divergence, FdiDseError, NotPSD, SingularInnovation
from .machine import GeneratorParams, equilibrium_emfs, measurement_fn
from .measurement import MeasurementStream, NoiseModel, measurement_noise_cov, stream_rng

INIT_POLICIES = ("from_first_measurement", "truth_perturbed", "truth")
ROBUST_OVERRIDES = ("inflate", "paper_literal")
MAX_INNOVATION_COND = 1e12


@dataclass
class FilterState:
    x_hat: np.ndarray
    P: np.ndarray


@dataclass
class FilterConfig:
    Q: np.ndarray = field(default_factory=lambda: np.diag([1e-8] * 4))
    P0: np.ndarray = field(default_factory=lambda: np.diag([1e-2, 1e-4, 1e-2, 1e-2]))
    init_policy: str = "from_first_measurement"
    robust: bool = False
    C: tuple = (1.0, 0.7, 0.7)
    dt: float = 0.02
    robust_override: str = "inflate"
    median_scope: str = "component"
    median_window: int = None
    median_screen: float = 10.0

    def __post_init__(self):
        self.Q = np.asarray(self.Q, dtype=float)
        self.P0 = np.asarray(self.P0, dtype=float)
        for name in ("Q", "P0"):
            m = getattr(self, name)
            if m.shape != (4, 4) or not np.allclose(m, m.T):
                raise ValueError(f"{name} must be a symmetric 4x4 matrix")
            if np.linalg.eigvalsh(m).min() < -1e-15:
                raise ValueError(f"{name} must be positive semi-definite")
        if self.dt <= 0:
            raise ValueError("dt must be positive")
        if self.init_policy not in INIT_POLICIES:
            raise ValueError(f"init_policy must be one of {INIT_POLICIES}")
        if self.robust_override not in ROBUST_OVERRIDES:
            raise ValueError(f"robust_override must be one of {ROBUST_OVERRIDES}")


def cholesky_sqrt(P):
    """Lower Cholesky factor, with one eigenvalue-clamping repair attempt."""
    P = np.asarray(P, dtype=float)
    if not np.all(np.isfinite(P)):
        raise NotPSD("covariance has non-finite entries")
    try:
        return np.linalg.cholesky(P)
    except np.linalg.LinAlgError:
        pass
    n = P.shape[0]
    sym = 0.5 * (P + P.T)
    w, v = np.linalg.eigh(sym)
    fixed = (v * np.maximum(w, 1e-12)) @ v.T
    fixed = 0.5 * (fixed + fixed.T) + 1e-12 * np.trace(sym) / n * np.eye(n)
    try:
        return np.linalg.cholesky(fixed)
    except np.linalg.LinAlgError:
        raise NotPSD("covariance is not positive semi-definite after repair") from None


def cubature_points(S, x_hat):
    """The ``2n`` points as rows: ``x_hat + sqrt(n) S e_i`` then ``x_hat - sqrt(n) S e_i``."""
    S = np.asarray(S, dtype=float)
    x_hat = np.asarray(x_hat, dtype=float)
    n = len(x_hat)
    spread = np.sqrt(n) * S.T
    return np.concatenate([x_hat + spread, x_hat - spread])


def _moments(points, center):
    d = points - center
    return d.T @ d / len(points)


def ckf_predict(fs: FilterState, u, cfg: FilterConfig, p: GeneratorParams, transition=None):
    """Time update.  ``transition`` maps a stack of states; defaults to one RK4 step."""
    X = cubature_points(cholesky_sqrt(fs.P), fs.x_hat)
    if transition is None:
        Xp = rk4_step(X, u, p, cfg.dt, check=False)
    else:
        Xp = np.asarray(transition(X), dtype=float)
    if not np.all(np.isfinite(Xp)):
        raise Divergence("propagated cubature points are non-finite")
    x = Xp.mean(axis=0)
    P = _moments(Xp, x) + cfg.Q
    return FilterState(x, 0.5 * (P + P.T))


@dataclass
class Innovation:
    z_hat: np.ndarray
    Pzz_spread: np.ndarray
    Pxz: np.ndarray


def predict_measurement(pred: FilterState, u, p: GeneratorParams, measure=None):
    """Cubature estimate of the predicted measurement and its covariances (without R)."""
    X = cubature_points(cholesky_sqrt(pred.P), pred.x_hat)
    Z = measurement_fn(X, u, p) if measure is None else np.asarray(measure(X), dtype=float)
    z_hat = Z.mean(axis=0)
    dZ = Z - z_hat
    Pzz = dZ.T @ dZ / len(X)
    Pxz = (X - pred.x_hat).T @ dZ / len(X)
    return Innovation(z_hat, Pzz, Pxz)


def _correct(pred: FilterState, z, inn: Innovation, R):
    Pzz = inn.Pzz_spread + R
    if not np.all(np.isfinite(Pzz)) or np.linalg.cond(Pzz) > MAX_INNOVATION_COND:
        raise SingularInnovation("innovation covariance is numerically singular")
    W = np.linalg.solve(Pzz, inn.Pxz.T).T
    x = pred.x_hat + W @ (np.asarray(z, dtype=float) - inn.z_hat)
    P = pred.P - W @ Pzz @ W.T
    return FilterState(x, 0.5 * (P + P.T))


def ckf_update(pred: FilterState, z, u, R, cfg: FilterConfig, p: GeneratorParams,
               measure=None, innovation=None):
    inn = predict_measurement(pred, u, p, measure) if innovation is None else innovation
    return _correct(pred, z, inn, np.asarray(R, dtype=float))


def robust_covariance(R, r_prime, C, override="inflate"):
    """Replace the diagonal of R for channels whose ``|r'|`` exceeds the prior threshold."""
    R = np.asarray(R, dtype=float)
    a = np.abs(np.asarray(r_prime, dtype=float))
    C = np.asarray(C, dtype=float)
    diag = np.diag(R).copy()
    out = a > C
    if override == "inflate":
        diag[out] = diag[out] * (a[out] / C[out])
    else:
        diag[out] = C[out]
    return np.diag(diag)


def rckf_update(pred: FilterState, z, u, R, scale: ResidualScale, cfg: FilterConfig,
                p: GeneratorParams, measure=None, innovation=None):
    """Measurement update with the noise covariance rescaled by standardised residuals.

    ``scale`` carries the running median of absolute residuals between steps.
    If that median has collapsed the plain R is used for this step.
    """
    inn = predict_measurement(pred, u, p, measure) if innovation is None else innovation
    r = np.asarray(z, dtype=float) - inn.z_hat
    R = np.asarray(R, dtype=float)
    try:
        r_prime = r / scale.update(r)
    except DegenerateScale:
        return _correct(pred, z, inn, R)
    return _correct(pred, z, inn, robust_covariance(R, r_prime, cfg.C, cfg.robust_override))


def initial_state(truth: TruthTrajectory, z0, u0, cfg: FilterConfig, p: GeneratorParams, seed):
    if cfg.init_policy == "truth":
        x = truth.x[0].copy()
    elif cfg.init_policy == "truth_perturbed":
        rng = stream_rng(seed, "init")
        x = truth.x[0] + cholesky_sqrt(cfg.P0) @ rng.standard_normal(4)
    else:
        delta, omega = float(z0[0]), float(z0[1])
        eq_p, ed_p = equilibrium_emfs(delta, u0, p)
        x = np.array([delta, omega, eq_p, ed_p])
    return FilterState(x, cfg.P0.copy())


@dataclass
class EstimatorRun:
    """Per-sample record of one estimator pass.  Row 0 is the initialisation."""

    method: str
    t: np.ndarray
    x_hat: np.ndarray
    P_diag: np.ndarray
    z: np.ndarray
    z_hat: np.ndarray
    residual: np.ndarray
    norm: np.ndarray
    flagged: np.ndarray
    attacked: np.ndarray
    c: np.ndarray
    a: np.ndarray
    step_times: np.ndarray
    error: str = None

    def __len__(self):
        return len(self.t)


def run_estimator(method, truth: TruthTrajectory, stream: MeasurementStream, attack: AttackCase,
                  seed, p: GeneratorParams, nm: NoiseModel, fcfg: FilterConfig,
                  dcfg: DetectionConfig = None):
    """Run CKF or RCKF over a measurement stream, attacking it on the fly.

    Each step predicts with the measured terminal phasor of the previous
    sample, receives the (possibly attacked) measurement, tests the residual
    against the one-step prediction, then corrects.  A filter failure stops
    the run; the rows produced so far are returned with ``error`` set.
    """
    if method not in ("ckf", "rckf"):
        raise ValueError(f"unknown estimator {method!r}")
    dcfg = dcfg or DetectionConfig()
    n = len(truth)
    if len(stream.t) != n:
        raise ValueError("measurement stream and truth are not aligned")
    attacker = Attacker(attack, stream_rng(seed, "attack"))
    scale = ResidualScale(fcfg.median_scope, fcfg.median_window, screen=fcfg.median_screen)

    x_hat = np.full((n, 4), np.nan)
    P_diag = np.full((n, 4), np.nan)
    z_rx = np.full((n, 3), np.nan)
    z_hat = np.full((n, 3), np.nan)
    res = np.full((n, 3), np.nan)
    norms = np.full(n, np.nan)
    flagged = np.zeros(n, dtype=bool)
    attacked = np.zeros(n, dtype=bool)
    c_log = np.zeros((n, 4))
    a_log = np.zeros((n, 3))
    times = []
    error = None

    def attack_at(k, pred_x):
        if not attack.active(truth.t[k]):
            return stream.z[k], None
        if attack.knowledge == "truth":
            H = linearize_at(truth.x[k], truth.u[k], p)
        elif attack.knowledge == "estimator_feedback":
            H = linearize_at(pred_x, stream.u_meas[k], p)
        else:
            H = linearize_at(truth.x[0], truth.u[0], p)
        return apply_attack(stream.z[k], attack, H, attacker, truth.t[k])

    z0, vec = attack_at(0, truth.x[0])
    fs = initial_state(truth, z0, stream.u_meas[0], fcfg, p, seed)
    done = 1
    x_hat[0], P_diag[0], z_rx[0] = fs.x_hat, np.diag(fs.P), z0
    if vec is not None:
        attacked[0], c_log[0], a_log[0] = True, vec.c, vec.a

    for k in range(1, n):
        try:
            t0 = time.perf_counter()
            pred = ckf_predict(fs, stream.u_meas[k - 1], fcfg, p)
            elapsed = time.perf_counter() - t0
            z, vec = attack_at(k, pred.x_hat)
            t0 = time.perf_counter()
            u_k = stream.u_meas[k]
            inn = predict_measurement(pred, u_k, p)
            R = measurement_noise_cov(pred.x_hat, u_k, p, nm)
            r = z - inn.z_hat
            norm = residual_norm(r, dcfg, R)
            if method == "rckf":
                fs = rckf_update(pred, z, u_k, R, scale, fcfg, p, innovation=inn)
            else:
                fs = ckf_update(pred, z, u_k, R, fcfg, p, innovation=inn)
            if not np.all(np.isfinite(fs.x_hat)):
                raise Divergence("state estimate became non-finite")
            elapsed += time.perf_counter() - t0
        except FdiDseError as exc:
            error = f"{type(exc).__name__} at t={truth.t[k]:.2f}: {exc}"
            break
        times.append(elapsed)
        x_hat[k], P_diag[k] = fs.x_hat, np.diag(fs.P)
        z_rx[k], z_hat[k], res[k], norms[k] = z, inn.z_hat, r, norm
        flagged[k] = norm > dcfg.B_j
        if vec is not None:
            attacked[k], c_log[k], a_log[k] = True, vec.c, vec.a
        done = k + 1

    s = slice(0, done)
    return EstimatorRun(
        method, truth.t[s].copy(), x_hat[s], P_diag[s], z_rx[s], z_hat[s], res[s], norms[s],
        flagged[s], attacked[s], c_log[s], a_log[s], np.array(times), error,
    )

