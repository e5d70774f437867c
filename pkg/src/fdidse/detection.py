"""Residual-based bad-data detection and median-standardised residuals."""

import bisect
from collections import deque
from dataclasses import dataclass

import numpy as np

from .errors import DegenerateScale

SCALE_FLOOR = 1e-15

PRIOR_THRESHOLD_PRESETS = {
    "9bus": (1.0, 0.7, 0.7),
    "68bus": (0.67, 0.67, 0.67),
}
DETECTION_THRESHOLD_PRESETS = {"9bus": 2.0, "68bus": 1.5}


@dataclass(frozen=True)
class DetectionConfig:
    """``B_j`` bounds the residual norm; ``C`` holds per-channel prior thresholds.

    With ``standardized_norm`` the residual is scaled by ``R^-1/2`` before
    taking the norm instead of mixing rad and pu directly.
    """

    B_j: float = 2.0
    C: tuple = PRIOR_THRESHOLD_PRESETS["9bus"]
    standardized_norm: bool = False

    def __post_init__(self):
        if not self.B_j > 0:
            raise ValueError("B_j must be positive")
        if len(self.C) != 3 or not all(c > 0 for c in self.C):
            raise ValueError("C must hold three positive thresholds")


@dataclass(frozen=True)
class DetectionRecord:
    t: float
    residual: np.ndarray
    norm: float
    flagged: bool


def residual(z, z_hat):
    return np.asarray(z, dtype=float) - np.asarray(z_hat, dtype=float)


def residual_norm(r, cfg: DetectionConfig = None, R=None):
    r = np.asarray(r, dtype=float)
    if cfg is not None and cfg.standardized_norm:
        if R is None:
            raise ValueError("standardized norm needs the noise covariance R")
        r = r / np.sqrt(np.diag(R))
    return float(np.linalg.norm(r))


def residual_norm_test(r, cfg: DetectionConfig, R=None):
    """True when the residual norm exceeds ``B_j``; the boundary is accepted."""
    return residual_norm(r, cfg, R) > cfg.B_j


class ResidualScale:
    """Running median of absolute residuals.

    ``scope="component"`` keeps one history per measurement channel;
    ``scope="pooled"`` shares one history across channels.  ``window``
    limits the history to the most recent samples (None keeps everything).
    With ``screen`` set, a value whose ratio to the current median exceeds
    ``screen`` is standardised but kept out of the history, so a sustained
    burst of outliers cannot drag the scale up to its own level.
    """

    def __init__(self, scope="component", window=None, n=3, screen=None):
        if scope not in ("component", "pooled"):
            raise ValueError("scope must be 'component' or 'pooled'")
        if window is not None and window < 1:
            raise ValueError("window must be positive")
        if screen is not None and not screen > 0:
            raise ValueError("screen must be positive")
        self.scope = scope
        self.window = window
        self.screen = screen
        self.n = n
        k = n if scope == "component" else 1
        self._sorted = [[] for _ in range(k)]
        self._fifo = [deque() for _ in range(k)]

    def _push(self, i, value):
        if self.screen is not None and self._sorted[i]:
            current = self._median(self._sorted[i])
            if current >= SCALE_FLOOR and value > self.screen * current:
                return
        bisect.insort(self._sorted[i], value)
        if self.window is not None:
            fifo = self._fifo[i]
            fifo.append(value)
            limit = self.window if self.scope == "component" else self.window * self.n
            if len(fifo) > limit:
                old = fifo.popleft()
                del self._sorted[i][bisect.bisect_left(self._sorted[i], old)]

    @staticmethod
    def _median(values):
        m = len(values)
        mid = m // 2
        return values[mid] if m % 2 else 0.5 * (values[mid - 1] + values[mid])

    def update(self, r):
        """Add ``|r|`` to the history and return the per-channel scale."""
        a = np.abs(np.asarray(r, dtype=float))
        if self.scope == "component":
            for i in range(self.n):
                self._push(i, float(a[i]))
            sigma = np.array([self._median(s) for s in self._sorted])
        else:
            for v in a:
                self._push(0, float(v))
            sigma = np.full(self.n, self._median(self._sorted[0]))
        if np.any(sigma < SCALE_FLOOR):
            raise DegenerateScale(f"median residual scale {sigma} collapsed")
        return sigma


def standardized_residual(r_series, scope="component", window=None):
    """Divide each residual by the running median of absolute residuals so far."""
    r_series = np.atleast_2d(np.asarray(r_series, dtype=float))
    if r_series.size == 0:
        raise ValueError("need at least one residual")
    scale = ResidualScale(scope, window, n=r_series.shape[1])
    out = np.empty_like(r_series)
    for k, r in enumerate(r_series):
        out[k] = r / scale.update(r)
    return out


def calibrate_prior_threshold(r_prime_series, spread_tol=0.05):
    """Pick per-channel prior thresholds from a standardised-residual history.

    A channel whose last quarter of ``|r'|`` varies by less than
    ``spread_tol * max(1, mean)`` counts as converged and gets that quarter's
    mean; otherwise the midpoint of the overall range is used.
    """
    a = np.abs(np.atleast_2d(np.asarray(r_prime_series, dtype=float)))
    if a.shape[0] < 50:
        raise ValueError("calibration needs at least 50 samples")
    a = a[np.all(np.isfinite(a), axis=1)]
    tail = a[-max(1, len(a) // 4):]
    C = np.empty(a.shape[1])
    for i in range(a.shape[1]):
        q = tail[:, i]
        if q.max() - q.min() < spread_tol * max(1.0, q.mean()):
            C[i] = q.mean()
        else:
            C[i] = 0.5 * (a[:, i].max() + a[:, i].min())
    return C
