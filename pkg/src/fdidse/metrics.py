"""Estimation-quality indices and step-timing statistics."""

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import DegenerateDenominator, DegenerateMeasurement

METRIC_STATES = {"delta": 0, "omega": 1}


def _series(est, truth, meas):
    est, truth, meas = (np.asarray(v, dtype=float).ravel() for v in (est, truth, meas))
    if not (len(est) == len(truth) == len(meas)) or len(est) == 0:
        raise ValueError("series must be non-empty and of equal length")
    return est, truth, meas


def tau1(est, truth, meas):
    """RMS of the estimation error relative to the measured value."""
    est, truth, meas = _series(est, truth, meas)
    if np.any(np.abs(meas) <= 1e-12):
        raise DegenerateMeasurement("a measured value is zero; relative error undefined")
    return float(np.sqrt(np.mean(((est - truth) / meas) ** 2)))


def tau2(est, truth, meas):
    """Ratio of estimation error energy to raw measurement error energy (square-rooted)."""
    est, truth, meas = _series(est, truth, meas)
    den = np.sum((meas - truth) ** 2)
    if den <= 0:
        raise DegenerateDenominator("measurements coincide with the truth")
    return float(np.sqrt(np.sum((est - truth) ** 2) / den))


def timing_stats(durations_ms):
    """Mean and nearest-rank 95th percentile of per-step durations (ms)."""
    d = np.sort(np.asarray(durations_ms, dtype=float).ravel())
    if d.size == 0:
        raise ValueError("no durations to summarise")
    rank = math.ceil(0.95 * d.size)
    return float(d.mean()), float(d[rank - 1])


@dataclass
class MetricReport:
    """Flat metric rows plus per-method timing.

    ``rows`` holds ``(case, method, metric, param, value)`` tuples.
    """

    rows: list = field(default_factory=list)
    timing: dict = field(default_factory=dict)

    def value(self, case, method, metric, param):
        for r in self.rows:
            if r[:4] == (case, method, metric, param):
                return r[4]
        raise KeyError((case, method, metric, param))


def run_metrics(run, truth, window=None, delta_unit="deg"):
    """tau1 and tau2 for delta and omega of one estimator run.

    ``window`` restricts the sums to ``window[0] <= t < window[1]``.  The
    measured series is what the estimator actually received.
    """
    n = len(run)
    mask = np.ones(n, dtype=bool)
    if window is not None:
        mask = (run.t >= window[0] - 1e-9) & (run.t < window[1] - 1e-9)
    out = {}
    for name, i in METRIC_STATES.items():
        scale = math.degrees(1.0) if (name == "delta" and delta_unit == "deg") else 1.0
        est = run.x_hat[mask, i] * scale
        tru = truth.x[:n][mask, i] * scale
        meas = run.z[mask, i] * scale
        out[("tau1", name)] = tau1(est, tru, meas)
        out[("tau2", name)] = tau2(est, tru, meas)
    return out
