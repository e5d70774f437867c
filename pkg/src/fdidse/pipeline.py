"""Truth -> measurement -> attack -> estimation -> detection -> metrics, on disk.

Layout of a run directory::

    config.yaml  truth.csv  manifest.json  report.txt  report.csv
    detection_summary.csv  summary_plot.csv
    seed_000/measurements.csv  metrics.csv  timing.json
    seed_000/<case>/attack.csv  estimates_<method>.csv  detection_<method>.csv  *.svg

Everything except timing is a pure function of (config, seed).  Timing
lives in JSON and in the text report only, so CSV outputs stay
byte-identical across repeated runs.
"""

import csv
import hashlib
import json
import math
import os
import tempfile
from dataclasses import replace
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

import numpy as np

from . import __version__
from .attack import AttackCase
from .config import ScenarioConfig, dump_config, validate_config
from .detection import calibrate_prior_threshold, standardized_residual
from .dynamics import TruthTrajectory, load_trajectory, save_trajectory, simulate_smib
from .errors import CalibrationError, DegenerateScale, FdiDseError, MissingArtifact
from .estimators import run_estimator
from .measurement import measurement_variances, synthesize
from .metrics import MetricReport, run_metrics, timing_stats
from .plots import write_panels

ESTIMATE_COLUMNS = ("t", "method", "delta_hat", "omega_hat", "eqp_hat", "edp_hat",
                    "p11", "p22", "p33", "p44", "residual_norm", "flagged")
DETECTION_COLUMNS = ("t", "r1", "r2", "r3", "norm", "flagged")
ATTACK_COLUMNS = ("t", "attacked", "c1", "c2", "c3", "c4", "a1", "a2", "a3")
MEASUREMENT_COLUMNS = ("t", "delta_z", "omega_z", "pe_z", "u_meas", "phi_meas")
METRIC_COLUMNS = ("case", "method", "metric", "param", "value")


class ScenarioError(FdiDseError):
    """One or more seed/case/method runs failed; outputs were still written."""


def _num(v):
    if isinstance(v, (bool, np.bool_)):
        return "1" if v else "0"
    if isinstance(v, str):
        return v
    return repr(float(v))


def _write_csv(path, header, rows):
    """Write atomically: a temp file in the same directory, then rename."""
    path = Path(path)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.")
    with os.fdopen(fd, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([_num(v) for v in row])
    os.replace(tmp, path)


def _read_csv(path):
    with Path(path).open(newline="") as fh:
        return list(csv.DictReader(fh))


def build_truth(cfg: ScenarioConfig):
    if cfg.trajectory_path is not None:
        traj = load_trajectory(cfg.trajectory_path, expected_dt=cfg.dt)
        n = int(round(cfg.horizon / cfg.dt)) + 1
        if len(traj) < n:
            raise MissingArtifact(f"{cfg.trajectory_path}: trajectory shorter than the horizon")
        return TruthTrajectory(traj.t[:n], traj.x[:n], traj.u[:n], traj.meta)
    return simulate_smib(cfg.generator, cfg.network, cfg.horizon, cfg.dt, cfg.n_sub)


def _metric_window(cfg, case):
    return case.window if cfg.metrics_window == "attack" else None


def _write_run_files(case_dir, run, cfg):
    m = run.method
    _write_csv(case_dir / f"estimates_{m}.csv", ESTIMATE_COLUMNS, (
        (run.t[k], m, *run.x_hat[k], *run.P_diag[k], run.norm[k], run.flagged[k])
        for k in range(len(run))))
    _write_csv(case_dir / f"detection_{m}.csv", DETECTION_COLUMNS, (
        (run.t[k], *run.residual[k], run.norm[k], run.flagged[k]) for k in range(len(run))))


def _write_attack(path, run):
    _write_csv(path, ATTACK_COLUMNS, (
        (run.t[k], run.attacked[k], *run.c[k], *run.a[k]) for k in range(len(run))))


def _plot_case(case_dir, truth, runs, cfg):
    n = len(truth)
    deg = math.degrees(1.0)
    delta = {"truth": truth.x[:, 0] * deg}
    omega = {"truth": truth.x[:, 1]}
    for run in runs:
        pad = np.full(n - len(run), np.nan)
        delta[run.method.upper()] = np.concatenate([run.x_hat[:, 0] * deg, pad])
        omega[run.method.upper()] = np.concatenate([run.x_hat[:, 1], pad])
    write_panels(case_dir / "states.svg", truth.t, [
        {"series": delta, "title": "rotor angle", "ylabel": "deg"},
        {"series": omega, "title": "rotor speed", "ylabel": "pu"},
    ])
    panels = []
    for run in runs:
        norm = np.concatenate([run.norm, np.full(n - len(run), np.nan)])
        panels.append({"series": {"||r||": norm}, "title": f"{run.method.upper()} residual norm",
                       "hline": cfg.detection.B_j})
    write_panels(case_dir / "residual.svg", truth.t, panels)


def run_seed(cfg: ScenarioConfig, truth, seed, out_dir):
    """Run every case and estimator for one seed; returns a summary dict."""
    seed_dir = Path(out_dir) / f"seed_{seed:03d}"
    seed_dir.mkdir(parents=True, exist_ok=True)
    stream = synthesize(truth, cfg.generator, cfg.noise, seed)
    _write_csv(seed_dir / "measurements.csv", MEASUREMENT_COLUMNS, (
        (stream.t[k], *stream.z[k], stream.u_meas[k, 2], stream.u_meas[k, 3])
        for k in range(len(stream.t))))

    metrics, timing, flags, errors = [], {}, {}, []
    for case in cfg.attack_cases:
        case_dir = seed_dir / case.name
        case_dir.mkdir(exist_ok=True)
        runs = []
        for method in cfg.estimators:
            run = run_estimator(method, truth, stream, case, seed, cfg.generator, cfg.noise,
                                cfg.filter_config(method), cfg.detection)
            runs.append(run)
            _write_run_files(case_dir, run, cfg)
            if case.knowledge == "estimator_feedback":
                _write_attack(case_dir / f"attack_{method}.csv", run)
            elif method == cfg.estimators[0]:
                _write_attack(case_dir / "attack.csv", run)
            if run.error:
                errors.append(f"seed {seed} case {case.name} {method}: {run.error}")
            try:
                values = run_metrics(run, truth, _metric_window(cfg, case), cfg.delta_unit)
            except FdiDseError as exc:
                errors.append(f"seed {seed} case {case.name} {method}: metrics: {exc}")
                values = {}
            for (metric, param), v in sorted(values.items()):
                metrics.append((case.name, method, metric, param, v))
            timing.setdefault(method, []).extend((run.step_times * 1e3).tolist())
            flags[(case.name, method)] = int(run.flagged.sum())
        if cfg.plots:
            _plot_case(case_dir, truth, runs, cfg)

    _write_csv(seed_dir / "metrics.csv", METRIC_COLUMNS, metrics)
    (seed_dir / "timing.json").write_text(json.dumps(
        {m: {"mean_ms": timing_stats(v)[0], "p95_ms": timing_stats(v)[1], "steps": len(v)}
         for m, v in timing.items() if v}, indent=2, sort_keys=True) + "\n")
    return {"seed": seed, "metrics": metrics, "timing": timing,
            "flags": {f"{c}/{m}": n for (c, m), n in flags.items()}, "errors": errors}


def _seed_task(args):
    raw, seed, out_dir, C = args
    cfg = validate_config(raw)
    cfg.detection = replace(cfg.detection, C=C)
    truth = build_truth(cfg)
    return run_seed(cfg, truth, seed, out_dir)


def _sha256(path):
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()


def write_manifest(out_dir, cfg, extra=None):
    out_dir = Path(out_dir)
    files = sorted(p for p in out_dir.rglob("*") if p.is_file() and p.name != "manifest.json")
    manifest = {
        "tool": "fdidse",
        "version": __version__,
        "config_sha256": cfg.digest(),
        "files": {str(p.relative_to(out_dir)): _sha256(p) for p in files},
    }
    manifest.update(extra or {})
    (out_dir / "manifest.json").write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")


def run_scenario(cfg: ScenarioConfig, out_dir=None):
    """Execute the full pipeline for every seed; returns a :class:`MetricReport`.

    A failing run is recorded and the rest still complete; afterwards a
    :class:`ScenarioError` is raised if anything failed.
    """
    out_dir = Path(out_dir or cfg.output)
    out_dir.mkdir(parents=True, exist_ok=True)
    dump_config(cfg.raw, out_dir / "config.yaml")
    if cfg.calibrate_C:
        quiet = replace(cfg, attack_cases=[AttackCase(0.0, cfg.attack_cases[0].window, name="none")])
        C = calibrate(quiet, out_dir)
        cfg = replace(cfg, detection=replace(cfg.detection, C=tuple(float(c) for c in C)))
    truth = build_truth(cfg)
    save_trajectory(truth, out_dir / "truth.csv")

    if cfg.workers > 1 and len(cfg.seeds) > 1:
        tasks = [(cfg.raw, s, out_dir, cfg.detection.C) for s in cfg.seeds]
        with ProcessPoolExecutor(max_workers=cfg.workers) as pool:
            results = list(pool.map(_seed_task, tasks))
    else:
        results = [run_seed(cfg, truth, s, out_dir) for s in cfg.seeds]

    errors = [e for r in results for e in r["errors"]]
    report = aggregate(results, cfg)
    _write_report(out_dir, report, [r["seed"] for r in results])
    write_manifest(out_dir, cfg, {"seeds": list(cfg.seeds), "errors": errors})
    if errors:
        raise ScenarioError("; ".join(errors))
    return report


def aggregate(results, cfg=None):
    """Average per-seed metric rows into a :class:`MetricReport`."""
    per_seed = {r["seed"]: r["metrics"] for r in results}
    grouped = {}
    for rows in per_seed.values():
        for case, method, metric, param, v in rows:
            grouped.setdefault((case, method, metric, param), []).append(v)
    rows = [(*key, float(np.mean(v))) for key, v in grouped.items()]
    timing = {}
    for r in results:
        for m, v in r["timing"].items():
            timing.setdefault(m, []).extend(v)
    detection = {}
    for r in results:
        for key, n in r["flags"].items():
            detection.setdefault(key, []).append(n)
    report = MetricReport(rows=rows, timing={m: timing_stats(v) for m, v in timing.items() if v})
    report.per_seed = per_seed
    report.spread = {k: (float(np.std(v)), float(np.min(v)), float(np.max(v)), len(v))
                     for k, v in grouped.items()}
    report.detection = {k: (sum(n > 0 for n in v) / len(v), int(sum(v))) for k, v in detection.items()}
    return report


def _write_report(out_dir, report: MetricReport, seeds):
    out_dir = Path(out_dir)
    rows = []
    for case, method, metric, param, mean in report.rows:
        std, lo, hi, n = report.spread[(case, method, metric, param)]
        rows.append((case, method, metric, param, mean, std, lo, hi, n))
    _write_csv(out_dir / "report.csv",
               ("case", "method", "metric", "param", "mean", "std", "min", "max", "n_seeds"), rows)
    _write_csv(out_dir / "summary_plot.csv", ("case", "metric", "param", "method", "mean", "std"),
               ((c, me, pa, m, mean, std) for c, m, me, pa, mean, std, *_ in rows))
    _write_csv(out_dir / "detection_summary.csv", ("case", "method", "runs_flagged_fraction", "flagged_steps"),
               ((*k.split("/"), frac, total) for k, (frac, total) in sorted(report.detection.items())))
    (out_dir / "report.txt").write_text(format_report(report, seeds))


def format_report(report: MetricReport, seeds):
    """Plain-text table: rows are case x metric x parameter, columns the methods."""
    methods = [m for m in ("ckf", "rckf") if any(r[1] == m for r in report.rows)]
    cases = list(dict.fromkeys(r[0] for r in report.rows))
    lines = [f"seeds: {len(seeds)}", ""]
    head = f"{'case':<14}{'metric':<8}{'param':<8}" + "".join(f"{m.upper():>26}" for m in methods)
    lines += [head, "-" * len(head)]
    for case in cases:
        for metric in ("tau1", "tau2"):
            for param in ("delta", "omega"):
                cells = []
                for m in methods:
                    key = (case, m, metric, param)
                    if key in report.spread:
                        std = report.spread[key][0]
                        cells.append(f"{report.value(*key):.6f} +/- {std:.6f}".rjust(26))
                    else:
                        cells.append("n/a".rjust(26))
                lines.append(f"{case:<14}{metric:<8}{param:<8}" + "".join(cells))
    lines += ["", "step time (ms)", f"{'method':<8}{'mean':>12}{'p95':>12}"]
    for m in methods:
        if m in report.timing:
            mean, p95 = report.timing[m]
            lines.append(f"{m.upper():<8}{mean:>12.4f}{p95:>12.4f}")
    lines += ["", "detection (fraction of runs with any flagged step, total flagged steps)"]
    for key, (frac, total) in sorted(report.detection.items()):
        lines.append(f"{key:<24}{frac:>8.3f}{total:>8d}")
    return "\n".join(lines) + "\n"


def report(run_dir):
    """Rebuild the report from the per-seed files of an existing run."""
    run_dir = Path(run_dir)
    if not (run_dir / "manifest.json").is_file():
        raise MissingArtifact(f"{run_dir}: no manifest.json; not a run directory")
    seed_dirs = sorted(p for p in run_dir.glob("seed_*") if p.is_dir())
    if not seed_dirs:
        raise MissingArtifact(f"{run_dir}: no seed directories")
    results = []
    for sd in seed_dirs:
        for name in ("metrics.csv", "timing.json"):
            if not (sd / name).is_file():
                raise MissingArtifact(f"{sd / name} is missing")
        metrics = [(r["case"], r["method"], r["metric"], r["param"], float(r["value"]))
                   for r in _read_csv(sd / "metrics.csv")]
        timing = json.loads((sd / "timing.json").read_text())
        flags = {}
        for det in sorted(sd.glob("*/detection_*.csv")):
            method = det.stem.split("_", 1)[1]
            flags[f"{det.parent.name}/{method}"] = sum(r["flagged"] == "1" for r in _read_csv(det))
        # Per-step samples are not kept on disk; the per-seed mean stands in.
        results.append({"seed": int(sd.name.split("_")[1]), "metrics": metrics,
                        "timing": {m: [v["mean_ms"]] for m, v in timing.items()}, "flags": flags})
    rep = aggregate(results)
    _write_report(run_dir, rep, [r["seed"] for r in results])
    return rep


def calibrate(cfg: ScenarioConfig, out_dir=None):
    """Derive prior thresholds C from a no-attack CKF run over every seed."""
    if any(c.sigma_c > 0 for c in cfg.attack_cases):
        raise CalibrationError("calibration needs a no-attack scenario")
    truth = build_truth(cfg)
    quiet = AttackCase(0.0, cfg.attack_cases[0].window, name="none")
    fcfg = cfg.filter_config("ckf")
    series = []
    for seed in cfg.seeds:
        stream = synthesize(truth, cfg.generator, cfg.noise, seed)
        run = run_estimator("ckf", truth, stream, quiet, seed, cfg.generator, cfg.noise, fcfg, cfg.detection)
        if run.error:
            raise CalibrationError(f"seed {seed}: {run.error}")
        try:
            # With no measurement noise the residuals only carry model
            # mismatch, so there is no noise scale to standardise against.
            if not np.any(measurement_variances(truth.x[0], truth.u[0], cfg.generator, cfg.noise)):
                raise DegenerateScale("measurement noise is zero")
            series.append(standardized_residual(run.residual[1:], fcfg.median_scope, fcfg.median_window))
        except DegenerateScale as exc:
            raise CalibrationError(f"DegenerateScale: {exc}") from exc
    C = calibrate_prior_threshold(np.vstack(series))
    payload = {"C": [float(c) for c in C], "seeds": list(cfg.seeds), "config_sha256": cfg.digest()}
    if out_dir is not None:
        out_dir = Path(out_dir)
        out_dir.mkdir(parents=True, exist_ok=True)
        (out_dir / "calibration.json").write_text(json.dumps(payload, indent=2, sort_keys=True) + "\n")
    return C
