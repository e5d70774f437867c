"""Scenario configuration: YAML documents, presets and validation.

A raw document is a nested mapping.  It is resolved by deep-merging, in
order, the built-in defaults, the preset named by its ``preset`` key and the
document itself.  Angles in the document are degrees wherever the key ends
in ``_deg``; everything downstream works in radians.
"""

import copy
import hashlib
import json
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np
import yaml

from .attack import CASE_SIGMAS, KNOWLEDGE_POLICIES, REDRAW_POLICIES, AttackCase
from .detection import DetectionConfig
from .dynamics import FaultInterval, SmibNetwork
from .errors import ConfigError
from .estimators import INIT_POLICIES, ROBUST_OVERRIDES, FilterConfig
from .machine import ANGLE_RATE_MODES, GeneratorParams
from .measurement import NoiseModel

DEFAULTS = {
    "horizon": 20.0,
    "dt": 0.02,
    "n_sub": 10,
    "seeds": [0],
    "output": "runs/default",
    "plots": True,
    "workers": 1,
    "generator": {
        "T_J": 10.0, "D": 2.0, "X_d": 1.2, "X_d_p": 0.3, "X_q": 1.0, "X_q_p": 0.5,
        "T_d0_p": 6.0, "T_q0_p": 0.5, "f_base": 50.0, "angle_rate": "synchronous",
    },
    "network": {
        "type": "smib",
        "X_e": 0.4,
        "V_inf": 1.0,
        "p_e0": 0.8,
        "u0": 1.0,
        "faults": [{"t_start": 1.2, "t_end": 1.3, "X_e": 0.2, "V_inf": 0.0}],
        "path": None,
    },
    "noise": {
        "sigma_delta_deg": 2.0,
        "sigma_omega": 1e-3,
        "sigma_U": 0.002,
        "sigma_phi_deg": 0.2,
        "terminal_sigma_U": 0.001,
        "terminal_sigma_phi_deg": 0.1,
    },
    "attack": {
        "cases": ["none"],
        "window": [4.0, 12.0],
        "redraw_policy": "per_step",
        "knowledge": "truth",
    },
    "estimators": ["ckf", "rckf"],
    "detection": {"B_j": 2.0, "C": [1.0, 0.7, 0.7], "standardized_norm": False},
    "filter": {
        "Q": [1e-8, 1e-8, 1e-8, 1e-8],
        "P0": [1e-2, 1e-4, 1e-2, 1e-2],
        "init_policy": "from_first_measurement",
        "robust_override": "inflate",
        "median_scope": "component",
        "median_window": None,
        "median_screen": 10.0,
    },
    "metrics": {"window": "full", "delta_unit": "deg"},
}

_NINE_BUS = {
    "horizon": 20.0,
    "network": {"faults": [{"t_start": 1.2, "t_end": 1.3, "X_e": 0.2, "V_inf": 0.0}]},
    "attack": {"window": [4.0, 12.0]},
    "detection": {"B_j": 2.0, "C": [1.0, 0.7, 0.7]},
}
_SIXTY_EIGHT_BUS = {
    "horizon": 10.0,
    "network": {
        "faults": [
            {"t_start": 1.0, "t_end": 1.05, "X_e": 0.2, "V_inf": 0.0},
            {"t_start": 1.05, "t_end": 1.1, "X_e": 0.6, "V_inf": 1.0},
        ]
    },
    "attack": {"window": [4.0, 8.0]},
    "detection": {"B_j": 1.5, "C": [0.67, 0.67, 0.67]},
}


def _with_cases(base, cases):
    doc = copy.deepcopy(base)
    doc["attack"]["cases"] = list(cases)
    return doc


ALL_CASES = ("none", "case1", "case2", "case3")
PRESETS = {"default": {}}
for _name, _base in (("paper_9bus", _NINE_BUS), ("paper_68bus", _SIXTY_EIGHT_BUS)):
    PRESETS[_name] = _with_cases(_base, ALL_CASES)
    for _case in ALL_CASES:
        PRESETS[f"{_name}_{_case}"] = _with_cases(_base, [_case])


@dataclass
class ScenarioConfig:
    generator: GeneratorParams
    network: SmibNetwork
    trajectory_path: Path
    noise: NoiseModel
    attack_cases: list
    estimators: list
    detection: DetectionConfig
    calibrate_C: bool
    filter: FilterConfig
    horizon: float
    dt: float
    n_sub: int
    seeds: list
    output: Path
    metrics_window: str
    delta_unit: str
    plots: bool
    workers: int
    raw: dict

    def filter_config(self, method):
        from dataclasses import replace
        return replace(self.filter, robust=(method == "rckf"), C=tuple(self.detection.C))

    def digest(self):
        blob = json.dumps(self.raw, sort_keys=True, default=str).encode()
        return hashlib.sha256(blob).hexdigest()


def deep_merge(base, override, path=""):
    """Merge ``override`` into a copy of ``base``; keys absent from ``base`` are errors."""
    out = copy.deepcopy(base)
    for key, value in override.items():
        where = f"{path}.{key}" if path else key
        if key not in base:
            raise ConfigError(where, "unknown key")
        if isinstance(base[key], dict) and value is not None:
            if not isinstance(value, dict):
                raise ConfigError(where, "expected a mapping")
            out[key] = deep_merge(base[key], value, where)
        else:
            out[key] = copy.deepcopy(value)
    return out


def resolve(raw):
    raw = dict(raw or {})
    preset = raw.pop("preset", None)
    doc = copy.deepcopy(DEFAULTS)
    if preset is not None:
        if preset not in PRESETS:
            raise ConfigError("preset", f"unknown preset {preset!r}; choose from {sorted(PRESETS)}")
        doc = deep_merge(doc, PRESETS[preset])
    return deep_merge(doc, raw)


def _num(doc, key, path, positive=False, nonneg=False):
    try:
        value = float(doc[key])
    except (TypeError, ValueError):
        raise ConfigError(f"{path}.{key}" if path else key, "expected a number") from None
    where = f"{path}.{key}" if path else key
    if not math.isfinite(value):
        raise ConfigError(where, "must be finite")
    if positive and value <= 0:
        raise ConfigError(where, "must be positive")
    if nonneg and value < 0:
        raise ConfigError(where, "must be non-negative")
    return value


def _choice(doc, key, path, options):
    value = doc[key]
    if value not in options:
        raise ConfigError(f"{path}.{key}", f"must be one of {list(options)}")
    return value


def parse_case(spec):
    """Attack case id: ``none``, ``case1..3`` or ``sigma=<value>``."""
    spec = str(spec).strip()
    if spec in CASE_SIGMAS:
        return spec, CASE_SIGMAS[spec]
    if spec.startswith("sigma="):
        try:
            sigma = float(spec.split("=", 1)[1])
        except ValueError:
            raise ConfigError("attack.cases", f"bad custom case {spec!r}") from None
        if not math.isfinite(sigma) or sigma < 0:
            raise ConfigError("attack.cases", f"sigma must be non-negative in {spec!r}")
        return spec, sigma
    raise ConfigError("attack.cases", f"unknown case {spec!r}")


def _diag(doc, key, path):
    values = doc[key]
    if not isinstance(values, (list, tuple)) or len(values) != 4:
        raise ConfigError(f"{path}.{key}", "expected four diagonal entries")
    try:
        arr = np.array([float(v) for v in values])
    except (TypeError, ValueError):
        raise ConfigError(f"{path}.{key}", "entries must be numbers") from None
    if np.any(arr < 0) or not np.all(np.isfinite(arr)):
        raise ConfigError(f"{path}.{key}", "entries must be finite and non-negative")
    return np.diag(arr)


def validate_config(raw):
    """Resolve a raw document into a fully defaulted :class:`ScenarioConfig`."""
    if raw is not None and not isinstance(raw, dict):
        raise ConfigError("<root>", "configuration must be a mapping")
    doc = resolve(raw)

    horizon = _num(doc, "horizon", "", positive=True)
    dt = _num(doc, "dt", "", positive=True)
    if horizon < dt:
        raise ConfigError("horizon", "must cover at least one sample interval")
    n_sub = doc["n_sub"]
    if not isinstance(n_sub, int) or n_sub < 1:
        raise ConfigError("n_sub", "must be a positive integer")

    seeds = doc["seeds"]
    if isinstance(seeds, int):
        seeds = list(range(seeds))
    if not isinstance(seeds, list) or not seeds or not all(isinstance(s, int) and s >= 0 for s in seeds):
        raise ConfigError("seeds", "expected a non-empty list of non-negative integers")
    workers = doc["workers"]
    if not isinstance(workers, int) or workers < 1:
        raise ConfigError("workers", "must be a positive integer")

    g = doc["generator"]
    try:
        gen = GeneratorParams(
            T_J=_num(g, "T_J", "generator"), D=_num(g, "D", "generator"),
            X_d=_num(g, "X_d", "generator"), X_d_p=_num(g, "X_d_p", "generator"),
            X_q=_num(g, "X_q", "generator"), X_q_p=_num(g, "X_q_p", "generator"),
            T_d0_p=_num(g, "T_d0_p", "generator"), T_q0_p=_num(g, "T_q0_p", "generator"),
            omega_s=2 * math.pi * _num(g, "f_base", "generator", positive=True),
            angle_rate=_choice(g, "angle_rate", "generator", ANGLE_RATE_MODES),
        )
    except ValueError as exc:
        raise ConfigError("generator", str(exc)) from None

    nw = doc["network"]
    kind = _choice(nw, "type", "network", ("smib", "trajectory"))
    faults = []
    for i, f in enumerate(nw["faults"] or []):
        where = f"network.faults[{i}]"
        if not isinstance(f, dict) or set(f) != {"t_start", "t_end", "X_e", "V_inf"}:
            raise ConfigError(where, "expected keys t_start, t_end, X_e, V_inf")
        fi = FaultInterval(*(_num(f, k, where) for k in ("t_start", "t_end", "X_e", "V_inf")))
        if fi.t_start < 0 or fi.t_end > horizon:
            raise ConfigError(where, "fault interval must lie inside the horizon")
        faults.append(fi)
    try:
        net = SmibNetwork(
            X_e=_num(nw, "X_e", "network"), V_inf=_num(nw, "V_inf", "network"),
            fault_schedule=tuple(faults),
            p_e0=_num(nw, "p_e0", "network"), u0=_num(nw, "u0", "network", positive=True),
        )
    except ValueError as exc:
        raise ConfigError("network", str(exc)) from None
    path = None
    if kind == "trajectory":
        if not nw["path"]:
            raise ConfigError("network.path", "required for trajectory input")
        path = Path(nw["path"])

    nz = doc["noise"]
    noise = NoiseModel(
        sigma_delta=math.radians(_num(nz, "sigma_delta_deg", "noise", nonneg=True)),
        sigma_omega=_num(nz, "sigma_omega", "noise", nonneg=True),
        sigma_U=_num(nz, "sigma_U", "noise", nonneg=True),
        sigma_phi=math.radians(_num(nz, "sigma_phi_deg", "noise", nonneg=True)),
        terminal_sigma_U=_num(nz, "terminal_sigma_U", "noise", nonneg=True),
        terminal_sigma_phi=math.radians(_num(nz, "terminal_sigma_phi_deg", "noise", nonneg=True)),
    )

    at = doc["attack"]
    window = at["window"]
    if not isinstance(window, (list, tuple)) or len(window) != 2:
        raise ConfigError("attack.window", "expected [t_start, t_end]")
    w0, w1 = float(window[0]), float(window[1])
    if not (0 <= w0 < w1 <= horizon + 1e-9):
        raise ConfigError("attack.window", "must satisfy 0 <= t_start < t_end <= horizon")
    redraw = _choice(at, "redraw_policy", "attack", REDRAW_POLICIES)
    knowledge = _choice(at, "knowledge", "attack", KNOWLEDGE_POLICIES)
    cases = at["cases"]
    if isinstance(cases, str):
        cases = [c for c in cases.split(",") if c.strip()]
    if not cases:
        raise ConfigError("attack.cases", "at least one case is required")
    attack_cases = []
    for spec in cases:
        name, sigma = parse_case(spec)
        attack_cases.append(AttackCase(sigma, (w0, w1), redraw, knowledge, name))
    if len({c.name for c in attack_cases}) != len(attack_cases):
        raise ConfigError("attack.cases", "duplicate case")

    estimators = doc["estimators"]
    if isinstance(estimators, str):
        estimators = ["ckf", "rckf"] if estimators == "both" else [estimators]
    if not estimators or any(e not in ("ckf", "rckf") for e in estimators):
        raise ConfigError("estimators", "choose from ckf, rckf")
    estimators = [e for e in ("ckf", "rckf") if e in estimators]

    de = doc["detection"]
    calibrate_C = de["C"] == "calibrate"
    C = (1.0, 1.0, 1.0) if calibrate_C else de["C"]
    if not isinstance(C, (list, tuple)) or len(C) != 3:
        raise ConfigError("detection.C", "expected three thresholds or 'calibrate'")
    try:
        detection = DetectionConfig(
            B_j=_num(de, "B_j", "detection", positive=True),
            C=tuple(float(c) for c in C),
            standardized_norm=bool(de["standardized_norm"]),
        )
    except (TypeError, ValueError) as exc:
        raise ConfigError("detection", str(exc)) from None

    fl = doc["filter"]
    mw = fl["median_window"]
    if mw is not None and (not isinstance(mw, int) or mw < 1):
        raise ConfigError("filter.median_window", "must be a positive integer or null")
    ms = fl["median_screen"]
    if ms is not None:
        ms = _num(fl, "median_screen", "filter", positive=True)
    try:
        fcfg = FilterConfig(
            Q=_diag(fl, "Q", "filter"), P0=_diag(fl, "P0", "filter"),
            init_policy=_choice(fl, "init_policy", "filter", INIT_POLICIES),
            dt=dt,
            robust_override=_choice(fl, "robust_override", "filter", ROBUST_OVERRIDES),
            median_scope=_choice(fl, "median_scope", "filter", ("component", "pooled")),
            median_window=mw, median_screen=ms,
        )
    except ValueError as exc:
        raise ConfigError("filter", str(exc)) from None

    me = doc["metrics"]
    return ScenarioConfig(
        generator=gen, network=net, trajectory_path=path, noise=noise,
        attack_cases=attack_cases, estimators=estimators, detection=detection,
        calibrate_C=calibrate_C, filter=fcfg, horizon=horizon, dt=dt, n_sub=n_sub,
        seeds=seeds, output=Path(doc["output"]),
        metrics_window=_choice(me, "window", "metrics", ("full", "attack")),
        delta_unit=_choice(me, "delta_unit", "metrics", ("deg", "rad")),
        plots=bool(doc["plots"]), workers=workers, raw=doc,
    )


def load_config(path):
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise ConfigError("<file>", str(exc)) from None
    try:
        raw = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        raise ConfigError("<file>", f"invalid YAML: {exc}") from None
    return raw or {}


def dump_config(doc, path):
    Path(path).write_text(yaml.safe_dump(doc, sort_keys=True))
