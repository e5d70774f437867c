import math

import pytest

from fdidse.config import PRESETS, load_config, parse_case, validate_config
from fdidse.errors import ConfigError


def test_defaults():
    cfg = validate_config({})
    assert cfg.horizon == 20.0 and cfg.dt == 0.02 and cfg.n_sub == 10
    assert cfg.estimators == ["ckf", "rckf"]
    assert cfg.noise.sigma_delta == pytest.approx(math.radians(2.0))
    assert [c.name for c in cfg.attack_cases] == ["none"]


def test_nine_bus_case1_preset():
    cfg = validate_config({"preset": "paper_9bus_case1"})
    (case,) = cfg.attack_cases
    assert case.name == "case1" and case.sigma_c == 0.01
    assert case.window == (4.0, 12.0)
    assert cfg.detection.B_j == 2.0 and cfg.detection.C == (1.0, 0.7, 0.7)
    assert not cfg.calibrate_C


def test_sixty_eight_bus_preset():
    cfg = validate_config({"preset": "paper_68bus"})
    assert cfg.horizon == 10.0
    assert cfg.detection.B_j == 1.5 and cfg.detection.C == (0.67, 0.67, 0.67)
    assert cfg.attack_cases[0].window == (4.0, 8.0)
    assert [c.name for c in cfg.attack_cases] == ["none", "case1", "case2", "case3"]
    assert len(cfg.network.fault_schedule) == 2


def test_every_preset_validates():
    for name in PRESETS:
        validate_config({"preset": name})


@pytest.mark.parametrize("raw,key", [
    ({"horizon": -1}, "horizon"),
    ({"attack": {"window": [4, 30]}}, "attack.window"),
    ({"bogus": 1}, "bogus"),
    ({"filter": {"bogus": 1}}, "filter.bogus"),
    ({"preset": "nope"}, "preset"),
    ({"estimators": []}, "estimators"),
    ({"estimators": ["ekf"]}, "estimators"),
    ({"attack": {"cases": ["case9"]}}, "attack.cases"),
    ({"attack": {"cases": ["sigma=-1"]}}, "attack.cases"),
    ({"seeds": []}, "seeds"),
    ({"noise": {"sigma_omega": -1}}, "noise.sigma_omega"),
    ({"generator": {"angle_rate": "fast"}}, "generator.angle_rate"),
    ({"network": {"faults": [{"t_start": 1}]}}, "network.faults[0]"),
    ({"network": {"type": "trajectory"}}, "network.path"),
    ({"detection": {"C": [1, 2]}}, "detection.C"),
])
def test_rejections_name_the_key(raw, key):
    with pytest.raises(ConfigError) as info:
        validate_config(raw)
    assert info.value.key == key


def test_custom_sigma_and_lists():
    assert parse_case("sigma=0.05") == ("sigma=0.05", 0.05)
    cfg = validate_config({"attack": {"cases": "none,case2,sigma=0.3"}, "seeds": 3, "estimators": "both"})
    assert [c.sigma_c for c in cfg.attack_cases] == [0.0, 0.1, 0.3]
    assert cfg.seeds == [0, 1, 2]
    assert cfg.estimators == ["ckf", "rckf"]


def test_calibrate_keyword():
    cfg = validate_config({"detection": {"C": "calibrate"}})
    assert cfg.calibrate_C


def test_filter_config_per_method():
    cfg = validate_config({"preset": "paper_68bus"})
    assert cfg.filter_config("rckf").robust and not cfg.filter_config("ckf").robust
    assert cfg.filter_config("rckf").C == (0.67, 0.67, 0.67)


def test_yaml_loading(tmp_path):
    path = tmp_path / "c.yaml"
    path.write_text("preset: paper_9bus_case2\nseeds: [1, 2]\nnoise:\n  sigma_delta_deg: 1.0\n")
    cfg = validate_config(load_config(path))
    assert cfg.seeds == [1, 2] and cfg.attack_cases[0].name == "case2"
    assert cfg.noise.sigma_delta == pytest.approx(math.radians(1.0))
    path.write_text("a: [1,\n")
    with pytest.raises(ConfigError):
        load_config(path)


def test_digest_is_stable():
    assert validate_config({}).digest() == validate_config({}).digest()
    assert validate_config({}).digest() != validate_config({"seeds": [1]}).digest()
