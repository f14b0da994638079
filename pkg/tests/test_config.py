import pytest
import yaml

from safesocp.config import (ConfigError, ExperimentCfg, GridCfg, RunConfig, build, load_config,
                             to_dict)


def write(tmp_path, data):
    p = tmp_path / "c.yaml"
    p.write_text(yaml.safe_dump(data) if not isinstance(data, str) else data)
    return p


def test_defaults_without_file():
    cfg = load_config(None)
    assert cfg == RunConfig()
    assert cfg.certificates.cbf.eta_h == 0.5
    assert cfg.solver.tol_kkt == 1e-8


def test_round_trip(tmp_path):
    cfg = RunConfig()
    assert load_config(write(tmp_path, to_dict(cfg))) == cfg


@pytest.mark.parametrize("data", [
    {"bogus": 1},
    {"solver": {"tol_kkt": 1e-8, "tolerance": 1}},
    {"experiment": {"kind": "offline_n", "sizez": [1]}},
    {"certificates": {"cbf": {"centre": [0, 4]}}},
])
def test_unknown_keys_rejected(tmp_path, data):
    with pytest.raises(ConfigError, match="unknown keys"):
        load_config(write(tmp_path, data))


@pytest.mark.parametrize("data", [
    {"seed": "zero"},
    {"seed": True},
    {"solver": {"max_iterations": 2.5}},
    {"system": {"kind": "pendulum"}},
    {"system": {"kind": "linear"}},
    {"certificates": {"cbf": {"radius": -1.0}}},
    {"model": {"kind": "gp"}},
    {"bound_B": {"mode": "oracle"}},
    {"experiment": {"sizes": []}},
    {"solver": "fast"},
])
def test_invalid_values_rejected(tmp_path, data):
    with pytest.raises(ConfigError):
        load_config(write(tmp_path, data))


def test_bad_yaml_and_missing_file(tmp_path):
    with pytest.raises(ConfigError):
        load_config(write(tmp_path, "seed: [1, 2"))
    with pytest.raises(ConfigError):
        load_config(tmp_path / "missing.yaml")


def test_ints_accepted_for_floats():
    g = build(GridCfg, {"lo": [0, 0], "hi": [1, 1], "shape": [2, 2]})
    assert g.shape == [2, 2]
    assert build(ExperimentCfg, {"t_end": 3}).t_end == 3.0


def test_grid_validation():
    with pytest.raises(ConfigError):
        build(GridCfg, {"lo": [0, 0], "hi": [0, 1], "shape": [2, 2]})
    with pytest.raises(ConfigError):
        build(GridCfg, {"lo": [0], "hi": [1, 1], "shape": [2, 2]})
