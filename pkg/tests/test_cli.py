import math

import pytest
import yaml

from safesocp.cli import EXIT_CONFIG, EXIT_INFEASIBLE, EXIT_OK, main


def cfg(tmp_path, **data):
    data.setdefault("out", str(tmp_path / "out"))
    p = tmp_path / "run.yaml"
    p.write_text(yaml.safe_dump(data))
    return str(p)


def fields(text):
    out = {}
    for line in text.splitlines():
        if ":" in line:
            k, v = line.split(":", 1)
            out[k.strip()] = v.strip()
    return out


CONST_B = {"mode": "constant", "value": 50.0}


def test_solve_feasible_with_oracle(tmp_path, capsys):
    rc = main(["solve", "--config", cfg(tmp_path, bound_B=CONST_B), "--oracle"])
    assert rc == EXIT_OK
    f = fields(capsys.readouterr().out)
    assert f["status"] == "Feasible"
    assert float(f["oracle_gap"]) <= 1e-2
    assert float(f["kkt_residual"]) <= 1e-8


def test_solve_conflict_strict(tmp_path, capsys):
    prog = [{"Q": [[0.0]], "r": [0.0], "b": [1.0], "c": -1.0},
            {"Q": [[0.0]], "r": [0.0], "b": [-1.0], "c": -1.0}]
    path = cfg(tmp_path, solve={"program": prog})
    assert main(["solve", "--config", path]) == EXIT_OK
    assert fields(capsys.readouterr().out)["status"] == "Infeasible"
    assert main(["solve", "--config", path, "--strict"]) == EXIT_INFEASIBLE


def test_bad_config_exit_code(tmp_path, capsys):
    assert main(["solve", "--config", cfg(tmp_path, bogus=1)]) == EXIT_CONFIG
    assert "unknown keys" in capsys.readouterr().err


def test_thread_variable_validated(tmp_path, monkeypatch, capsys):
    monkeypatch.setenv("SAFESOCP_THREADS", "zero")
    assert main(["solve", "--config", cfg(tmp_path, bound_B=CONST_B)]) == EXIT_CONFIG


def test_universal_example(tmp_path, capsys):
    socc = {"Q": [[1.0], [0.0]], "r": [0.0, 0.0], "b": [2.0], "c": 1.0}
    assert main(["universal", "--config", cfg(tmp_path, universal={"socc": socc})]) == EXIT_OK
    f = fields(capsys.readouterr().out)
    assert float(f["u_s"].strip("[]")) == pytest.approx(math.sqrt(5) - 1, abs=1e-10)


def test_simulate_repeatable(tmp_path, capsys):
    data = dict(model={"kind": "dataset", "n_points": 80, "box_lo": [-1.0, -1.0], "box_hi": [3.0, 7.0]},
                bound_B=CONST_B, simulate={"t_end": 0.3})
    path = cfg(tmp_path, **data)
    assert main(["simulate", "--config", path, "--seed", "4", "--out", str(tmp_path / "a")]) == EXIT_OK
    assert main(["simulate", "--config", path, "--seed", "4", "--out", str(tmp_path / "b")]) == EXIT_OK
    for name in ("trajectory.csv", "trajectory.svg"):
        assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()
    capsys.readouterr()


def test_small_feasmap(tmp_path, capsys):
    data = dict(model={"kind": "dataset", "n_points": 60}, bound_B=CONST_B,
                feasmap={"grid": {"shape": [8, 8]}})
    assert main(["feasmap", "--config", cfg(tmp_path, **data)]) == EXIT_OK
    f = fields(capsys.readouterr().out)
    assert int(f["soundness_violations"]) == 0
    out = tmp_path / "out"
    lines = (out / "feasmap.csv").read_text().splitlines()
    assert len(lines) - 1 == int(f["points"])
    assert (out / "feasmap_margin.svg").exists() and (out / "feasmap_phase1.svg").exists()
