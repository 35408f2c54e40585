import json

import numpy as np
import pytest

from orbitresponse import cli


def _write(tmp_path, name, payload):
    path = tmp_path / name
    path.write_text(json.dumps(payload))
    return str(path)


def _run_cfg(**over):
    cfg = {"version": 1, "system": {"name": "catmap"}, "n_steps": 5000,
           "spinup": 200, "seed": 3, "w_max": 6, "w_select": 4, "t_trunc": 80}
    cfg.update(over)
    return cfg


def test_run_and_determinism(tmp_path, capsys):
    path = _write(tmp_path, "run.json", _run_cfg())
    out1 = tmp_path / "a.json"
    out2 = tmp_path / "b.json"
    assert cli.main(["run", "--config", path, "--out", str(out1)]) == 0
    assert cli.main(["run", "--config", path, "--out", str(out2)]) == 0
    assert out1.read_bytes() == out2.read_bytes()
    payload = json.loads(out1.read_text())
    assert payload["system"] == "catmap"
    assert np.isfinite(payload["total"])


def test_run_zero_perturbation_flag(tmp_path):
    path = _write(tmp_path, "run.json", _run_cfg(zero_perturbation=True))
    out = tmp_path / "o.json"
    assert cli.main(["run", "--config", path, "--out", str(out)]) == 0
    payload = json.loads(out.read_text())
    assert payload["total"] == 0.0


def test_missing_system_key_exits_2(tmp_path, capsys):
    cfg = _run_cfg()
    del cfg["system"]
    path = _write(tmp_path, "bad.json", cfg)
    assert cli.main(["run", "--config", path]) == 2
    assert "system" in capsys.readouterr().err


def test_unknown_key_exits_2(tmp_path, capsys):
    path = _write(tmp_path, "bad.json", _run_cfg(bogus=1))
    assert cli.main(["run", "--config", path]) == 2
    assert "bogus" in capsys.readouterr().err


def test_unknown_system_exits_2(tmp_path, capsys):
    path = _write(tmp_path, "bad.json", _run_cfg(system={"name": "lorenz"}))
    assert cli.main(["run", "--config", path]) == 2


def test_parameter_out_of_range_exits_2(tmp_path):
    path = _write(tmp_path, "bad.json",
                  _run_cfg(system={"name": "sawtooth", "params": {"a": 0.9}}))
    assert cli.main(["run", "--config", path]) == 2


def test_numerical_abort_exits_3(tmp_path, monkeypatch):
    from orbitresponse.frames import RankCollapseError

    def boom(*a, **k):
        raise RankCollapseError("collapse at step 7")

    monkeypatch.setattr(cli, "linear_response", boom)
    path = _write(tmp_path, "run.json", _run_cfg())
    assert cli.main(["run", "--config", path]) == 3


def test_validate_derivatives(tmp_path):
    cfg = {"version": 1, "system": {"name": "catmap"},
           "checks": ["derivatives"], "seed": 1}
    path = _write(tmp_path, "val.json", cfg)
    out = tmp_path / "val_out.json"
    assert cli.main(["validate", "--config", path, "--out", str(out)]) == 0
    payload = json.loads(out.read_text())
    assert payload["all_pass"]


def test_sweep_w_axis(tmp_path):
    cfg = {"version": 1, "system": {"name": "catmap"}, "axis": "W",
           "values": [0, 2, 4],
           "base": {"n_steps": 4000, "seed": 2, "t_trunc": 60, "w_select": 4,
                    "spinup": 100}}
    path = _write(tmp_path, "sweep.json", cfg)
    out = tmp_path / "sweep.csv"
    assert cli.main(["sweep", "--config", path, "--out", str(out),
                     "--format", "csv"]) == 0
    lines = out.read_text().strip().splitlines()
    assert len(lines) == 4  # header + 3 rows
    assert "value" in lines[0]


def test_sweep_n_axis(tmp_path):
    cfg = {"version": 1, "system": {"name": "sawtooth",
                                    "params": {"a": 0.1}},
           "axis": "N", "values": [2000, 4000],
           "base": {"seed": 2, "t_trunc": 60, "w_select": 4, "w_max": 6,
                    "spinup": 100}}
    path = _write(tmp_path, "sweep.json", cfg)
    out = tmp_path / "sweep.json.out"
    assert cli.main(["sweep", "--config", path, "--out", str(out)]) == 0
    payload = json.loads(out.read_text())
    assert len(payload["rows"]) == 2


def test_sweep_unknown_axis_exits_2(tmp_path):
    cfg = {"version": 1, "system": {"name": "catmap"}, "axis": "Q",
           "values": [1]}
    path = _write(tmp_path, "sweep.json", cfg)
    assert cli.main(["sweep", "--config", path]) == 2


def test_wrong_version_exits_2(tmp_path):
    path = _write(tmp_path, "bad.json", _run_cfg(version=99))
    assert cli.main(["run", "--config", path]) == 2
