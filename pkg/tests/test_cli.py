import json
from pathlib import Path

import numpy as np
import pytest

from targex.cli import main, parse_config

REPO = Path(__file__).resolve().parents[1]


def small_config_dict():
    return {
        "system": {"A": [[0.4, 0.3], [0.0, 0.4]], "B": [[0.2], [1.0]],
                   "sigma_w": 1.0},
        "prior": {"D0_inv": {"scaled-identity": 0.002}, "delta": 0.05},
        "exploration": {"T": 24, "frequencies": [0.0, 0.125, 0.25],
                        "goal_diag": [50.0, 0.0, 0.0]},
        "experiments": {"alphas": [1.0], "trials": 1},
        "scenario": {"beta": 1e-6},
        "seed": 3,
    }


def write_config(tmp_path, data, name="config.json"):
    path = tmp_path / name
    path.write_text(json.dumps(data))
    return path


def test_parse_paper_config_echoes_values():
    cfg = parse_config(REPO / "configs" / "paper.json")
    assert cfg.sigma_w == 1.0
    assert cfg.T == 100
    assert cfg.D0_inv_scale == pytest.approx(1e-3)
    assert cfg.delta == 0.01
    assert cfg.frequencies == (0.0, 0.1, 0.2, 0.3, 0.4)
    assert cfg.A_true[0, 0] == 0.49
    assert cfg.goal_matrix()[0, 0] == 1e7


def test_parse_defaults_applied(tmp_path):
    data = {"system": small_config_dict()["system"], "exploration": {"T": 30}}
    cfg = parse_config(write_config(tmp_path, data))
    assert cfg.delta == 0.01
    assert cfg.beta == 1e-10
    assert cfg.eps == 0.5
    assert cfg.trials == 10


def test_parse_unknown_key(tmp_path):
    data = small_config_dict()
    data["sytem"] = {}
    with pytest.raises(ValueError, match="unknown config key"):
        parse_config(write_config(tmp_path, data))
    data = small_config_dict()
    data["prior"]["D0inv"] = 1
    with pytest.raises(ValueError, match="unknown key"):
        parse_config(write_config(tmp_path, data))


def test_parse_malformed_json_reports_line(tmp_path):
    path = tmp_path / "bad.json"
    path.write_text('{\n "system": [1, 2,,]\n}\n')
    with pytest.raises(ValueError, match="line 2"):
        parse_config(path)


def test_missing_config_path_exit_code(tmp_path):
    rc = main(["explore", "--config", str(tmp_path / "nope.json"),
               "--out", str(tmp_path / "out")])
    assert rc == 1


def test_explore_command_writes_outputs(tmp_path):
    cfg_path = write_config(tmp_path, small_config_dict())
    out = tmp_path / "out"
    rc = main(["explore", "--config", str(cfg_path), "--out", str(out),
               "--quiet"])
    assert rc == 0
    assert (out / "explore.csv").exists()
    manifest = json.loads((out / "manifest.json").read_text())
    assert manifest["command"] == "explore"
    assert manifest["config"]["seed"] == 3
    assert manifest["config"]["delta"] == 0.05


def test_explore_rerun_byte_identical(tmp_path):
    cfg_path = write_config(tmp_path, small_config_dict())
    out1, out2 = tmp_path / "o1", tmp_path / "o2"
    assert main(["explore", "--config", str(cfg_path), "--out", str(out1),
                 "--quiet"]) == 0
    assert main(["explore", "--config", str(cfg_path), "--out", str(out2),
                 "--quiet"]) == 0
    assert (out1 / "explore.csv").read_bytes() == (out2 / "explore.csv").read_bytes()


def test_design_command(tmp_path):
    cfg_path = write_config(tmp_path, small_config_dict())
    out = tmp_path / "out"
    rc = main(["design", "--config", str(cfg_path), "--out", str(out), "--quiet"])
    assert rc == 0
    text = (out / "design.csv").read_text()
    assert "nominal" in text and "robust" in text


def test_dual_command_infeasible_exit_code(tmp_path):
    data = small_config_dict()
    data["dual"] = {"gamma_p": 0.05}  # below any achievable level
    cfg_path = write_config(tmp_path, data)
    rc = main(["dual", "--config", str(cfg_path), "--out", str(tmp_path / "o"),
               "--quiet"])
    assert rc == 2
