import json
import math

import pytest

from pidenet.cli import main
from pidenet.config import ConfigError, RunConfig, resolve


def test_no_args_is_usage_error(capsys):
    assert main([]) == 2
    assert "usage" in capsys.readouterr().err


def test_unknown_subcommand_and_flag():
    assert main(["frobnicate"]) == 2
    assert main(["plan", "--bogus"]) == 2


def test_plan_unit_exponents(capsys):
    assert main(["plan", "--delta", "0.1", "--beta", "1", "--alpha", "1", "--beta-c", "1"]) == 0
    out = capsys.readouterr().out
    assert "eta=3" in out and "kappa=1" in out and "M=400" in out


def test_plan_from_preset(capsys):
    assert main(["plan", "--preset", "jump_state"]) == 0
    assert "N_euler=" in capsys.readouterr().out


def test_solve_heat_matches_closed_form(capsys):
    assert main(["solve", "--M", "20000", "--N-euler", "4", "--seed", "3"]) == 0
    out = capsys.readouterr().out
    value = float(out.split("u = ")[1].split()[0])
    stderr = float(out.split("+/- ")[1].split()[0])
    assert abs(value - math.exp(-0.5)) <= 3 * stderr


def test_solve_wrong_dimension_is_usage_error():
    assert main(["solve", "--x", "0", "0", "--M", "10"]) == 2


def test_config_file_rejects_unknown_keys(tmp_path):
    cfg = tmp_path / "c.json"
    cfg.write_text(json.dumps({"preset": "heat", "colour": "red"}))
    assert main(["plan", "--config", str(cfg)]) == 2


def test_resolution_order(tmp_path):
    cfg = tmp_path / "c.json"
    cfg.write_text(json.dumps({"seed": 1, "delta": 0.2, "preset": "source"}))
    env = {"PIDENET_SEED": "2", "PIDENET_OUT": "elsewhere"}
    rc = resolve(str(cfg), {"seed": 3}, environ=env)
    assert (rc.seed, rc.delta, rc.out, rc.preset) == (3, 0.2, "elsewhere", "source")
    assert resolve(None, None, environ={"PIDENET_CONFIG": str(cfg)}).preset == "source"


def test_bad_values_raise():
    with pytest.raises(ConfigError):
        RunConfig(scale="huge")
    with pytest.raises(ConfigError):
        resolve(None, None, environ={"PIDENET_SEED": "abc"})


def test_suite_writes_csv(tmp_path):
    out = tmp_path / "bounds"
    code = main(["suite", "--studies", "sqrtN", "jump_budget", "--out", str(out)])
    assert code == 0
    text = (out / "results.csv").read_text()
    assert text.startswith("study,knob_name,knob,M,error,stderr,slope,slope_lo,slope_hi,passed")


def test_build_writes_artifacts(tmp_path):
    # shrink the plan through its constant so the build stays quick
    cfg = tmp_path / "c.json"
    cfg.write_text(json.dumps({"preset": "source", "delta": 0.5, "C": 0.05,
                               "out": str(tmp_path / "b")}))
    assert main(["build", "--config", str(cfg)]) == 0
    manifest = json.loads((tmp_path / "b" / "manifest.json").read_text())
    assert manifest["preset"] == "source(d=1)"
    assert (tmp_path / "b" / "phi.txt").read_text().startswith("pidenet-time-grid 1")
    assert (tmp_path / "b" / "sizes.txt").exists()


def test_identical_invocations_give_identical_files(tmp_path):
    a, b = tmp_path / "a", tmp_path / "b"
    for out in (a, b):
        assert main(["suite", "--studies", "sqrtN", "mc_variance", "--out", str(out)]) == 0
    assert (a / "results.csv").read_bytes() == (b / "results.csv").read_bytes()
