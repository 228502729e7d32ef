import pytest

from grasta.config import DEFAULTS, RunConfig, load_config_file, parse_config_text
from grasta.errors import InputValidationError


def test_defaults_resolve_per_experiment():
    assert RunConfig.resolve("track")["step.c_scale"] == 1.0
    assert RunConfig.resolve("complete")["step.c_scale"] == 0.001
    assert RunConfig.resolve("video")["step.c_scale"] == 0.01
    cfg = RunConfig.resolve("track")
    assert cfg.admm_params().rho == 1.8 and cfg.step_params().mu_zero == 3.0


def test_flags_override_file_values():
    file_values = parse_config_text("# comment\nadmm.rho = 1.5\ntrack.steps=10\n")
    cfg = RunConfig.resolve("track", 3, file_values, {"track.steps": 20, "admm.max_iter": None})
    assert cfg["admm.rho"] == 1.5
    assert cfg["track.steps"] == 20
    assert cfg["admm.max_iter"] == DEFAULTS["admm.max_iter"]
    assert cfg.seed == 3


def test_explicit_c_scale_beats_auto():
    cfg = RunConfig.resolve("video", file_values=parse_config_text("step.c_scale=0.5"))
    assert cfg["step.c_scale"] == 0.5


def test_parse_errors():
    for text in ("no equals sign", "unknown.key=1", "admm.max_iter=abc"):
        with pytest.raises(InputValidationError):
            parse_config_text(text)
    with pytest.raises(InputValidationError):
        RunConfig.resolve("track", overrides={"nope": 1})


def test_load_file(tmp_path):
    path = tmp_path / "run.cfg"
    path.write_text("tracker.mode=grouse\nstep.rule=diminishing\n")
    assert load_config_file(path) == {"tracker.mode": "grouse", "step.rule": "diminishing"}
    with pytest.raises(InputValidationError):
        load_config_file(tmp_path / "missing.cfg")


def test_lines_record_every_key():
    lines = list(RunConfig.resolve("complete").lines())
    assert len(lines) == len(DEFAULTS)
    assert "step.c_scale=0.001" in lines
    assert lines == sorted(lines)
