"""Flat ``section.key = value`` run configuration.

Every key has a default here; a config file overrides defaults and command
line flags override the file. Lines starting with ``#`` are comments.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Any, Iterable, Mapping

from .admm import AdmmParams
from .completion import COMPLETION_C
from .errors import InputValidationError
from .stepsize import StepSizeParams
from .video import VIDEO_C

AUTO = "auto"

# c_scale "auto" picks the per-experiment default (tracking, completion, video).
DEFAULTS: dict[str, Any] = {
    "admm.rho": 1.8,
    "admm.eps_abs": 1e-7,
    "admm.eps_rel": 1e-5,
    "admm.max_iter": 60,
    "step.c_scale": AUTO,
    "step.f_max": 1.0,
    "step.f_min": -1.0,
    "step.omega_shape": 0.1,
    "step.mu_min": 1.0,
    "step.mu_max": 15.0,
    "step.mu_zero": 3.0,
    "step.rule": "multilevel",
    "tracker.mode": "grasta",
    "tracker.grouse_eta": 0.02,
    "tracker.max_angle": 0.5,
    "tracker.reortho_every": 500,
    "track.protocol": "stationary",
    "track.n": 500,
    "track.d": 5,
    "track.outliers": 0.1,
    "track.sampling": 1.0,
    "track.noise_var": 1e-5,
    "track.steps": 5000,
    "track.delta": 1e-5,
    "track.period": 5000,
    "complete.rows": 200,
    "complete.cols": 200,
    "complete.d": 5,
    "complete.density": 0.3,
    "complete.noise_var": 1e-6,
    "complete.cycles": 10,
    "complete.trials": 5,
    "complete.grouse_eta": 3e-4,
    "video.rank": 5,
    "video.train_pixels": 0.3,
    "video.train_frames": 50,
    "video.train_cycles": 5,
    "video.separate_pixels": 0.3,
    "video.update_pixels": 0.3,
}

STEP_DEFAULT_C = {"track": 1.0, "complete": COMPLETION_C, "video": VIDEO_C}


def _coerce(key: str, raw: Any) -> Any:
    default = DEFAULTS[key]
    if isinstance(raw, str):
        raw = raw.strip()
        if raw == AUTO and key == "step.c_scale":
            return AUTO
    try:
        if isinstance(default, bool):
            if isinstance(raw, str):
                if raw.lower() in ("1", "true", "yes", "on"):
                    return True
                if raw.lower() in ("0", "false", "no", "off"):
                    return False
                raise ValueError(raw)
            return bool(raw)
        if isinstance(default, int):
            return int(raw)
        if isinstance(default, float) or default == AUTO:
            return float(raw)
        return str(raw)
    except ValueError:
        raise InputValidationError(f"bad value for {key}: {raw!r}") from None


def parse_config_text(text: str) -> dict[str, Any]:
    values: dict[str, Any] = {}
    for lineno, line in enumerate(text.splitlines(), 1):
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        if "=" not in line:
            raise InputValidationError(f"config line {lineno}: expected key=value")
        key, raw = (part.strip() for part in line.split("=", 1))
        if key not in DEFAULTS:
            raise InputValidationError(f"config line {lineno}: unknown key {key!r}")
        values[key] = _coerce(key, raw)
    return values


def load_config_file(path) -> dict[str, Any]:
    try:
        with open(path) as fh:
            return parse_config_text(fh.read())
    except OSError as exc:
        raise InputValidationError(f"cannot read config {path}: {exc}") from None


@dataclass
class RunConfig:
    kind: str
    seed: int = 0
    values: dict[str, Any] = field(default_factory=lambda: dict(DEFAULTS))

    @classmethod
    def resolve(cls, kind: str, seed: int = 0, file_values: Mapping[str, Any] | None = None,
                overrides: Mapping[str, Any] | None = None) -> "RunConfig":
        values = dict(DEFAULTS)
        for source in (file_values or {}), (overrides or {}):
            for k, v in source.items():
                if v is None:
                    continue
                if k not in DEFAULTS:
                    raise InputValidationError(f"unknown config key {k!r}")
                values[k] = _coerce(k, v)
        if values["step.c_scale"] == AUTO:
            values["step.c_scale"] = STEP_DEFAULT_C.get(kind, 1.0)
        return cls(kind, seed, values)

    def __getitem__(self, key: str) -> Any:
        return self.values[key]

    def admm_params(self) -> AdmmParams:
        return AdmmParams(
            rho=self["admm.rho"], eps_abs=self["admm.eps_abs"],
            eps_rel=self["admm.eps_rel"], max_iter=self["admm.max_iter"],
        )

    def step_params(self) -> StepSizeParams:
        return StepSizeParams(
            c_scale=self["step.c_scale"], f_max=self["step.f_max"], f_min=self["step.f_min"],
            omega_shape=self["step.omega_shape"], mu_min=self["step.mu_min"],
            mu_max=self["step.mu_max"], mu_zero=self["step.mu_zero"], rule=self["step.rule"],
        )

    def lines(self) -> Iterable[str]:
        for k in sorted(self.values):
            yield f"{k}={self.values[k]!r}" if isinstance(self.values[k], float) else f"{k}={self.values[k]}"
