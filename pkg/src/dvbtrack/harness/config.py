"""Experiment configuration: JSON schema, built-in profiles and validation."""

from __future__ import annotations

import copy
import json
import re
from pathlib import Path
from typing import Literal

from pydantic import BaseModel, ConfigDict, Field, ValidationError, field_validator, model_validator

from ..metrics import OspaParams
from ..scenario import ScenarioConfig


class ConfigError(ValueError):
    """Invalid experiment configuration; the message names the offending field."""


class ScenarioSection(BaseModel):
    model_config = ConfigDict(extra="forbid")

    n_targets: int = Field(8, ge=1)
    n_sensors: int = Field(6, ge=1)
    n_steps: int = Field(30, ge=1)
    tau: float = Field(1.0, gt=0)
    sigma: float = Field(5.0, ge=0)
    clutter_rate: float | list[float] = 100.0
    target_rate: float | list[float] = 1.0
    noise_var: float | list[float] = 100.0
    region: tuple[float, float, float, float] = (0.0, 1000.0, 0.0, 1000.0)
    spawn_fraction: float = Field(0.8, gt=0, le=1)
    speed_range: tuple[float, float] = (0.0, 10.0)
    prior_pos_std: float = Field(10.0, gt=0)
    prior_vel_std: float = Field(5.0, gt=0)
    graph_radius: float = Field(450.0, gt=0)
    p_drop: float = Field(0.0, ge=0, lt=1)
    graph_rounds: int = Field(1, ge=1)
    graph_edges: list[tuple[int, int]] | None = None
    graph_max_retries: int = Field(1000, ge=1)

    @field_validator("clutter_rate", "target_rate", "noise_var")
    @classmethod
    def _non_negative(cls, v):
        values = v if isinstance(v, list) else [v]
        if any(x < 0 for x in values):
            raise ValueError("rates and variances must be non-negative")
        return v

    @field_validator("noise_var")
    @classmethod
    def _positive_noise(cls, v):
        values = v if isinstance(v, list) else [v]
        if any(x <= 0 for x in values):
            raise ValueError("noise variance must be positive")
        return v

    @model_validator(mode="after")
    def _per_sensor_lengths(self):
        for name in ("clutter_rate", "target_rate", "noise_var"):
            v = getattr(self, name)
            if isinstance(v, list) and len(v) != self.n_sensors:
                raise ValueError(f"{name} lists {len(v)} values for {self.n_sensors} sensors")
        xmin, xmax, ymin, ymax = self.region
        if not (xmax > xmin and ymax > ymin):
            raise ValueError("region must be (xmin, xmax, ymin, ymax) with positive extent")
        return self

    def build(self, seed: int) -> ScenarioConfig:
        data = self.model_dump()
        return ScenarioConfig.from_dict({**data, "seed": int(seed)})


class TrackerSpec(BaseModel):
    model_config = ConfigDict(extra="forbid")

    mode: Literal["centralised", "distributed", "aa_fusion"]
    i_max: int = Field(5, ge=1)
    consensus_iters: int = Field(20, ge=1)
    aa_every: int = Field(1, ge=1)

    @property
    def label(self) -> str:
        return self.mode if self.mode == "centralised" else f"{self.mode}_{self.consensus_iters}"

    @property
    def reported_iters(self) -> int:
        return 0 if self.mode == "centralised" else self.consensus_iters


class OspaSection(BaseModel):
    model_config = ConfigDict(extra="forbid")

    p: float = Field(1.0, ge=1)
    c: float = Field(50.0, gt=0)

    def build(self) -> OspaParams:
        return OspaParams(self.p, self.c)


class ExperimentConfig(BaseModel):
    model_config = ConfigDict(extra="forbid")

    scenario: ScenarioSection = ScenarioSection()
    trackers: list[TrackerSpec] = Field(
        default_factory=lambda: [
            TrackerSpec(mode="centralised"),
            TrackerSpec(mode="distributed", consensus_iters=20),
            TrackerSpec(mode="aa_fusion", consensus_iters=20),
        ]
    )
    mc_runs: int = Field(5, ge=1)
    ospa: OspaSection = OspaSection()
    sweep_iters: list[int] = Field(default_factory=lambda: [1, 2, 5, 10, 20])
    seed: int = Field(0, ge=0, lt=2**64)

    @field_validator("sweep_iters")
    @classmethod
    def _positive_iters(cls, v):
        if any(i < 1 for i in v):
            raise ValueError("sweep iteration counts must be >= 1")
        return v


PROFILES: dict[str, dict] = {
    "desk": {
        "scenario": {"n_targets": 8, "n_sensors": 6, "n_steps": 30},
        "mc_runs": 5,
    },
    "paper": {
        "scenario": {"n_targets": 50, "n_sensors": 20, "n_steps": 50, "graph_radius": 350.0},
        "mc_runs": 20,
    },
}


def _merge(base: dict, override: dict) -> dict:
    out = copy.deepcopy(base)
    for key, value in override.items():
        if isinstance(value, dict) and isinstance(out.get(key), dict):
            out[key] = _merge(out[key], value)
        else:
            out[key] = value
    return out


def _line_of(text: str, key: str) -> int | None:
    m = re.search(rf'"{re.escape(key)}"\s*:', text)
    return text.count("\n", 0, m.start()) + 1 if m else None


def _format_errors(exc: ValidationError, text: str | None, source: str) -> str:
    lines = []
    for err in exc.errors():
        loc = ".".join(str(p) for p in err["loc"] if not isinstance(p, int)) or "<root>"
        where = ""
        if text is not None and err["loc"]:
            keys = [p for p in err["loc"] if isinstance(p, str)]
            line = _line_of(text, keys[-1]) if keys else None
            if line is not None:
                where = f" (line {line})"
        lines.append(f"{source}{where}: field '{loc}': {err['msg']}")
    return "\n".join(lines)


def build_config(
    data: dict | None = None,
    profile: str = "desk",
    seed: int | None = None,
    text: str | None = None,
    source: str = "<config>",
) -> ExperimentConfig:
    if profile not in PROFILES:
        raise ConfigError(f"unknown profile {profile!r}; choose from {sorted(PROFILES)}")
    merged = _merge(PROFILES[profile], data or {})
    if seed is not None:
        merged["seed"] = seed
    try:
        return ExperimentConfig.model_validate(merged)
    except ValidationError as exc:
        raise ConfigError(_format_errors(exc, text, source)) from None


def load_config(path: str | Path | None, profile: str = "desk", seed: int | None = None) -> ExperimentConfig:
    if path is None:
        return build_config(None, profile, seed)
    path = Path(path)
    text = path.read_text(encoding="utf-8")
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path} (line {exc.lineno}, column {exc.colno}): invalid JSON: {exc.msg}") from None
    if not isinstance(data, dict):
        raise ConfigError(f"{path}: top-level JSON value must be an object")
    return build_config(data, profile, seed, text=text, source=str(path))
