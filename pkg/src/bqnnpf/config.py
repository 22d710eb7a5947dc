"""Experiment configuration schema and preset loading."""

from __future__ import annotations

import json
from importlib import resources
from pathlib import Path
from typing import Literal

from pydantic import BaseModel, ConfigDict, Field, model_validator
from pydantic import ValidationError as PydanticValidationError

from .errors import ValidationError
from .powerflow.case import PRESET_CASES
from .powerflow.scenarios import ScenarioConfig
from .quantum.circuit import NoiseSpec
from .quantum.state import MAX_QUBITS

PRESETS = ("1a", "1b", "1c", "2a", "2b", "2c", "3a", "3b", "3c")


class _Strict(BaseModel):
    model_config = ConfigDict(extra="forbid", frozen=True)


class ScenarioSection(_Strict):
    penetration: float = Field(0.0, ge=0.0, le=1.0)
    load_scale_range: tuple[float, float] = (0.8, 1.2)
    pv_beta: tuple[float, float] = (2.06, 2.5)
    wind_weibull: tuple[float, float] = (2.0, 0.4)
    count: int = Field(1000, ge=1)
    seed: int | None = Field(None, ge=0)

    @model_validator(mode="after")
    def _check(self):
        lo, hi = self.load_scale_range
        if not 0 < lo <= hi:
            raise ValueError("load_scale_range must satisfy 0 < low <= high")
        if min(self.pv_beta) <= 0 or min(self.wind_weibull) <= 0:
            raise ValueError("distribution parameters must be > 0")
        return self


class SplitSection(_Strict):
    train_fraction: float = Field(0.6, gt=0.0, lt=1.0)


class ModelSection(_Strict):
    kind: Literal["hybrid", "mlp"] = "hybrid"
    m: int = Field(4, ge=1, le=MAX_QUBITS)
    layers: int = Field(2, ge=0, le=64)
    widths: list[int] = Field(default_factory=lambda: [16], min_length=1)

    @model_validator(mode="after")
    def _check(self):
        if min(self.widths) < 1:
            raise ValueError("widths must all be >= 1")
        return self


class TrainerSection(_Strict):
    kind: Literal["deterministic", "variational"] = "deterministic"
    epochs: int = Field(100, ge=1)
    lr: float = Field(0.01, gt=0.0)
    batch_size: int | None = Field(None, ge=1)
    optimizer: Literal["gd", "adam"] = "gd"
    M: int = Field(2, ge=1)
    S: int = Field(20, ge=1)
    sigma_obs: float = Field(0.05, gt=0.0)
    prior_std: float = Field(1.0, gt=0.0)
    quantum_only: bool = False
    train_noise: bool = False


class NoiseSection(_Strict):
    p_bitflip: float = Field(0.0, ge=0.0, le=1.0)
    p_phaseflip: float = Field(0.0, ge=0.0, le=1.0)
    p_depolarizing: float = Field(0.0, ge=0.0, le=1.0)

    def spec(self) -> NoiseSpec:
        return NoiseSpec(self.p_bitflip, self.p_phaseflip, self.p_depolarizing)


class MetricsSection(_Strict):
    gamma: float = Field(1.0, gt=0.0, le=1.0)
    draws: int = Field(100, ge=1)
    delta: float = Field(0.05, gt=0.0, lt=1.0)
    classical_bound: float = Field(1.0, gt=0.0)
    quantum_only: bool = False


class SweepSection(_Strict):
    channels: list[Literal["bitflip", "phaseflip", "depolarizing"]] = Field(
        default_factory=lambda: ["bitflip", "phaseflip", "depolarizing"], min_length=1
    )
    grid: list[float] = Field(default_factory=lambda: [0.0, 0.05, 0.1], min_length=1)

    @model_validator(mode="after")
    def _check(self):
        if any(not 0.0 <= p <= 1.0 for p in self.grid):
            raise ValueError("every p in grid must lie in [0, 1]")
        return self


class ExperimentConfig(_Strict):
    name: str = "experiment"
    case: str = "ieee6"
    seed: int = Field(0, ge=0, lt=2**64)
    out: str = "runs/experiment"
    scenario: ScenarioSection = ScenarioSection()
    split: SplitSection = SplitSection()
    model: ModelSection = ModelSection()
    trainer: TrainerSection = TrainerSection()
    noise: NoiseSection | None = None
    metrics: MetricsSection = MetricsSection()
    sweep: SweepSection = SweepSection()

    @model_validator(mode="after")
    def _case_exists(self):
        if self.case not in PRESET_CASES and not Path(self.case).is_file():
            raise ValueError(f"case {self.case!r} is neither a preset {PRESET_CASES} nor an existing file")
        return self

    @property
    def scenario_seed(self) -> int:
        return self.seed if self.scenario.seed is None else self.scenario.seed

    def scenario_config(self) -> ScenarioConfig:
        s = self.scenario
        return ScenarioConfig(
            penetration=s.penetration,
            load_scale_range=s.load_scale_range,
            pv_beta=s.pv_beta,
            wind_weibull=s.wind_weibull,
            seed=self.scenario_seed,
            count=s.count,
        )

    def noise_spec(self) -> NoiseSpec | None:
        return None if self.noise is None else self.noise.spec()

    def canonical_json(self) -> str:
        return json.dumps(self.model_dump(mode="json"), sort_keys=True, separators=(",", ":"))


def _format_errors(exc: PydanticValidationError, source: str) -> str:
    lines = [f"invalid configuration in {source}:"]
    for err in exc.errors():
        path = ".".join(str(p) for p in err["loc"]) or "<root>"
        lines.append(f"  {path}: {err['msg']}")
    return "\n".join(lines)


def parse_config(doc: dict, source: str = "<config>") -> ExperimentConfig:
    """Validate a config document; failures list every offending field path."""
    if not isinstance(doc, dict):
        raise ValidationError(f"{source}: top level must be a JSON object")
    try:
        return ExperimentConfig.model_validate(doc)
    except PydanticValidationError as exc:
        raise ValidationError(_format_errors(exc, source)) from None


def load_config(path_or_preset: str) -> ExperimentConfig:
    """Load a config file, or a shipped preset by name (``1a`` ... ``3c``)."""
    if path_or_preset in PRESETS:
        text = resources.files("bqnnpf.presets").joinpath(f"{path_or_preset}.json").read_text()
        source = f"preset {path_or_preset}"
    else:
        p = Path(path_or_preset)
        if not p.is_file():
            raise ValidationError(f"config file {p} does not exist")
        text = p.read_text()
        source = str(p)
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ValidationError(f"{source}: malformed JSON at line {exc.lineno}, column {exc.colno}: {exc.msg}") from None
    return parse_config(doc, source)


def with_overrides(cfg: ExperimentConfig, changes: dict) -> ExperimentConfig:
    """Copy of ``cfg`` with dotted-path overrides such as ``{"trainer.epochs": 5}``, revalidated."""
    doc = cfg.model_dump(mode="json")
    for key, value in changes.items():
        node = doc
        parts = key.split(".")
        for p in parts[:-1]:
            if node.get(p) is None:
                node[p] = {}
            node = node[p]
        node[parts[-1]] = value
    return parse_config(doc, "overrides")
