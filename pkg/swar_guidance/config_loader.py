"""
Configuration loader using pydantic v2 for validation.

Two file syntaxes are accepted:
  *.yaml / *.yml   a YAML mapping of the sections below
  anything else    key=value lines; dotted keys address sections
                   (sampler.temperature=0.7) and the flag names work bare
                   (scheme=igg, w=1.85, seeds=10)

Values of key=value lines are typed with yaml.safe_load, so 1.85 is a float
and [1, 2] a list. Command-line flags are applied with apply_overrides().
"""

from __future__ import annotations

from pathlib import Path
from typing import Any, Literal, Mapping, Optional, Union

import yaml
from pydantic import (
    BaseModel,
    ConfigDict,
    Field,
    PositiveInt,
    ValidationError,
    field_validator,
)

from .exceptions import ConfigValidationError
from .guidance import GuidanceScheme, SchemeKind
from .oracles import DEFAULT_CLASSES, ClassShape, SceneOracleConfig
from .sampler import SamplerConfig
from .tensors import DEFAULT_SIDES, ScaleSchedule, ScheduleKind, VocabSpec
from .utils import parse_seeds

# bare key=value names (and CLI flags) -> dotted config keys
FLAT_KEYS = {
    "oracle": "experiment.oracle",
    "dump": "experiment.dump",
    "mask": "experiment.mask",
    "out": "experiment.out",
    "seeds": "experiment.seeds",
    "jobs": "experiment.jobs",
    "condition": "experiment.condition",
    "use_async": "experiment.use_async",
    "scheme": "sampler.scheme",
    "temperature": "sampler.temperature",
    "top_k": "sampler.top_k",
    "window": "sampler.window",
    "w": "schedule.w",
    "w2": "schedule.w2",
    "schedule": "schedule.kind",
    "sides": "schedule.sides",
}


class _Section(BaseModel):
    model_config = ConfigDict(extra="forbid")


class SceneConfig(_Section):
    vocab_size: int = Field(64, ge=2)
    contrast: float = Field(3.0, ge=0.0)
    detail: float = Field(0.05, ge=0.0)
    texture: float = Field(1.0, ge=0.0)
    smoothness: float = Field(0.5, ge=0.0)
    seed: int = Field(0, ge=0)
    classes: list[ClassShape] = list(DEFAULT_CLASSES)


class ScheduleConfig(_Section):
    sides: list[PositiveInt] = list(DEFAULT_SIDES)
    kind: ScheduleKind = ScheduleKind.RATIO
    w: float = 0.0
    w2: Optional[float] = None


class SamplerSettings(_Section):
    scheme: SchemeKind = SchemeKind.CFG
    temperature: float = Field(1.0, gt=0.0)
    top_k: Optional[PositiveInt] = None
    window: Optional[PositiveInt] = None

    @field_validator("scheme", mode="before")
    @classmethod
    def parse_scheme(cls, value: Any) -> Any:
        return SchemeKind.parse(value) if isinstance(value, str) else value


class ExperimentSettings(_Section):
    oracle: Literal["scene", "dump"] = "scene"
    dump: Optional[str] = None
    mask: Optional[str] = None
    out: str = "runs"
    seeds: list[int] = [0]
    jobs: Optional[PositiveInt] = None
    condition: int = Field(0, ge=0)
    use_async: bool = False

    @field_validator("seeds", mode="before")
    @classmethod
    def expand_seeds(cls, value: Union[int, str, list]) -> list[int]:
        return parse_seeds(value)


class LoggingConfig(_Section):
    level: str = "INFO"
    file: Optional[str] = "logs/swar_guidance.log"
    max_bytes: int = 10 * 1024 * 1024
    backup_count: int = 5


class AppConfig(_Section):
    scene: SceneConfig = SceneConfig()
    schedule: ScheduleConfig = ScheduleConfig()
    sampler: SamplerSettings = SamplerSettings()
    experiment: ExperimentSettings = ExperimentSettings()
    logging: LoggingConfig = LoggingConfig()

    def scale_schedule(self) -> ScaleSchedule:
        return ScaleSchedule.from_sides(
            self.schedule.sides,
            weight=self.schedule.w,
            secondary_weight=self.schedule.w2,
            kind=self.schedule.kind,
        )

    def scene_config(self) -> SceneOracleConfig:
        return SceneOracleConfig(
            vocab=VocabSpec(size=self.scene.vocab_size),
            schedule=self.scale_schedule(),
            classes=tuple(self.scene.classes),
            contrast=self.scene.contrast,
            detail=self.scene.detail,
            texture=self.scene.texture,
            smoothness=self.scene.smoothness,
            seed=self.scene.seed,
        )

    def sampler_config(self, schedule: Optional[ScaleSchedule] = None) -> SamplerConfig:
        """`schedule` replaces the configured grid (replayed dumps carry their own)."""
        return SamplerConfig(
            scheme=GuidanceScheme(kind=self.sampler.scheme, window=self.sampler.window),
            schedule=schedule or self.scale_schedule(),
            temperature=self.sampler.temperature,
            top_k=self.sampler.top_k,
        )


def _set_dotted(raw: dict, key: str, value: Any) -> None:
    key = FLAT_KEYS.get(key, key)
    parts = key.split(".")
    node = raw
    for part in parts[:-1]:
        child = node.setdefault(part, {})
        if not isinstance(child, dict):
            raise ConfigValidationError(f"'{part}' is not a section (key {key})")
        node = child
    node[parts[-1]] = value


def parse_key_values(text: str) -> dict:
    raw: dict = {}
    for lineno, line in enumerate(text.splitlines(), start=1):
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        if "=" not in line:
            raise ConfigValidationError(f"Line {lineno}: expected key=value, got '{line}'")
        key, value = (part.strip() for part in line.split("=", 1))
        if not key:
            raise ConfigValidationError(f"Line {lineno}: empty key")
        try:
            typed = yaml.safe_load(value) if value else None
        except yaml.YAMLError as e:
            raise ConfigValidationError(f"Line {lineno}: cannot parse value '{value}'") from e
        _set_dotted(raw, key, typed)
    return raw


def _validate(raw: Any) -> AppConfig:
    if not isinstance(raw, dict):
        raise ConfigValidationError("Configuration must be a mapping")
    try:
        return AppConfig.model_validate(raw)
    except ValidationError as e:
        # Wrap pydantic's validation error for application-level handling
        raise ConfigValidationError(f"Invalid configuration: {e}") from e


def load_config(path: str) -> AppConfig:
    """
    Load a YAML or key=value config from `path` and validate it.
    Raises ConfigValidationError on problems for clear unit testing.
    """
    p = Path(path)
    try:
        content = p.read_text(encoding="utf-8")
    except FileNotFoundError as e:
        raise ConfigValidationError(f"Config file not found: {path}") from e
    if p.suffix.lower() in (".yaml", ".yml"):
        try:
            raw = yaml.safe_load(content) or {}
        except yaml.YAMLError as e:
            raise ConfigValidationError(f"Invalid YAML in {path}: {e}") from e
    else:
        raw = parse_key_values(content)
    return _validate(raw)


def apply_overrides(cfg: AppConfig, overrides: Mapping[str, Any]) -> AppConfig:
    """Return `cfg` with flat or dotted keys replaced; None values are ignored."""
    raw = cfg.model_dump(mode="json")
    for key, value in overrides.items():
        if value is not None:
            _set_dotted(raw, key, value)
    return _validate(raw)
