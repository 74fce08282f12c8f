"""
Model oracles: sources of per-step conditional and unconditional logits.

SceneOracle  deterministic synthetic scene. Each class owns a block of token ids
             and a foreground shape; the conditional logits lift the class block
             inside the shape, the unconditional logits see the class average
             (an empty scene counting as one more class), blurred.
ReplayOracle serves logits recorded in a logit dump (see formats.py).

Both ignore the token history; it is accepted so a real autoregressive model
can sit behind the same interface.
"""

from __future__ import annotations

import logging
from enum import Enum
from pathlib import Path
from typing import Optional, Protocol, Sequence, runtime_checkable

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, model_validator
from scipy.ndimage import gaussian_filter

from .exceptions import (
    ConfigValidationError,
    InvalidDimensionsError,
    ScheduleMismatchError,
    UnknownClassError,
)
from .formats import DumpStep, LogitDump, read_dump
from .tensors import LogitTensor, ScaleSchedule, SegMask, TokenMap, VocabSpec

logger = logging.getLogger(__name__)

_BASE_STREAM = 0


@runtime_checkable
class ModelOracle(Protocol):
    """Anything that can serve logits for step k of a fixed grid schedule."""

    @property
    def vocab(self) -> VocabSpec: ...

    @property
    def steps(self) -> tuple[tuple[int, int], ...]: ...

    def next_logits(
        self, k: int, history: Sequence[TokenMap], condition: Optional[int]
    ) -> LogitTensor: ...


class ShapeKind(str, Enum):
    RECTANGLE = "rectangle"
    DISK = "disk"


class ClassShape(BaseModel):
    """
    Foreground region of one class in unit coordinates (x right, y down).
    A rectangle spans center +/- (half_width, half_height); a disk uses
    half_width as its radius.
    """

    model_config = ConfigDict(frozen=True)

    kind: ShapeKind = ShapeKind.RECTANGLE
    center_x: float = Field(0.5, ge=0.0, le=1.0)
    center_y: float = Field(0.5, ge=0.0, le=1.0)
    half_width: float = Field(0.25, gt=0.0)
    half_height: float = Field(0.25, gt=0.0)

    def coverage(self, height: int, width: int) -> np.ndarray:
        """Boolean (height, width) map of cells whose centers fall inside the shape."""
        ys = (np.arange(height) + 0.5) / height
        xs = (np.arange(width) + 0.5) / width
        y, x = np.meshgrid(ys, xs, indexing="ij")
        dx, dy = x - self.center_x, y - self.center_y
        if self.kind is ShapeKind.DISK:
            return dx * dx + dy * dy <= self.half_width**2
        return (np.abs(dx) <= self.half_width) & (np.abs(dy) <= self.half_height)


DEFAULT_CLASSES = (
    ClassShape(kind=ShapeKind.RECTANGLE, center_x=0.3, center_y=0.35, half_width=0.2, half_height=0.25),
    ClassShape(kind=ShapeKind.DISK, center_x=0.65, center_y=0.6, half_width=0.28, half_height=0.28),
    ClassShape(kind=ShapeKind.RECTANGLE, center_x=0.7, center_y=0.3, half_width=0.22, half_height=0.18),
    ClassShape(kind=ShapeKind.DISK, center_x=0.35, center_y=0.7, half_width=0.25, half_height=0.25),
)


class SceneOracleConfig(BaseModel):
    """
    contrast    logit lift of the class block inside its foreground
    detail      per-entry noise of the class pattern, relative to contrast
    texture     amplitude of the noise shared by both branches
    smoothness  blur of the unconditional pattern, as a fraction of the grid side
    """

    model_config = ConfigDict(frozen=True)

    vocab: VocabSpec = VocabSpec(size=64)
    schedule: ScaleSchedule = ScaleSchedule.from_sides()
    classes: tuple[ClassShape, ...] = DEFAULT_CLASSES
    contrast: float = Field(3.0, ge=0.0)
    detail: float = Field(0.05, ge=0.0)
    texture: float = Field(1.0, ge=0.0)
    smoothness: float = Field(0.5, ge=0.0)
    seed: int = Field(0, ge=0)

    @model_validator(mode="after")
    def check_scene(self):
        if not self.classes:
            raise ConfigValidationError("Scene needs at least one class")
        if len(self.classes) > self.vocab.size:
            raise ConfigValidationError(
                f"{len(self.classes)} classes do not fit a vocabulary of {self.vocab.size}"
            )
        for c, shape in enumerate(self.classes):
            for h, w in self.schedule.steps:
                if h * w < 4 or min(h, w) < 2:
                    continue
                inside = shape.coverage(h, w)
                if not inside.any() or inside.all():
                    raise ConfigValidationError(
                        f"Class {c} foreground is empty or covers the whole {h}x{w} grid"
                    )
        return self

    @property
    def block_size(self) -> int:
        """Token ids per class; blocks occupy the lower half of the vocabulary."""
        return max(1, self.vocab.size // (2 * len(self.classes)))


def _noise(cfg: SceneOracleConfig, k: int, stream: int, shape) -> np.ndarray:
    rng = np.random.default_rng([cfg.seed, k, stream])
    return rng.standard_normal(shape)


def _class_pattern(cfg: SceneOracleConfig, k: int, c: int) -> np.ndarray:
    h, w = cfg.schedule.steps[k]
    n, v = h * w, cfg.vocab.size
    pattern = cfg.detail * _noise(cfg, k, c + 1, (n, v))
    b = cfg.block_size
    inside = cfg.classes[c].coverage(h, w).reshape(n, 1)
    pattern[:, c * b : (c + 1) * b] += inside
    return cfg.contrast * pattern


def _smooth(pattern: np.ndarray, cfg: SceneOracleConfig, h: int, w: int) -> np.ndarray:
    if cfg.smoothness == 0.0:
        return pattern
    sigma = cfg.smoothness * max(h, w)
    grid = pattern.reshape(h, w, -1)
    return gaussian_filter(grid, sigma=(sigma, sigma, 0.0), mode="nearest").reshape(
        h * w, -1
    )


def _quantize(values: np.ndarray) -> np.ndarray:
    # dumps store f32; keep live logits on the same grid of values
    return values.astype(np.float32).astype(np.float64)


def scene_logits(
    cfg: SceneOracleConfig, k: int, condition: Optional[int]
) -> LogitTensor:
    """Logits of step k; condition None gives the unconditional branch."""
    if not 0 <= k < cfg.schedule.K:
        raise InvalidDimensionsError(
            f"Step {k} outside a {cfg.schedule.K}-step schedule", operand="k"
        )
    if condition is not None and not 0 <= condition < len(cfg.classes):
        raise UnknownClassError(condition, len(cfg.classes))
    h, w = cfg.schedule.steps[k]
    n, v = h * w, cfg.vocab.size
    values = cfg.texture * _noise(cfg, k, _BASE_STREAM, (n, v))
    if condition is None:
        average = sum(_class_pattern(cfg, k, c) for c in range(len(cfg.classes)))
        # an empty scene counts as one more class
        values = values + _smooth(average / (len(cfg.classes) + 1), cfg, h, w)
    else:
        values = values + _class_pattern(cfg, k, condition)
    return LogitTensor.from_array(_quantize(values), h, w, cfg.vocab)


def scene_mask(cfg: SceneOracleConfig, condition: int) -> SegMask:
    """Planted foreground of `condition` at the final resolution."""
    if not 0 <= condition < len(cfg.classes):
        raise UnknownClassError(condition, len(cfg.classes))
    h, w = cfg.schedule.final_size
    return SegMask.from_bits(cfg.classes[condition].coverage(h, w))


class SceneOracle:
    """Stateless wrapper over scene_logits; safe to share between threads."""

    def __init__(self, cfg: SceneOracleConfig):
        self.cfg = cfg

    @property
    def vocab(self) -> VocabSpec:
        return self.cfg.vocab

    @property
    def steps(self) -> tuple[tuple[int, int], ...]:
        return self.cfg.schedule.steps

    def next_logits(
        self, k: int, history: Sequence[TokenMap], condition: Optional[int]
    ) -> LogitTensor:
        return scene_logits(self.cfg, k, condition)

    def mask(self, condition: int) -> SegMask:
        return scene_mask(self.cfg, condition)


class ReplayOracle:
    """Serves the pre-rolled logits of a dump; every condition id maps to the stored branch."""

    def __init__(self, dump: LogitDump):
        self.dump = dump

    @property
    def vocab(self) -> VocabSpec:
        return self.dump.vocab

    @property
    def steps(self) -> tuple[tuple[int, int], ...]:
        return tuple((s.height, s.width) for s in self.dump.steps)

    def next_logits(
        self, k: int, history: Sequence[TokenMap], condition: Optional[int]
    ) -> LogitTensor:
        if not 0 <= k < len(self.dump.steps):
            raise ScheduleMismatchError(
                f"Dump holds {len(self.dump.steps)} steps, step {k} requested"
            )
        step = self.dump.steps[k]
        return step.uncond if condition is None else step.cond


def replay_oracle(path: str | Path) -> ReplayOracle:
    oracle = ReplayOracle(read_dump(path))
    logger.info(
        "Loaded dump %s: |V|=%d, %d steps", path, oracle.vocab.size, len(oracle.steps)
    )
    return oracle


def record_dump(oracle: ModelOracle, condition: int) -> LogitDump:
    """Roll out both branches of `oracle` for every step into a dump."""
    steps = []
    for k, (h, w) in enumerate(oracle.steps):
        steps.append(
            DumpStep(
                height=h,
                width=w,
                cond=oracle.next_logits(k, [], condition),
                uncond=oracle.next_logits(k, [], None),
            )
        )
    return LogitDump(vocab=oracle.vocab, steps=tuple(steps))
