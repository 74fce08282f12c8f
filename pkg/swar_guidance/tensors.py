"""
Shared numerical value types: vocabularies, scale schedules, logit tensors,
guidance fields, token maps, segmentation masks and run records.

All types are frozen pydantic models; array payloads are numpy arrays marked
read-only after validation, so instances can be shared between threads.
Grids are flattened row-major everywhere (left-to-right, top-to-bottom), and a
tensor's values have shape (height * width, vocab.size).
"""

from __future__ import annotations

from enum import Enum
from typing import Annotated, Any, Optional

import numpy as np
from pydantic import (
    BaseModel,
    BeforeValidator,
    ConfigDict,
    Field,
    PlainSerializer,
    PositiveInt,
    field_validator,
    model_validator,
)

from .exceptions import (
    ConfigValidationError,
    InvalidDimensionsError,
    NonFiniteValueError,
    ShapeMismatchError,
)

DEFAULT_SIDES = (1, 2, 4, 6, 8, 12)
MAX_SEED = 2**64 - 1


def _frozen(array: np.ndarray) -> np.ndarray:
    array.setflags(write=False)
    return array


def _as_float_array(value: Any) -> np.ndarray:
    return _frozen(np.array(value, dtype=np.float64))


def _as_int_array(value: Any) -> np.ndarray:
    return _frozen(np.array(value, dtype=np.int64))


def _as_bool_array(value: Any) -> np.ndarray:
    return _frozen(np.array(value, dtype=bool))


def _to_list(array: np.ndarray) -> list:
    return array.tolist()


FloatArray = Annotated[
    np.ndarray,
    BeforeValidator(_as_float_array),
    PlainSerializer(_to_list, when_used="json"),
]
IntArray = Annotated[
    np.ndarray,
    BeforeValidator(_as_int_array),
    PlainSerializer(_to_list, when_used="json"),
]
BoolArray = Annotated[
    np.ndarray,
    BeforeValidator(_as_bool_array),
    PlainSerializer(_to_list, when_used="json"),
]

_ARRAY_MODEL = ConfigDict(frozen=True, arbitrary_types_allowed=True)


class VocabSpec(BaseModel):
    """Token vocabulary; only its size matters (token ids are opaque)."""

    model_config = ConfigDict(frozen=True)

    size: int = Field(..., ge=2, description="Number of discrete tokens |V|")


class ScheduleKind(str, Enum):
    RATIO = "ratio"
    FIXED = "fixed"


class ScaleSchedule(BaseModel):
    """
    Grid sizes per step plus the guidance weights that define gamma_k.

    ratio: lambda_k = w * k / (K - 1), k = 0..K-1, so lambda_0 = 0, lambda_{K-1} = w.
    fixed: lambda_k = w for every k.
    gamma_k = 1 + lambda_k in both cases. The secondary (mixed-scheme) scale
    gamma'_k follows the same shape without the +1, so w' = 0 turns it off.
    """

    model_config = ConfigDict(frozen=True)

    steps: tuple[tuple[PositiveInt, PositiveInt], ...]
    weight: float = 0.0
    secondary_weight: Optional[float] = None
    kind: ScheduleKind = ScheduleKind.RATIO

    @field_validator("steps")
    @classmethod
    def check_steps(cls, steps: tuple) -> tuple:
        if not steps:
            raise ConfigValidationError("Schedule needs at least one step")
        areas = [h * w for h, w in steps]
        if any(b < a for a, b in zip(areas, areas[1:])):
            raise ConfigValidationError(
                f"Schedule resolutions must be non-decreasing, got {list(steps)}"
            )
        return steps

    @classmethod
    def from_sides(cls, sides=DEFAULT_SIDES, **kwargs) -> "ScaleSchedule":
        return cls(steps=tuple((s, s) for s in sides), **kwargs)

    @property
    def K(self) -> int:
        return len(self.steps)

    @property
    def final_size(self) -> tuple[int, int]:
        return self.steps[-1]

    def _ramp(self, weight: float) -> np.ndarray:
        if self.kind is ScheduleKind.FIXED:
            return np.full(self.K, weight, dtype=np.float64)
        if self.K == 1:
            return np.array([weight], dtype=np.float64)
        # weight * (k / (K-1)) keeps both endpoints exact
        return np.array(
            [weight * (k / (self.K - 1)) for k in range(self.K)], dtype=np.float64
        )

    def lambdas(self) -> np.ndarray:
        return self._ramp(self.weight)

    def gammas(self) -> np.ndarray:
        return 1.0 + self.lambdas()

    def secondary_gammas(self) -> np.ndarray:
        return self._ramp(self.secondary_weight or 0.0)


class _GridTensor(BaseModel):
    model_config = _ARRAY_MODEL

    height: PositiveInt
    width: PositiveInt
    vocab: VocabSpec
    values: FloatArray

    @model_validator(mode="after")
    def check_values(self):
        expected = (self.height * self.width, self.vocab.size)
        if self.values.shape != expected:
            raise ShapeMismatchError(
                f"{type(self).__name__} values have shape {self.values.shape}, "
                f"expected {expected}",
                operand="values",
            )
        if not np.isfinite(self.values).all():
            raise NonFiniteValueError(
                f"{type(self).__name__} contains non-finite values", operand="values"
            )
        return self

    @property
    def n(self) -> int:
        return self.height * self.width

    @property
    def shape(self) -> tuple[int, int, int]:
        return (self.height, self.width, self.vocab.size)

    def grid(self) -> np.ndarray:
        """Values viewed as (height, width, |V|)."""
        return self.values.reshape(self.shape)


class LogitTensor(_GridTensor):
    """Raw per-token logits over the vocabulary at one scale."""

    @classmethod
    def from_array(cls, values, height: int, width: int, vocab: VocabSpec):
        return cls(height=height, width=width, vocab=vocab, values=values)


class GuidanceField(_GridTensor):
    """Signed nudge applied to the unconditional logits at one scale."""

    @classmethod
    def from_array(cls, values, height: int, width: int, vocab: VocabSpec):
        return cls(height=height, width=width, vocab=vocab, values=values)


class TokenMap(BaseModel):
    model_config = _ARRAY_MODEL

    height: PositiveInt
    width: PositiveInt
    vocab: VocabSpec
    tokens: IntArray

    @model_validator(mode="after")
    def check_tokens(self):
        if self.tokens.shape != (self.height, self.width):
            raise ShapeMismatchError(
                f"Token grid has shape {self.tokens.shape}, "
                f"expected {(self.height, self.width)}",
                operand="tokens",
            )
        if self.tokens.size and (
            self.tokens.min() < 0 or self.tokens.max() >= self.vocab.size
        ):
            raise InvalidDimensionsError(
                f"Token ids must lie in [0, {self.vocab.size})", operand="tokens"
            )
        return self


class SegMask(BaseModel):
    """Binary foreground mask; True marks semantically important pixels."""

    model_config = _ARRAY_MODEL

    height: PositiveInt
    width: PositiveInt
    bits: BoolArray

    @model_validator(mode="after")
    def check_bits(self):
        if self.bits.shape != (self.height, self.width):
            raise ShapeMismatchError(
                f"Mask has shape {self.bits.shape}, expected {(self.height, self.width)}",
                operand="bits",
            )
        return self

    @classmethod
    def from_bits(cls, bits) -> "SegMask":
        bits = np.asarray(bits, dtype=bool)
        return cls(height=bits.shape[0], width=bits.shape[1], bits=bits)

    @property
    def foreground(self) -> int:
        return int(self.bits.sum())

    @property
    def background(self) -> int:
        return int(self.bits.size - self.bits.sum())


class StepEntry(BaseModel):
    model_config = _ARRAY_MODEL

    step: int = Field(..., ge=0)
    token_map: TokenMap
    guidance_field: GuidanceField
    gamma: float = 1.0
    evenness: Optional[float] = Field(None, ge=0.0, le=1.0)
    divergence: Optional[float] = Field(None, ge=0.0, le=1.0)


class Aggregate(BaseModel):
    model_config = ConfigDict(frozen=True)

    evenness: Optional[float] = Field(None, ge=0.0, le=1.0)
    divergence: Optional[float] = Field(None, ge=0.0, le=1.0)


class RunRecord(BaseModel):
    """Everything one sampling run produced, step by step."""

    model_config = _ARRAY_MODEL

    schedule: ScaleSchedule
    scheme: str
    condition_id: int
    seed: int = Field(..., ge=0, le=MAX_SEED)
    entries: tuple[StepEntry, ...]
    aggregate: Aggregate = Aggregate()

    @model_validator(mode="after")
    def check_entries(self):
        if len(self.entries) != self.schedule.K:
            raise ShapeMismatchError(
                f"Run has {len(self.entries)} entries for a {self.schedule.K}-step schedule",
                operand="entries",
            )
        for k, (entry, (h, w)) in enumerate(zip(self.entries, self.schedule.steps)):
            field = entry.guidance_field
            if entry.step != k or (field.height, field.width) != (h, w):
                raise ShapeMismatchError(
                    f"Entry {k} does not match schedule step {(h, w)}",
                    operand="entries",
                )
        return self

    def to_bytes(self) -> bytes:
        return self.model_dump_json().encode("utf-8")

    @classmethod
    def from_bytes(cls, data: bytes) -> "RunRecord":
        return cls.model_validate_json(data)


def validate_pair(uncond: LogitTensor, cond: LogitTensor) -> None:
    """
    Check that an (unconditional, conditional) pair can be combined.
    Raises ShapeMismatchError or NonFiniteValueError naming the offending tensor.
    """
    for name, tensor in (("uncond", uncond), ("cond", cond)):
        values = np.asarray(tensor.values)
        if values.shape != (tensor.height * tensor.width, tensor.vocab.size):
            raise ShapeMismatchError(
                f"{name} values have shape {values.shape}", operand=name
            )
        if not np.isfinite(values).all():
            raise NonFiniteValueError(f"{name} contains non-finite values", operand=name)
    if uncond.shape != cond.shape:
        raise ShapeMismatchError(
            f"uncond shape {uncond.shape} does not match cond shape {cond.shape}",
            operand="cond",
        )
