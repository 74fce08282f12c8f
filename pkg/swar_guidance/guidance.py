"""
Guidance schemes over raw logits.

cfg          (1 + lambda) * cond - lambda * uncond
igg          uncond + A @ F, F = gamma * (cond - uncond), A = softmax(F F^T / sqrt|V|) row-wise
igg_windowed as igg, attention restricted to a Chebyshev neighbourhood on the grid
mixed        uncond + gamma * F1 + A(gamma' F1) @ (gamma' F1), F1 = cond - uncond

Every function is pure; tensors are flattened row-major, so grid position
(r, c) is row r * width + c of a values matrix.
"""

from __future__ import annotations

import math
from enum import Enum
from typing import Callable, Optional, Union

import numpy as np
from pydantic import BaseModel, ConfigDict, PositiveInt, model_validator
from scipy.special import softmax

from .exceptions import (
    ConfigValidationError,
    NonFiniteValueError,
    ShapeMismatchError,
    TensorError,
)
from .tensors import (
    FloatArray,
    GuidanceField,
    LogitTensor,
    VocabSpec,
    validate_pair,
)

ROW_SUM_TOLERANCE = 1e-9

WindowRule = Union[int, Callable[[int, int], int]]


class SchemeKind(str, Enum):
    NONE = "none"
    CFG = "cfg"
    IGG = "igg"
    MIXED = "mixed"
    IGG_WINDOWED = "igg_windowed"

    @classmethod
    def parse(cls, name: str) -> "SchemeKind":
        """Accept CLI spellings such as 'igg-window'."""
        aliases = {"igg-window": cls.IGG_WINDOWED, "igg_window": cls.IGG_WINDOWED}
        key = name.strip().lower()
        if key in aliases:
            return aliases[key]
        try:
            return cls(key)
        except ValueError as e:
            choices = ", ".join(k.value for k in cls)
            raise ConfigValidationError(
                f"Unknown scheme '{name}' (choose from {choices}, igg-window)"
            ) from e


def sqrt_area_window(height: int, width: int) -> int:
    """Default window side: round(sqrt(h * w)), at least 1."""
    return max(1, int(round(math.sqrt(height * width))))


class GuidanceScheme(BaseModel):
    """Which scheme to apply; `window` fixes the sliding-window side when set."""

    model_config = ConfigDict(frozen=True)

    kind: SchemeKind = SchemeKind.CFG
    window: Optional[PositiveInt] = None

    def window_size(self, height: int, width: int) -> int:
        if self.window is not None:
            return self.window
        return sqrt_area_window(height, width)


class AttentionMatrix(BaseModel):
    """Row-stochastic n x n weights; row i is how position i attends to every position."""

    model_config = ConfigDict(frozen=True, arbitrary_types_allowed=True)

    n: PositiveInt
    values: FloatArray

    @model_validator(mode="after")
    def check_rows(self):
        if self.values.shape != (self.n, self.n):
            raise ShapeMismatchError(
                f"Attention has shape {self.values.shape}, expected {(self.n, self.n)}",
                operand="attention",
            )
        if (self.values < 0).any() or (self.values > 1).any():
            raise TensorError(
                "Attention entries must lie in [0, 1]", operand="attention"
            )
        sums = self.values.sum(axis=1)
        if np.abs(sums - 1.0).max() > ROW_SUM_TOLERANCE:
            raise TensorError(
                "Attention rows must sum to 1", operand="attention"
            )
        return self

    @classmethod
    def identity(cls, n: int) -> "AttentionMatrix":
        return cls(n=n, values=np.eye(n))


def nudge(uncond: LogitTensor, cond: LogitTensor, gamma_k: float) -> GuidanceField:
    """gamma_k * (cond - uncond), the amount CFG moves the unconditional logits."""
    validate_pair(uncond, cond)
    values = gamma_k * (cond.values - uncond.values)
    return GuidanceField.from_array(values, uncond.height, uncond.width, uncond.vocab)


def cfg_guide(uncond: LogitTensor, cond: LogitTensor, lambda_k: float) -> LogitTensor:
    validate_pair(uncond, cond)
    values = (1.0 + lambda_k) * cond.values - lambda_k * uncond.values
    return LogitTensor.from_array(values, cond.height, cond.width, cond.vocab)


def window_mask(height: int, width: int, window: int) -> Optional[np.ndarray]:
    """
    Boolean n x n mask of position pairs within Chebyshev distance window // 2.
    Returns None when the window covers the whole grid.
    """
    if window < 1:
        raise ConfigValidationError(f"Window side must be >= 1, got {window}")
    radius = window // 2
    if radius >= max(height, width) - 1:
        return None
    rows, cols = np.divmod(np.arange(height * width), width)
    dist = np.maximum(
        np.abs(rows[:, None] - rows[None, :]), np.abs(cols[:, None] - cols[None, :])
    )
    return dist <= radius


def attention_weights(
    field: GuidanceField, vocab: VocabSpec, mask: Optional[np.ndarray] = None
) -> AttentionMatrix:
    """
    softmax(G G^T / sqrt|V|) over rows, G the flattened field. Pairs outside
    `mask` score -inf; the diagonal is always inside any window.
    """
    g = field.values
    scores = (g @ g.T) / math.sqrt(vocab.size)
    if not np.isfinite(scores).all():
        raise NonFiniteValueError(
            "Attention scores overflowed; guidance field is too large", operand="field"
        )
    if mask is not None:
        scores = np.where(mask, scores, -np.inf)
    weights = softmax(scores, axis=1)
    return AttentionMatrix(n=field.n, values=weights)


def apply_attention(
    uncond: LogitTensor, field: GuidanceField, attention: AttentionMatrix
) -> LogitTensor:
    """uncond + A @ F."""
    if attention.n != field.n or field.shape != uncond.shape:
        raise ShapeMismatchError(
            f"Attention over {attention.n} positions cannot weight field {field.shape}",
            operand="attention",
        )
    values = uncond.values + attention.values @ field.values
    return LogitTensor.from_array(values, uncond.height, uncond.width, uncond.vocab)


def igg_guide(
    uncond: LogitTensor, cond: LogitTensor, gamma_k: float, vocab: VocabSpec
) -> LogitTensor:
    field = nudge(uncond, cond, gamma_k)
    return apply_attention(uncond, field, attention_weights(field, vocab))


def igg_guide_windowed(
    uncond: LogitTensor,
    cond: LogitTensor,
    gamma_k: float,
    vocab: VocabSpec,
    window_rule: WindowRule = sqrt_area_window,
) -> LogitTensor:
    window = window_rule(uncond.height, uncond.width) if callable(window_rule) else window_rule
    mask = window_mask(uncond.height, uncond.width, int(window))
    field = nudge(uncond, cond, gamma_k)
    return apply_attention(uncond, field, attention_weights(field, vocab, mask))


def mixed_guide(
    uncond: LogitTensor,
    cond: LogitTensor,
    gamma_k: float,
    gamma_k_prime: float,
    vocab: VocabSpec,
) -> LogitTensor:
    """
    uncond + gamma * F1 + A(gamma' F1) @ (gamma' F1) with F1 the unit nudge.
    gamma' = 0 leaves the CFG nudge form; gamma = 0 leaves igg_guide(gamma').
    """
    unit = nudge(uncond, cond, 1.0)
    attended = nudge(uncond, cond, gamma_k_prime)
    attention = attention_weights(attended, vocab)
    values = (uncond.values + gamma_k * unit.values) + attention.values @ attended.values
    return LogitTensor.from_array(values, uncond.height, uncond.width, uncond.vocab)


def guide(
    scheme: GuidanceScheme,
    uncond: LogitTensor,
    cond: LogitTensor,
    lambda_k: float,
    gamma_k_prime: float = 0.0,
) -> LogitTensor:
    """Apply `scheme` at one step; gamma_k = 1 + lambda_k for the attention schemes."""
    vocab = cond.vocab
    gamma_k = 1.0 + lambda_k
    if scheme.kind is SchemeKind.NONE:
        validate_pair(uncond, cond)
        return cond
    if scheme.kind is SchemeKind.CFG:
        return cfg_guide(uncond, cond, lambda_k)
    if scheme.kind is SchemeKind.IGG:
        return igg_guide(uncond, cond, gamma_k, vocab)
    if scheme.kind is SchemeKind.IGG_WINDOWED:
        return igg_guide_windowed(uncond, cond, gamma_k, vocab, scheme.window_size)
    return mixed_guide(uncond, cond, gamma_k, gamma_k_prime, vocab)
