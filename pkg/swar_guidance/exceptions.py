"""
Custom exceptions for swar_guidance.

Keep domain-specific exceptions here so test code can assert on them.
None of these subclass ValueError: pydantic only wraps ValueError/AssertionError
raised inside validators, so ours propagate to the caller unchanged.
"""

from __future__ import annotations

from typing import Optional


class GuidanceError(Exception):
    """Base exception for all swar_guidance errors."""

    pass


class ConfigValidationError(GuidanceError):
    """Raised when configuration validation fails."""

    pass


# --- tensors ---------------------------------------------------------------


class TensorError(GuidanceError):
    """Raised when an array operand violates a shape or value invariant."""

    def __init__(self, message: str, operand: str = ""):
        super().__init__(message)
        self.operand = operand


class ShapeMismatchError(TensorError):
    """Two operands that must agree in shape (or vocab size) do not."""

    pass


class NonFiniteValueError(TensorError):
    """An operand contains NaN or +/-Inf."""

    pass


class InvalidDimensionsError(TensorError):
    """Requested grid dimensions are not valid for the operand."""

    pass


class LengthMismatchError(TensorError):
    """Two distributions that must have equal length do not."""

    pass


# --- metrics ---------------------------------------------------------------


class MetricError(GuidanceError):
    """Base class for scoring failures."""

    pass


class AllZeroFieldError(MetricError):
    """The guidance field is zero everywhere, so no distribution exists."""

    pass


class SingleTokenMapError(MetricError):
    """Evenness is undefined for a 1x1 token map."""

    pass


class NoScoredStepsError(MetricError):
    """No step carried a score to aggregate."""

    pass


class DegenerateMaskError(MetricError):
    """The segmentation mask cannot split tokens into foreground and background."""

    pass


class EmptyBackgroundError(DegenerateMaskError):
    """Mask covers everything; there are no unguided tokens to sample."""

    pass


class EmptyForegroundError(DegenerateMaskError):
    """Mask covers nothing; divergence is undefined."""

    pass


# --- oracles ---------------------------------------------------------------


class OracleError(GuidanceError):
    """The model oracle could not serve logits."""

    pass


class UnknownClassError(OracleError):
    """Condition id does not name a configured class."""

    def __init__(self, condition: int, classes: int):
        super().__init__(f"Unknown class {condition}; oracle has {classes} classes")
        self.condition = condition
        self.classes = classes


class ScheduleMismatchError(OracleError):
    """Oracle grid schedule differs from the sampler's schedule."""

    pass


# --- formats ---------------------------------------------------------------


class FormatError(GuidanceError):
    """Raised when a file does not conform to its format."""

    def __init__(self, message: str, offset: Optional[int] = None):
        if offset is not None:
            message = f"{message} (at byte offset {offset})"
        super().__init__(message)
        self.offset = offset


class BadMagicError(FormatError):
    pass


class SizeMismatchError(FormatError):
    """Declared lengths disagree with the actual file size."""

    def __init__(self, expected: int, actual: int, offset: Optional[int] = None):
        super().__init__(
            f"Size mismatch: expected {expected} bytes, found {actual}", offset
        )
        self.expected = expected
        self.actual = actual


class NonFinitePayloadError(FormatError):
    pass


class UnsupportedFormatError(FormatError):
    pass


class MaskDimensionError(FormatError):
    pass
