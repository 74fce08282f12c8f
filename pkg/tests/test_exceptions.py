"""
Tests for exceptions.py using pytest.
Focuses on: the hierarchy, operand/offset attributes and message formats.
"""

import pytest

from swar_guidance.exceptions import (
    AllZeroFieldError,
    BadMagicError,
    ConfigValidationError,
    DegenerateMaskError,
    EmptyBackgroundError,
    EmptyForegroundError,
    FormatError,
    GuidanceError,
    MetricError,
    NonFiniteValueError,
    OracleError,
    ScheduleMismatchError,
    ShapeMismatchError,
    SizeMismatchError,
    TensorError,
    UnknownClassError,
)


def test_guidance_error_is_exception():
    assert issubclass(GuidanceError, Exception)


def test_errors_are_not_value_errors():
    """pydantic would otherwise wrap them into a ValidationError."""
    for cls in (ConfigValidationError, TensorError, MetricError, FormatError):
        assert not issubclass(cls, ValueError)


@pytest.mark.parametrize(
    "child, parent",
    [
        (ConfigValidationError, GuidanceError),
        (ShapeMismatchError, TensorError),
        (NonFiniteValueError, TensorError),
        (AllZeroFieldError, MetricError),
        (EmptyBackgroundError, DegenerateMaskError),
        (EmptyForegroundError, DegenerateMaskError),
        (UnknownClassError, OracleError),
        (ScheduleMismatchError, OracleError),
        (BadMagicError, FormatError),
        (SizeMismatchError, FormatError),
    ],
)
def test_hierarchy(child, parent):
    assert issubclass(child, parent)


def test_tensor_error_names_operand():
    error = NonFiniteValueError("bad values", operand="cond")
    assert error.operand == "cond"
    assert str(error) == "bad values"


def test_format_error_appends_offset():
    error = FormatError("Non-finite value", 24)
    assert error.offset == 24
    assert str(error) == "Non-finite value (at byte offset 24)"


def test_format_error_without_offset():
    error = FormatError("broken")
    assert error.offset is None
    assert str(error) == "broken"


def test_size_mismatch_reports_expected_and_actual():
    error = SizeMismatchError(100, 96, 32)
    assert (error.expected, error.actual, error.offset) == (100, 96, 32)
    assert "expected 100 bytes, found 96" in str(error)


def test_unknown_class_attributes():
    error = UnknownClassError(7, 4)
    assert (error.condition, error.classes) == (7, 4)
    assert "7" in str(error)
