"""
Shared fixtures for the swar_guidance test suite.

A NullHandler on the package logger keeps get_logger()/setup_logging() from
attaching console and rotating-file handlers while tests run.
"""

from __future__ import annotations

import logging

import numpy as np
import pytest

from swar_guidance.oracles import ClassShape, SceneOracle, SceneOracleConfig
from swar_guidance.tensors import (
    GuidanceField,
    LogitTensor,
    RunRecord,
    ScaleSchedule,
    StepEntry,
    TokenMap,
    VocabSpec,
)

logging.getLogger("swar_guidance").addHandler(logging.NullHandler())

LEFT_HALF = ClassShape(
    kind="rectangle", center_x=0.25, center_y=0.5, half_width=0.25, half_height=0.5
)


def random_logits(rng: np.random.Generator, h: int, w: int, v: int) -> LogitTensor:
    return LogitTensor.from_array(rng.standard_normal((h * w, v)), h, w, VocabSpec(size=v))


def make_run(fields: list[np.ndarray], sides, vocab: int = 4, scheme: str = "cfg") -> RunRecord:
    """RunRecord from per-step (n, vocab) field arrays on square grids."""
    schedule = ScaleSchedule.from_sides(sides)
    spec = VocabSpec(size=vocab)
    entries = []
    for k, (values, side) in enumerate(zip(fields, sides)):
        entries.append(
            StepEntry(
                step=k,
                token_map=TokenMap(
                    height=side, width=side, vocab=spec, tokens=np.zeros((side, side))
                ),
                guidance_field=GuidanceField.from_array(values, side, side, spec),
            )
        )
    return RunRecord(
        schedule=schedule, scheme=scheme, condition_id=0, seed=0, entries=tuple(entries)
    )


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture
def small_scene_config():
    """One class on the left half of a 1/2/4 grid, |V| = 16."""
    return SceneOracleConfig(
        vocab=VocabSpec(size=16),
        schedule=ScaleSchedule.from_sides((1, 2, 4), weight=1.0),
        classes=(LEFT_HALF,),
    )


@pytest.fixture
def small_scene(small_scene_config):
    return SceneOracle(small_scene_config)
