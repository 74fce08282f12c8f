"""
Tests for sampler.py: token sampling and the guided sampling loop.
"""

import logging

import numpy as np
import pytest

from conftest import random_logits
from swar_guidance.exceptions import (
    ConfigValidationError,
    OracleError,
    ScheduleMismatchError,
    UnknownClassError,
)
from swar_guidance.guidance import GuidanceScheme, SchemeKind
from swar_guidance.metrics import score_run, sign_test
from swar_guidance.oracles import SceneOracle, SceneOracleConfig
from swar_guidance.sampler import SamplerConfig, run_sampling, sample_step
from swar_guidance.tensors import LogitTensor, ScaleSchedule, ScheduleKind, VocabSpec
from swar_guidance.utils import derive_seed


def _sampler(small_scene_config, kind=SchemeKind.CFG, weight=1.0, **kwargs):
    schedule = small_scene_config.schedule.model_copy(update={"weight": weight})
    return SamplerConfig(scheme=GuidanceScheme(kind=kind), schedule=schedule, **kwargs)


def test_low_temperature_is_argmax(rng):
    logits = random_logits(rng, 4, 4, 10)
    cfg = SamplerConfig(temperature=1e-9)
    tokens = sample_step(logits, cfg, np.random.default_rng(0))
    assert np.array_equal(tokens.tokens.reshape(-1), logits.values.argmax(axis=1))


@pytest.mark.parametrize("temperature", [0.1, 1.0, 50.0])
def test_top_1_is_argmax(rng, temperature):
    logits = random_logits(rng, 3, 5, 7)
    cfg = SamplerConfig(temperature=temperature, top_k=1)
    tokens = sample_step(logits, cfg, np.random.default_rng(9))
    assert np.array_equal(tokens.tokens.reshape(-1), logits.values.argmax(axis=1))


def test_top_k_restricts_support(rng):
    logits = random_logits(rng, 16, 16, 8)
    cfg = SamplerConfig(temperature=5.0, top_k=2)
    tokens = sample_step(logits, cfg, np.random.default_rng(1)).tokens.reshape(-1)
    top2 = np.argsort(logits.values, axis=1)[:, -2:]
    assert all(t in row for t, row in zip(tokens, top2))


def test_top_k_with_tied_logits_keeps_k_ids():
    values = np.tile([1.0, 1.0, 1.0, 0.0], (400, 1))
    logits = LogitTensor.from_array(values, 20, 20, VocabSpec(size=4))
    cfg = SamplerConfig(temperature=1.0, top_k=2)
    tokens = sample_step(logits, cfg, np.random.default_rng(3)).tokens.reshape(-1)
    assert 3 not in tokens
    assert len(np.unique(tokens)) <= 2


def test_top_k_larger_than_vocab(rng):
    with pytest.raises(ConfigValidationError):
        sample_step(random_logits(rng, 2, 2, 4), SamplerConfig(top_k=5), np.random.default_rng(0))


def test_sampling_follows_softmax():
    values = np.tile([0.0, np.log(3.0)], (10000, 1))
    logits = LogitTensor.from_array(values, 100, 100, VocabSpec(size=2))
    tokens = sample_step(logits, SamplerConfig(), np.random.default_rng(5)).tokens
    assert tokens.mean() == pytest.approx(0.75, abs=0.03)


def test_sampling_is_deterministic_given_rng(rng):
    logits = random_logits(rng, 4, 4, 6)
    a = sample_step(logits, SamplerConfig(), np.random.default_rng(11))
    b = sample_step(logits, SamplerConfig(), np.random.default_rng(11))
    assert np.array_equal(a.tokens, b.tokens)


def test_run_records_every_step(small_scene, small_scene_config):
    run = run_sampling(small_scene, _sampler(small_scene_config, seed=3), 0)
    assert len(run.entries) == 3
    assert run.entries[0].evenness is None
    assert all(e.evenness is not None for e in run.entries[1:])
    assert run.aggregate.evenness is not None
    assert run.aggregate.divergence is None
    assert [e.gamma for e in run.entries] == [1.0, 1.5, 2.0]
    assert run.seed == 3 and run.condition_id == 0


def test_recorded_field_is_applied_nudge(small_scene, small_scene_config):
    run = run_sampling(small_scene, _sampler(small_scene_config, kind=SchemeKind.NONE), 0)
    k = 2
    expected = small_scene.next_logits(k, [], 0).values - small_scene.next_logits(k, [], None).values
    assert np.array_equal(run.entries[k].guidance_field.values, expected)


def test_cfg_weight_zero_matches_no_guidance(small_scene, small_scene_config):
    for seed in range(5):
        none = run_sampling(small_scene, _sampler(small_scene_config, SchemeKind.NONE, seed=seed), 0)
        cfg = run_sampling(
            small_scene, _sampler(small_scene_config, SchemeKind.CFG, weight=0.0, seed=seed), 0
        )
        for a, b in zip(none.entries, cfg.entries):
            assert np.array_equal(a.token_map.tokens, b.token_map.tokens)


def test_fixed_unit_scale_is_conditional_sampling(small_scene, small_scene_config):
    schedule = small_scene_config.schedule.model_copy(
        update={"weight": 0.0, "kind": ScheduleKind.FIXED}
    )
    guided = SamplerConfig(scheme=GuidanceScheme(kind=SchemeKind.CFG), schedule=schedule, seed=4)
    plain = guided.model_copy(update={"scheme": GuidanceScheme(kind=SchemeKind.NONE)})
    a, b = run_sampling(small_scene, guided, 0), run_sampling(small_scene, plain, 0)
    assert all(
        np.array_equal(x.token_map.tokens, y.token_map.tokens) for x, y in zip(a.entries, b.entries)
    )


def test_run_is_byte_deterministic(small_scene, small_scene_config):
    cfg = _sampler(small_scene_config, SchemeKind.IGG, seed=21)
    assert run_sampling(small_scene, cfg, 0).to_bytes() == run_sampling(small_scene, cfg, 0).to_bytes()


def test_schedule_mismatch(small_scene, small_scene_config):
    cfg = SamplerConfig(schedule=ScaleSchedule.from_sides((1, 2)))
    with pytest.raises(ScheduleMismatchError):
        run_sampling(small_scene, cfg, 0)


def test_unknown_class_propagates(small_scene, small_scene_config):
    with pytest.raises(UnknownClassError):
        run_sampling(small_scene, _sampler(small_scene_config), 9)


class _BrokenOracle:
    vocab = VocabSpec(size=4)
    steps = ((1, 1), (2, 2))

    def next_logits(self, k, history, condition):
        raise RuntimeError("model server went away")


def test_oracle_failure_is_wrapped():
    cfg = SamplerConfig(schedule=ScaleSchedule.from_sides((1, 2)))
    with pytest.raises(OracleError) as excinfo:
        run_sampling(_BrokenOracle(), cfg, 0)
    assert "model server went away" in str(excinfo.value)


def test_zero_contrast_skips_evenness(small_scene_config, caplog):
    flat = SceneOracle(small_scene_config.model_copy(update={"contrast": 0.0}))
    with caplog.at_level(logging.WARNING, logger="swar_guidance"):
        run = run_sampling(flat, _sampler(small_scene_config), 0)
    assert all(e.evenness is None for e in run.entries)
    assert run.aggregate.evenness is None
    assert "all zero" in caplog.text


def test_attention_guidance_concentrates_on_foreground():
    """Over 50 seeds the attention scheme is less even and more divergent than CFG."""
    scene = SceneOracleConfig()
    oracle = SceneOracle(scene)
    mask = oracle.mask(0)
    schedule = scene.schedule.model_copy(update={"weight": 1.85})
    scores = {}
    for kind in (SchemeKind.CFG, SchemeKind.IGG):
        cfg = SamplerConfig(scheme=GuidanceScheme(kind=kind), schedule=schedule)
        runs = [
            score_run(
                run_sampling(oracle, cfg.model_copy(update={"seed": s}), 0),
                mask,
                derive_seed(s, "divergence"),
            )
            for s in range(50)
        ]
        scores[kind] = (
            [r.aggregate.evenness for r in runs],
            [r.aggregate.divergence for r in runs],
        )
    cfg_evn, cfg_div = scores[SchemeKind.CFG]
    igg_evn, igg_div = scores[SchemeKind.IGG]
    assert np.mean(igg_evn) < np.mean(cfg_evn)
    assert np.mean(igg_div) > np.mean(cfg_div)
    assert sign_test(cfg_evn, igg_evn)[2] < 0.05
    assert sign_test(igg_div, cfg_div)[2] < 0.05
