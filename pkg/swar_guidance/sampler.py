"""
Autoregressive next-scale sampling loop.

At each step k the oracle is asked for conditional and unconditional logits,
the configured guidance scheme combines them, and a token map is drawn from
the guided logits. The nudge actually applied (guided - uncond) is recorded
together with its evenness.
"""

from __future__ import annotations

import logging
from typing import Optional

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, PositiveInt
from scipy.special import softmax

from .exceptions import (
    AllZeroFieldError,
    ConfigValidationError,
    GuidanceError,
    OracleError,
    ScheduleMismatchError,
)
from .guidance import GuidanceScheme, SchemeKind, guide
from .metrics import StepScores, evenness_of, weighted_mean_scores
from .oracles import ModelOracle
from .tensors import (
    MAX_SEED,
    Aggregate,
    GuidanceField,
    LogitTensor,
    RunRecord,
    ScaleSchedule,
    StepEntry,
    TokenMap,
)

logger = logging.getLogger(__name__)

ARGMAX_TEMPERATURE = 1e-6
_GUMBEL_EPS = 1e-10


class SamplerConfig(BaseModel):
    model_config = ConfigDict(frozen=True)

    scheme: GuidanceScheme = GuidanceScheme()
    schedule: ScaleSchedule = ScaleSchedule.from_sides()
    temperature: float = Field(1.0, gt=0.0)
    top_k: Optional[PositiveInt] = None
    seed: int = Field(0, ge=0, le=MAX_SEED)

    def check_vocab(self, vocab_size: int) -> None:
        if self.top_k is not None and self.top_k > vocab_size:
            raise ConfigValidationError(
                f"top_k={self.top_k} exceeds the vocabulary size {vocab_size}"
            )


def sample_step(
    logits: LogitTensor, cfg: SamplerConfig, rng: np.random.Generator
) -> TokenMap:
    """Draw one token per position from softmax(logits / T), optionally top-k restricted."""
    v = logits.vocab.size
    cfg.check_vocab(v)
    values = logits.values
    if cfg.temperature < ARGMAX_TEMPERATURE or cfg.top_k == 1:
        tokens = values.argmax(axis=1)
    else:
        scaled = values / cfg.temperature
        if cfg.top_k is not None and cfg.top_k < v:
            # exactly top_k ids per row, even when logits tie at the cutoff
            top = np.argpartition(-scaled, cfg.top_k - 1, axis=1)[:, : cfg.top_k]
            keep = np.zeros(scaled.shape, dtype=bool)
            np.put_along_axis(keep, top, True, axis=1)
            scaled = np.where(keep, scaled, -np.inf)
        probs = softmax(scaled, axis=1)
        # Gumbel-max: argmax of p / Exp(1) is a categorical draw from p
        noise = rng.exponential(size=probs.shape) + _GUMBEL_EPS
        tokens = (probs / noise).argmax(axis=1)
    return TokenMap(
        height=logits.height,
        width=logits.width,
        vocab=logits.vocab,
        tokens=tokens.reshape(logits.height, logits.width),
    )


def _query(oracle: ModelOracle, k: int, history, condition) -> LogitTensor:
    try:
        return oracle.next_logits(k, history, condition)
    except GuidanceError:
        raise
    except Exception as e:
        raise OracleError(f"Oracle failed at step {k}: {e}") from e


def run_sampling(
    oracle: ModelOracle, cfg: SamplerConfig, condition: int
) -> RunRecord:
    if tuple(oracle.steps) != cfg.schedule.steps:
        raise ScheduleMismatchError(
            f"Oracle steps {list(oracle.steps)} differ from sampler steps "
            f"{list(cfg.schedule.steps)}"
        )
    cfg.check_vocab(oracle.vocab.size)
    rng = np.random.default_rng(cfg.seed)
    lambdas = cfg.schedule.lambdas()
    secondary = cfg.schedule.secondary_gammas()
    guided_scale = cfg.scheme.kind is not SchemeKind.NONE

    history: list[TokenMap] = []
    entries: list[StepEntry] = []
    for k, (h, w) in enumerate(cfg.schedule.steps):
        cond = _query(oracle, k, history, condition)
        uncond = _query(oracle, k, history, None)
        guided = guide(cfg.scheme, uncond, cond, float(lambdas[k]), float(secondary[k]))
        tokens = sample_step(guided, cfg, rng)
        field = GuidanceField.from_array(guided.values - uncond.values, h, w, guided.vocab)

        evenness = None
        if k >= 1 and field.n >= 2:
            try:
                evenness = evenness_of(field)
            except AllZeroFieldError:
                logger.warning("Step %d: guidance field is all zero, evenness skipped", k)
        logger.debug("Step %d (%dx%d): evenness=%s", k, h, w, evenness)

        entries.append(
            StepEntry(
                step=k,
                token_map=tokens,
                guidance_field=field,
                gamma=1.0 + float(lambdas[k]) if guided_scale else 1.0,
                evenness=evenness,
            )
        )
        history.append(tokens)

    scores = [
        StepScores(step=e.step, evenness=e.evenness, weight=e.guidance_field.n)
        for e in entries
        if e.evenness is not None
    ]
    aggregate = Aggregate()
    if scores:
        evenness, _ = weighted_mean_scores(scores)
        aggregate = Aggregate(evenness=evenness)

    return RunRecord(
        schedule=cfg.schedule,
        scheme=cfg.scheme.kind.value,
        condition_id=condition,
        seed=cfg.seed,
        entries=tuple(entries),
        aggregate=aggregate,
    )
