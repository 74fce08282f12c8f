"""
Diagnostic scores for guidance fields.

evenness    Pielou index of the per-token guidance magnitudes (natural log entropy / ln n)
divergence  Jensen-Shannon distance (base 2) between the guided magnitude map and a
            map resampled from background tokens, resolution-weighted over steps

Step 0 (the 1x1 map) is never scored.
"""

from __future__ import annotations

import logging
import math
from typing import Iterable, Optional, Sequence

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, PositiveInt, model_validator
from scipy.spatial.distance import jensenshannon
from scipy.stats import binomtest, entropy

from .exceptions import (
    AllZeroFieldError,
    DegenerateMaskError,
    EmptyBackgroundError,
    EmptyForegroundError,
    InvalidDimensionsError,
    LengthMismatchError,
    NoScoredStepsError,
    ShapeMismatchError,
    SingleTokenMapError,
    TensorError,
)
from .tensors import Aggregate, FloatArray, GuidanceField, RunRecord, SegMask

logger = logging.getLogger(__name__)

PROB_TOLERANCE = 1e-9
MASK_THRESHOLD = 0.5


class TokenGuidanceDist(BaseModel):
    """Share of the total guidance carried by each position of a token map."""

    model_config = ConfigDict(frozen=True, arbitrary_types_allowed=True)

    n: PositiveInt
    probs: FloatArray

    @model_validator(mode="after")
    def check_probs(self):
        if self.probs.shape != (self.n,):
            raise LengthMismatchError(
                f"Distribution has {self.probs.shape} entries, expected {self.n}",
                operand="probs",
            )
        if (self.probs < 0).any() or abs(self.probs.sum() - 1.0) > PROB_TOLERANCE:
            raise TensorError(
                "Probabilities must be non-negative and sum to 1", operand="probs"
            )
        return self

    @classmethod
    def of(cls, probs) -> "TokenGuidanceDist":
        probs = np.asarray(probs, dtype=np.float64)
        return cls(n=probs.shape[0], probs=probs)


class StepScores(BaseModel):
    model_config = ConfigDict(frozen=True)

    step: int = Field(..., ge=0)
    evenness: Optional[float] = Field(None, ge=0.0, le=1.0)
    divergence: Optional[float] = Field(None, ge=0.0, le=1.0)
    weight: float = Field(..., gt=0.0)


def magnitude_grid(field: GuidanceField) -> np.ndarray:
    """Per-position L2 norm of the nudge over the vocabulary, shaped (h, w)."""
    return np.linalg.norm(field.values, axis=1).reshape(field.height, field.width)


def guidance_magnitudes(field: GuidanceField) -> TokenGuidanceDist:
    norms = np.linalg.norm(field.values, axis=1)
    total = norms.sum()
    if total == 0.0:
        raise AllZeroFieldError(
            f"Guidance field at {field.height}x{field.width} is zero everywhere"
        )
    return TokenGuidanceDist(n=field.n, probs=norms / total)


def pielou_evenness(dist: TokenGuidanceDist) -> float:
    if dist.n < 2:
        raise SingleTokenMapError("Evenness is undefined for a single-token map")
    value = float(entropy(dist.probs)) / math.log(dist.n)
    return min(max(value, 0.0), 1.0)


def _jsd(p: np.ndarray, q: np.ndarray) -> float:
    value = float(jensenshannon(p, q, base=2.0))
    return min(max(value, 0.0), 1.0)


def jsd(p: TokenGuidanceDist, q: TokenGuidanceDist) -> float:
    """Jensen-Shannon distance with base-2 logs, so 0 <= jsd <= 1."""
    if p.n != q.n:
        raise LengthMismatchError(
            f"Distributions differ in length: {p.n} vs {q.n}", operand="q"
        )
    return _jsd(p.probs, q.probs)


def _area_weights(src: int, dst: int) -> np.ndarray:
    """(dst, src) matrix: share of each destination cell covered by each source pixel."""
    scale = src / dst
    edges = np.arange(dst + 1) * scale
    lo, hi = edges[:-1, None], edges[1:, None]
    pixels = np.arange(src)[None, :]
    overlap = np.clip(np.minimum(hi, pixels + 1) - np.maximum(lo, pixels), 0.0, None)
    return overlap / scale


def downsample_mask(mask: SegMask, h: int, w: int) -> SegMask:
    """Area-interpolate to h x w, then keep cells that are at least half foreground."""
    if not (1 <= h <= mask.height and 1 <= w <= mask.width):
        raise InvalidDimensionsError(
            f"Cannot downsample a {mask.height}x{mask.width} mask to {h}x{w}",
            operand="mask",
        )
    coverage = (
        _area_weights(mask.height, h)
        @ mask.bits.astype(np.float64)
        @ _area_weights(mask.width, w).T
    )
    return SegMask(height=h, width=w, bits=coverage >= MASK_THRESHOLD - 1e-12)


def evenness_of(field: GuidanceField) -> float:
    return pielou_evenness(guidance_magnitudes(field))


def step_divergence(
    field: GuidanceField, foreground: np.ndarray, rng: np.random.Generator
) -> float:
    """
    JSD between the field's magnitude map and a same-size map whose cells are
    background positions drawn with replacement. A background that carries no
    guidance at all shares no mass with the guided map and scores 1.
    Restricting the guided map to foreground positions instead would make a
    uniform field score high rather than near 0.
    """
    magnitudes = np.linalg.norm(field.values, axis=1)
    total = magnitudes.sum()
    if total == 0.0:
        raise AllZeroFieldError("Guidance field is zero everywhere")
    background = np.flatnonzero(~foreground.reshape(-1))
    picks = background[rng.integers(0, background.size, size=field.n)]
    sampled = magnitudes[picks]
    if sampled.sum() == 0.0:
        return 1.0
    return _jsd(magnitudes / total, sampled / sampled.sum())


def _check_mask(run: RunRecord, mask: SegMask) -> None:
    if (mask.height, mask.width) != run.schedule.final_size:
        raise ShapeMismatchError(
            f"Mask is {mask.height}x{mask.width}, final scale is "
            f"{run.schedule.final_size[0]}x{run.schedule.final_size[1]}",
            operand="mask",
        )
    if mask.background == 0:
        raise EmptyBackgroundError("Mask covers every pixel; nothing to resample")
    if mask.foreground == 0:
        raise EmptyForegroundError("Mask is empty; divergence is undefined")


def divergence_steps(run: RunRecord, mask: SegMask, seed: int) -> list[StepScores]:
    """Per-step divergence for k >= 1; steps whose downsampled mask is one-sided are skipped."""
    if run.schedule.K < 2:
        raise NoScoredStepsError("Divergence needs at least two steps")
    _check_mask(run, mask)
    rng = np.random.default_rng(seed)
    scores = []
    for entry, (h, w) in zip(run.entries[1:], run.schedule.steps[1:]):
        mask_k = downsample_mask(mask, h, w)
        if mask_k.foreground == 0 or mask_k.background == 0:
            logger.debug("Step %d: mask is one-sided at %dx%d, skipped", entry.step, h, w)
            continue
        try:
            value = step_divergence(entry.guidance_field, mask_k.bits, rng)
        except AllZeroFieldError:
            logger.debug("Step %d: no guidance, skipped", entry.step)
            continue
        scores.append(StepScores(step=entry.step, divergence=value, weight=h * w))
    if not scores:
        raise DegenerateMaskError("No step has both foreground and background tokens")
    return scores


def divergence_score(run: RunRecord, mask: SegMask, seed: int) -> float:
    _, divergence = weighted_mean_scores(divergence_steps(run, mask, seed))
    return divergence


def evenness_steps(run: RunRecord) -> list[StepScores]:
    return [
        StepScores(step=e.step, evenness=e.evenness, weight=e.guidance_field.n)
        for e in run.entries
        if e.evenness is not None
    ]


def _weighted(pairs: Iterable[tuple[float, float]]) -> Optional[float]:
    pairs = list(pairs)
    if not pairs:
        return None
    total = sum(w for w, _ in pairs)
    value = sum(w * s for w, s in pairs) / total
    return min(max(value, 0.0), 1.0)


def weighted_mean_scores(
    steps: Sequence[StepScores],
) -> tuple[Optional[float], Optional[float]]:
    """Resolution-weighted means (evenness, divergence); step 0 never counts."""
    scored = [s for s in steps if s.step > 0]
    evenness = _weighted((s.weight, s.evenness) for s in scored if s.evenness is not None)
    divergence = _weighted(
        (s.weight, s.divergence) for s in scored if s.divergence is not None
    )
    if evenness is None and divergence is None:
        raise NoScoredStepsError("No step carries a score")
    return evenness, divergence


def score_run(run: RunRecord, mask: SegMask, seed: int) -> RunRecord:
    """Return a copy of `run` with per-step and aggregate divergence filled in."""
    by_step = {s.step: s.divergence for s in divergence_steps(run, mask, seed)}
    entries = tuple(
        e.model_copy(update={"divergence": by_step.get(e.step)}) for e in run.entries
    )
    steps = [
        StepScores(
            step=e.step,
            evenness=e.evenness,
            divergence=e.divergence,
            weight=e.guidance_field.n,
        )
        for e in entries
    ]
    evenness, divergence = weighted_mean_scores(steps)
    return run.model_copy(
        update={
            "entries": entries,
            "aggregate": Aggregate(evenness=evenness, divergence=divergence),
        }
    )


def mean_gamma(run: RunRecord) -> float:
    """Resolution-weighted mean guidance scale over the scored steps."""
    entries = run.entries[1:] or run.entries
    weights = np.array([e.guidance_field.n for e in entries], dtype=np.float64)
    gammas = np.array([e.gamma for e in entries], dtype=np.float64)
    return float((weights * gammas).sum() / weights.sum())


def scaled_score(score: Optional[float], gamma: float) -> Optional[float]:
    """Score divided by the applied guidance scale, removing its direct dependence on w."""
    if score is None or gamma == 0.0:
        return None
    return score / abs(gamma)


def sign_test(a: Sequence[float], b: Sequence[float]) -> tuple[int, int, float]:
    """Two-sided sign test on paired samples; ties are dropped. Returns (a>b, a<b, p)."""
    if len(a) != len(b):
        raise LengthMismatchError(f"Paired samples differ: {len(a)} vs {len(b)}")
    diff = np.asarray(a, dtype=np.float64) - np.asarray(b, dtype=np.float64)
    above, below = int((diff > 0).sum()), int((diff < 0).sum())
    if above + below == 0:
        return above, below, 1.0
    return above, below, float(binomtest(above, above + below, 0.5).pvalue)


def equilibrium_weight(
    weights: Sequence[float], evenness: Sequence[float], divergence: Sequence[float]
) -> Optional[float]:
    """First weight where the evenness and divergence curves meet, linearly interpolated."""
    gap = np.asarray(evenness, dtype=np.float64) - np.asarray(divergence, dtype=np.float64)
    for i in range(len(gap)):
        if gap[i] == 0.0:
            return float(weights[i])
        if i and gap[i - 1] * gap[i] < 0:
            t = gap[i - 1] / (gap[i - 1] - gap[i])
            return float(weights[i - 1] + t * (weights[i] - weights[i - 1]))
    return None
