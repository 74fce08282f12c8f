"""
Tests for metrics.py: evenness, Jensen-Shannon distance, mask downsampling and
the resolution-weighted divergence score.
"""

import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import make_run
from swar_guidance.exceptions import (
    AllZeroFieldError,
    EmptyBackgroundError,
    EmptyForegroundError,
    InvalidDimensionsError,
    LengthMismatchError,
    NoScoredStepsError,
    ShapeMismatchError,
    SingleTokenMapError,
    TensorError,
)
from swar_guidance.metrics import (
    StepScores,
    TokenGuidanceDist,
    divergence_score,
    divergence_steps,
    downsample_mask,
    equilibrium_weight,
    guidance_magnitudes,
    jsd,
    mean_gamma,
    pielou_evenness,
    scaled_score,
    score_run,
    sign_test,
    weighted_mean_scores,
)
from swar_guidance.tensors import GuidanceField, SegMask, VocabSpec

SIDES = (1, 2, 4, 8)


def _left_half(side: int) -> np.ndarray:
    bits = np.zeros((side, side), dtype=bool)
    bits[:, : side // 2] = True
    return bits


def _foreground_only_run(vocab: int = 4):
    fields = []
    for side in SIDES:
        inside = _left_half(side).reshape(-1, 1) if side > 1 else np.ones((1, 1))
        fields.append(np.repeat(inside.astype(float), vocab, axis=1))
    return make_run(fields, SIDES, vocab)


def _uniform_run(vocab: int = 4):
    return make_run([np.ones((s * s, vocab)) for s in SIDES], SIDES, vocab)


def _brute_force_evenness(p):
    p = np.asarray(p, dtype=float)
    nz = p[p > 0]
    return -sum(x * math.log(x) for x in nz) / math.log(len(p))


def test_evenness_uniform_is_one():
    assert pielou_evenness(TokenGuidanceDist.of(np.full(16, 1 / 16))) == pytest.approx(1.0, abs=1e-12)


def test_evenness_one_hot_is_zero():
    assert pielou_evenness(TokenGuidanceDist.of([0.0, 1.0, 0.0, 0.0])) == 0.0


def test_evenness_reference_value():
    p = [0.5, 0.25, 0.125, 0.125]
    value = pielou_evenness(TokenGuidanceDist.of(p))
    assert value == pytest.approx(0.875, abs=1e-6)
    assert value == pytest.approx(_brute_force_evenness(p), abs=1e-12)


def test_evenness_single_token():
    with pytest.raises(SingleTokenMapError):
        pielou_evenness(TokenGuidanceDist.of([1.0]))


def test_distribution_must_sum_to_one():
    with pytest.raises(TensorError):
        TokenGuidanceDist.of([0.5, 0.6])


def test_guidance_magnitudes_are_row_norms():
    vocab = VocabSpec(size=2)
    field = GuidanceField.from_array([[3.0, 4.0], [0.0, 5.0], [0.0, 0.0], [0.0, 10.0]], 2, 2, vocab)
    assert guidance_magnitudes(field).probs.tolist() == pytest.approx([0.25, 0.25, 0.0, 0.5])


def test_guidance_magnitudes_all_zero():
    field = GuidanceField.from_array(np.zeros((4, 3)), 2, 2, VocabSpec(size=3))
    with pytest.raises(AllZeroFieldError):
        guidance_magnitudes(field)


def test_jsd_identical_is_zero():
    p = TokenGuidanceDist.of([0.1, 0.2, 0.7])
    assert jsd(p, p) == pytest.approx(0.0, abs=1e-12)


def test_jsd_disjoint_is_one():
    p = TokenGuidanceDist.of([1.0, 0.0])
    q = TokenGuidanceDist.of([0.0, 1.0])
    assert jsd(p, q) == pytest.approx(1.0, abs=1e-9)


def test_jsd_half_overlap():
    p = TokenGuidanceDist.of([0.5, 0.5])
    q = TokenGuidanceDist.of([1.0, 0.0])
    assert jsd(p, q) == pytest.approx(0.5579, abs=1e-4)


def test_jsd_length_mismatch():
    with pytest.raises(LengthMismatchError):
        jsd(TokenGuidanceDist.of([0.5, 0.5]), TokenGuidanceDist.of([0.2, 0.3, 0.5]))


@given(st.integers(2, 32), st.integers(0, 2**32 - 1))
@settings(max_examples=1000, deadline=None)
def test_jsd_is_a_metric(n, seed):
    rng = np.random.default_rng(seed)
    p, q, r = (TokenGuidanceDist.of(rng.dirichlet(np.ones(n))) for _ in range(3))
    assert 0.0 <= jsd(p, q) <= 1.0
    assert jsd(p, q) == pytest.approx(jsd(q, p), abs=1e-12)
    assert jsd(p, r) <= jsd(p, q) + jsd(q, r) + 1e-9


@given(st.integers(2, 64), st.integers(0, 2**32 - 1))
@settings(max_examples=200, deadline=None)
def test_evenness_bounds(n, seed):
    rng = np.random.default_rng(seed)
    value = pielou_evenness(TokenGuidanceDist.of(rng.dirichlet(np.ones(n) * 0.3)))
    assert 0.0 <= value <= 1.0


def test_downsample_left_half():
    mask = downsample_mask(SegMask.from_bits(_left_half(8)), 2, 2)
    assert mask.bits.tolist() == [[True, False], [True, False]]


def test_downsample_uses_half_coverage():
    bits = np.zeros((4, 4), dtype=bool)
    bits[0, 0:2] = True
    bits[1, 0] = True
    # the top-left 2x2 block is 3/4 foreground, the others empty
    mask = downsample_mask(SegMask.from_bits(bits), 2, 2)
    assert mask.bits.tolist() == [[True, False], [False, False]]


def test_downsample_identity():
    bits = np.random.default_rng(0).random((6, 6)) > 0.5
    assert np.array_equal(downsample_mask(SegMask.from_bits(bits), 6, 6).bits, bits)


def test_downsample_rejects_upsampling():
    with pytest.raises(InvalidDimensionsError):
        downsample_mask(SegMask.from_bits(_left_half(4)), 8, 8)


def test_downsample_checkerboard_keeps_half_covered_cells():
    bits = (np.add.outer(np.arange(4), np.arange(4)) % 2).astype(bool)
    assert downsample_mask(SegMask.from_bits(bits), 2, 2).bits.all()


def test_foreground_only_guidance_scores_high():
    run = _foreground_only_run()
    mask = SegMask.from_bits(_left_half(8))
    assert divergence_score(run, mask, seed=0) > 0.9


def test_uniform_guidance_scores_low():
    run = _uniform_run()
    mask = SegMask.from_bits(_left_half(8))
    scores = [divergence_score(run, mask, seed=s) for s in range(100)]
    assert np.mean(scores) < 0.05


def test_divergence_is_seed_deterministic(rng):
    run = make_run([rng.standard_normal((s * s, 4)) for s in SIDES], SIDES)
    mask = SegMask.from_bits(_left_half(8))
    assert divergence_score(run, mask, 7) == divergence_score(run, mask, 7)


def test_divergence_ignores_token_id_labels(rng):
    fields = [rng.standard_normal((s * s, 6)) for s in SIDES]
    order = rng.permutation(6)
    mask = SegMask.from_bits(_left_half(8))
    plain = divergence_score(make_run(fields, SIDES, vocab=6), mask, seed=5)
    relabeled = make_run([f[:, order] for f in fields], SIDES, vocab=6)
    assert divergence_score(relabeled, mask, seed=5) == pytest.approx(plain, abs=1e-12)


def test_divergence_skips_one_sided_steps():
    run = _foreground_only_run()
    bits = np.zeros((8, 8), dtype=bool)
    bits[0, 0] = True
    # only the 8x8 step keeps a foreground cell
    steps = divergence_steps(run, SegMask.from_bits(bits), seed=0)
    assert [s.step for s in steps] == [3]


def test_divergence_rejects_degenerate_masks():
    run = _uniform_run()
    with pytest.raises(EmptyBackgroundError):
        divergence_score(run, SegMask.from_bits(np.ones((8, 8))), 0)
    with pytest.raises(EmptyForegroundError):
        divergence_score(run, SegMask.from_bits(np.zeros((8, 8))), 0)
    with pytest.raises(ShapeMismatchError):
        divergence_score(run, SegMask.from_bits(_left_half(4)), 0)


def test_divergence_needs_two_steps():
    run = make_run([np.ones((4, 4))], (2,))
    with pytest.raises(NoScoredStepsError):
        divergence_score(run, SegMask.from_bits(_left_half(2)), 0)


def test_weighted_mean_ignores_first_step():
    steps = [
        StepScores(step=0, evenness=0.0, weight=1),
        StepScores(step=1, evenness=0.5, weight=4),
        StepScores(step=2, evenness=1.0, divergence=0.2, weight=16),
    ]
    evenness, divergence = weighted_mean_scores(steps)
    assert evenness == pytest.approx(0.9)
    assert divergence == pytest.approx(0.2)


def test_weighted_mean_needs_scores():
    with pytest.raises(NoScoredStepsError):
        weighted_mean_scores([StepScores(step=0, evenness=0.3, weight=1)])


def test_score_run_fills_aggregate():
    run = _foreground_only_run()
    scored = score_run(run, SegMask.from_bits(_left_half(8)), seed=3)
    assert scored.aggregate.divergence == pytest.approx(1.0)
    assert scored.entries[0].divergence is None
    assert all(e.divergence == pytest.approx(1.0) for e in scored.entries[1:])


def test_mean_gamma_and_scaling():
    run = _uniform_run()
    assert mean_gamma(run) == pytest.approx(1.0)
    assert scaled_score(0.6, 2.0) == pytest.approx(0.3)
    assert scaled_score(None, 2.0) is None


def test_sign_test():
    above, below, p = sign_test([2, 2, 2, 2, 2, 2, 2, 2], [1, 1, 1, 1, 1, 1, 1, 1])
    assert (above, below) == (8, 0)
    assert p == pytest.approx(2 * 0.5**8)
    assert sign_test([1, 2], [1, 2]) == (0, 0, 1.0)


def test_equilibrium_weight_interpolates():
    assert equilibrium_weight([0, 1, 2], [0.5, 0.4, 0.3], [0.1, 0.3, 0.5]) == pytest.approx(4 / 3)
    assert equilibrium_weight([0, 1], [0.5, 0.6], [0.1, 0.2]) is None
