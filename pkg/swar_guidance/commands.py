"""
Experiment commands behind the CLI subcommands.

Each command takes validated configuration, does its work, writes its files
under experiment.out and returns a CommandResult whose text main.py prints.
"""

from __future__ import annotations

import asyncio
import logging
from pathlib import Path
from typing import NamedTuple, Optional, Sequence

import numpy as np
import yaml

from .config_loader import AppConfig, apply_overrides
from .exceptions import ConfigValidationError
from .formats import read_mask, write_dump
from .metrics import equilibrium_weight, mean_gamma, scaled_score, sign_test
from .oracles import ModelOracle, SceneOracle, record_dump, replay_oracle
from .runner import ExperimentRunner, SeedResult
from .tensors import ScaleSchedule, SegMask
from .utils import ensure_file_readable

logger = logging.getLogger(__name__)


class CommandResult(NamedTuple):
    text: str
    all_skipped: bool = False


class Stat(NamedTuple):
    mean: Optional[float]
    std: Optional[float]
    n: int


def describe(values: Sequence[Optional[float]]) -> Stat:
    """Mean and sample standard deviation (ddof=1) of the values that are present."""
    present = np.array([v for v in values if v is not None], dtype=np.float64)
    if present.size == 0:
        return Stat(None, None, 0)
    std = float(present.std(ddof=1)) if present.size > 1 else 0.0
    return Stat(float(present.mean()), std, int(present.size))


def _fmt(value: Optional[float]) -> str:
    return "-" if value is None else f"{value:.6f}"


def _fmt_stat(stat: Stat) -> str:
    if stat.mean is None:
        return "skipped"
    return f"{stat.mean:.6f} ± {stat.std:.6f}"


def build_oracle(cfg: AppConfig) -> tuple[ModelOracle, ScaleSchedule]:
    """The configured oracle plus the sampler schedule that matches its grid."""
    if cfg.experiment.oracle == "scene":
        scene = cfg.scene_config()
        return SceneOracle(scene), scene.schedule
    if not cfg.experiment.dump:
        raise ConfigValidationError("--oracle dump needs --dump PATH")
    try:
        path = ensure_file_readable(cfg.experiment.dump)
    except (FileNotFoundError, PermissionError) as e:
        raise ConfigValidationError(str(e)) from e
    oracle = replay_oracle(path)
    schedule = ScaleSchedule(
        steps=oracle.steps,
        weight=cfg.schedule.w,
        secondary_weight=cfg.schedule.w2,
        kind=cfg.schedule.kind,
    )
    return oracle, schedule


def resolve_mask(cfg: AppConfig, oracle: ModelOracle, final_size) -> Optional[SegMask]:
    """Mask file if given, else the scene's planted foreground, else None (evenness only)."""
    if cfg.experiment.mask:
        try:
            path = ensure_file_readable(cfg.experiment.mask)
        except (FileNotFoundError, PermissionError) as e:
            raise ConfigValidationError(str(e)) from e
        return read_mask(path, expected=tuple(final_size))
    if isinstance(oracle, SceneOracle):
        return oracle.mask(cfg.experiment.condition)
    logger.warning("No mask given: divergence is not computed, evenness only")
    return None


def run_experiment(
    cfg: AppConfig, out: Optional[Path] = None
) -> tuple[list[SeedResult], bool]:
    """Run every configured seed. Returns the results and whether a mask was in play."""
    oracle, schedule = build_oracle(cfg)
    mask = resolve_mask(cfg, oracle, schedule.final_size)
    runner = ExperimentRunner(
        oracle,
        cfg.sampler_config(schedule),
        condition=cfg.experiment.condition,
        mask=mask,
        out=out,
        jobs=cfg.experiment.jobs,
    )
    seeds = cfg.experiment.seeds
    if cfg.experiment.use_async:
        results = asyncio.run(runner.run_seeds_async(seeds))
    else:
        results = runner.run_seeds(seeds)
    return results, mask is not None


def _all_skipped(results: Sequence[SeedResult], masked: bool) -> bool:
    return masked and all(r.skipped is not None for r in results)


def _label(cfg: AppConfig) -> str:
    label = f"{cfg.sampler.scheme.value} w={cfg.schedule.w:g}"
    if cfg.schedule.w2 is not None:
        label += f" w2={cfg.schedule.w2:g}"
    return label


def _out_dir(cfg: AppConfig) -> Path:
    out = Path(cfg.experiment.out)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _skip_lines(results: Sequence[SeedResult]) -> list[str]:
    return [
        f"  seed {r.record.seed}: divergence skipped ({r.skipped})"
        for r in results
        if r.skipped is not None
    ]


def cmd_sample(cfg: AppConfig) -> CommandResult:
    out = _out_dir(cfg)
    results, masked = run_experiment(cfg, out)
    evenness = describe([r.record.aggregate.evenness for r in results])
    divergence = describe([r.record.aggregate.divergence for r in results])
    summary = {
        "scheme": cfg.sampler.scheme.value,
        "w": cfg.schedule.w,
        "w2": cfg.schedule.w2,
        "condition": cfg.experiment.condition,
        "evenness": {"mean": evenness.mean, "std": evenness.std, "n": evenness.n},
        "divergence": {"mean": divergence.mean, "std": divergence.std, "n": divergence.n},
        "runs": [
            {
                "seed": r.record.seed,
                "evenness": r.record.aggregate.evenness,
                "divergence": r.record.aggregate.divergence,
                "skipped": r.skipped,
            }
            for r in results
        ],
    }
    (out / "summary.yaml").write_text(yaml.safe_dump(summary, sort_keys=False), encoding="utf-8")
    text = (
        f"{_label(cfg)}: {len(results)} run(s) written to {out}; "
        f"evenness {_fmt_stat(evenness)}, divergence {_fmt_stat(divergence)}"
    )
    if masked:
        text = "\n".join([text, *_skip_lines(results)])
    logger.info("Sample finished: %s run(s)", len(results))
    return CommandResult(text, _all_skipped(results, masked))


def _same_oracle(a: AppConfig, b: AppConfig) -> bool:
    return (
        a.experiment.oracle == b.experiment.oracle
        and a.experiment.dump == b.experiment.dump
        and a.experiment.condition == b.experiment.condition
        and (a.experiment.oracle == "dump" or a.scene == b.scene)
        and a.schedule.sides == b.schedule.sides
    )


def _per_step(results: Sequence[SeedResult], attr: str) -> dict[int, Optional[float]]:
    steps: dict[int, list] = {}
    for r in results:
        for e in r.record.entries[1:]:
            steps.setdefault(e.step, []).append(getattr(e, attr))
    return {k: describe(v).mean for k, v in steps.items()}


def _paired(a: Sequence[SeedResult], b: Sequence[SeedResult], attr: str):
    pairs = [
        (getattr(x.record.aggregate, attr), getattr(y.record.aggregate, attr))
        for x, y in zip(a, b)
    ]
    pairs = [(x, y) for x, y in pairs if x is not None and y is not None]
    return [x for x, _ in pairs], [y for _, y in pairs]


def cmd_compare(cfg_a: AppConfig, cfg_b: AppConfig) -> CommandResult:
    """Table of mean ± std per configuration, a paired sign test and per-step means."""
    if cfg_a.experiment.seeds != cfg_b.experiment.seeds:
        raise ConfigValidationError(
            f"Seed-set mismatch: {cfg_a.experiment.seeds} vs {cfg_b.experiment.seeds}"
        )
    if not _same_oracle(cfg_a, cfg_b):
        raise ConfigValidationError("Compared configurations must share the oracle")
    results_a, masked_a = run_experiment(cfg_a)
    results_b, masked_b = run_experiment(cfg_b)

    labels = [f"a: {_label(cfg_a)}", f"b: {_label(cfg_b)}"]
    width = max(len(s) for s in labels) + 2
    lines = [
        f"comparison over n={len(cfg_a.experiment.seeds)} seed(s), "
        f"condition {cfg_a.experiment.condition}",
        f"{'config':<{width}}{'evenness':<24}divergence",
    ]
    for label, results in zip(labels, (results_a, results_b)):
        evn = describe([r.record.aggregate.evenness for r in results])
        div = describe([r.record.aggregate.divergence for r in results])
        lines.append(f"{label:<{width}}{_fmt_stat(evn):<24}{_fmt_stat(div)}")

    for attr in ("evenness", "divergence"):
        xs, ys = _paired(results_a, results_b, attr)
        if xs:
            above, below, p = sign_test(xs, ys)
            lines.append(f"sign test {attr}: a>b {above}, a<b {below}, p={p:.3g}")
        else:
            lines.append(f"sign test {attr}: skipped (no paired scores)")

    lines.append("per-step means:")
    lines.append(f"{'step':<6}{'size':<8}{'a:evn':<11}{'a:div':<11}{'b:evn':<11}b:div")
    columns = [
        _per_step(results_a, "evenness"),
        _per_step(results_a, "divergence"),
        _per_step(results_b, "evenness"),
        _per_step(results_b, "divergence"),
    ]
    for entry in results_a[0].record.entries[1:]:
        size = f"{entry.guidance_field.height}x{entry.guidance_field.width}"
        cells = "".join(f"{_fmt(col.get(entry.step)):<11}" for col in columns[:3])
        lines.append(f"{entry.step:<6}{size:<8}{cells}{_fmt(columns[3].get(entry.step))}")

    text = "\n".join(lines)
    (_out_dir(cfg_a) / "compare.txt").write_text(text + "\n", encoding="utf-8")
    all_skipped = _all_skipped(results_a, masked_a) and _all_skipped(results_b, masked_b)
    return CommandResult(text, all_skipped)


def cmd_analyze(cfg: AppConfig) -> CommandResult:
    """Score a replayed dump; per-step and aggregate scores, heatmaps per seed."""
    if not cfg.experiment.dump:
        raise ConfigValidationError("analyze needs --dump PATH")
    cfg = apply_overrides(cfg, {"oracle": "dump"})
    out = _out_dir(cfg)
    results, masked = run_experiment(cfg, out)
    lines = [f"{_label(cfg)} on {cfg.experiment.dump}"]
    for r in results:
        agg = r.record.aggregate
        divergence = _fmt(agg.divergence) if r.skipped is None else f"skipped ({r.skipped})"
        lines.append(
            f"seed {r.record.seed}: evenness {_fmt(agg.evenness)}, divergence {divergence}"
        )
        for e in r.record.entries[1:]:
            lines.append(
                f"  step {e.step} {e.guidance_field.height}x{e.guidance_field.width}: "
                f"evenness {_fmt(e.evenness)}, divergence {_fmt(e.divergence)}"
            )
    return CommandResult("\n".join(lines), _all_skipped(results, masked))


def parse_weights(spec: str) -> list[float]:
    try:
        weights = [float(w) for w in spec.split(",") if w.strip()]
    except ValueError as e:
        raise ConfigValidationError(f"Invalid weight list: {spec!r}") from e
    if not weights:
        raise ConfigValidationError("Weight list is empty")
    return weights


def cmd_sweep(cfg: AppConfig, weights: Sequence[float]) -> CommandResult:
    """
    Mean scores at each weight, raw and divided by the applied guidance scale.
    The equilibrium is where the scaled evenness and divergence curves cross.
    """
    rows = []
    for w in weights:
        results, _ = run_experiment(apply_overrides(cfg, {"w": w}))
        evn = describe([r.record.aggregate.evenness for r in results]).mean
        div = describe([r.record.aggregate.divergence for r in results]).mean
        gamma = float(np.mean([mean_gamma(r.record) for r in results]))
        rows.append(
            {
                "w": w,
                "gamma": gamma,
                "evenness": evn,
                "divergence": div,
                "scaled_evenness": scaled_score(evn, gamma),
                "scaled_divergence": scaled_score(div, gamma),
            }
        )

    equilibrium = None
    usable = [
        r
        for r in rows
        if r["scaled_evenness"] is not None and r["scaled_divergence"] is not None
    ]
    if len(usable) >= 2:
        equilibrium = equilibrium_weight(
            [r["w"] for r in usable],
            [r["scaled_evenness"] for r in usable],
            [r["scaled_divergence"] for r in usable],
        )

    lines = [f"{'w':<8}{'gamma':<10}{'evn':<11}{'div':<11}{'evn/gamma':<11}div/gamma"]
    for r in rows:
        lines.append(
            f"{r['w']:<8g}{r['gamma']:<10.4f}{_fmt(r['evenness']):<11}{_fmt(r['divergence']):<11}"
            f"{_fmt(r['scaled_evenness']):<11}{_fmt(r['scaled_divergence'])}"
        )
    lines.append(
        "equilibrium weight: "
        + ("none in range" if equilibrium is None else f"{equilibrium:.4f}")
    )
    doc = {"scheme": cfg.sampler.scheme.value, "rows": rows, "equilibrium": equilibrium}
    (_out_dir(cfg) / "sweep.yaml").write_text(
        yaml.safe_dump(doc, sort_keys=False), encoding="utf-8"
    )
    return CommandResult("\n".join(lines))


def cmd_dump(cfg: AppConfig, path: str) -> CommandResult:
    """Record the scene oracle's conditional/unconditional logits as a SWARLOG1 dump."""
    if cfg.experiment.oracle != "scene":
        raise ConfigValidationError("dump records the scene oracle; drop --oracle dump")
    oracle, _ = build_oracle(cfg)
    written = write_dump(record_dump(oracle, cfg.experiment.condition), path)
    return CommandResult(f"Wrote {len(oracle.steps)}-step dump to {written}")
