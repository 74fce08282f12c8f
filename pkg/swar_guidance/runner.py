"""
Purpose: Run many seeds of one experiment on a worker pool, sync or asyncio.
"""

from __future__ import annotations

import asyncio
import logging
import os
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path
from typing import NamedTuple, Optional, Sequence

from .exceptions import DegenerateMaskError, NoScoredStepsError
from .formats import export_heatmaps, write_run
from .metrics import score_run
from .oracles import ModelOracle
from .sampler import SamplerConfig, run_sampling
from .tensors import RunRecord, SegMask
from .utils import derive_seed, seed_dir

logger = logging.getLogger(__name__)


class SeedResult(NamedTuple):
    record: RunRecord
    skipped: Optional[str] = None


def default_jobs() -> int:
    return os.cpu_count() or 1


class ExperimentRunner:
    """
    Run one sampling configuration over a set of seeds.

    The oracle and mask are only read, so workers share them. When `out` is
    set each seed writes run.json and heatmaps/ under out/seed_<seed>/.
    """

    def __init__(
        self,
        oracle: ModelOracle,
        sampler: SamplerConfig,
        condition: int = 0,
        mask: Optional[SegMask] = None,
        out: Optional[Path] = None,
        jobs: Optional[int] = None,
    ):
        self.oracle = oracle
        self.sampler = sampler
        self.condition = condition
        self.mask = mask
        self.out = out
        self.jobs = jobs or default_jobs()

    def run_seed(self, seed: int) -> SeedResult:
        record = run_sampling(
            self.oracle, self.sampler.model_copy(update={"seed": seed}), self.condition
        )
        skipped = None
        if self.mask is None:
            skipped = "no mask"
        else:
            try:
                record = score_run(record, self.mask, derive_seed(seed, "divergence"))
            except (DegenerateMaskError, NoScoredStepsError) as e:
                skipped = str(e)
                logger.warning("Seed %d: divergence skipped (%s)", seed, e)
        if self.out is not None:
            directory = seed_dir(str(self.out), seed)
            write_run(record, directory / "run.json")
            export_heatmaps(record, directory / "heatmaps")
        logger.debug(
            "Seed %d: evenness=%s divergence=%s",
            seed,
            record.aggregate.evenness,
            record.aggregate.divergence,
        )
        return SeedResult(record, skipped)

    def run_seeds(self, seeds: Sequence[int]) -> list[SeedResult]:
        """Results come back in the order of `seeds`."""
        logger.info(
            "Running %d seed(s) of %s with %d worker(s)",
            len(seeds),
            self.sampler.scheme.kind.value,
            self.jobs,
        )
        if self.jobs == 1 or len(seeds) == 1:
            return [self.run_seed(s) for s in seeds]
        with ThreadPoolExecutor(max_workers=self.jobs) as pool:
            return list(pool.map(self.run_seed, seeds))

    async def run_seeds_async(self, seeds: Sequence[int]) -> list[SeedResult]:
        """Same as run_seeds, scheduled on the running event loop."""
        limit = asyncio.Semaphore(self.jobs)

        async def one(seed: int) -> SeedResult:
            async with limit:
                return await asyncio.to_thread(self.run_seed, seed)

        logger.info("Running %d seed(s) asynchronously", len(seeds))
        return list(await asyncio.gather(*(one(s) for s in seeds)))
