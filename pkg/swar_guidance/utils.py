"""
Utility helpers used across the project: path validation, safe joins and seeds.
"""

import os
import zlib
from pathlib import Path

from .exceptions import ConfigValidationError
from .tensors import MAX_SEED


def ensure_file_readable(path: str) -> Path:
    """
    Ensure the given path exists and is readable. Return a Path object.
    Raises FileNotFoundError or PermissionError if there is a problem.
    """
    p = Path(path)
    if not p.is_file():
        raise FileNotFoundError(f"File not found: {path}")
    if not os.access(p, os.R_OK):
        raise PermissionError(f"File not readable: {path}")
    return p


def safe_join(base: str, *paths: str) -> Path:
    """Join under `base`, refusing anything that resolves outside it."""
    base_path = Path(base).resolve()
    candidate = base_path.joinpath(*paths).resolve()
    if candidate == base_path or base_path in candidate.parents:
        return candidate
    raise ConfigValidationError(f"Attempted path traversal: {candidate}")


def parse_seeds(spec) -> list[int]:
    """
    A count N means seeds 0..N-1; "a,b,c" or a list is taken literally.
    Duplicates are rejected since output directories are keyed by seed.
    """
    if isinstance(spec, bool):
        raise ConfigValidationError(f"Invalid seed specification: {spec!r}")
    if isinstance(spec, int):
        if spec < 1:
            raise ConfigValidationError(f"Seed count must be >= 1, got {spec}")
        return list(range(spec))
    if isinstance(spec, str):
        parts = [s.strip() for s in spec.split(",") if s.strip()]
        if len(parts) == 1 and "," not in spec:
            try:
                return parse_seeds(int(parts[0]))
            except ValueError as e:
                raise ConfigValidationError(f"Invalid seed specification: {spec!r}") from e
        try:
            seeds = [int(s) for s in parts]
        except ValueError as e:
            raise ConfigValidationError(f"Invalid seed specification: {spec!r}") from e
    else:
        seeds = [int(s) for s in spec]
    if not seeds:
        raise ConfigValidationError("Seed list is empty")
    if any(s < 0 or s > MAX_SEED for s in seeds):
        raise ConfigValidationError(f"Seeds must lie in [0, 2**64), got {seeds}")
    if len(set(seeds)) != len(seeds):
        raise ConfigValidationError(f"Duplicate seeds in {seeds}")
    return seeds


def derive_seed(seed: int, tag: str) -> int:
    """Independent, stable sub-seed for a named purpose (e.g. "divergence")."""
    return (seed ^ (zlib.crc32(tag.encode("utf-8")) << 32)) & MAX_SEED


def seed_dir(out: str, seed: int) -> Path:
    return safe_join(out, f"seed_{seed}")
