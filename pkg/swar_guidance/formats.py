"""
On-disk formats.

Logit dump ("SWARLOG1"), all integers little-endian u32, payload little-endian f32:

    offset 0   magic     8 bytes  b"SWARLOG1"
    offset 8   |V|       u32
    offset 12  K         u32
    then per step k:
               h, w      u32, u32
               cond      h*w*|V| f32, row-major grid, vocab contiguous per position
               uncond    h*w*|V| f32, same layout

The file must end exactly after the last step.

Masks are binary PGM (P5, pixel > 127 is foreground) or ASCII PBM (P1, 1 is
foreground). Run records are JSON. Heatmaps are per-step CSV + P5 PGM files
with an annotations.yaml beside them.
"""

from __future__ import annotations

import logging
import struct
from pathlib import Path
from typing import Optional, Union

import numpy as np
import yaml
from pydantic import BaseModel, ConfigDict, PositiveInt, model_validator

from .exceptions import (
    BadMagicError,
    FormatError,
    MaskDimensionError,
    NonFinitePayloadError,
    ShapeMismatchError,
    SizeMismatchError,
    UnsupportedFormatError,
)
from .metrics import magnitude_grid
from .tensors import LogitTensor, RunRecord, SegMask, VocabSpec

logger = logging.getLogger(__name__)

PathLike = Union[str, Path]

MAGIC = b"SWARLOG1"
_HEADER = struct.Struct("<II")
_F32 = np.dtype("<f4")

PGM_THRESHOLD = 127
UNIFORM_GRAY = 128


class DumpStep(BaseModel):
    model_config = ConfigDict(frozen=True)

    height: PositiveInt
    width: PositiveInt
    cond: LogitTensor
    uncond: LogitTensor

    @model_validator(mode="after")
    def check_branches(self):
        for name, tensor in (("cond", self.cond), ("uncond", self.uncond)):
            if (tensor.height, tensor.width) != (self.height, self.width):
                raise ShapeMismatchError(
                    f"{name} is {tensor.height}x{tensor.width}, step is "
                    f"{self.height}x{self.width}",
                    operand=name,
                )
        if self.cond.vocab != self.uncond.vocab:
            raise ShapeMismatchError("cond and uncond vocabularies differ", operand="uncond")
        return self


class LogitDump(BaseModel):
    """In-memory form of a logit dump file."""

    model_config = ConfigDict(frozen=True)

    vocab: VocabSpec
    steps: tuple[DumpStep, ...]

    @model_validator(mode="after")
    def check_steps(self):
        if not self.steps:
            raise FormatError("Dump holds no steps")
        for k, step in enumerate(self.steps):
            if step.cond.vocab != self.vocab:
                raise ShapeMismatchError(
                    f"Step {k} vocabulary {step.cond.vocab.size} != {self.vocab.size}",
                    operand="vocab",
                )
        return self


def write_dump(dump: LogitDump, path: PathLike) -> Path:
    """Values are stored as f32; anything finer is rounded."""
    p = Path(path)
    p.parent.mkdir(parents=True, exist_ok=True)
    chunks = [MAGIC, _HEADER.pack(dump.vocab.size, len(dump.steps))]
    for step in dump.steps:
        chunks.append(_HEADER.pack(step.height, step.width))
        chunks.append(step.cond.values.astype(_F32).tobytes())
        chunks.append(step.uncond.values.astype(_F32).tobytes())
    p.write_bytes(b"".join(chunks))
    return p


def _read_floats(data: bytes, offset: int, count: int, name: str) -> np.ndarray:
    end = offset + count * _F32.itemsize
    if end > len(data):
        raise SizeMismatchError(end, len(data), offset)
    values = np.frombuffer(data, dtype=_F32, count=count, offset=offset)
    bad = np.flatnonzero(~np.isfinite(values))
    if bad.size:
        raise NonFinitePayloadError(
            f"Non-finite {name} value", offset + int(bad[0]) * _F32.itemsize
        )
    return values.astype(np.float64)


def read_dump(path: PathLike) -> LogitDump:
    data = Path(path).read_bytes()
    header_end = len(MAGIC) + _HEADER.size
    if len(data) < len(MAGIC) or data[: len(MAGIC)] != MAGIC:
        raise BadMagicError(f"{path}: not a SWARLOG1 dump", 0)
    if len(data) < header_end:
        raise SizeMismatchError(header_end, len(data), len(MAGIC))
    vocab_size, count = _HEADER.unpack_from(data, len(MAGIC))
    if vocab_size < 2:
        raise FormatError(f"Vocabulary size {vocab_size} < 2", len(MAGIC))
    if count == 0:
        raise FormatError("Dump declares zero steps", len(MAGIC) + 4)
    vocab = VocabSpec(size=vocab_size)

    offset = header_end
    steps = []
    for k in range(count):
        if offset + _HEADER.size > len(data):
            raise SizeMismatchError(offset + _HEADER.size, len(data), offset)
        h, w = _HEADER.unpack_from(data, offset)
        if h == 0 or w == 0:
            raise FormatError(f"Step {k} declares an empty {h}x{w} grid", offset)
        offset += _HEADER.size
        size = h * w * vocab_size
        cond = _read_floats(data, offset, size, f"cond (step {k})")
        offset += size * _F32.itemsize
        uncond = _read_floats(data, offset, size, f"uncond (step {k})")
        offset += size * _F32.itemsize
        steps.append(
            DumpStep(
                height=h,
                width=w,
                cond=LogitTensor.from_array(cond.reshape(h * w, vocab_size), h, w, vocab),
                uncond=LogitTensor.from_array(uncond.reshape(h * w, vocab_size), h, w, vocab),
            )
        )
    if offset != len(data):
        raise SizeMismatchError(offset, len(data), offset)
    return LogitDump(vocab=vocab, steps=tuple(steps))


# --- masks -------------------------------------------------------------------


def _header_tokens(data: bytes, count: int, start: int) -> tuple[list[int], int]:
    """Read `count` whitespace-separated integers after the magic, skipping # comments."""
    values: list[int] = []
    pos = start
    while len(values) < count:
        while pos < len(data) and (data[pos : pos + 1].isspace() or data[pos] == ord("#")):
            if data[pos] == ord("#"):
                while pos < len(data) and data[pos] not in b"\r\n":
                    pos += 1
            else:
                pos += 1
        begin = pos
        while pos < len(data) and data[pos : pos + 1].isdigit():
            pos += 1
        if begin == pos:
            if pos >= len(data):
                raise SizeMismatchError(pos + 1, len(data), pos)
            raise FormatError("Malformed header field", pos)
        values.append(int(data[begin:pos]))
    return values, pos


def _pgm_bits(data: bytes, path: PathLike) -> np.ndarray:
    (width, height, maxval), pos = _header_tokens(data, 3, 2)
    if not 0 < maxval < 256:
        raise UnsupportedFormatError(f"{path}: 16-bit or zero maxval {maxval}", 2)
    pos += 1  # single whitespace byte ends the header
    expected = pos + width * height
    if len(data) != expected:
        raise SizeMismatchError(expected, len(data), min(len(data), expected))
    pixels = np.frombuffer(data, dtype=np.uint8, count=width * height, offset=pos)
    scaled = pixels.astype(np.float64) * (255.0 / maxval)
    return (scaled > PGM_THRESHOLD).reshape(height, width)


def _pbm_bits(data: bytes) -> np.ndarray:
    (width, height), pos = _header_tokens(data, 2, 2)
    bits = []
    while pos < len(data):
        ch = data[pos]
        if ch == ord("#"):
            while pos < len(data) and data[pos] not in b"\r\n":
                pos += 1
            continue
        if ch in b"01":
            bits.append(ch == ord("1"))
        elif not bytes([ch]).isspace():
            raise FormatError(f"Unexpected byte {ch:#04x} in P1 raster", pos)
        pos += 1
    if len(bits) != width * height:
        raise SizeMismatchError(width * height, len(bits), pos)
    return np.array(bits, dtype=bool).reshape(height, width)


def read_mask(path: PathLike, expected: Optional[tuple[int, int]] = None) -> SegMask:
    """Read a P5/P1 mask; `expected` is the (height, width) the caller needs."""
    data = Path(path).read_bytes()
    magic = data[:2]
    if magic == b"P5":
        bits = _pgm_bits(data, path)
    elif magic == b"P1":
        bits = _pbm_bits(data)
    else:
        raise UnsupportedFormatError(f"{path}: expected P5 or P1, got {magic!r}", 0)
    if bits.size == 0:
        raise FormatError(f"{path}: mask declares an empty raster", 2)
    mask = SegMask.from_bits(bits)
    if expected is not None and (mask.height, mask.width) != tuple(expected):
        raise MaskDimensionError(
            f"{path}: mask is {mask.height}x{mask.width}, expected "
            f"{expected[0]}x{expected[1]}"
        )
    return mask


def _pgm_bytes(pixels: np.ndarray) -> bytes:
    h, w = pixels.shape
    return f"P5\n{w} {h}\n255\n".encode("ascii") + pixels.astype(np.uint8).tobytes()


def write_mask(mask: SegMask, path: PathLike) -> Path:
    p = Path(path)
    p.parent.mkdir(parents=True, exist_ok=True)
    p.write_bytes(_pgm_bytes(np.where(mask.bits, 255, 0)))
    return p


# --- run records ---------------------------------------------------------------


def write_run(run: RunRecord, path: PathLike) -> Path:
    p = Path(path)
    p.parent.mkdir(parents=True, exist_ok=True)
    p.write_bytes(run.to_bytes())
    return p


def read_run(path: PathLike) -> RunRecord:
    return RunRecord.from_bytes(Path(path).read_bytes())


# --- heatmaps ------------------------------------------------------------------


def heatmap_pixels(magnitudes: np.ndarray) -> np.ndarray:
    """Per-map min -> 0, max -> 255; a constant map is mid-gray."""
    lo, hi = float(magnitudes.min()), float(magnitudes.max())
    if hi == lo:
        return np.full(magnitudes.shape, UNIFORM_GRAY, dtype=np.uint8)
    return np.rint((magnitudes - lo) / (hi - lo) * 255.0).astype(np.uint8)


def heatmap_csv(magnitudes: np.ndarray) -> str:
    return "".join(",".join(f"{v:.6g}" for v in row) + "\n" for row in magnitudes)


def export_heatmaps(run: RunRecord, directory: PathLike) -> list[Path]:
    """Write step_<k>.csv / step_<k>.pgm for every k >= 1 plus annotations.yaml."""

    out = Path(directory)
    out.mkdir(parents=True, exist_ok=True)
    written: list[Path] = []
    scored = run.entries[1:]
    total = sum(e.guidance_field.n for e in scored)
    annotations = []
    for entry in scored:
        grid = magnitude_grid(entry.guidance_field)
        csv_path = out / f"step_{entry.step}.csv"
        pgm_path = out / f"step_{entry.step}.pgm"
        csv_path.write_text(heatmap_csv(grid), encoding="utf-8")
        pgm_path.write_bytes(_pgm_bytes(heatmap_pixels(grid)))
        written += [csv_path, pgm_path]
        annotations.append(
            {
                "step": entry.step,
                "height": entry.guidance_field.height,
                "width": entry.guidance_field.width,
                "gamma": entry.gamma,
                "evenness": entry.evenness,
                "divergence": entry.divergence,
                "weight_share": entry.guidance_field.n / total,
            }
        )
    doc = {
        "scheme": run.scheme,
        "seed": run.seed,
        "condition": run.condition_id,
        "aggregate": run.aggregate.model_dump(),
        "steps": annotations,
    }
    ann_path = out / "annotations.yaml"
    ann_path.write_text(yaml.safe_dump(doc, sort_keys=False), encoding="utf-8")
    written.append(ann_path)
    logger.debug("Wrote %d heatmap files to %s", len(written), out)
    return written
