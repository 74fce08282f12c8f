"""
swar_guidance package
Version and package exports.

Guidance schemes (CFG, attention-weighted guidance and their mixture) and
evenness/divergence diagnostics for scale-wise autoregressive token sampling.
"""

from . import (
    cli,
    commands,
    config_loader,
    exceptions,
    formats,
    guidance,
    logger,
    metrics,
    oracles,
    runner,
    sampler,
    tensors,
    utils,
)

__all__ = [
    "cli",
    "commands",
    "config_loader",
    "exceptions",
    "formats",
    "guidance",
    "logger",
    "metrics",
    "oracles",
    "runner",
    "sampler",
    "tensors",
    "utils",
]
__version__ = "0.1.0"
