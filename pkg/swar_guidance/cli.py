"""
Purpose: Handle only CLI argument parsing (no logging/config here).
"""

from __future__ import annotations

import argparse
from typing import Any, Optional, Sequence

SCHEMES = ["none", "cfg", "igg", "igg-window", "mixed"]

# flag dest -> config key understood by config_loader.apply_overrides
OVERRIDE_FLAGS = (
    "oracle",
    "dump",
    "mask",
    "scheme",
    "w",
    "w2",
    "schedule",
    "temperature",
    "top_k",
    "window",
    "seeds",
    "out",
    "jobs",
    "condition",
    "use_async",
)


def _experiment_flags() -> argparse.ArgumentParser:
    """Flags shared by every subcommand; unset flags leave the config value alone."""
    common = argparse.ArgumentParser(add_help=False, allow_abbrev=False)
    common.add_argument("--config", help="YAML or key=value config file")
    common.add_argument("--oracle", choices=["scene", "dump"], help="Logit source")
    common.add_argument("--dump", help="Logit dump (SWARLOG1) for --oracle dump")
    common.add_argument("--mask", help="Foreground mask (P5 PGM or P1 PBM)")
    common.add_argument("--scheme", choices=SCHEMES, help="Guidance scheme")
    common.add_argument("--w", type=float, help="Guidance weight w")
    common.add_argument("--w2", type=float, help="Secondary weight w' (mixed scheme)")
    common.add_argument(
        "--schedule", choices=["ratio", "fixed"], help="Guidance schedule kind"
    )
    common.add_argument("--temperature", type=float, help="Sampling temperature")
    common.add_argument("--top-k", type=int, dest="top_k", help="Top-k restriction")
    common.add_argument(
        "--window", type=int, help="Attention window side (igg-window); default sqrt(h*w)"
    )
    common.add_argument("--seeds", help="Seed count N (0..N-1) or list a,b,c")
    common.add_argument("--out", help="Output directory")
    common.add_argument("--jobs", type=int, help="Worker count (default: CPU count)")
    common.add_argument("--condition", type=int, help="Class id to condition on")
    common.add_argument(
        "--async",
        action="store_true",
        default=None,
        dest="use_async",
        help="Run seeds on an asyncio event loop",
    )
    return common


def build_parser() -> argparse.ArgumentParser:
    common = _experiment_flags()
    parser = argparse.ArgumentParser(
        prog="swar-guidance",
        allow_abbrev=False,
        description="Guidance schemes and diagnostics for scale-wise autoregressive sampling",
        epilog=(
            "Example: python main.py sample --oracle scene --scheme igg "
            "--w 1.85 --seeds 10 --out runs/igg"
        ),
    )
    sub = parser.add_subparsers(dest="command", required=True)

    sub.add_parser(
        "sample", parents=[common], allow_abbrev=False, help="Sample runs and write records + heatmaps"
    )

    compare = sub.add_parser(
        "compare", parents=[common], allow_abbrev=False, help="Compare two configurations over shared seeds"
    )
    compare.add_argument("config_a", help="First config file")
    compare.add_argument("config_b", help="Second config file")

    sub.add_parser(
        "analyze", parents=[common], allow_abbrev=False, help="Score a replayed logit dump against a mask"
    )

    sweep = sub.add_parser(
        "sweep", parents=[common], allow_abbrev=False, help="Evenness/divergence over a list of weights"
    )
    sweep.add_argument(
        "--weights", required=True, help="Comma-separated guidance weights, e.g. 0,1,2"
    )

    dump = sub.add_parser(
        "dump", parents=[common], allow_abbrev=False, help="Record the scene oracle's logits to a dump file"
    )
    dump.add_argument("path", help="Output SWARLOG1 file")
    return parser


def parse_args(argv: Optional[Sequence[str]] = None) -> argparse.Namespace:
    return build_parser().parse_args(argv)


def flag_overrides(args: argparse.Namespace) -> dict[str, Any]:
    """Flags the user actually set, keyed for apply_overrides."""
    return {
        name: getattr(args, name)
        for name in OVERRIDE_FLAGS
        if getattr(args, name, None) is not None
    }
