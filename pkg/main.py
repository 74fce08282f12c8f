"""
Purpose: Single entrypoint. Parses the CLI, loads config, sets up logging and runs a command.

Exit codes: 0 success, 2 config error, 3 format error,
4 every run skipped its divergence (degenerate mask), 1 anything else.
"""

from __future__ import annotations

import logging
import sys
from pathlib import Path
from typing import Optional, Sequence

from swar_guidance.cli import flag_overrides, parse_args
from swar_guidance.commands import (
    cmd_analyze,
    cmd_compare,
    cmd_dump,
    cmd_sample,
    cmd_sweep,
    parse_weights,
)
from swar_guidance.config_loader import AppConfig, apply_overrides, load_config
from swar_guidance.exceptions import (
    ConfigValidationError,
    DegenerateMaskError,
    FormatError,
    GuidanceError,
)
from swar_guidance.logger import get_logger, level_from_name

EXIT_OK = 0
EXIT_FAILURE = 1
EXIT_CONFIG = 2
EXIT_FORMAT = 3
EXIT_DEGENERATE = 4


def setup_logging(logging_cfg) -> None:
    """Initializes the primary application logger based on configuration."""
    level = level_from_name(logging_cfg.level)
    get_logger(
        name="swar_guidance",
        level=level,
        logfile=logging_cfg.file,
        max_bytes=logging_cfg.max_bytes,
        backup_count=logging_cfg.backup_count,
    )
    logging.getLogger().setLevel(level)


def _resolve(path: Optional[str], overrides: dict) -> AppConfig:
    """Defaults < config file < flags."""
    cfg = load_config(path) if path else AppConfig()
    return apply_overrides(cfg, overrides)


def dispatch(args, overrides: dict) -> int:
    if args.command == "compare":
        cfg_a = _resolve(args.config_a, overrides)
        cfg_b = _resolve(args.config_b, overrides)
        setup_logging(cfg_a.logging)
        result = cmd_compare(cfg_a, cfg_b)
    else:
        cfg = _resolve(args.config, overrides)
        setup_logging(cfg.logging)
        if args.command == "sample":
            result = cmd_sample(cfg)
        elif args.command == "analyze":
            result = cmd_analyze(cfg)
        elif args.command == "sweep":
            result = cmd_sweep(cfg, parse_weights(args.weights))
        else:
            result = cmd_dump(cfg, args.path)
    print(result.text)
    if result.all_skipped:
        logging.getLogger("swar_guidance").error(
            "Divergence skipped for every run (degenerate mask)"
        )
        return EXIT_DEGENERATE
    return EXIT_OK


def _error_log(fallback: logging.Logger) -> logging.Logger:
    """The application logger once setup_logging ran, else the pre-config one."""
    log = logging.getLogger("swar_guidance")
    return log if log.handlers else fallback


def main(argv: Optional[Sequence[str]] = None) -> int:
    # Use a basic logger for CLI/Config errors before main logging is set up
    temp_logger = logging.getLogger("pre_config")
    temp_logger.setLevel(logging.INFO)
    if not temp_logger.hasHandlers():
        temp_logger.addHandler(logging.StreamHandler(sys.stderr))

    args = parse_args(argv)

    try:
        return dispatch(args, flag_overrides(args))
    except ConfigValidationError as e:
        _error_log(temp_logger).error("Execution failed: %s", e)
        return EXIT_CONFIG
    except FormatError as e:
        _error_log(temp_logger).error("Execution failed: %s", e)
        return EXIT_FORMAT
    except DegenerateMaskError as e:
        _error_log(temp_logger).error("Execution failed: %s", e)
        return EXIT_DEGENERATE
    except GuidanceError as e:
        _error_log(temp_logger).error("Execution failed: %s", e)
        return EXIT_FAILURE
    except Exception as e:
        _error_log(temp_logger).exception("Unexpected error: %s", e)
        return EXIT_FAILURE


if __name__ == "__main__":
    # Ensure the current directory is in sys.path for package imports
    if str(Path(__file__).parent) not in sys.path:
        sys.path.insert(0, str(Path(__file__).parent))

    sys.exit(main())
