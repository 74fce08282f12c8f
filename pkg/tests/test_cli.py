"""
Tests for CLI argument parsing in cli.py
"""

import sys

import pytest

from swar_guidance.cli import flag_overrides, parse_args


def test_sample_flags(monkeypatch):
    monkeypatch.setattr(
        sys,
        "argv",
        ["script", "sample", "--config", "config.yaml", "--scheme", "igg", "--w", "1.85", "--seeds", "10"],
    )
    args = parse_args()
    assert args.command == "sample"
    assert args.config == "config.yaml"
    assert args.scheme == "igg"
    assert args.w == 1.85
    assert args.seeds == "10"


def test_unset_flags_are_not_overrides():
    args = parse_args(["sample", "--top-k", "5", "--out", "runs/x"])
    assert flag_overrides(args) == {"top_k": 5, "out": "runs/x"}


def test_windowed_scheme_spelling():
    args = parse_args(["sample", "--scheme", "igg-window", "--window", "3"])
    assert flag_overrides(args) == {"scheme": "igg-window", "window": 3}


def test_async_flag():
    assert parse_args(["sample", "--async"]).use_async is True
    assert flag_overrides(parse_args(["sample", "--async"])) == {"use_async": True}
    assert "use_async" not in flag_overrides(parse_args(["sample"]))


def test_compare_takes_two_configs():
    args = parse_args(["compare", "a.yaml", "b.cfg", "--seeds", "50"])
    assert (args.config_a, args.config_b) == ("a.yaml", "b.cfg")
    assert flag_overrides(args) == {"seeds": "50"}


def test_sweep_requires_weights(capsys):
    with pytest.raises(SystemExit) as excinfo:
        parse_args(["sweep"])
    assert excinfo.value.code == 2
    assert parse_args(["sweep", "--weights", "0,1,2"]).weights == "0,1,2"


def test_dump_path():
    args = parse_args(["dump", "out/scene.swarlog", "--condition", "2"])
    assert args.path == "out/scene.swarlog"
    assert flag_overrides(args) == {"condition": 2}


@pytest.mark.parametrize(
    "argv",
    [
        [],
        ["render"],
        ["sample", "--scheme", "pag"],
        ["sample", "--oracle", "model"],
        ["sample", "--temp", "0.5"],
        ["sample", "--bogus"],
        ["sample", "--w", "strong"],
    ],
)
def test_invalid_arguments_exit(argv, capsys):
    with pytest.raises(SystemExit) as excinfo:
        parse_args(argv)
    assert excinfo.value.code == 2


@pytest.mark.parametrize("command", ["sample", "analyze", "compare", "sweep", "dump"])
def test_help_documents_every_flag(command, capsys):
    with pytest.raises(SystemExit) as excinfo:
        parse_args([command, "--help"])
    assert excinfo.value.code == 0
    out = capsys.readouterr().out
    for flag in (
        "--config", "--oracle", "--dump", "--mask", "--scheme", "--w", "--w2",
        "--schedule", "--temperature", "--top-k", "--window", "--seeds", "--out",
        "--jobs", "--condition", "--async",
    ):
        assert flag in out
