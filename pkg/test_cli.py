#!/usr/bin/env python3
"""
Tests for the wavelab command line: exit statuses and config handling
"""

import os
import sys

import pytest

sys.path.append(os.path.dirname(os.path.abspath(__file__)))

from wavelab.config import build_config
from wavelab_cli import build_parser, main


def test_default_fpu_run_passes(tmp_path):
    assert main(["fpu-test", "--out", str(tmp_path)]) == 0
    assert os.path.exists(tmp_path / "fpu-test" / "verdict.json")
    assert os.path.exists(tmp_path / "fpu-test" / "wavelab.log")


def test_config_file_with_failing_potential(tmp_path):
    path = build_config("fpu-test", {"model": {"potential": "u^3"}}).save(str(tmp_path / "cubic.ini"))
    assert main(["fpu-test", "--config", path, "--out", str(tmp_path)]) == 1


def test_kind_mismatch_is_an_error(tmp_path):
    path = build_config("semiham").save(str(tmp_path / "semiham.ini"))
    assert main(["fpu-test", "--config", path, "--out", str(tmp_path)]) == 2


def test_missing_config_file_is_an_error(tmp_path):
    assert main(["fpu-test", "--config", str(tmp_path / "nope.ini")]) == 2


def test_bad_flag_value_is_an_error(tmp_path):
    assert main(["fpu-test", "--out", str(tmp_path), "--jobs", "0"]) == 2


def test_unknown_subcommand():
    with pytest.raises(SystemExit):
        build_parser().parse_args(["fpu"])


if __name__ == "__main__":
    sys.exit(pytest.main([__file__, "-v"]))
