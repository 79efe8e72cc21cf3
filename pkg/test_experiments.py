#!/usr/bin/env python3
"""
Tests for the experiment runner: run directories, verdicts, manifests and exit
statuses for each experiment kind
"""

import json
import os
import sys
import time

import pytest

sys.path.append(os.path.dirname(os.path.abspath(__file__)))

from wavelab.config import ExperimentConfig, build_config
from wavelab.experiments import EXIT_ERROR, EXIT_FAIL, EXIT_PASS, TIMINGS_FILE, run_directory, run_experiment


def read_json(run_dir, name):
    with open(os.path.join(run_dir, name), encoding="utf-8") as f:
        return json.load(f)


def test_fpu_exponential_potential_passes(tmp_path):
    result = run_experiment(build_config("fpu-test", out_dir=str(tmp_path)))
    assert result.exit_code == EXIT_PASS
    assert result.run_dir == str(tmp_path / "fpu-test")

    verdict = read_json(result.run_dir, "verdict.json")
    assert verdict["verdict"] == "PASS"
    assert verdict["pass"] is True
    manifest = read_json(result.run_dir, "manifest.json")
    assert manifest["pass"] is True
    assert manifest["error"] is None
    assert {"numpy", "scipy", "sympy", "matplotlib", "wavelab"} <= set(manifest["versions"])
    assert "timings" not in manifest
    with open(os.path.join(result.run_dir, TIMINGS_FILE), encoding="utf-8") as f:
        assert f.read().splitlines()[1].startswith("seconds=")
    assert manifest["config"]["kind"] == "fpu-test"
    assert os.path.exists(os.path.join(result.run_dir, "config.ini"))


def test_fpu_cubic_potential_fails(tmp_path):
    config = build_config("fpu-test", {"model": {"potential": "u^3"}}, out_dir=str(tmp_path))
    result = run_experiment(config)
    assert result.exit_code == EXIT_FAIL
    assert result.error is None
    verdict = read_json(result.run_dir, "verdict.json")
    assert verdict["verdict"] == "FAIL"
    assert verdict["residual"] == pytest.approx(36.0)


def test_empty_ladder_is_a_config_error(tmp_path):
    config = ExperimentConfig("universality", {"ladder": {"epsilons": ""}}, out_dir=str(tmp_path))
    result = run_experiment(config)
    assert result.exit_code == EXIT_ERROR
    assert result.error["code"] == "CONFIG_INVALID"
    assert "ladder.epsilons" in result.error["fields"]
    manifest = read_json(run_directory(config), "manifest.json")
    assert manifest["error"]["code"] == "CONFIG_INVALID"
    assert manifest["pass"] is False
    assert not os.path.exists(os.path.join(run_directory(config), "verdict.json"))


def test_debug_log_gets_the_manifest(tmp_path, monkeypatch):
    debug = tmp_path / "debug.log"
    monkeypatch.setenv("WAVELAB_DEBUG_LOG", str(debug))
    run_experiment(build_config("fpu-test", out_dir=str(tmp_path)))
    assert "fpu-test manifest" in debug.read_text(encoding="utf-8")


def result_files(run_dir):
    """Every CSV and JSON file under a run directory, keyed by relative path"""
    found = {}
    for root, _, names in os.walk(run_dir):
        for name in names:
            if name.endswith((".csv", ".json")):
                path = os.path.join(root, name)
                with open(path, "rb") as f:
                    found[os.path.relpath(path, run_dir)] = f.read()
    return found


@pytest.mark.parametrize("kind", ["hodograph", "fpu-test"])
def test_same_config_gives_identical_result_files(tmp_path, kind):
    first = result_files(run_experiment(build_config(kind, out_dir=str(tmp_path))).run_dir)
    time.sleep(1.1)
    second = result_files(run_experiment(build_config(kind, out_dir=str(tmp_path))).run_dir)
    assert "manifest.json" in first and "verdict.json" in first
    assert sorted(first) == sorted(second)
    assert [name for name in first if first[name] != second[name]] == []


def test_hodograph_run(tmp_path):
    result = run_experiment(build_config("hodograph", out_dir=str(tmp_path)))
    assert result.exit_code == EXIT_PASS
    with open(os.path.join(result.run_dir, "hodograph.csv"), encoding="utf-8") as f:
        lines = f.read().splitlines()
    assert lines[0].split(",") == ["x", "u", "v", "residual"]
    assert len(lines) == 42
    assert result.verdict["max_residual"] < 1e-8


def test_semiham_run(tmp_path):
    result = run_experiment(build_config("semiham", out_dir=str(tmp_path)))
    assert result.exit_code == EXIT_PASS
    assert result.verdict["normal_form_exponent"] == pytest.approx(1 / 3, abs=0.05)
    payload = read_json(result.run_dir, "semiham.json")
    assert payload["normal_form"]["catastrophe"]["breaking"] == 3


def test_critical_run(tmp_path):
    result = run_experiment(build_config("critical", out_dir=str(tmp_path)))
    assert result.exit_code == EXIT_PASS
    payload = read_json(result.run_dir, "critical.json")
    assert payload["critical_point"]["type"] == "I"
    assert payload["shape_fit"]["expected"] == pytest.approx(1 / 3)


def test_dop_check_run(tmp_path):
    result = run_experiment(build_config("dop-check", out_dir=str(tmp_path)))
    assert result.exit_code == EXIT_PASS
    payload = read_json(result.run_dir, "dop_check.json")
    assert len(payload["pairs"]) == 1


def test_dop_check_needs_two_densities(tmp_path):
    config = build_config("dop-check", {"system": {"densities": "tricomi(4,0)"}}, out_dir=str(tmp_path))
    result = run_experiment(config)
    assert result.exit_code == EXIT_ERROR
    assert "system.densities" in result.error["fields"]


def test_p12_run_writes_plots(tmp_path):
    config = build_config("painleve", {"painleve": {"T_values": "-3"}}, out_dir=str(tmp_path))
    result = run_experiment(config)
    assert result.exit_code == EXIT_PASS
    plots = os.path.join(result.run_dir, "plots")
    assert os.path.exists(os.path.join(plots, "p12.svg"))
    assert os.path.exists(os.path.join(plots, "p12_T-3.000.dat"))
    assert os.path.exists(os.path.join(result.run_dir, "p12_T-3.000.csv"))
    assert "plots/p12.svg" in read_json(result.run_dir, "manifest.json")["files"]


def test_simulate_run_saves_trajectory(tmp_path):
    result = run_experiment(build_config("simulate", out_dir=str(tmp_path)))
    assert result.error is None
    assert os.path.isdir(os.path.join(result.run_dir, "trajectory"))
    assert result.verdict["drifts"]["mass"] < 1e-10
    assert result.verdict["t_end"] == pytest.approx(1.0)


@pytest.mark.slow
def test_tritronquee_run_with_pole_scan(tmp_path):
    config = build_config("painleve", {"painleve": {"mode": "tritronquee"}}, out_dir=str(tmp_path))
    result = run_experiment(config)
    assert result.exit_code == EXIT_PASS
    assert result.verdict["checks"]["sector_pole_free"]
    assert os.path.exists(os.path.join(result.run_dir, "plots", "poles.svg"))


@pytest.mark.slow
def test_universality_run(tmp_path):
    result = run_experiment(build_config("universality", out_dir=str(tmp_path)))
    assert result.error is None
    payload = read_json(result.run_dir, "universality.json")
    assert payload["critical_point"]["type"] == "I"
    assert payload["verdict"]["expected"] == {"amplitude": 2 / 7, "width": 6 / 7}
    assert os.path.exists(os.path.join(result.run_dir, "ladder.csv"))
    assert result.exit_code == EXIT_PASS


if __name__ == "__main__":
    sys.exit(pytest.main([__file__, "-v"]))
