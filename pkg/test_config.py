#!/usr/bin/env python3
"""
Tests for experiment configs: INI round trips, default merging, environment
defaults and field-level validation
"""

import importlib.util
import os
import sys

import dotenv
import pytest

sys.path.append(os.path.dirname(os.path.abspath(__file__)))

from wavelab.config import (KINDS, ExperimentConfig, build_config, parse_floats, parse_params, split_list,
                            validate_config)
from wavelab.errors import ConfigError


@pytest.mark.parametrize("kind", KINDS)
def test_default_configs_round_trip(kind, tmp_path):
    config = build_config(kind, out_dir=str(tmp_path))
    text = config.to_text()
    again = ExperimentConfig.parse(text)
    assert again.to_text() == text
    assert again.sections == config.sections


def test_parse_merges_defaults():
    config = ExperimentConfig.parse("[experiment]\nkind = fpu-test\n\n[model]\npotential = u^3\n")
    assert config.get("model", "potential") == "u^3"
    assert config.value("model", "samples") == 200
    assert config.seed == 0
    assert config.tol == 1e-8


def test_seed_and_tolerance_are_always_written():
    text = ExperimentConfig.parse("[experiment]\nkind = semiham\n").to_text()
    assert "seed = 0" in text
    assert "tol = 1e-08" in text
    assert "exponent_tol = 0.05" in text


def test_unknown_kind_suggests_a_name():
    with pytest.raises(ConfigError) as err:
        ExperimentConfig.parse("[experiment]\nkind = fpu_test\n")
    assert "fpu-test" in str(err.value)
    assert err.value.code == "CONFIG_INVALID"


def test_problems_are_collected_together():
    text = "[experiment]\nkind = fpu-test\nseed = 3\n\n[model]\npotentail = u^3\n\n[grid]\nN = 4\n"
    with pytest.raises(ConfigError) as err:
        ExperimentConfig.parse(text)
    fields = err.value.fields
    assert "model.potentail" in fields and "potential" in fields["model.potentail"]
    assert "grid" in fields


def test_bad_values_are_reported_per_field():
    with pytest.raises(ConfigError) as err:
        build_config("hodograph", {"grid": {"N": "many", "guess": "1.0"}})
    assert set(err.value.fields) == {"grid.N", "grid.guess"}


def test_empty_ladder_is_rejected():
    with pytest.raises(ConfigError) as err:
        build_config("universality", {"ladder": {"epsilons": ""}})
    assert err.value.code == "CONFIG_INVALID"
    assert err.value.fields["ladder.epsilons"] == "empty epsilon ladder"


def test_short_ladder_is_rejected():
    with pytest.raises(ConfigError) as err:
        build_config("universality", {"ladder": {"epsilons": "0.1, 0.01"}})
    assert "three" in err.value.fields["ladder.epsilons"]


def test_global_values_are_checked():
    config = build_config("fpu-test")
    with pytest.raises(ConfigError) as err:
        config.with_overrides(jobs=0, tol=-1.0)
    assert set(err.value.fields) == {"experiment.jobs", "experiment.tol"}


def test_environment_defaults_and_precedence(monkeypatch, tmp_path):
    monkeypatch.setenv("WAVELAB_OUT", str(tmp_path))
    monkeypatch.setenv("WAVELAB_JOBS", "3")
    config = build_config("semiham")
    assert config.out_dir == str(tmp_path)
    assert config.jobs == 3
    assert ExperimentConfig.parse("[experiment]\nkind = semiham\njobs = 2\n").jobs == 2
    assert config.with_overrides(jobs=1).jobs == 1


def test_bad_environment_value(monkeypatch):
    monkeypatch.setenv("WAVELAB_JOBS", "lots")
    with pytest.raises(ConfigError):
        build_config("semiham")


def fresh_import(name: str, path: str):
    """Execute a module from its file without touching sys.modules."""
    module_spec = importlib.util.spec_from_file_location(name, path)
    module = importlib.util.module_from_spec(module_spec)
    module_spec.loader.exec_module(module)
    return module


def test_only_the_cli_loads_dotenv(monkeypatch):
    calls = []
    monkeypatch.setattr(dotenv, "load_dotenv", lambda *args, **kwargs: calls.append(args) or True)
    root = os.path.dirname(os.path.abspath(__file__))

    fresh_import("fresh_wavelab_config", os.path.join(root, "wavelab", "config.py"))
    assert calls == []
    fresh_import("fresh_wavelab_cli", os.path.join(root, "wavelab_cli.py"))
    assert len(calls) == 1


def test_missing_experiment_section():
    with pytest.raises(ConfigError) as err:
        ExperimentConfig.parse("[model]\npotential = u^3\n")
    assert "experiment" in err.value.fields


def test_save_and_load(tmp_path):
    config = build_config("painleve", {"painleve": {"mode": "tritronquee"}}, seed=5, out_dir=str(tmp_path))
    path = config.save(str(tmp_path / "run.ini"))
    loaded = ExperimentConfig.load(path)
    assert loaded.seed == 5
    assert loaded.get("painleve", "mode") == "tritronquee"
    with pytest.raises(ConfigError):
        ExperimentConfig.load(str(tmp_path / "missing.ini"))


def test_validate_rejects_unknown_painleve_mode():
    config = ExperimentConfig("painleve", {"painleve": {"mode": "p2"}})
    with pytest.raises(ConfigError) as err:
        validate_config(config)
    assert "painleve.mode" in err.value.fields


def test_value_helpers():
    assert parse_floats("0.1, 0.05,") == [0.1, 0.05]
    assert parse_floats("") == []
    assert parse_params("kappa=3, a = 0.5") == {"kappa": 3.0, "a": 0.5}
    with pytest.raises(ValueError):
        parse_params("kappa")
    assert split_list("tricomi(4,0); tricomi(3,1) ;") == ["tricomi(4,0)", "tricomi(3,1)"]


if __name__ == "__main__":
    sys.exit(pytest.main([__file__, "-v"]))
