"""
Tests for configuration loading, validation and overrides.
"""

import json
import unittest

import pytest

from drive_context.config import (
    RunConfig,
    get_default_config,
    load_config,
    save_config,
    with_overrides,
)
from drive_context.errors import ConfigError


class TestDefaults(unittest.TestCase):
    def test_default_values(self):
        config = get_default_config()
        self.assertEqual(config.model.level_factors, (1, 2, 4))
        self.assertEqual(config.model.quantization.speed_step, 5.0)
        self.assertEqual(config.segment.min_len, 5)
        self.assertEqual(config.segment.theta, 0.02)
        self.assertEqual(config.describe.th_m, 200.0)
        self.assertEqual(config.evidence.min_support, 12)
        self.assertEqual(config.evaluate.thresholds_m[-1], 250.0)
        self.assertIsNone(config.timezone)

    def test_defaults_validate(self):
        self.assertEqual(RunConfig().validate(), RunConfig())

    def test_level_quantization_scales_every_step(self):
        grid = RunConfig().model.level_quantization(2)
        self.assertEqual(grid.steps(), (20.0, 4.0, 20.0))


def test_toml_sections_merge_over_defaults(tmp_path):
    path = tmp_path / "run.toml"
    path.write_text(
        'timezone = "America/New_York"\n'
        "seed = 7\n"
        "\n"
        "[segment]\n"
        "min_len = 3\n"
        "\n"
        "[model.quantization]\n"
        "speed_step = 10.0\n"
    )

    config = load_config(str(path))

    assert config.seed == 7
    assert config.segment.min_len == 3
    assert config.segment.theta == 0.02
    assert config.model.quantization.speed_step == 10.0
    assert config.model.quantization.accel_step == 1.0
    assert config.require_timezone().key == "America/New_York"


def test_json_config(tmp_path):
    path = tmp_path / "run.json"
    path.write_text(json.dumps({"evaluate": {"thresholds_m": [0, 100]}}))
    assert load_config(str(path)).evaluate.thresholds_m == (0, 100)


@pytest.mark.parametrize("body", [
    "[segment]\nmin_lenght = 3\n",
    "[model]\nlevel_factors = [1, 3, 4]\n",
    "[model]\nlevel_factors = [2, 4]\n",
    'timezone = "Mars/Olympus_Mons"\n',
    '[describe]\ntemporal_strategy = "vibes"\n',
    "jobs = 0\n",
    "[evaluate]\neta_from_annotations = \"yes\"\n",
    "this is not toml",
])
def test_invalid_config_is_rejected(tmp_path, body):
    path = tmp_path / "bad.toml"
    path.write_text(body)
    with pytest.raises(ConfigError):
        load_config(str(path))


def test_missing_config_file(tmp_path):
    with pytest.raises(ConfigError):
        load_config(str(tmp_path / "nope.toml"))


def test_missing_timezone_is_reported():
    with pytest.raises(ConfigError) as exc:
        RunConfig().require_timezone()
    assert "timezone" in str(exc.value)


class TestOverrides(unittest.TestCase):
    def test_dotted_keys_override_nested_values(self):
        config = with_overrides(RunConfig(), **{"segment.min_len": 3, "seed": 4})
        self.assertEqual((config.segment.min_len, config.seed), (3, 4))

    def test_none_values_are_skipped(self):
        config = with_overrides(RunConfig(), seed=None, **{"describe.th_m": None})
        self.assertEqual(config, RunConfig())

    def test_invalid_override_is_rejected(self):
        with self.assertRaises(ConfigError):
            with_overrides(RunConfig(), **{"segment.theta": -1.0})


def test_echo_leaves_out_jobs():
    echo = RunConfig(jobs=4).echo()
    assert "jobs" not in echo
    assert echo == RunConfig(jobs=1).echo()
    assert echo["segment"]["min_len"] == 5
    json.dumps(echo)


def test_saved_config_loads_back(tmp_path):
    config = with_overrides(RunConfig(), **{"segment.min_len": 4, "timezone": "UTC"})
    path = tmp_path / "saved.json"
    save_config(config, str(path))
    assert load_config(str(path)) == config
