"""
Unit tests for configuration manager.
"""

import unittest
import tempfile
import json
import logging
from pathlib import Path
from unittest.mock import patch

import sys
sys.path.insert(0, str(Path(__file__).parent.parent.parent / "src"))

from core.exceptions import ConfigError
from utils.config_manager import ConfigManager


class TestConfigManager(unittest.TestCase):
    """Test cases for ConfigManager class."""

    def setUp(self):
        """Set up test fixtures."""
        self.temp_dir = Path(tempfile.mkdtemp())
        self.config_file = self.temp_dir / "config.json"

    def tearDown(self):
        """Clean up test fixtures."""
        import shutil
        shutil.rmtree(self.temp_dir, ignore_errors=True)

    def test_load_default_config(self):
        """Test loading default configuration when file doesn't exist."""
        config_manager = ConfigManager(Path("/non/existent/config.json"))

        self.assertEqual(config_manager.get("engine"), ConfigManager.DEFAULT_CONFIG["engine"])
        self.assertEqual(config_manager.get("max_j"), 1000)
        self.assertEqual(config_manager.get("formats"), ["json"])

    def test_missing_config_log_levels(self):
        """Test that a missing default file logs at DEBUG while a missing named file warns."""
        with patch.object(Path, 'cwd', return_value=self.temp_dir):
            with self.assertLogs('utils.config_manager', level='DEBUG') as logs:
                ConfigManager()
        self.assertTrue(any('not found' in r.getMessage() for r in logs.records))
        self.assertTrue(all(r.levelno < logging.WARNING for r in logs.records))

        with self.assertLogs('utils.config_manager', level='WARNING') as logs:
            ConfigManager(self.temp_dir / "absent.json")
        self.assertIn('not found', logs.output[0])

    def test_load_valid_json_config(self):
        """Test loading valid configuration file."""
        with open(self.config_file, 'w') as f:
            json.dump({"engine": "omp3d", "psnr": 40, "block": "4x4x3"}, f)

        config_manager = ConfigManager(self.config_file)

        self.assertEqual(config_manager.get("engine"), "omp3d")
        self.assertEqual(config_manager.get("psnr"), 40)
        # Defaults are merged
        self.assertEqual(config_manager.get("domain"), ConfigManager.DEFAULT_CONFIG["domain"])

    def test_load_yaml_config_with_dashes(self):
        """Test key-value YAML files; dashed keys map to underscores."""
        path = self.temp_dir / "spmp3d.yaml"
        path.write_text("max-j: 50\nprojection-period: 4\nsnr: 25\n")

        config_manager = ConfigManager(path)

        self.assertEqual(config_manager.get("max_j"), 50)
        self.assertEqual(config_manager.get("projection_period"), 4)

    def test_load_invalid_json(self):
        """Test handling of invalid JSON configuration."""
        with open(self.config_file, 'w') as f:
            f.write("{ invalid json }")

        # Should fall back to defaults
        config_manager = ConfigManager(self.config_file)

        self.assertEqual(config_manager.get("engine"), ConfigManager.DEFAULT_CONFIG["engine"])

    def test_environment_overrides(self):
        """Test SPMP3D_* environment variables over the defaults."""
        with patch.dict('os.environ', {'SPMP3D_THREADS': '3', 'SPMP3D_LOG_LEVEL': 'DEBUG'}):
            config_manager = ConfigManager(Path("/non/existent/config.json"))

        self.assertEqual(config_manager.get("threads"), 3)
        self.assertEqual(config_manager.get("log_level"), "DEBUG")

    def test_update_skips_none(self):
        """Test that unset command line values keep the file values."""
        config_manager = ConfigManager(Path("/non/existent/config.json"))
        config_manager.update({"engine": "mp3d", "domain": None})

        self.assertEqual(config_manager.get("engine"), "mp3d")
        self.assertEqual(config_manager.get("domain"), "wd")

    def test_save_config(self):
        """Test saving configuration."""
        config_manager = ConfigManager(self.config_file)
        config_manager.set("engine", "omp3d")
        config_manager.save()

        with open(self.config_file, 'r') as f:
            saved_config = json.load(f)

        self.assertEqual(saved_config["engine"], "omp3d")

    def test_run_config(self):
        """Test conversion into a validated RunConfig."""
        config_manager = ConfigManager(Path("/non/existent/config.json"))
        config_manager.update({"psnr": 45, "block": "8x8x3", "dict": "mixed-wd,mixed-wd,thin3d", "threads": 2})

        run = config_manager.to_run_config()

        self.assertEqual(run.target.kind, "psnr")
        self.assertEqual(run.target.value, 45.0)
        self.assertEqual(run.dictionaries, ("mixed-wd", "mixed-wd", "thin3d"))
        self.assertEqual(run.partition_spec(3).extents, (8, 8, 3))
        self.assertEqual(run.pursuit_config(2.0).rho, 2.0)
        self.assertEqual(run.threads, 2)

    def test_default_partition(self):
        """Test the default block for 3D engines and the 2D baseline."""
        config_manager = ConfigManager(Path("/non/existent/config.json"))
        config_manager.update({"rho": 1.0})
        self.assertEqual(config_manager.to_run_config().partition_spec(3).extents, (8, 8, 3))
        self.assertEqual(config_manager.to_run_config().partition_spec(31).extents, (8, 8, 8))
        self.assertIsNone(config_manager.to_run_config().dictionaries)

        config_manager.set("engine", "omp2d")
        self.assertEqual(config_manager.to_run_config().partition_spec(3).extents, (8, 8, 1))

    def test_validate_config(self):
        """Test configuration validation."""
        config_manager = ConfigManager(Path("/non/existent/config.json"))

        # No quality target
        self.assertFalse(config_manager.validate())

        config_manager.set("psnr", 40)
        self.assertTrue(config_manager.validate())

        # Two quality targets
        config_manager.set("snr", 20)
        self.assertFalse(config_manager.validate())
        config_manager.set("snr", None)

        for key, value in (("engine", "ksvd"), ("dict", "haar"), ("max_j", 0), ("formats", ["pdf"]),
                           ("threads", -1), ("block", "8x8x3")):
            saved = config_manager.get(key)
            config_manager.set(key, value)
            if key == "block":
                config_manager.set("engine", "omp2d")
            self.assertFalse(config_manager.validate(), key)
            config_manager.set(key, saved)
            config_manager.set("engine", "spmp3d")

    def test_parse_dictionary_names(self):
        """Test single and per-axis dictionary names."""
        self.assertEqual(ConfigManager.parse_dictionary_names("thin3d"), ("thin3d",) * 3)
        self.assertIsNone(ConfigManager.parse_dictionary_names(None))
        with self.assertRaises(ConfigError):
            ConfigManager.parse_dictionary_names("thin3d,dirac")


if __name__ == '__main__':
    unittest.main()
