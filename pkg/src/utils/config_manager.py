"""
Configuration management module.
"""

import json
import logging
import os
from dataclasses import dataclass
from pathlib import Path
from typing import Any, Dict, Optional, Tuple

import yaml
from dotenv import load_dotenv

from core.approximator import DEFAULT_CALIBRATION_TOLERANCE, DOMAINS, ENGINE_NAMES, QualityTarget
from core.dictionary import DICTIONARY_NAMES
from core.exceptions import ConfigError
from core.exporter import EXPORT_FORMATS
from core.partition import PartitionSpec
from core.pursuit import PursuitConfig

YAML_SUFFIXES = ('.yaml', '.yml', '.cfg', '.conf')
ENV_OVERRIDES = {
    'SPMP3D_THREADS': ('threads', int),
    'SPMP3D_LOG_LEVEL': ('log_level', str),
}


@dataclass(frozen=True)
class RunConfig:
    """Validated settings of one approximate/reconstruct/evaluate run."""

    input: Optional[str]
    output_dir: str
    output_name: Optional[str]
    engine: str
    domain: str
    block: Optional[str]
    dictionaries: Optional[Tuple[str, str, str]]
    target: QualityTarget
    epsilon: Optional[float]
    max_j: int
    max_atoms: Optional[int]
    threads: int
    imax: Optional[float]
    seed: int
    levels: Optional[int]
    projection_period: int
    strict: bool
    formats: Tuple[str, ...]
    kq_png: bool
    quiet: bool
    calibrate: bool = False
    calibration_tolerance: float = DEFAULT_CALIBRATION_TOLERANCE

    def partition_spec(self, nz: int) -> PartitionSpec:
        """Configured block, or 8 x 8 x min(8, nz) (8 x 8 x 1 for the 2D baseline)."""
        if self.block:
            return PartitionSpec.parse(self.block)
        return PartitionSpec(8, 8, 1 if self.engine == 'omp2d' else min(8, nz))

    def pursuit_config(self, rho: float) -> PursuitConfig:
        return PursuitConfig(
            rho=rho,
            epsilon=self.epsilon,
            max_atoms=self.max_atoms,
            max_j=self.max_j,
            projection_period=self.projection_period,
        )


class ConfigManager:
    """Manage application configuration.

    Precedence, lowest first: DEFAULT_CONFIG, environment (``.env`` is
    loaded), the config file, then values set from the command line.
    """

    DEFAULT_CONFIG = {
        "input": None,
        "output_dir": "output",
        "output_name": None,
        "engine": "spmp3d",
        "domain": "wd",
        "block": None,
        "dict": None,
        "psnr": None,
        "snr": None,
        "rho": None,
        "epsilon": None,
        "max_j": 1000,
        "max_atoms": None,
        "threads": None,
        "imax": None,
        "seed": 0,
        "levels": None,
        "projection_period": 1,
        "strict": False,
        "formats": ["json"],
        "kq_png": False,
        "quiet": False,
        "calibrate": False,
        "calibration_tolerance": DEFAULT_CALIBRATION_TOLERANCE,
        "log_level": "INFO",
        "log_dir": None,
    }

    def __init__(self, config_path: Optional[Path] = None):
        """Initialize configuration manager.

        Args:
            config_path: Path to a .json or key-value (.yaml/.yml/.cfg/.conf) file
        """
        self.logger = logging.getLogger(__name__)
        load_dotenv()
        self.explicit_path = bool(config_path)
        self.config_path = self._determine_config_path(config_path)
        self.config = self._load_config()

    def _determine_config_path(self, config_path: Optional[Path]) -> Path:
        if config_path:
            return Path(config_path)
        return Path.cwd() / "spmp3d.yaml"

    def _defaults(self) -> Dict[str, Any]:
        config = self.DEFAULT_CONFIG.copy()
        config['formats'] = list(config['formats'])
        for variable, (key, cast) in ENV_OVERRIDES.items():
            value = os.environ.get(variable)
            if value:
                try:
                    config[key] = cast(value)
                except ValueError:
                    self.logger.warning(f"Ignoring {variable}={value!r}: not a valid {cast.__name__}")
        return config

    def _load_config(self) -> Dict[str, Any]:
        """Load configuration from file."""
        config = self._defaults()
        if not self.config_path.exists():
            # spmp3d.yaml in the working directory is optional.
            log = self.logger.warning if self.explicit_path else self.logger.debug
            log(f"Config file not found at {self.config_path}, using defaults")
            return config

        try:
            with open(self.config_path, 'r', encoding='utf-8') as f:
                if self.config_path.suffix.lower() in YAML_SUFFIXES:
                    user_config = yaml.safe_load(f) or {}
                else:
                    user_config = json.load(f)
            if not isinstance(user_config, dict):
                raise ValueError("top level must be a mapping")

            for key, value in user_config.items():
                config[key.replace('-', '_')] = value
            return config

        except (json.JSONDecodeError, yaml.YAMLError, ValueError) as e:
            self.logger.error(f"Invalid config file {self.config_path}: {e}")
            return self._defaults()
        except Exception as e:
            self.logger.error(f"Error loading config: {e}")
            return self._defaults()

    def get(self, key: str, default: Any = None) -> Any:
        return self.config.get(key, default)

    def set(self, key: str, value: Any):
        self.config[key.replace('-', '_')] = value

    def update(self, values: Dict[str, Any]):
        """Set every key whose value is not None."""
        for key, value in values.items():
            if value is not None:
                self.set(key, value)

    def save(self):
        """Save configuration to file."""
        try:
            with open(self.config_path, 'w', encoding='utf-8') as f:
                if self.config_path.suffix.lower() in YAML_SUFFIXES:
                    yaml.safe_dump(self.config, f, default_flow_style=False, sort_keys=False)
                else:
                    json.dump(self.config, f, ensure_ascii=False, indent=2)
            self.logger.info(f"Configuration saved to {self.config_path}")
        except Exception as e:
            self.logger.error(f"Error saving configuration: {e}")

    def validate(self) -> bool:
        """Validate configuration.

        Returns:
            True if configuration is valid
        """
        try:
            self.to_run_config()
        except ConfigError as e:
            self.logger.error(str(e))
            return False
        return True

    def quality_target(self) -> QualityTarget:
        given = [(kind, self.config.get(kind)) for kind in ('psnr', 'snr', 'rho')
                 if self.config.get(kind) is not None]
        if len(given) != 1:
            raise ConfigError(
                f"Exactly one quality target (psnr, snr or rho) must be set, got "
                f"{', '.join(k for k, _ in given) or 'none'}"
            )
        kind, value = given[0]
        return QualityTarget(kind, float(value))

    def dictionary_names(self) -> Optional[Tuple[str, str, str]]:
        """Per-axis names from ``dict``; None keeps the engine defaults."""
        return self.parse_dictionary_names(self.config.get('dict'))

    @staticmethod
    def parse_dictionary_names(value: Any) -> Optional[Tuple[str, str, str]]:
        """One name for every axis (thin3d) or three comma-separated names (mixed-pd,mixed-pd,dirac)."""
        if value in (None, ''):
            return None
        names = [n.strip() for n in value.split(',')] if isinstance(value, str) else list(value)
        if len(names) == 1:
            names = names * 3
        if len(names) != 3:
            raise ConfigError(f"Give one dictionary or one per axis, got {value!r}")
        for name in names:
            if name not in DICTIONARY_NAMES:
                raise ConfigError(f"Unknown dictionary '{name}', expected one of {', '.join(DICTIONARY_NAMES)}")
        return tuple(names)

    def to_run_config(self) -> RunConfig:
        """Validate the merged settings into a RunConfig."""
        c = self.config
        engine, domain = c.get('engine'), c.get('domain')
        if engine not in ENGINE_NAMES:
            raise ConfigError(f"Unknown engine '{engine}', expected one of {', '.join(ENGINE_NAMES)}")
        if domain not in DOMAINS:
            raise ConfigError(f"Unknown domain '{domain}', expected one of {', '.join(DOMAINS)}")
        if c.get('block'):
            spec = PartitionSpec.parse(c['block'])
            if engine == 'omp2d' and spec.bz != 1:
                raise ConfigError(f"The omp2d engine needs 2D blocks (bz = 1), got {spec}")

        formats = c.get('formats') or []
        formats = [formats] if isinstance(formats, str) else list(formats)
        for fmt in formats:
            if fmt not in EXPORT_FORMATS:
                raise ConfigError(f"Unknown report format '{fmt}', expected one of {', '.join(EXPORT_FORMATS)}")

        threads = c.get('threads') or os.cpu_count() or 1
        epsilon = c.get('epsilon')
        try:
            run = RunConfig(
                input=c.get('input'),
                output_dir=str(Path(c.get('output_dir') or '.').expanduser()),
                output_name=c.get('output_name'),
                engine=engine,
                domain=domain,
                block=c.get('block'),
                dictionaries=self.dictionary_names(),
                target=self.quality_target(),
                epsilon=float(epsilon) if epsilon is not None else None,
                max_j=int(c.get('max_j')),
                max_atoms=int(c['max_atoms']) if c.get('max_atoms') is not None else None,
                threads=int(threads),
                imax=float(c['imax']) if c.get('imax') is not None else None,
                seed=int(c.get('seed') or 0),
                levels=int(c['levels']) if c.get('levels') is not None else None,
                projection_period=int(c.get('projection_period') or 1),
                strict=bool(c.get('strict')),
                formats=tuple(formats),
                kq_png=bool(c.get('kq_png')),
                quiet=bool(c.get('quiet')),
                calibrate=bool(c.get('calibrate')),
                calibration_tolerance=float(c.get('calibration_tolerance') or DEFAULT_CALIBRATION_TOLERANCE),
            )
        except (TypeError, ValueError) as e:
            if isinstance(e, ConfigError):
                raise
            raise ConfigError(f"Invalid configuration value: {e}")

        if run.threads < 1:
            raise ConfigError(f"threads must be >= 1, got {run.threads}")
        if run.imax is not None and run.imax <= 0:
            raise ConfigError(f"imax must be positive, got {run.imax}")
        if run.levels is not None and run.levels < 1:
            raise ConfigError(f"levels must be >= 1, got {run.levels}")
        if run.calibration_tolerance <= 0:
            raise ConfigError(f"calibration_tolerance must be > 0 dB, got {run.calibration_tolerance}")
        if run.calibrate and run.target.kind == 'rho':
            raise ConfigError("calibrate needs a psnr or snr target")
        # PursuitConfig enforces epsilon > 0, max_j >= 1, max_atoms >= 1.
        run.pursuit_config(0.0)
        return run
