"""Configuration management for the ground-truth pipeline."""
import hashlib
import json
import os
from typing import Any, Dict, List, Optional, Tuple

from .errors import ConfigError

# Import version
try:
    from .version import __version__
except ImportError:
    __version__ = "0.0.0-unknown"

# Default configuration values
DEFAULT_CONFIG = {
    # Multi-frame fusion
    "PRIOR_SCAN": 0,  # preceding frames fused into each target frame
    "PAST_SCAN": 0,  # subsequent frames fused into each target frame

    # Second-stage grid geometry
    "VOXEL_SIZE": 0.2,  # meters
    "GRID_DIMS": [256, 256, 32],
    "GRID_ORIGIN": [0.0, -25.6, -2.0],  # LiDAR-frame minimum corner

    # First-stage downsampling
    "DOWNSAMPLE_THRESHOLD": 8,

    # Synthetic generation
    "SEED": 0,
    "REGION": 0,
    "FRAMES": 20,

    # Semantics
    "REMAP_TABLE": "default",

    # Evaluation
    "IGNORE_LABELS": [255],
    "MIOU_INCLUDE_EMPTY": False,
    "MIOU_UNDEFINED_POLICY": "exclude",  # or "zero"

    # Execution
    "THREADS": 1,

    # Logging
    "LOG_FILE": None,
    "LOG_LEVEL": "INFO",
    "LOG_RETENTION_DAYS": 7,

    # Run manifest written beside outputs
    "MANIFEST_NAME": "manifest.txt",
}

ENV_PREFIX = "OCCGEN_"


def _coerce(template: Any, value: Any, key: str) -> Any:
    """Convert value to the type of template (the default for key)."""
    try:
        if isinstance(template, bool):
            if isinstance(value, bool):
                return value
            return str(value).strip().lower() in ("true", "1", "yes", "on")
        if isinstance(template, int):
            return int(value)
        if isinstance(template, float):
            return float(value)
        if isinstance(template, list):
            if isinstance(value, (list, tuple)):
                items = list(value)
            else:
                text = str(value).strip()
                try:
                    items = json.loads(text)
                    if not isinstance(items, list):
                        items = [items]
                except ValueError:
                    items = [v.strip() for v in text.replace(";", ",").split(",") if v.strip()]
            if template:
                return [_coerce(template[0], v, key) for v in items]
            return items
    except (TypeError, ValueError) as e:
        raise ConfigError(f"{key}: cannot convert {value!r} ({e})") from e
    if template is None and isinstance(value, str) and value.strip().lower() in ("", "none", "null"):
        return None
    return value


def parse_key_value_text(text: str, source: str = "<config>") -> Dict[str, str]:
    """Parse "key = value" lines; '#' starts a comment, keys are case-insensitive."""
    result: Dict[str, str] = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"{source}:{lineno}: expected 'key = value', got {raw.strip()!r}")
        key, value = line.split("=", 1)
        key = key.strip().upper()
        if not key:
            raise ConfigError(f"{source}:{lineno}: empty key")
        result[key] = value.strip()
    return result


class Config:
    """Configuration manager: defaults, then file, then environment, then explicit overrides."""

    def __init__(self, config_file: Optional[str] = None, overrides: Optional[Dict[str, Any]] = None):
        self.config = DEFAULT_CONFIG.copy()
        self.source = config_file

        if config_file:
            if not os.path.exists(config_file):
                raise ConfigError(f"config file not found: {config_file}")
            self._load_file(config_file)

        # Override with environment variables
        self._load_from_env()

        if overrides:
            self.update(overrides)

    def _load_file(self, config_file: str):
        """Load a .json object or a "key = value" text file."""
        try:
            with open(config_file, "r", encoding="utf-8") as f:
                text = f.read()
        except UnicodeDecodeError as e:
            raise ConfigError(f"{config_file}: invalid UTF-8 at byte {e.start}") from None
        if config_file.lower().endswith(".json"):
            try:
                file_config = json.loads(text)
            except ValueError as e:
                raise ConfigError(f"{config_file}: invalid JSON ({e})") from e
            if not isinstance(file_config, dict):
                raise ConfigError(f"{config_file}: expected a JSON object")
            file_config = {str(k).upper(): v for k, v in file_config.items()}
        else:
            file_config = parse_key_value_text(text, config_file)
        self.update(file_config)

    def _load_from_env(self):
        """Load configuration from OCCGEN_<KEY> environment variables."""
        for config_key in DEFAULT_CONFIG:
            value = os.environ.get(ENV_PREFIX + config_key)
            if value is not None:
                self.config[config_key] = _coerce(DEFAULT_CONFIG[config_key], value, config_key)

    def update(self, overrides: Dict[str, Any]):
        """Apply overrides (e.g. command-line flags); None values are skipped."""
        for key, value in overrides.items():
            if value is None:
                continue
            key = str(key).upper()
            if key in DEFAULT_CONFIG:
                self.config[key] = _coerce(DEFAULT_CONFIG[key], value, key)
            else:
                from .logging_utils import get_logger
                get_logger().warning(f"Unknown configuration key {key!r} kept as-is")
                self.config[key] = value

    def get(self, key: str, default=None):
        """Get configuration value."""
        return self.config.get(key, default)

    def __getitem__(self, key: str):
        """Get configuration value using dictionary syntax."""
        return self.config[key]

    def effective_items(self) -> List[Tuple[str, Any]]:
        """Sorted (key, value) pairs of the effective configuration."""
        return sorted(self.config.items())

    def canonical_text(self) -> str:
        return "\n".join(f"{k} = {json.dumps(v, sort_keys=True)}" for k, v in self.effective_items())

    def hash(self) -> str:
        """sha256 of the canonical effective configuration."""
        return hashlib.sha256(self.canonical_text().encode("utf-8")).hexdigest()

    def grid_spec(self):
        from .voxel import GridSpec
        return GridSpec(
            dims=tuple(int(d) for d in self.config["GRID_DIMS"]),
            voxel_size=float(self.config["VOXEL_SIZE"]),
            origin=tuple(float(o) for o in self.config["GRID_ORIGIN"]),
        )

    def fusion(self):
        from .voxel import FusionConfig
        return FusionConfig(prior_scan=int(self.config["PRIOR_SCAN"]), past_scan=int(self.config["PAST_SCAN"]))

    def downsample(self):
        from .downsample import DownsampleConfig
        return DownsampleConfig(threshold=int(self.config["DOWNSAMPLE_THRESHOLD"]))


# Global configuration instance (defaults plus environment)
config = Config()
