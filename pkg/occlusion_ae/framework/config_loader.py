import dataclasses
import os
import typing
from pathlib import Path
from typing import Any, Dict, Iterable, List, Optional, Type, TypeVar, Union

import yaml
from dotenv import load_dotenv

from .errors import ConfigError
from .logger import get_logger

logger = get_logger("config")

DEFAULT_CONFIG_DIR = Path(__file__).resolve().parent.parent / "config"
ENV_PREFIX = "CONFIG_"

T = TypeVar("T")


class ConfigLoader:
    """
    Layered configuration: packaged YAML defaults, an optional profile overlay,
    CONFIG_* environment variables, a `key = value` run file and finally
    explicit overrides. Later layers win.
    """

    def __init__(self, config_dir: Union[str, Path, None] = None, sections: Optional[Iterable[str]] = None):
        self.config_dir = Path(config_dir) if config_dir else DEFAULT_CONFIG_DIR
        self.sections = set(sections) if sections is not None else None
        self.config: Dict[str, Any] = {}

    def load_configurations(self, profile: Optional[str] = None) -> Dict[str, Any]:
        """Load configurations with profile-specific overrides"""
        base_config_path = self.config_dir / "application.yaml"
        if not base_config_path.exists():
            raise ConfigError(f"Missing base configuration {base_config_path}")
        self.config = self._load_yaml_file(base_config_path)

        if profile:
            profile_path = self.config_dir / f"application-{profile}.yaml"
            if not profile_path.exists():
                raise ConfigError(f"Unknown profile '{profile}' (no {profile_path.name})")
            self._deep_merge(self.config, self._load_yaml_file(profile_path))

        # Environment variables override file configs
        load_dotenv()
        self._load_environment_variables()

        return self.config

    def apply_run_file(self, path: Union[str, Path]) -> Dict[str, Any]:
        """Merge a `key = value` run file on top of the loaded configuration"""
        path = Path(path)
        try:
            text = path.read_text(encoding="utf-8")
        except OSError as e:
            raise ConfigError(f"Cannot read config file {path}: {e}")
        self._deep_merge(self.config, parse_run_config(text, source=str(path)))
        return self.config

    def apply_overrides(self, overrides: Iterable[str]) -> Dict[str, Any]:
        """Apply `section.key=value` overrides (CLI --set)"""
        for item in overrides:
            if "=" not in item:
                raise ConfigError(f"Override '{item}' is not in section.key=value form")
            dotted, value = item.split("=", 1)
            parts = dotted.strip().split(".")
            if len(parts) != 2 or not all(parts):
                raise ConfigError(f"Override key '{dotted}' must be section.key")
            self._set_nested_value(self.config, parts, value.strip())
        return self.config

    def _load_yaml_file(self, file_path: Path) -> Dict[str, Any]:
        """Load YAML configuration file"""
        try:
            with open(file_path, 'r') as f:
                return yaml.safe_load(f) or {}
        except yaml.YAMLError as e:
            raise ConfigError(f"Error loading config file {file_path}: {e}")

    def _deep_merge(self, base: Dict[str, Any], update: Dict[str, Any]) -> None:
        """Recursively merge dictionaries"""
        for key, value in update.items():
            if (key in base and isinstance(base[key], dict) and
                    isinstance(value, dict)):
                self._deep_merge(base[key], value)
            else:
                base[key] = value

    def _load_environment_variables(self) -> None:
        """Load CONFIG_<SECTION>__<KEY> environment variables for known sections"""
        known = self.sections if self.sections is not None else set(self.config)
        for key, value in os.environ.items():
            if not key.startswith(ENV_PREFIX):
                continue
            key_path = key[len(ENV_PREFIX):].lower().split('__')
            if len(key_path) < 2 or key_path[0] not in known:
                logger.debug(f"Ignoring environment variable {key}: not a CONFIG_<SECTION>__<KEY> name")
                continue
            self._set_nested_value(self.config, key_path, value)

    def _set_nested_value(self, config_dict: Dict[str, Any], key_path: list, value: Any) -> None:
        """Set nested value using key path (key1__key2__key3)"""
        if not key_path:
            return

        current = config_dict
        for key in key_path[:-1]:
            if key not in current:
                current[key] = {}
            current = current[key]
        current[key_path[-1]] = self._cast_value(value)

    def _cast_value(self, value: str) -> Any:
        """Convert string values to appropriate types"""
        if isinstance(value, str):
            if value.lower() in ('true', 'false'):
                return value.lower() == 'true'
            try:
                return int(value)
            except ValueError:
                try:
                    return float(value)
                except ValueError:
                    return value
        return value


def parse_run_config(text: str, source: str = "<config>") -> Dict[str, Dict[str, str]]:
    """
    Parse the line-based run file format:

        # comment
        [train]
        epochs = 30
        model.groups = 16     # dotted keys work outside sections too
    """
    result: Dict[str, Dict[str, str]] = {}
    section: Optional[str] = None
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if line.startswith("[") and line.endswith("]"):
            section = line[1:-1].strip()
            if not section:
                raise ConfigError(f"{source}:{lineno}: empty section header")
            result.setdefault(section, {})
            continue
        if "=" not in line:
            raise ConfigError(f"{source}:{lineno}: expected 'key = value', got '{raw.strip()}'")
        key, value = (part.strip() for part in line.split("=", 1))
        if "." in key:
            key_section, key = key.split(".", 1)
        else:
            key_section = section
        if key_section is None:
            raise ConfigError(f"{source}:{lineno}: key '{key}' outside of any section")
        result.setdefault(key_section, {})[key] = value
    return result


def format_run_config(sections: Dict[str, Dict[str, Any]]) -> str:
    """Render sections back into the run file format (round-trips via parse_run_config)"""
    lines: List[str] = []
    for section, values in sections.items():
        if lines:
            lines.append("")
        lines.append(f"[{section}]")
        for key, value in values.items():
            lines.append(f"{key} = {_render_value(value)}")
    return "\n".join(lines) + "\n"


def _render_value(value: Any) -> str:
    if isinstance(value, bool):
        return "true" if value else "false"
    if value is None:
        return "none"
    if isinstance(value, float):
        return repr(value)
    return str(value)


def build_dataclass(cls: Type[T], values: Dict[str, Any], section: str) -> T:
    """
    Build a config dataclass from a mapping of raw values, rejecting unknown
    keys and casting strings to the declared field types.
    """
    hints = typing.get_type_hints(cls)
    known = {f.name for f in dataclasses.fields(cls)}
    kwargs = {}
    for key, raw in (values or {}).items():
        if key not in known:
            raise ConfigError(f"Unknown key '{section}.{key}'")
        kwargs[key] = _cast_field(hints[key], raw, f"{section}.{key}")
    try:
        return cls(**kwargs)
    except (TypeError, ValueError) as e:
        if isinstance(e, ConfigError):
            raise
        raise ConfigError(f"Invalid [{section}] configuration: {e}")


def _cast_field(hint: Any, raw: Any, name: str) -> Any:
    origin = typing.get_origin(hint)
    if origin is Union:
        args = [a for a in typing.get_args(hint) if a is not type(None)]
        if raw is None or (isinstance(raw, str) and raw.lower() in ("none", "null", "")):
            return None
        return _cast_field(args[0], raw, name)
    try:
        if hint is bool:
            if isinstance(raw, bool):
                return raw
            if isinstance(raw, str) and raw.lower() in ("true", "false", "1", "0", "yes", "no"):
                return raw.lower() in ("true", "1", "yes")
            raise ValueError(raw)
        if hint is int:
            if isinstance(raw, bool) or (isinstance(raw, float) and not raw.is_integer()):
                raise ValueError(raw)
            return int(raw)
        if hint is float:
            if isinstance(raw, bool):
                raise ValueError(raw)
            return float(raw)
        if hint is str:
            return str(raw)
    except (TypeError, ValueError):
        raise ConfigError(f"Invalid value '{raw}' for '{name}' (expected {hint.__name__})")
    return raw


def dataclass_values(obj: Any) -> Dict[str, Any]:
    """Field values of a config dataclass in declaration order"""
    return {f.name: getattr(obj, f.name) for f in dataclasses.fields(obj)}
