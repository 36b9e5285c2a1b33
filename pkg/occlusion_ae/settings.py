"""
The effective configuration of a run.

Layers, later wins: packaged application.yaml, application-<profile>.yaml,
CONFIG_* environment variables (.env honoured), a `key = value` run file,
`--set section.key=value` overrides, then explicit CLI flags.
"""
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Dict, Iterable, Optional, Union

from .data.config import DataConfig
from .framework.config_loader import (
    ConfigLoader,
    build_dataclass,
    dataclass_values,
    format_run_config,
    parse_run_config,
)
from .framework.errors import ConfigError, DataError
from .model.config import ModelConfig
from .pipeline.config import ProbeConfig, TrainConfig

RESOLVED_NAME = "resolved.cfg"


@dataclass
class LoggingConfig:
    level: str = "INFO"
    file: str = "run.log"


@dataclass
class RunConfig:
    model: ModelConfig = field(default_factory=ModelConfig)
    train: TrainConfig = field(default_factory=TrainConfig)
    data: DataConfig = field(default_factory=DataConfig)
    probe: ProbeConfig = field(default_factory=ProbeConfig)
    logging: LoggingConfig = field(default_factory=LoggingConfig)

    SECTIONS = ("model", "train", "data", "probe", "logging")

    @classmethod
    def from_mapping(cls, values: Dict[str, Any]) -> "RunConfig":
        unknown = set(values) - set(cls.SECTIONS)
        if unknown:
            raise ConfigError(f"Unknown config section(s): {', '.join(sorted(unknown))}")
        for section, content in values.items():
            if content is not None and not isinstance(content, dict):
                raise ConfigError(f"Config section '{section}' must be a mapping")
        return cls(
            model=build_dataclass(ModelConfig, values.get("model") or {}, "model"),
            train=build_dataclass(TrainConfig, values.get("train") or {}, "train"),
            data=build_dataclass(DataConfig, values.get("data") or {}, "data"),
            probe=build_dataclass(ProbeConfig, values.get("probe") or {}, "probe"),
            logging=build_dataclass(LoggingConfig, values.get("logging") or {}, "logging"),
        )

    def sections(self) -> Dict[str, Dict[str, Any]]:
        return {name: dataclass_values(getattr(self, name)) for name in self.SECTIONS}

    def to_text(self) -> str:
        return format_run_config(self.sections())


def load_run_config(profile: Optional[str] = None, config_file: Union[str, Path, None] = None,
                    overrides: Iterable[str] = (), config_dir: Union[str, Path, None] = None) -> RunConfig:
    loader = ConfigLoader(config_dir, sections=RunConfig.SECTIONS)
    loader.load_configurations(profile)
    if config_file:
        loader.apply_run_file(config_file)
    loader.apply_overrides(overrides)
    return RunConfig.from_mapping(loader.config)


def read_run_config(path: Union[str, Path]) -> RunConfig:
    """Read a standalone run file (e.g. a resolved.cfg) without any other layer"""
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as e:
        raise DataError(f"cannot read config: {e}", path=str(path))
    return RunConfig.from_mapping(parse_run_config(text, source=str(path)))


def write_resolved(config: RunConfig, out_dir: Union[str, Path]) -> Path:
    path = Path(out_dir) / RESOLVED_NAME
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(config.to_text(), encoding="utf-8")
    except OSError as e:
        raise DataError(f"cannot write resolved config: {e}", path=str(path))
    return path
