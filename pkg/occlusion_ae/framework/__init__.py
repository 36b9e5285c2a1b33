from .config_loader import ConfigLoader, build_dataclass, format_run_config, parse_run_config
from .errors import ConfigError, DataError, NumericError, OcclusionAEError, ShapeError, TapeError
from .logger import get_logger, setup_logger
from .registry import Registry
from .runner import StageResult, StageRunner, print_summary

__all__ = [
    "ConfigLoader",
    "build_dataclass",
    "format_run_config",
    "parse_run_config",
    "ConfigError",
    "DataError",
    "NumericError",
    "OcclusionAEError",
    "ShapeError",
    "TapeError",
    "get_logger",
    "setup_logger",
    "Registry",
    "StageResult",
    "StageRunner",
    "print_summary",
]
