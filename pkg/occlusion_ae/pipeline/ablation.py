"""
Ablation sweeps: one pretrain + linear probe per value of a single axis, all
other settings and the seed shared.
"""
import csv
import dataclasses
from dataclasses import dataclass
from pathlib import Path
from typing import Any, Callable, List, Optional, Sequence, Tuple, Union

import numpy as np

from ..data.dataset import DatasetSplits
from ..framework.errors import ConfigError, DataError
from ..framework.logger import get_logger
from ..framework.registry import Registry
from ..model import ModelConfig, ModelWeights
from .config import ProbeConfig, TrainConfig
from .metrics import epoch_means
from .probe import probe_datasets
from .training import pretrain

logger = get_logger("pipeline.ablation")

ABLATION_HEADER = ("axis", "value", "trained", "final_loss", "train_accuracy", "test_accuracy", "note")

Configs = Tuple[ModelConfig, TrainConfig]


@dataclass(frozen=True)
class AblationAxis:
    name: str
    parse: Callable[[str], Any]
    apply: Callable[[ModelConfig, TrainConfig, Any], Configs]


AXES: Registry[AblationAxis] = Registry("ablation axis")


def _axis(name: str, parse: Callable[[str], Any]):
    def decorator(apply):
        AXES.register(name)(AblationAxis(name, parse, apply))
        return apply
    return decorator


def _parse_bool(value: str) -> bool:
    lowered = str(value).strip().lower()
    if lowered not in ("true", "false", "1", "0", "yes", "no"):
        raise ValueError(value)
    return lowered in ("true", "1", "yes")


@_axis("ratio", float)
def _ratio(model: ModelConfig, train: TrainConfig, value: float) -> Configs:
    return model, dataclasses.replace(train, ratio=value)


@_axis("strategy", str)
def _strategy(model: ModelConfig, train: TrainConfig, value: str) -> Configs:
    return model, dataclasses.replace(train, strategy=value)


@_axis("loss", str)
def _loss(model: ModelConfig, train: TrainConfig, value: str) -> Configs:
    return model, dataclasses.replace(train, loss=value)


@_axis("groups", int)
def _groups(model: ModelConfig, train: TrainConfig, value: int) -> Configs:
    return dataclasses.replace(model, groups=value), train


@_axis("patch_size", int)
def _patch_size(model: ModelConfig, train: TrainConfig, value: int) -> Configs:
    return dataclasses.replace(model, patch_size=value, decoder_dim=3 * value), train


@_axis("centralize", _parse_bool)
def _centralize(model: ModelConfig, train: TrainConfig, value: bool) -> Configs:
    return dataclasses.replace(model, centralize=value), train


@dataclass
class AblationRow:
    axis: str
    value: Any
    trained: bool
    final_loss: float
    train_accuracy: float
    test_accuracy: float
    note: str = ""

    def to_row(self) -> List[str]:
        return [self.axis, str(self.value), "true" if self.trained else "false", repr(self.final_loss),
                repr(self.train_accuracy), repr(self.test_accuracy), self.note]


def axis_configs(axis: str, values: Sequence[Any], model_config: ModelConfig,
                 train_config: TrainConfig) -> List[Tuple[Any, ModelConfig, TrainConfig]]:
    """Parse and validate every value up front"""
    spec = AXES.get(axis)
    if not values:
        raise ConfigError(f"ablation axis '{axis}' needs at least one value")
    out = []
    for raw in values:
        try:
            value = spec.parse(raw) if isinstance(raw, str) else raw
        except ValueError:
            raise ConfigError(f"Invalid value '{raw}' for ablation axis '{axis}'")
        model, train = spec.apply(model_config, train_config, value)
        out.append((value, model, train))
    return out


def write_ablation_table(rows: Sequence[AblationRow], path: Union[str, Path]) -> None:
    path = Path(path)
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        with open(path, "w", newline="") as f:
            writer = csv.writer(f, lineterminator="\n")
            writer.writerow(ABLATION_HEADER)
            for row in rows:
                writer.writerow(row.to_row())
    except OSError as e:
        raise DataError(f"cannot write ablation table: {e}", path=str(path))


def run_variant(axis: str, value: Any, model_config: ModelConfig, train_config: TrainConfig,
                probe_config: ProbeConfig, splits: DatasetSplits, out_dir: Path) -> AblationRow:
    """Pretrain one variant (skipped for ratio 0) and probe its frozen features"""
    trained = train_config.ratio > 0.0 and train_config.epochs > 0
    note = ""
    if trained:
        result = pretrain(splits.train, train_config, out_dir / "checkpoints", model_config,
                          metrics_path=out_dir / "metrics.csv")
        weights = result.weights
        means = epoch_means(result.records)
        final_loss = means[max(means)] if means else float("nan")
    else:
        weights = ModelWeights.initialize(model_config, seed=train_config.seed)
        final_loss = float("nan")
        note = "probe-only: no occluded patches to reconstruct" if train_config.ratio <= 0.0 else "no epochs"
    report = probe_datasets(splits.train.clouds, splits.train.labels, splits.test.clouds, splits.test.labels,
                            weights, model_config, probe_config, splits.train.classes, train_config.workers)
    logger.info(f"Ablation {axis}={value}: test accuracy {report.test_accuracy:.3f}")
    return AblationRow(axis, value, trained, float(final_loss), report.train_accuracy,
                       report.test_accuracy, note)


def ablate(model_config: ModelConfig, train_config: TrainConfig, axis: str, values: Sequence[Any],
           splits: DatasetSplits, out_dir: Union[str, Path],
           probe_config: Optional[ProbeConfig] = None,
           on_row: Optional[Callable[[AblationRow], None]] = None) -> List[AblationRow]:
    """Run the sweep and write `out_dir/ablation_<axis>.csv`"""
    probe_config = probe_config or ProbeConfig()
    variants = axis_configs(axis, values, model_config, train_config)
    out_dir = Path(out_dir)
    rows: List[AblationRow] = []
    for value, model, train in variants:
        row = run_variant(axis, value, model, train, probe_config, splits, out_dir / f"{axis}_{value}")
        rows.append(row)
        if on_row:
            on_row(row)
        write_ablation_table(rows, out_dir / f"ablation_{axis}.csv")
    return rows


def best_row(rows: Sequence[AblationRow]) -> AblationRow:
    return rows[int(np.argmax([r.test_accuracy for r in rows]))]
