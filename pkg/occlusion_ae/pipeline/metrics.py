import csv
from dataclasses import dataclass
from pathlib import Path
from typing import Dict, Iterable, List, Union

import numpy as np

from ..framework.errors import DataError

METRICS_HEADER = ("step", "epoch", "split", "loss", "lr", "wall_ms")


@dataclass(frozen=True)
class MetricsRecord:
    step: int
    epoch: int
    split: str
    loss: float
    lr: float
    wall_ms: float

    def to_row(self) -> List[str]:
        return [str(self.step), str(self.epoch), self.split, repr(float(self.loss)),
                repr(float(self.lr)), f"{self.wall_ms:.3f}"]


def metrics_export(records: Iterable[MetricsRecord], path: Union[str, Path]) -> None:
    """Write records as CSV; an empty stream gives a header-only file"""
    path = Path(path)
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        with open(path, "w", newline="") as f:
            writer = csv.writer(f, lineterminator="\n")
            writer.writerow(METRICS_HEADER)
            for record in records:
                writer.writerow(record.to_row())
    except OSError as e:
        raise DataError(f"cannot write metrics: {e}", path=str(path))


def read_metrics(path: Union[str, Path]) -> List[MetricsRecord]:
    path = Path(path)
    try:
        with open(path, newline="") as f:
            rows = list(csv.reader(f))
    except OSError as e:
        raise DataError(f"cannot read metrics: {e}", path=str(path))
    if not rows or tuple(rows[0]) != METRICS_HEADER:
        raise DataError(f"expected header {','.join(METRICS_HEADER)}", path=str(path), line=1)
    records = []
    for lineno, row in enumerate(rows[1:], start=2):
        try:
            step, epoch, split, loss, lr, wall_ms = row
            records.append(MetricsRecord(int(step), int(epoch), split, float(loss), float(lr), float(wall_ms)))
        except ValueError:
            raise DataError(f"malformed metrics row {row}", path=str(path), line=lineno)
    return records


def epoch_means(records: Iterable[MetricsRecord], split: str = "train") -> Dict[int, float]:
    """Mean loss per epoch for one split"""
    grouped: Dict[int, List[float]] = {}
    for record in records:
        if record.split == split:
            grouped.setdefault(record.epoch, []).append(record.loss)
    return {epoch: float(np.mean(losses)) for epoch, losses in sorted(grouped.items())}


def moving_average(records: Iterable[MetricsRecord], window: int, split: str = "train") -> np.ndarray:
    """Trailing moving average of the per-step loss"""
    losses = np.array([r.loss for r in records if r.split == split], dtype=np.float64)
    if len(losses) < window:
        return np.empty(0)
    kernel = np.ones(window) / window
    return np.convolve(losses, kernel, mode="valid")
