"""
Frozen-feature evaluation: global features from the encoder and a linear
classifier trained on top of them.
"""
import csv
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Union

import numpy as np
from scipy.special import log_softmax, softmax

from ..framework.errors import DataError
from ..framework.logger import get_logger
from ..geometry import fps, knn_group_centralize, normalize
from ..model import ModelConfig, ModelWeights, encode_tokens
from .config import ProbeConfig

logger = get_logger("pipeline.probe")


def extract_global_feature(cloud: np.ndarray, weights: ModelWeights, config: ModelConfig) -> np.ndarray:
    """
    Mean of the C_e encoder tokens over all G patches. Nothing is occluded and
    FPS starts at index 0, so the feature is a pure function of the cloud.
    """
    points = normalize(cloud)
    patchset = knn_group_centralize(points, fps(points, config.groups, start=0),
                                    config.patch_size, config.centralize)
    dtype = config.np_dtype
    tokens = encode_tokens(patchset.patches.astype(dtype), patchset.seeds.astype(dtype), weights, config)
    return tokens.values.mean(axis=0)


def extract_features(clouds: Sequence[np.ndarray], weights: ModelWeights, config: ModelConfig,
                     workers: int = 1) -> np.ndarray:
    """(S, C_e) features, one row per cloud in input order"""
    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            rows = list(pool.map(lambda c: extract_global_feature(c, weights, config), clouds))
    else:
        rows = [extract_global_feature(c, weights, config) for c in clouds]
    return np.stack(rows).astype(np.float64)


@dataclass
class ProbeReport:
    train_accuracy: float
    test_accuracy: float
    confusion: np.ndarray       # (classes, classes) test counts, rows = true label
    iterations: int
    classes: List[str]

    def per_class_accuracy(self) -> Dict[str, float]:
        totals = self.confusion.sum(axis=1)
        return {
            name: float(self.confusion[i, i] / totals[i]) if totals[i] else float("nan")
            for i, name in enumerate(self.classes)
        }

    def to_rows(self) -> List[List[str]]:
        rows = [["metric", "value"],
                ["train_accuracy", repr(self.train_accuracy)],
                ["test_accuracy", repr(self.test_accuracy)],
                ["iterations", str(self.iterations)]]
        for i, name in enumerate(self.classes):
            rows.append([f"confusion.{name}", " ".join(str(int(c)) for c in self.confusion[i])])
        return rows


def write_probe_report(report: ProbeReport, path: Union[str, Path]) -> None:
    path = Path(path)
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        with open(path, "w", newline="") as f:
            csv.writer(f, lineterminator="\n").writerows(report.to_rows())
    except OSError as e:
        raise DataError(f"cannot write probe report: {e}", path=str(path))


def _one_hot(labels: np.ndarray, classes: int) -> np.ndarray:
    out = np.zeros((len(labels), classes))
    out[np.arange(len(labels)), labels] = 1.0
    return out


def linear_probe(features: np.ndarray, labels: Sequence[int], split: Sequence[str],
                 config: Optional[ProbeConfig] = None,
                 class_names: Optional[Sequence[str]] = None) -> ProbeReport:
    """
    Full-batch gradient descent on softmax cross-entropy + (l2 / 2)·||W||²,
    stopping after `iterations` steps or once the largest gradient entry
    drops below `tol`. `split` tags each row "train" or "test".
    """
    config = config or ProbeConfig()
    x = np.asarray(features, dtype=np.float64)
    y = np.asarray(labels, dtype=np.int64)
    split = np.asarray(split)
    if x.ndim != 2 or len(x) != len(y) or len(y) != len(split):
        raise DataError(f"features {x.shape}, {len(y)} labels and {len(split)} split tags do not line up")
    unknown = set(split.tolist()) - {"train", "test"}
    if unknown:
        raise DataError(f"unknown split tags {sorted(unknown)}")
    train, test = split == "train", split == "test"
    if not train.any() or not test.any():
        raise DataError("linear probe needs both train and test samples")
    if np.any(y < 0):
        raise DataError("labels must be non-negative")
    num_classes = max(int(y.max()) + 1, len(class_names) if class_names is not None else 0)
    if len(np.unique(y[train])) < 2:
        raise DataError("linear probe needs at least two classes in the training split")
    names = list(class_names) if class_names is not None else [str(i) for i in range(num_classes)]

    x_train, x_test = x[train], x[test]
    if config.standardize:
        mean = x_train.mean(axis=0)
        std = x_train.std(axis=0)
        std[std < 1e-12] = 1.0
        x_train = (x_train - mean) / std
        x_test = (x_test - mean) / std

    targets = _one_hot(y[train], num_classes)
    n = len(x_train)
    w = np.zeros((x.shape[1], num_classes))
    b = np.zeros(num_classes)
    iterations = 0
    for iterations in range(1, config.iterations + 1):
        residual = (softmax(x_train @ w + b, axis=1) - targets) / n
        grad_w = x_train.T @ residual + config.l2 * w
        grad_b = residual.sum(axis=0)
        w -= config.lr * grad_w
        b -= config.lr * grad_b
        if max(np.abs(grad_w).max(), np.abs(grad_b).max()) < config.tol:
            break

    def predict(rows: np.ndarray) -> np.ndarray:
        return np.argmax(log_softmax(rows @ w + b, axis=1), axis=1)

    train_pred = predict(x_train)
    test_pred = predict(x_test)
    confusion = np.zeros((num_classes, num_classes), dtype=np.int64)
    np.add.at(confusion, (y[test], test_pred), 1)
    report = ProbeReport(
        train_accuracy=float(np.mean(train_pred == y[train])),
        test_accuracy=float(np.mean(test_pred == y[test])),
        confusion=confusion,
        iterations=iterations,
        classes=names,
    )
    logger.info(f"Linear probe: train {report.train_accuracy:.3f}, test {report.test_accuracy:.3f} "
                f"after {iterations} iterations")
    return report


def probe_datasets(train_clouds: Sequence[np.ndarray], train_labels: Sequence[int],
                   test_clouds: Sequence[np.ndarray], test_labels: Sequence[int],
                   weights: ModelWeights, model_config: ModelConfig, probe_config: Optional[ProbeConfig] = None,
                   class_names: Optional[Sequence[str]] = None, workers: int = 1) -> ProbeReport:
    """Extract features for both splits and run the linear probe"""
    features = extract_features(list(train_clouds) + list(test_clouds), weights, model_config, workers)
    labels = np.concatenate([np.asarray(train_labels), np.asarray(test_labels)])
    split = ["train"] * len(train_clouds) + ["test"] * len(test_clouds)
    return linear_probe(features, labels, split, probe_config, class_names)
