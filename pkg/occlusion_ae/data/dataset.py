"""
The synthetic shape benchmark and its manifest.

A manifest lists every sample with its label, split and either a cloud file
(relative to the manifest) or the generation seed and shape parameters it can
be regenerated from. It is stored as YAML.
"""
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, List, Optional, Tuple, Union

import numpy as np
import yaml

from ..framework.errors import DataError
from ..framework.logger import get_logger
from ..geometry import PointCloud, as_cloud
from .config import DataConfig
from .io import load_pointcloud, save_pointcloud
from .shapes import ShapeSpec, generate_synthetic, sampler_for

logger = get_logger("data.dataset")

SPLITS = ("train", "test")
MANIFEST_VERSION = 1


def sample_seed(*keys: int) -> int:
    """Stable 32-bit seed derived from integer keys"""
    return int(np.random.SeedSequence([int(k) for k in keys]).generate_state(1)[0])


@dataclass
class ManifestEntry:
    label: int
    split: str
    seed: Optional[int] = None
    path: Optional[str] = None
    params: Dict[str, float] = field(default_factory=dict)

    def to_dict(self) -> Dict:
        out = {"label": self.label, "split": self.split}
        if self.seed is not None:
            out["seed"] = self.seed
        if self.path is not None:
            out["path"] = self.path
        if self.params:
            out["params"] = dict(self.params)
        return out


@dataclass
class DatasetManifest:
    classes: List[str]
    entries: List[ManifestEntry]
    n_points: int = 256
    jitter: float = 0.0

    @property
    def num_classes(self) -> int:
        return len(self.classes)

    def validate(self, source: str = "<manifest>") -> None:
        if not self.classes:
            raise DataError("manifest has no classes", path=source)
        seen_keys: Dict[Tuple[str, object], str] = {}
        for i, entry in enumerate(self.entries):
            if entry.split not in SPLITS:
                raise DataError(f"entry {i}: unknown split '{entry.split}'", path=source)
            if not 0 <= entry.label < self.num_classes:
                raise DataError(f"entry {i}: label {entry.label} outside [0, {self.num_classes})", path=source)
            if entry.path is None and entry.seed is None:
                raise DataError(f"entry {i}: needs a path or a seed", path=source)
            key = ("path", entry.path) if entry.path is not None else ("seed", (entry.seed, entry.label))
            other = seen_keys.setdefault(key, entry.split)
            if other != entry.split:
                raise DataError(f"entry {i}: sample appears in both '{other}' and '{entry.split}'", path=source)
        used = {e.label for e in self.entries}
        if self.entries and used != set(range(self.num_classes)):
            missing = sorted(set(range(self.num_classes)) - used)
            raise DataError(f"labels are not dense: no samples for classes {missing}", path=source)

    def split(self, name: str) -> List[ManifestEntry]:
        return [e for e in self.entries if e.split == name]

    def to_dict(self) -> Dict:
        return {
            "version": MANIFEST_VERSION,
            "classes": list(self.classes),
            "n_points": self.n_points,
            "jitter": self.jitter,
            "samples": [e.to_dict() for e in self.entries],
        }

    def save(self, path: Union[str, Path]) -> None:
        path = Path(path)
        self.validate(str(path))
        try:
            path.parent.mkdir(parents=True, exist_ok=True)
            with open(path, "w") as f:
                yaml.safe_dump(self.to_dict(), f, sort_keys=False)
        except OSError as e:
            raise DataError(f"cannot write manifest: {e}", path=str(path))

    @classmethod
    def load(cls, path: Union[str, Path]) -> "DatasetManifest":
        path = Path(path)
        try:
            with open(path, "r") as f:
                raw = yaml.safe_load(f) or {}
        except OSError as e:
            raise DataError(f"cannot read manifest: {e}", path=str(path))
        except yaml.YAMLError as e:
            raise DataError(f"invalid YAML: {e}", path=str(path))
        if not isinstance(raw, dict):
            raise DataError("manifest must be a mapping", path=str(path))
        if raw.get("version") != MANIFEST_VERSION:
            raise DataError(f"unsupported manifest version {raw.get('version')}", path=str(path))
        try:
            entries = [
                ManifestEntry(
                    label=int(s["label"]),
                    split=str(s["split"]),
                    seed=int(s["seed"]) if "seed" in s else None,
                    path=s.get("path"),
                    params={k: float(v) for k, v in (s.get("params") or {}).items()},
                )
                for s in raw.get("samples") or []
            ]
            manifest = cls(
                classes=[str(c) for c in raw["classes"]],
                entries=entries,
                n_points=int(raw.get("n_points", 256)),
                jitter=float(raw.get("jitter", 0.0)),
            )
        except (KeyError, TypeError, ValueError) as e:
            raise DataError(f"malformed manifest entry: {e}", path=str(path))
        manifest.validate(str(path))
        return manifest


@dataclass
class Dataset:
    """Clouds of one split with their dense labels"""
    clouds: List[PointCloud]
    labels: np.ndarray
    classes: List[str]

    def __post_init__(self):
        self.labels = np.asarray(self.labels, dtype=np.int64)
        if len(self.clouds) != len(self.labels):
            raise DataError(f"{len(self.clouds)} clouds but {len(self.labels)} labels")

    def __len__(self) -> int:
        return len(self.clouds)

    def subset(self, indices) -> "Dataset":
        indices = np.asarray(indices, dtype=np.int64)
        return Dataset([self.clouds[i] for i in indices], self.labels[indices], self.classes)


@dataclass
class DatasetSplits:
    train: Dataset
    test: Dataset
    manifest: DatasetManifest


def _split_code(split: str) -> int:
    return SPLITS.index(split)


def generate_dataset(config: DataConfig, n_points: int, seed: int = 0) -> DatasetSplits:
    """
    Balanced benchmark: sample i of a split has label i % num_classes and
    shape parameters drawn from that category's ranges.
    """
    classes = config.category_list
    clouds: Dict[str, List[PointCloud]] = {s: [] for s in SPLITS}
    labels: Dict[str, List[int]] = {s: [] for s in SPLITS}
    entries: List[ManifestEntry] = []
    for split, count in (("train", config.n_train), ("test", config.n_test)):
        for i in range(count):
            label = i % len(classes)
            sample = sample_seed(seed, _split_code(split), i)
            params = sampler_for(classes[label]).draw_params(np.random.default_rng(sample))
            spec = ShapeSpec(classes[label], params, n_points=n_points, jitter=config.jitter)
            clouds[split].append(generate_synthetic(spec, seed=sample))
            labels[split].append(label)
            entries.append(ManifestEntry(label=label, split=split, seed=sample, params=params))
    manifest = DatasetManifest(classes=list(classes), entries=entries, n_points=n_points, jitter=config.jitter)
    logger.info(f"Generated {config.n_train} train / {config.n_test} test clouds over {len(classes)} classes")
    return DatasetSplits(
        train=Dataset(clouds["train"], labels["train"], list(classes)),
        test=Dataset(clouds["test"], labels["test"], list(classes)),
        manifest=manifest,
    )


def write_dataset(splits: DatasetSplits, out_dir: Union[str, Path], fmt: str = "bin") -> Path:
    """Write every cloud under `out_dir/clouds/<split>/` and the manifest beside them"""
    out_dir = Path(out_dir)
    entries = []
    counters = {s: 0 for s in SPLITS}
    clouds = {"train": iter(splits.train.clouds), "test": iter(splits.test.clouds)}
    for entry in splits.manifest.entries:
        rel = f"clouds/{entry.split}/{counters[entry.split]:05d}.{fmt}"
        counters[entry.split] += 1
        save_pointcloud(out_dir / rel, next(clouds[entry.split]), fmt)
        entries.append(ManifestEntry(entry.label, entry.split, entry.seed, rel, dict(entry.params)))
    manifest = DatasetManifest(splits.manifest.classes, entries, splits.manifest.n_points, splits.manifest.jitter)
    manifest_path = out_dir / "manifest.yaml"
    manifest.save(manifest_path)
    return manifest_path


def load_dataset(manifest_path: Union[str, Path]) -> DatasetSplits:
    """Read clouds listed in a manifest; entries without a file are regenerated from their seed"""
    manifest_path = Path(manifest_path)
    manifest = DatasetManifest.load(manifest_path)
    root = manifest_path.parent
    clouds: Dict[str, List[PointCloud]] = {s: [] for s in SPLITS}
    labels: Dict[str, List[int]] = {s: [] for s in SPLITS}
    for entry in manifest.entries:
        if entry.path is not None:
            cloud = as_cloud(load_pointcloud(root / entry.path))
        else:
            spec = ShapeSpec(manifest.classes[entry.label], entry.params or {},
                             n_points=manifest.n_points, jitter=manifest.jitter)
            cloud = generate_synthetic(spec, seed=entry.seed)
        clouds[entry.split].append(cloud)
        labels[entry.split].append(entry.label)
    return DatasetSplits(
        train=Dataset(clouds["train"], labels["train"], list(manifest.classes)),
        test=Dataset(clouds["test"], labels["test"], list(manifest.classes)),
        manifest=manifest,
    )
