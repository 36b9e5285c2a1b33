from .augment import AugmentFlags, AugmentRecord, augment, augment_with_record
from .config import DataConfig
from .dataset import (
    Dataset,
    DatasetManifest,
    DatasetSplits,
    ManifestEntry,
    generate_dataset,
    load_dataset,
    sample_seed,
    write_dataset,
)
from .io import (
    CheckpointLoad,
    io_checkpoint,
    io_pointcloud,
    load_checkpoint,
    load_pointcloud,
    save_checkpoint,
    save_pointcloud,
)
from .shapes import SHAPES, ShapeSpec, generate_synthetic, sample_surface, sampler_for

__all__ = [
    "AugmentFlags",
    "AugmentRecord",
    "augment",
    "augment_with_record",
    "DataConfig",
    "Dataset",
    "DatasetManifest",
    "DatasetSplits",
    "ManifestEntry",
    "generate_dataset",
    "load_dataset",
    "sample_seed",
    "write_dataset",
    "CheckpointLoad",
    "io_checkpoint",
    "io_pointcloud",
    "load_checkpoint",
    "load_pointcloud",
    "save_checkpoint",
    "save_pointcloud",
    "SHAPES",
    "ShapeSpec",
    "generate_synthetic",
    "sample_surface",
    "sampler_for",
]
