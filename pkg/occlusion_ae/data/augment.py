"""
Seeded point-cloud augmentation: rotation about z, anisotropic scaling,
translation and clipped jitter, applied in that order.
"""
from dataclasses import dataclass
from typing import Optional, Tuple

import numpy as np

from ..framework.errors import DataError

SCALE_RANGE = (0.8, 1.25)
SHIFT_RANGE = (-0.1, 0.1)
JITTER_SIGMA = 0.01
JITTER_CLIP = 0.05


@dataclass(frozen=True)
class AugmentFlags:
    rotate: bool = False
    scale: bool = False
    translate: bool = False
    jitter: bool = False

    @property
    def any(self) -> bool:
        return self.rotate or self.scale or self.translate or self.jitter


@dataclass(frozen=True)
class AugmentRecord:
    """Transform parameters drawn for one call"""
    angle: float = 0.0
    scale: Tuple[float, float, float] = (1.0, 1.0, 1.0)
    shift: Tuple[float, float, float] = (0.0, 0.0, 0.0)


def augment_with_record(cloud: np.ndarray, seed: Optional[int],
                        flags: AugmentFlags) -> Tuple[np.ndarray, AugmentRecord]:
    """Augmented copy of `cloud` (same dtype) and the parameters that produced it"""
    points = np.asarray(cloud)
    if points.ndim != 2 or points.shape[1] != 3:
        raise DataError(f"expected an (N, 3) point cloud, got shape {points.shape}")
    dtype = points.dtype if points.dtype in (np.float32, np.float64) else np.float64
    out = points.astype(np.float64)
    rng = np.random.default_rng(seed)
    angle, scale, shift = 0.0, np.ones(3), np.zeros(3)

    if flags.rotate:
        angle = float(rng.uniform(0.0, 2.0 * np.pi))
        c, s = np.cos(angle), np.sin(angle)
        rotation = np.array([[c, -s, 0.0], [s, c, 0.0], [0.0, 0.0, 1.0]])
        out = out @ rotation.T
    if flags.scale:
        scale = rng.uniform(*SCALE_RANGE, size=3)
        out = out * scale
    if flags.translate:
        shift = rng.uniform(*SHIFT_RANGE, size=3)
        out = out + shift
    if flags.jitter:
        out = out + np.clip(rng.normal(0.0, JITTER_SIGMA, size=out.shape), -JITTER_CLIP, JITTER_CLIP)

    record = AugmentRecord(angle=angle, scale=tuple(float(v) for v in scale),
                           shift=tuple(float(v) for v in shift))
    if not flags.any:
        return points.copy(), record
    return out.astype(dtype), record


def augment(cloud: np.ndarray, seed: Optional[int], flags: AugmentFlags) -> np.ndarray:
    """Deterministic in (cloud, seed, flags)"""
    return augment_with_record(cloud, seed, flags)[0]
