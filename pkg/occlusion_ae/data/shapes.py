"""
Parametric surface samplers for the synthetic benchmark.

Points are spread uniformly by area: the number of points on each surface
part is multinomial in the part areas, then each part is sampled uniformly.
"""
from abc import ABC, abstractmethod
from dataclasses import dataclass, field
from typing import Dict, Optional, Tuple

import numpy as np

from ..framework.errors import ConfigError
from ..framework.registry import Registry
from ..geometry import PointCloud, normalize


class ShapeSampler(ABC):
    """Area-uniform sampler for one shape category"""

    # parameter name -> (low, high) range used when drawing dataset samples
    ranges: Dict[str, Tuple[float, float]] = {}

    def defaults(self) -> Dict[str, float]:
        return {name: 0.5 * (lo + hi) for name, (lo, hi) in self.ranges.items()}

    def draw_params(self, rng: np.random.Generator) -> Dict[str, float]:
        return {name: float(rng.uniform(lo, hi)) for name, (lo, hi) in self.ranges.items()}

    def validate(self, params: Dict[str, float]) -> None:
        missing = set(self.ranges) - set(params)
        extra = set(params) - set(self.ranges)
        if missing or extra:
            raise ConfigError(f"shape parameters must be {sorted(self.ranges)}, got {sorted(params)}")
        for name, value in params.items():
            if not np.isfinite(value) or value <= 0:
                raise ConfigError(f"shape parameter '{name}' must be positive, got {value}")

    @abstractmethod
    def part_areas(self, params: Dict[str, float]) -> np.ndarray:
        """Surface area of each part"""

    @abstractmethod
    def sample_part(self, part: int, count: int, params: Dict[str, float],
                    rng: np.random.Generator) -> np.ndarray:
        """`count` uniform points on one part"""

    def sample(self, params: Dict[str, float], n: int,
               rng: np.random.Generator) -> Tuple[np.ndarray, np.ndarray]:
        """(n, 3) points and their part ids"""
        areas = self.part_areas(params)
        counts = rng.multinomial(n, areas / areas.sum())
        points, parts = [], []
        for part, count in enumerate(counts):
            if count:
                points.append(self.sample_part(part, int(count), params, rng))
                parts.append(np.full(count, part, dtype=np.int64))
        return np.concatenate(points), np.concatenate(parts)


SHAPES: Registry[type] = Registry("shape")


def sampler_for(category: str) -> ShapeSampler:
    return SHAPES.get(category)()


def _disk(count: int, radius: float, z: float, rng: np.random.Generator) -> np.ndarray:
    r = radius * np.sqrt(rng.uniform(size=count))
    theta = rng.uniform(0.0, 2.0 * np.pi, size=count)
    return np.stack([r * np.cos(theta), r * np.sin(theta), np.full(count, z)], axis=1)


@SHAPES.register("sphere")
class Sphere(ShapeSampler):
    ranges = {"radius": (0.8, 1.2)}

    def part_areas(self, params):
        return np.array([4.0 * np.pi * params["radius"] ** 2])

    def sample_part(self, part, count, params, rng):
        v = rng.normal(size=(count, 3))
        return params["radius"] * v / np.linalg.norm(v, axis=1, keepdims=True)

    def sample(self, params, n, rng):
        # antipodal pairs, plus a great-circle triangle for odd n, keep the centroid on the sphere centre
        triangle = 3 if n % 2 and n >= 3 else 0
        half = self.sample_part(0, (n - triangle) // 2, params, rng)
        points = [half, -half]
        if triangle:
            points.append(self._great_circle_triangle(params["radius"], rng))
        points = np.concatenate(points)
        if len(points) < n:
            points = self.sample_part(0, n, params, rng)
        return points, np.zeros(n, dtype=np.int64)

    @staticmethod
    def _great_circle_triangle(radius: float, rng: np.random.Generator) -> np.ndarray:
        """Three points 120 degrees apart on a random great circle; they sum to zero"""
        axis = rng.normal(size=3)
        axis /= np.linalg.norm(axis)
        u = np.cross(axis, rng.normal(size=3))
        u /= np.linalg.norm(u)
        v = np.cross(axis, u)
        angles = rng.uniform(0.0, 2.0 * np.pi) + 2.0 * np.pi * np.arange(3) / 3
        return radius * (np.cos(angles)[:, None] * u + np.sin(angles)[:, None] * v)


@SHAPES.register("box")
class Box(ShapeSampler):
    ranges = {"size_x": (0.6, 2.0), "size_y": (0.6, 2.0), "size_z": (0.6, 2.0)}

    def part_areas(self, params):
        x, y, z = params["size_x"], params["size_y"], params["size_z"]
        return np.array([y * z, y * z, x * z, x * z, x * y, x * y])

    def sample_part(self, part, count, params, rng):
        half = 0.5 * np.array([params["size_x"], params["size_y"], params["size_z"]])
        points = rng.uniform(-half, half, size=(count, 3))
        axis, sign = divmod(part, 2)
        points[:, axis] = half[axis] if sign == 0 else -half[axis]
        return points


@SHAPES.register("torus")
class Torus(ShapeSampler):
    ranges = {"major_radius": (0.8, 1.2), "minor_radius": (0.2, 0.45)}

    def validate(self, params):
        super().validate(params)
        if params["minor_radius"] >= params["major_radius"]:
            raise ConfigError("torus minor_radius must be smaller than major_radius")

    def part_areas(self, params):
        return np.array([4.0 * np.pi ** 2 * params["major_radius"] * params["minor_radius"]])

    def sample_part(self, part, count, params, rng):
        big, small = params["major_radius"], params["minor_radius"]
        tube = np.empty(0)
        # surface element is proportional to (R + r cos v); rejection on v
        while tube.size < count:
            v = rng.uniform(0.0, 2.0 * np.pi, size=2 * count)
            keep = rng.uniform(size=2 * count) < (big + small * np.cos(v)) / (big + small)
            tube = np.concatenate([tube, v[keep]])
        v = tube[:count]
        u = rng.uniform(0.0, 2.0 * np.pi, size=count)
        ring = big + small * np.cos(v)
        return np.stack([ring * np.cos(u), ring * np.sin(u), small * np.sin(v)], axis=1)


@SHAPES.register("cylinder")
class Cylinder(ShapeSampler):
    ranges = {"radius": (0.3, 0.7), "height": (1.0, 2.0)}

    LATERAL = 0

    def part_areas(self, params):
        r, h = params["radius"], params["height"]
        cap = np.pi * r * r
        return np.array([2.0 * np.pi * r * h, cap, cap])

    def sample_part(self, part, count, params, rng):
        r, h = params["radius"], params["height"]
        if part == self.LATERAL:
            theta = rng.uniform(0.0, 2.0 * np.pi, size=count)
            z = rng.uniform(-0.5 * h, 0.5 * h, size=count)
            return np.stack([r * np.cos(theta), r * np.sin(theta), z], axis=1)
        return _disk(count, r, 0.5 * h if part == 1 else -0.5 * h, rng)


@SHAPES.register("cone")
class Cone(ShapeSampler):
    ranges = {"radius": (0.4, 0.9), "height": (0.8, 1.8)}

    def part_areas(self, params):
        r, h = params["radius"], params["height"]
        return np.array([np.pi * r * np.hypot(r, h), np.pi * r * r])

    def sample_part(self, part, count, params, rng):
        r, h = params["radius"], params["height"]
        if part == 1:
            return _disk(count, r, -0.5 * h, rng)
        # distance from the apex grows with sqrt(u) for uniform area
        t = np.sqrt(rng.uniform(size=count))
        theta = rng.uniform(0.0, 2.0 * np.pi, size=count)
        return np.stack([r * t * np.cos(theta), r * t * np.sin(theta), 0.5 * h - h * t], axis=1)


@dataclass
class ShapeSpec:
    """One synthetic shape: category, its dimensions, size and noise"""
    category: str
    params: Dict[str, float] = field(default_factory=dict)
    n_points: int = 256
    jitter: float = 0.0

    def __post_init__(self):
        sampler = sampler_for(self.category)
        if not self.params:
            self.params = sampler.defaults()
        sampler.validate(self.params)
        if self.n_points < 1:
            raise ConfigError(f"n_points must be positive, got {self.n_points}")
        if self.jitter < 0:
            raise ConfigError(f"jitter must be non-negative, got {self.jitter}")


def sample_surface(spec: ShapeSpec, rng: np.random.Generator) -> Tuple[np.ndarray, np.ndarray]:
    """Raw (un-normalized, noise-free) surface points with their part ids"""
    return sampler_for(spec.category).sample(spec.params, spec.n_points, rng)


def generate_synthetic(spec: ShapeSpec, seed: Optional[int] = None) -> PointCloud:
    """Area-uniform surface sample, Gaussian jitter, unit-sphere normalization"""
    rng = np.random.default_rng(seed)
    points, _ = sample_surface(spec, rng)
    if spec.jitter > 0:
        points = points + rng.normal(0.0, spec.jitter, size=points.shape)
    return normalize(points)
