"""
Point-cloud kernels: normalization, farthest point sampling, KNN grouping with
centralization, occlusion masks, Chamfer distance and exact EMD.

Clouds are (N, 3) float32 arrays. Distances are compared as squared
Euclidean distances computed from explicit coordinate differences, and every
selection breaks ties toward the lowest index.
"""
from dataclasses import dataclass
from typing import Optional, Sequence, Union

import numpy as np
from scipy.optimize import linear_sum_assignment
from scipy.spatial.distance import cdist

from .framework.errors import ConfigError, DataError, ShapeError
from .tensor import Tensor, ops

PointCloud = np.ndarray

OCCLUSION_STRATEGIES = ("random", "block")
EMD_MAX_POINTS = 64
_SHRINK = np.float32(1.0 - 2.0 ** -23)


@dataclass(frozen=True)
class PatchSet:
    """G seeds with their K-point neighbourhoods stored as offsets from the seed"""
    seeds: np.ndarray            # (G, 3) float32, rows of the parent cloud
    patches: np.ndarray          # (G, K, 3) float64, parent points minus seed
    source_indices: np.ndarray   # (G, K) int64
    centralized: bool = True

    @property
    def groups(self) -> int:
        return self.seeds.shape[0]

    @property
    def patch_size(self) -> int:
        return self.patches.shape[1]

    def absolute(self, rows: Optional[Sequence[int]] = None) -> np.ndarray:
        """Parent-cloud coordinates of the selected patches, (len(rows), K, 3) float32"""
        rows = np.arange(self.groups) if rows is None else np.asarray(rows, dtype=np.int64)
        patches = self.patches[rows]
        if self.centralized:
            patches = patches + self.seeds[rows][:, None, :]
        return patches.astype(self.seeds.dtype)


@dataclass(frozen=True)
class OcclusionMask:
    """Partition of patch indices into visible and occluded sets"""
    visible: np.ndarray
    occluded: np.ndarray
    strategy: str
    ratio: float

    @property
    def groups(self) -> int:
        return len(self.visible) + len(self.occluded)

    @property
    def num_occluded(self) -> int:
        return len(self.occluded)


def as_cloud(points: Union[np.ndarray, Sequence[Sequence[float]]]) -> PointCloud:
    """Validate an (N, 3) finite cloud and return it as float32"""
    cloud = np.asarray(points, dtype=np.float32)
    if cloud.ndim != 2 or cloud.shape[1] != 3 or cloud.shape[0] < 1:
        raise DataError(f"expected an (N, 3) point cloud with N >= 1, got shape {cloud.shape}")
    if not np.all(np.isfinite(cloud)):
        raise DataError("point cloud contains non-finite coordinates")
    return cloud


def normalize(points: np.ndarray) -> PointCloud:
    """Center on the centroid and scale so the farthest point has norm 1"""
    cloud = as_cloud(points).astype(np.float64)
    centered = cloud - cloud.mean(axis=0)
    radius = np.sqrt((centered * centered).sum(axis=1)).max()
    if radius > 0:
        centered = centered / radius
    out = centered.astype(np.float32)
    # float32 rounding can push the farthest point just past the unit sphere
    while radius > 0 and _max_norm(out) > 1.0:
        out = out * _SHRINK
    return out


def _max_norm(cloud: np.ndarray) -> float:
    c = cloud.astype(np.float64)
    return float(np.sqrt((c * c).sum(axis=1)).max())


def squared_distances(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """(len(a), len(b)) squared Euclidean distances from explicit differences"""
    diff = a.astype(np.float64)[:, None, :] - b.astype(np.float64)[None, :, :]
    return (diff * diff).sum(axis=-1)


def fps(cloud: PointCloud, groups: int, start: Optional[int] = 0,
        rng_seed: Optional[int] = None) -> np.ndarray:
    """
    Farthest point sampling. Each pick maximizes the minimum distance to the
    points already picked. `start=None` draws the first index from `rng_seed`.
    """
    cloud = as_cloud(cloud)
    n = cloud.shape[0]
    if groups < 1 or groups > n:
        raise ConfigError(f"fps: cannot sample {groups} seeds from {n} points")
    if start is None:
        start = int(np.random.default_rng(rng_seed).integers(n))
    if not 0 <= start < n:
        raise ConfigError(f"fps: start index {start} out of range for {n} points")

    points = cloud.astype(np.float64)
    chosen = np.empty(groups, dtype=np.int64)
    chosen[0] = start
    min_dist = np.full(n, np.inf)
    for i in range(1, groups):
        diff = points - points[chosen[i - 1]]
        min_dist = np.minimum(min_dist, (diff * diff).sum(axis=1))
        min_dist[chosen[i - 1]] = -np.inf
        chosen[i] = int(np.argmax(min_dist))
    return chosen


def knn_group_centralize(cloud: PointCloud, seed_indices: Sequence[int], patch_size: int,
                         centralize: bool = True) -> PatchSet:
    """
    Group the `patch_size` nearest points around each seed (the seed itself
    included) and translate each group by minus its seed. Groups may overlap.
    With centralize=False the patches keep absolute coordinates.
    """
    cloud = as_cloud(cloud)
    n = cloud.shape[0]
    if patch_size < 1 or patch_size > n:
        raise ConfigError(f"knn: patch size {patch_size} exceeds {n} points")
    seed_indices = np.asarray(seed_indices, dtype=np.int64)
    seeds = cloud[seed_indices]
    order = np.argsort(squared_distances(seeds, cloud), axis=1, kind="stable")
    source = order[:, :patch_size]
    grouped = cloud[source].astype(np.float64)
    if centralize:
        grouped = grouped - seeds.astype(np.float64)[:, None, :]
    return PatchSet(seeds=seeds, patches=grouped, source_indices=source, centralized=centralize)


def occlusion_count(groups: int, ratio: float) -> int:
    """R = round(ratio * G), halves rounded up"""
    return int(np.floor(ratio * groups + 0.5))


def occlude(groups: int, ratio: float, strategy: str = "random",
            seeds: Optional[np.ndarray] = None, rng_seed: Optional[int] = None,
            anchor: Optional[int] = None) -> OcclusionMask:
    """
    Split G patch indices into visible and occluded sets.

    random: R indices drawn without replacement.
    block:  the R seeds nearest an anchor seed (drawn uniformly unless given).
    """
    if not 0.0 <= ratio < 1.0:
        raise ConfigError(f"occlusion ratio must be in [0, 1), got {ratio}")
    if strategy not in OCCLUSION_STRATEGIES:
        raise ConfigError(f"unknown occlusion strategy '{strategy}'")
    count = occlusion_count(groups, ratio)
    rng = np.random.default_rng(rng_seed)

    if strategy == "random":
        occluded = rng.choice(groups, size=count, replace=False)
    else:
        if seeds is None or len(seeds) != groups:
            raise ShapeError("occlude", (groups,), np.shape(seeds) if seeds is not None else (0,),
                             detail="block occlusion needs one seed per group")
        if anchor is None:
            anchor = int(rng.integers(groups))
        d = squared_distances(np.asarray(seeds)[anchor:anchor + 1], np.asarray(seeds))[0]
        occluded = np.argsort(d, kind="stable")[:count]

    is_occluded = np.zeros(groups, dtype=bool)
    is_occluded[occluded] = True
    return OcclusionMask(
        visible=np.flatnonzero(~is_occluded),
        occluded=np.flatnonzero(is_occluded),
        strategy=strategy,
        ratio=float(ratio),
    )


def chamfer_distance(pred: Union[Tensor, np.ndarray], target: np.ndarray) -> Tensor:
    """
    Mean nearest-neighbour distance from pred to target plus from target to
    pred (unsquared L2). Gradients flow to `pred` through the matches picked
    on the forward pass.
    """
    pred = pred if isinstance(pred, Tensor) else Tensor(np.asarray(pred, dtype=np.float64))
    target = np.asarray(target)
    if pred.values.ndim != 2 or target.ndim != 2 or pred.shape[1] != 3 or target.shape[1] != 3:
        raise ShapeError("chamfer_distance", pred.shape, target.shape)
    if pred.shape[0] == 0 or target.shape[0] == 0:
        raise ShapeError("chamfer_distance", pred.shape, target.shape, detail="empty point set")

    d2 = squared_distances(pred.values, target)
    nearest_target = np.argmin(d2, axis=1)
    nearest_pred = np.argmin(d2, axis=0)

    target_t = ops.const(target.astype(pred.dtype))
    forward_term = ops.mean(ops.row_norm(ops.sub(pred, ops.gather_rows(target_t, nearest_target))))
    backward_term = ops.mean(ops.row_norm(ops.sub(ops.gather_rows(pred, nearest_pred), target_t)))
    return ops.add(forward_term, backward_term)


def emd_matching(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Optimal bijection: row i of `a` is matched to row result[i] of `b`"""
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.ndim != 2 or a.shape != b.shape or a.shape[1] != 3:
        raise ShapeError("emd", a.shape, b.shape, detail="needs two equal-size (n, 3) sets")
    if a.shape[0] == 0:
        raise ShapeError("emd", a.shape, b.shape, detail="empty point set")
    if a.shape[0] > EMD_MAX_POINTS:
        raise ShapeError("emd", a.shape, b.shape, detail=f"n exceeds the {EMD_MAX_POINTS}-point guard")
    rows, cols = linear_sum_assignment(cdist(a, b))
    matching = np.empty(a.shape[0], dtype=np.int64)
    matching[rows] = cols
    return matching


def emd_exact(a: np.ndarray, b: np.ndarray) -> float:
    """Minimum over bijections of the mean matched Euclidean distance"""
    matching = emd_matching(a, b)
    diff = np.asarray(a, dtype=np.float64) - np.asarray(b, dtype=np.float64)[matching]
    return float(np.sqrt((diff * diff).sum(axis=1)).mean())


def emd_loss(pred: Tensor, target: np.ndarray) -> Tensor:
    """Differentiable EMD: the optimal matching is fixed on the forward pass"""
    matching = emd_matching(pred.values, target)
    matched = ops.const(np.asarray(target)[matching].astype(pred.dtype))
    return ops.mean(ops.row_norm(ops.sub(pred, matched)))
