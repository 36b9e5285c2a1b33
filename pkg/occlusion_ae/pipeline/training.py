"""
Self-supervised pretraining: occlude, encode the visible patches, decode all
patches and score the reconstructed occluded patches against the true ones.
"""
import time
from concurrent.futures import Executor, ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, List, Optional, Sequence, Tuple, Union

import numpy as np

from ..data.augment import augment
from ..data.dataset import Dataset, sample_seed
from ..data.io import save_checkpoint
from ..framework.errors import ConfigError, DataError, NumericError
from ..framework.logger import get_logger
from ..geometry import (
    OcclusionMask,
    PatchSet,
    chamfer_distance,
    emd_loss,
    fps,
    knn_group_centralize,
    normalize,
    occlude,
)
from ..model import ModelConfig, ModelWeights, forward_sample
from ..tensor import Tape, Tensor, ops
from .config import TrainConfig
from .metrics import MetricsRecord, metrics_export
from .optim import LearningRateSchedule, OptimizerState, adamw_step

logger = get_logger("pipeline.training")

PathLike = Union[str, Path]


@dataclass(frozen=True)
class PreparedSample:
    """A grouped, occluded training sample"""
    patchset: PatchSet
    mask: OcclusionMask

    def target(self) -> np.ndarray:
        """Ground-truth points of the occluded patches, (R*K, 3)"""
        return self.patchset.absolute(self.mask.occluded).reshape(-1, 3)


def prepare_sample(cloud: np.ndarray, seed: int, model_config: ModelConfig,
                   train_config: TrainConfig) -> PreparedSample:
    """normalize -> augment -> fps -> knn grouping -> occlusion, all driven by `seed`"""
    if len(cloud) < model_config.groups or len(cloud) < model_config.patch_size:
        raise DataError(f"cloud has {len(cloud)} points, needs at least "
                        f"{max(model_config.groups, model_config.patch_size)}")
    augment_seed, fps_seed, mask_seed = np.random.SeedSequence(seed).generate_state(3)
    points = augment(normalize(cloud), int(augment_seed), train_config.augment_flags)
    seed_indices = fps(points, model_config.groups, start=None, rng_seed=int(fps_seed))
    patchset = knn_group_centralize(points, seed_indices, model_config.patch_size, model_config.centralize)
    mask = occlude(model_config.groups, train_config.ratio, train_config.strategy,
                   seeds=patchset.seeds, rng_seed=int(mask_seed))
    return PreparedSample(patchset=patchset, mask=mask)


def sample_loss(sample: PreparedSample, weights: ModelWeights, model_config: ModelConfig,
                loss: str = "chamfer") -> Tensor:
    """Reconstruction loss over the occluded patches of one sample"""
    predicted = forward_sample(sample.patchset, sample.mask, weights, model_config).predicted
    target = sample.target()
    if loss == "chamfer":
        return chamfer_distance(predicted, target)

    # EMD per occluded patch, averaged
    size = model_config.patch_size
    total = None
    for j in range(sample.mask.num_occluded):
        rows = np.arange(j * size, (j + 1) * size)
        term = emd_loss(ops.gather_rows(predicted, rows), target[rows])
        total = term if total is None else ops.add(total, term)
    return ops.scale(total, 1.0 / sample.mask.num_occluded)


def forward_loss(batch: Sequence[np.ndarray], weights: ModelWeights, model_config: ModelConfig,
                 train_config: TrainConfig, rng_seed: int, epoch: int = 0,
                 indices: Optional[Sequence[int]] = None,
                 executor: Optional[Executor] = None) -> Tuple[Tensor, np.ndarray]:
    """
    Mean occluded-patch loss of a batch and the per-sample losses.

    Sample b is prepared with seed hash(rng_seed, epoch, indices[b]), so masks
    change every epoch and do not depend on batch composition or worker order.
    """
    if train_config.ratio <= 0.0:
        raise ConfigError("training needs an occlusion ratio > 0 (ratio 0 leaves nothing to reconstruct)")
    if not batch:
        raise DataError("empty batch")
    indices = list(range(len(batch))) if indices is None else list(indices)
    seeds = [sample_seed(rng_seed, epoch, i) for i in indices]

    def prepare(args):
        cloud, seed = args
        return prepare_sample(cloud, seed, model_config, train_config)

    if executor is not None:
        samples = list(executor.map(prepare, zip(batch, seeds)))
    else:
        samples = [prepare(args) for args in zip(batch, seeds)]

    losses = [sample_loss(s, weights, model_config, train_config.loss) for s in samples]
    total = losses[0]
    for term in losses[1:]:
        total = ops.add(total, term)
    per_sample = np.array([term.item() for term in losses], dtype=np.float64)
    return ops.scale(total, 1.0 / len(losses)), per_sample


@dataclass
class PretrainResult:
    weights: ModelWeights
    records: List[MetricsRecord] = field(default_factory=list)
    checkpoints: List[Path] = field(default_factory=list)
    steps: int = 0


def _save(path: Path, weights: ModelWeights, saved: List[Path]) -> None:
    save_checkpoint(path, weights)
    if path not in saved:
        saved.append(path)


def validation_loss(dataset: Dataset, weights: ModelWeights, model_config: ModelConfig,
                    train_config: TrainConfig, executor: Optional[Executor] = None) -> float:
    """Mean loss over a dataset with epoch-independent masks"""
    total, count = 0.0, 0
    for start in range(0, len(dataset), train_config.batch_size):
        idx = list(range(start, min(start + train_config.batch_size, len(dataset))))
        _, per_sample = forward_loss([dataset.clouds[i] for i in idx], weights, model_config, train_config,
                                     rng_seed=train_config.seed + 1, epoch=0, indices=idx, executor=executor)
        total += float(per_sample.sum())
        count += len(idx)
    return total / count


def pretrain(dataset: Dataset, config: TrainConfig, checkpoint_dir: PathLike,
             model_config: Optional[ModelConfig] = None, weights: Optional[ModelWeights] = None,
             val_dataset: Optional[Dataset] = None, metrics_path: Optional[PathLike] = None,
             on_record: Optional[Callable[[MetricsRecord], None]] = None) -> PretrainResult:
    """
    Train from `weights` (or a fresh initialization seeded by config.seed).

    Writes initial.oae, epoch_XXXX.oae every `checkpoint_every` epochs and
    last.oae after each epoch into `checkpoint_dir`, and the metrics CSV to
    `metrics_path` (default: checkpoint_dir/metrics.csv). A non-finite loss
    stops training with last.oae holding the last finite weights.
    """
    model_config = model_config or ModelConfig()
    if len(dataset) == 0:
        raise DataError("pretraining needs a nonempty dataset")
    if config.epochs > 0 and config.ratio <= 0.0:
        raise ConfigError("training needs an occlusion ratio > 0 (ratio 0 leaves nothing to reconstruct)")
    checkpoint_dir = Path(checkpoint_dir)
    metrics_path = Path(metrics_path) if metrics_path else checkpoint_dir / "metrics.csv"
    try:
        checkpoint_dir.mkdir(parents=True, exist_ok=True)
    except OSError as e:
        raise DataError(f"cannot create checkpoint directory: {e}", path=str(checkpoint_dir))

    if weights is None:
        weights = ModelWeights.initialize(model_config, seed=config.seed)
    result = PretrainResult(weights=weights)
    _save(checkpoint_dir / "initial.oae", weights, result.checkpoints)
    _save(checkpoint_dir / "last.oae", weights, result.checkpoints)

    steps_per_epoch = -(-len(dataset) // config.batch_size)
    schedule = LearningRateSchedule.from_config(config, steps_per_epoch)
    state = OptimizerState.from_config(weights, config)

    def emit(record: MetricsRecord) -> None:
        result.records.append(record)
        if on_record:
            on_record(record)

    executor = ThreadPoolExecutor(max_workers=config.workers) if config.workers > 1 else None
    try:
        for epoch in range(1, config.epochs + 1):
            order = np.random.default_rng(sample_seed(config.seed, epoch)).permutation(len(dataset))
            epoch_losses = []
            for start in range(0, len(order), config.batch_size):
                idx = order[start:start + config.batch_size]
                step_start = time.perf_counter()
                lr = schedule.lr(state.step + 1)
                with Tape() as tape:
                    bound = weights.bind(tape)
                    loss, _ = forward_loss([dataset.clouds[i] for i in idx], bound, model_config, config,
                                           rng_seed=config.seed, epoch=epoch, indices=idx, executor=executor)
                    value = loss.item()
                    if not np.isfinite(value):
                        _save(checkpoint_dir / "last.oae", weights, result.checkpoints)
                        metrics_export(result.records, metrics_path)
                        raise NumericError(f"non-finite loss {value} at epoch {epoch}, step {state.step + 1}; "
                                           f"last finite weights kept in {checkpoint_dir / 'last.oae'}")
                    grads = bound.gradients(tape.backward(loss))
                try:
                    weights, state = adamw_step(weights, grads, state, config, lr=lr)
                except NumericError:
                    _save(checkpoint_dir / "last.oae", weights, result.checkpoints)
                    metrics_export(result.records, metrics_path)
                    raise
                epoch_losses.append(value)
                emit(MetricsRecord(state.step, epoch, "train", value, lr,
                                   (time.perf_counter() - step_start) * 1000.0))

            message = f"Epoch {epoch}/{config.epochs}: train loss {np.mean(epoch_losses):.5f}"
            if val_dataset is not None and len(val_dataset):
                val_start = time.perf_counter()
                val = validation_loss(val_dataset, weights, model_config, config, executor)
                emit(MetricsRecord(state.step, epoch, "val", val, schedule.lr(state.step),
                                   (time.perf_counter() - val_start) * 1000.0))
                message += f", val loss {val:.5f}"
            logger.info(message)

            if config.checkpoint_every and epoch % config.checkpoint_every == 0:
                _save(checkpoint_dir / f"epoch_{epoch:04d}.oae", weights, result.checkpoints)
            _save(checkpoint_dir / "last.oae", weights, result.checkpoints)
            metrics_export(result.records, metrics_path)
    finally:
        if executor is not None:
            executor.shutdown()

    metrics_export(result.records, metrics_path)
    result.weights = weights
    result.steps = state.step
    return result
