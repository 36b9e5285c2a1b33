from dataclasses import dataclass
from typing import Optional

from ..data.augment import AugmentFlags
from ..framework.errors import ConfigError
from ..geometry import OCCLUSION_STRATEGIES

SCHEDULES = ("cosine", "constant")
LOSSES = ("chamfer", "emd")


@dataclass
class TrainConfig:
    """Pretraining recipe"""
    lr: float = 1e-3
    weight_decay: float = 0.05
    batch_size: int = 16
    epochs: int = 30
    warmup_epochs: Optional[int] = None   # None: 10% of epochs
    schedule: str = "cosine"
    min_lr: float = 1e-6
    ratio: float = 0.75
    strategy: str = "random"
    loss: str = "chamfer"
    seed: int = 0
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    augment_rotate: bool = False
    augment_scale: bool = True
    augment_translate: bool = True
    augment_jitter: bool = False
    checkpoint_every: int = 10
    workers: int = 1

    def __post_init__(self):
        if not self.lr > 0:
            raise ConfigError(f"train.lr must be positive, got {self.lr}")
        if self.weight_decay < 0 or self.min_lr < 0:
            raise ConfigError("train.weight_decay and train.min_lr must be non-negative")
        if self.batch_size < 1:
            raise ConfigError(f"train.batch_size must be >= 1, got {self.batch_size}")
        if self.epochs < 0:
            raise ConfigError(f"train.epochs must be >= 0, got {self.epochs}")
        if self.warmup_epochs is not None and self.warmup_epochs < 0:
            raise ConfigError(f"train.warmup_epochs must be >= 0, got {self.warmup_epochs}")
        if not 0.0 <= self.ratio < 1.0:
            raise ConfigError(f"train.ratio must be in [0, 1), got {self.ratio}")
        if self.schedule not in SCHEDULES:
            raise ConfigError(f"train.schedule must be one of {', '.join(SCHEDULES)}, got '{self.schedule}'")
        if self.strategy not in OCCLUSION_STRATEGIES:
            raise ConfigError(f"train.strategy must be one of {', '.join(OCCLUSION_STRATEGIES)}, "
                              f"got '{self.strategy}'")
        if self.loss not in LOSSES:
            raise ConfigError(f"train.loss must be one of {', '.join(LOSSES)}, got '{self.loss}'")
        if not (0.0 <= self.beta1 < 1.0 and 0.0 <= self.beta2 < 1.0) or self.eps <= 0:
            raise ConfigError("train.beta1/beta2 must be in [0, 1) and train.eps positive")
        if self.checkpoint_every < 0 or self.workers < 1:
            raise ConfigError("train.checkpoint_every must be >= 0 and train.workers >= 1")

    @property
    def warmup(self) -> int:
        if self.warmup_epochs is not None:
            return self.warmup_epochs
        return int(0.1 * self.epochs)

    @property
    def augment_flags(self) -> AugmentFlags:
        return AugmentFlags(
            rotate=self.augment_rotate,
            scale=self.augment_scale,
            translate=self.augment_translate,
            jitter=self.augment_jitter,
        )


@dataclass
class ProbeConfig:
    """L2-regularized multinomial linear classifier on frozen features"""
    lr: float = 0.5
    l2: float = 1e-3
    iterations: int = 2000
    tol: float = 1e-6
    standardize: bool = True

    def __post_init__(self):
        if not self.lr > 0 or self.l2 < 0 or self.iterations < 1 or self.tol < 0:
            raise ConfigError("probe: lr > 0, l2 >= 0, iterations >= 1 and tol >= 0 required")
