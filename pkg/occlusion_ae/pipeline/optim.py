"""
AdamW with decoupled weight decay and a warmup + cosine learning-rate schedule.
"""
import math
from dataclasses import dataclass, field
from typing import Dict, Optional, Tuple

import numpy as np

from ..framework.errors import NumericError, ShapeError
from ..model.weights import ModelWeights
from ..tensor import Tensor
from .config import TrainConfig


@dataclass
class OptimizerState:
    step: int = 0
    first_moment: Dict[str, np.ndarray] = field(default_factory=dict)
    second_moment: Dict[str, np.ndarray] = field(default_factory=dict)
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8

    @classmethod
    def zeros(cls, weights: ModelWeights, beta1: float = 0.9, beta2: float = 0.999,
              eps: float = 1e-8) -> "OptimizerState":
        return cls(
            step=0,
            first_moment={name: np.zeros_like(t.values) for name, t in weights.items()},
            second_moment={name: np.zeros_like(t.values) for name, t in weights.items()},
            beta1=beta1,
            beta2=beta2,
            eps=eps,
        )

    @classmethod
    def from_config(cls, weights: ModelWeights, config: TrainConfig) -> "OptimizerState":
        return cls.zeros(weights, config.beta1, config.beta2, config.eps)


def adamw_step(weights: ModelWeights, grads: Dict[str, np.ndarray], state: OptimizerState,
               config: TrainConfig, lr: Optional[float] = None) -> Tuple[ModelWeights, OptimizerState]:
    """
    One AdamW update. Returns new weights and state; the inputs are left
    untouched. Decay applies to matrices only (see ModelWeights.decayed).
    """
    lr = config.lr if lr is None else lr
    for name, t in weights.items():
        if name not in grads:
            raise ShapeError("adamw_step", t.shape, detail=f"no gradient for '{name}'")
        g = grads[name]
        if g.shape != t.shape:
            raise ShapeError("adamw_step", t.shape, g.shape, detail=f"gradient of '{name}'")
        if not np.all(np.isfinite(g)):
            raise NumericError(f"non-finite gradient for parameter '{name}'", parameter=name)

    step = state.step + 1
    b1, b2 = state.beta1, state.beta2
    correction1 = 1.0 - b1 ** step
    correction2 = 1.0 - b2 ** step
    new_params: Dict[str, Tensor] = {}
    first: Dict[str, np.ndarray] = {}
    second: Dict[str, np.ndarray] = {}
    for name, t in weights.items():
        theta = t.values
        g = grads[name].astype(theta.dtype)
        m = b1 * state.first_moment[name] + (1.0 - b1) * g
        v = b2 * state.second_moment[name] + (1.0 - b2) * g * g
        m_hat = m / correction1
        v_hat = v / correction2
        if config.weight_decay and weights.decayed(name):
            theta = theta - lr * config.weight_decay * theta
        theta = theta - lr * m_hat / (np.sqrt(v_hat) + state.eps)
        new_params[name] = Tensor(theta.astype(t.dtype))
        first[name] = m.astype(t.dtype)
        second[name] = v.astype(t.dtype)
    return ModelWeights(new_params), OptimizerState(step, first, second, b1, b2, state.eps)


class LearningRateSchedule:
    """Linear warmup to `base_lr`, then cosine decay to `min_lr` (or constant)"""

    def __init__(self, base_lr: float, total_steps: int, warmup_steps: int = 0,
                 schedule: str = "cosine", min_lr: float = 0.0):
        self.base_lr = base_lr
        self.total_steps = max(total_steps, 1)
        self.warmup_steps = min(warmup_steps, self.total_steps)
        self.schedule = schedule
        self.min_lr = min_lr

    @classmethod
    def from_config(cls, config: TrainConfig, steps_per_epoch: int) -> "LearningRateSchedule":
        return cls(config.lr, config.epochs * steps_per_epoch, config.warmup * steps_per_epoch,
                   config.schedule, config.min_lr)

    def lr(self, step: int) -> float:
        """Learning rate of 1-based optimizer step `step`"""
        if self.schedule == "constant":
            return self.base_lr
        if step <= self.warmup_steps:
            return self.base_lr * step / self.warmup_steps
        decay_steps = max(self.total_steps - self.warmup_steps, 1)
        progress = min((step - self.warmup_steps) / decay_steps, 1.0)
        return self.min_lr + 0.5 * (self.base_lr - self.min_lr) * (1.0 + math.cos(math.pi * progress))
