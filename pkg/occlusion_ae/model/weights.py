"""
Named parameter registry for the auto-encoder.

Every parameter lives under a unique dotted name; the names double as the
checkpoint keys. Matrices (rank >= 2) are the only weight-decayed group.
"""
from typing import Dict, Iterator, List, Optional, Tuple

import numpy as np
from scipy.stats import truncnorm

from ..framework.errors import ConfigError
from ..tensor import Tape, Tensor
from .config import ModelConfig


class ModelWeights:
    """Ordered mapping of parameter name -> Tensor"""

    def __init__(self, params: Optional[Dict[str, Tensor]] = None):
        self._params: Dict[str, Tensor] = {}
        for name, value in (params or {}).items():
            self.register(name, value)

    def register(self, name: str, value) -> Tensor:
        if name in self._params:
            raise ConfigError(f"parameter '{name}' registered twice")
        tensor = value if isinstance(value, Tensor) else Tensor(value)
        self._params[name] = tensor
        return tensor

    def __getitem__(self, name: str) -> Tensor:
        return self._params[name]

    def __contains__(self, name: str) -> bool:
        return name in self._params

    def __len__(self) -> int:
        return len(self._params)

    def __iter__(self) -> Iterator[str]:
        return iter(self._params)

    def names(self) -> List[str]:
        return list(self._params)

    def items(self) -> List[Tuple[str, Tensor]]:
        return list(self._params.items())

    def shapes(self) -> Dict[str, Tuple[int, ...]]:
        return {name: t.shape for name, t in self._params.items()}

    def arrays(self) -> Dict[str, np.ndarray]:
        return {name: t.values for name, t in self._params.items()}

    def bind(self, tape: Tape) -> "ModelWeights":
        """Copy whose parameters are watched leaves of `tape`"""
        return ModelWeights({name: tape.watch(t) for name, t in self._params.items()})

    def gradients(self, grads: Dict[int, Tensor]) -> Dict[str, np.ndarray]:
        """Translate a backward() map into name -> gradient for bound weights"""
        return {name: grads[t.node_id].values for name, t in self._params.items()}

    def astype(self, dtype) -> "ModelWeights":
        return ModelWeights({name: Tensor(t.values.astype(dtype)) for name, t in self._params.items()})

    def decayed(self, name: str) -> bool:
        """Weight decay applies to matrices only: not norms, biases or the occlusion token"""
        return self._params[name].values.ndim >= 2

    @classmethod
    def initialize(cls, config: ModelConfig, seed: int = 0) -> "ModelWeights":
        """Truncated-normal matrices, zero biases, unit norm gains"""
        return _Initializer(config, seed).build()


class _Initializer:
    def __init__(self, config: ModelConfig, seed: int):
        self.config = config
        self.rng = np.random.default_rng(seed)
        self.dtype = config.np_dtype
        self.weights = ModelWeights()

    def normal(self, name: str, shape: Tuple[int, ...]) -> None:
        std = self.config.init_std
        values = truncnorm.rvs(-2.0, 2.0, loc=0.0, scale=std, size=shape, random_state=self.rng)
        self.weights.register(name, Tensor(np.asarray(values, dtype=self.dtype)))

    def constant(self, name: str, shape: Tuple[int, ...], value: float) -> None:
        self.weights.register(name, Tensor(np.full(shape, value, dtype=self.dtype)))

    def mlp(self, prefix: str, out_dim: int, out_bias: bool) -> None:
        hidden = self.config.embed_hidden
        self.normal(f"{prefix}.fc1.weight", (3, hidden))
        self.constant(f"{prefix}.fc1.bias", (hidden,), 0.0)
        self.normal(f"{prefix}.fc2.weight", (hidden, out_dim))
        if out_bias:
            self.constant(f"{prefix}.fc2.bias", (out_dim,), 0.0)

    def block(self, prefix: str, channels: int) -> None:
        cfg = self.config
        head_dim = channels // cfg.heads
        hidden = cfg.hidden_dim(channels)
        self.constant(f"{prefix}.norm1.weight", (channels,), 1.0)
        self.constant(f"{prefix}.norm1.bias", (channels,), 0.0)
        for role in ("query", "key", "value"):
            for h in range(cfg.heads):
                self.normal(f"{prefix}.attn.{role}.{h}", (channels, head_dim))
        self.normal(f"{prefix}.attn.out.weight", (channels, channels))
        self.constant(f"{prefix}.norm2.weight", (channels,), 1.0)
        self.constant(f"{prefix}.norm2.bias", (channels,), 0.0)
        self.normal(f"{prefix}.mlp.fc1.weight", (channels, hidden))
        self.constant(f"{prefix}.mlp.fc1.bias", (hidden,), 0.0)
        if cfg.zero_init_ffn_out:
            self.constant(f"{prefix}.mlp.fc2.weight", (hidden, channels), 0.0)
        else:
            self.normal(f"{prefix}.mlp.fc2.weight", (hidden, channels))
        self.constant(f"{prefix}.mlp.fc2.bias", (channels,), 0.0)

    def build(self) -> ModelWeights:
        cfg = self.config
        self.mlp("patch_embed", cfg.encoder_dim, out_bias=True)
        self.mlp("encoder_pos", cfg.encoder_dim, out_bias=False)
        for i in range(cfg.encoder_depth):
            self.block(f"encoder.blocks.{i}", cfg.encoder_dim)
        self.constant("encoder.norm.weight", (cfg.encoder_dim,), 1.0)
        self.constant("encoder.norm.bias", (cfg.encoder_dim,), 0.0)
        self.normal("proj.weight", (cfg.encoder_dim, cfg.decoder_dim))
        self.constant("proj.bias", (cfg.decoder_dim,), 0.0)
        self.normal("occlusion_token", (cfg.decoder_dim,))
        self.mlp("decoder_pos", cfg.decoder_dim, out_bias=False)
        for i in range(cfg.decoder_depth):
            self.block(f"decoder.blocks.{i}", cfg.decoder_dim)
        return self.weights
