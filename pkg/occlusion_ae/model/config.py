from dataclasses import dataclass

import numpy as np

from ..framework.errors import ConfigError

DTYPES = {"float32": np.float32, "float64": np.float64}


@dataclass
class ModelConfig:
    """Shape of the occlusion auto-encoder"""
    n_points: int = 256        # N, points per cloud
    groups: int = 16           # G
    patch_size: int = 16       # K
    encoder_dim: int = 64      # C_e
    decoder_dim: int = 48      # C_d, must equal 3 * K
    encoder_depth: int = 4     # H_e
    decoder_depth: int = 2     # H_d
    heads: int = 4
    mlp_ratio: float = 4.0
    embed_hidden: int = 128
    init_std: float = 0.02
    zero_init_ffn_out: bool = True
    layer_norm_eps: float = 1e-5
    centralize: bool = True
    dtype: str = "float32"

    def __post_init__(self):
        self.validate()

    def validate(self) -> None:
        for name in ("n_points", "groups", "patch_size", "encoder_dim", "decoder_dim",
                     "encoder_depth", "decoder_depth", "heads", "embed_hidden"):
            if getattr(self, name) < 1:
                raise ConfigError(f"model.{name} must be positive, got {getattr(self, name)}")
        if self.decoder_dim != 3 * self.patch_size:
            raise ConfigError(
                f"model.decoder_dim ({self.decoder_dim}) must equal 3 * patch_size ({3 * self.patch_size})")
        if self.encoder_dim % self.heads or self.decoder_dim % self.heads:
            raise ConfigError(
                f"model.heads ({self.heads}) must divide encoder_dim ({self.encoder_dim}) "
                f"and decoder_dim ({self.decoder_dim})")
        if self.groups > self.n_points or self.patch_size > self.n_points:
            raise ConfigError("model.groups and model.patch_size cannot exceed model.n_points")
        if self.mlp_ratio <= 0:
            raise ConfigError(f"model.mlp_ratio must be positive, got {self.mlp_ratio}")
        if self.dtype not in DTYPES:
            raise ConfigError(f"model.dtype must be one of {', '.join(DTYPES)}, got '{self.dtype}'")

    @property
    def np_dtype(self):
        return DTYPES[self.dtype]

    def hidden_dim(self, channels: int) -> int:
        """FFN width for a block at `channels`"""
        return int(round(self.mlp_ratio * channels))
