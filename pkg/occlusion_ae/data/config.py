from dataclasses import dataclass
from typing import List

from ..framework.errors import ConfigError


@dataclass
class DataConfig:
    """Synthetic benchmark sizes and generation settings"""
    n_train: int = 512
    n_test: int = 128
    categories: str = "sphere,box,torus,cylinder,cone"
    jitter: float = 0.005
    cloud_format: str = "bin"

    def __post_init__(self):
        if self.n_train < 1 or self.n_test < 0:
            raise ConfigError("data.n_train must be >= 1 and data.n_test >= 0")
        if self.jitter < 0:
            raise ConfigError(f"data.jitter must be non-negative, got {self.jitter}")
        if self.cloud_format not in ("bin", "xyz"):
            raise ConfigError(f"data.cloud_format must be bin or xyz, got '{self.cloud_format}'")
        if len(self.category_list) < 1:
            raise ConfigError("data.categories must name at least one shape")
        # labels cycle through the categories, so every class needs a train cloud
        if self.n_train < len(self.category_list):
            raise ConfigError(f"data.n_train must be at least the number of categories "
                              f"({len(self.category_list)}), got {self.n_train}")

    @property
    def category_list(self) -> List[str]:
        return [c.strip() for c in self.categories.split(",") if c.strip()]
