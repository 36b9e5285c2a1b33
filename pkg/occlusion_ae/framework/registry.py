"""
Name -> object registries populated with decorators.

Used for synthetic shape samplers and ablation axes, so new entries register
themselves where they are defined.
"""
from typing import Callable, Dict, Generic, List, TypeVar

from .errors import ConfigError

T = TypeVar("T")


class Registry(Generic[T]):
    """Registry of named entries with decorator-based registration"""

    def __init__(self, kind: str):
        self.kind = kind
        self._entries: Dict[str, T] = {}

    def register(self, name: str) -> Callable[[T], T]:
        """Decorator to register an entry under `name`"""
        def decorator(obj: T) -> T:
            if name in self._entries:
                raise ConfigError(f"{self.kind} '{name}' is already registered")
            self._entries[name] = obj
            return obj
        return decorator

    def get(self, name: str) -> T:
        """Look up an entry, listing the alternatives when it is missing"""
        if name not in self._entries:
            raise ConfigError(
                f"Unknown {self.kind} '{name}'. Available: {', '.join(self.names())}"
            )
        return self._entries[name]

    def names(self) -> List[str]:
        """Registered names in registration order"""
        return list(self._entries.keys())

    def __contains__(self, name: str) -> bool:
        return name in self._entries

    def __len__(self) -> int:
        return len(self._entries)
