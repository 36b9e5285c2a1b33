from dataclasses import dataclass
from typing import Callable

import numpy as np

from ..framework.errors import TapeError
from .tensor import Tape, Tensor

ScalarFunction = Callable[[Tensor], Tensor]


@dataclass
class GradCheckReport:
    """Per-coordinate comparison of tape gradients against central differences"""
    analytic: np.ndarray
    numeric: np.ndarray
    errors: np.ndarray
    tol: float

    @property
    def max_error(self) -> float:
        return float(self.errors.max()) if self.errors.size else 0.0

    @property
    def passed(self) -> bool:
        return bool(np.all(self.errors <= self.tol))


def grad_check(f: ScalarFunction, x: Tensor, h: float = 1e-6, tol: float = 1e-4) -> GradCheckReport:
    """
    Compare d f / d x from the tape with central finite differences at 64-bit.

    Relative error per coordinate is |g_ad - g_fd| / max(|g_ad|, |g_fd|, 1e-8).
    `x` should be a generic point: ops with argmax/argmin switch branches at ties.
    """
    base = np.array(x.values, dtype=np.float64)

    with Tape() as tape:
        leaf = tape.watch(Tensor(base))
        out = f(leaf)
        if out.values.size != 1:
            raise TapeError(f"grad_check needs a scalar function, got shape {out.shape}")
        analytic = tape.backward(out)[leaf.node_id].values.astype(np.float64).reshape(base.shape)

    numeric = np.zeros_like(base)
    flat = numeric.reshape(-1)
    for i in range(base.size):
        plus = base.copy().reshape(-1)
        minus = base.copy().reshape(-1)
        plus[i] += h
        minus[i] -= h
        f_plus = f(Tensor(plus.reshape(base.shape))).item()
        f_minus = f(Tensor(minus.reshape(base.shape))).item()
        flat[i] = (f_plus - f_minus) / (2.0 * h)

    denom = np.maximum(np.maximum(np.abs(analytic), np.abs(numeric)), 1e-8)
    errors = np.abs(analytic - numeric) / denom
    return GradCheckReport(analytic=analytic, numeric=numeric, errors=errors, tol=tol)
