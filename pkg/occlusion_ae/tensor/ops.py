"""
Differentiable operations.

Every op validates shapes, computes its result with numpy and, when any
input is recorded on a tape, appends a node whose vector-Jacobian product
closes over exactly what the backward pass needs. No broadcasting beyond
`add_row`.
"""
from typing import Optional, Sequence, Tuple

import numpy as np
from scipy.special import erf

from ..framework.errors import ShapeError
from .tensor import Tensor, VJP, active_tape, tape_of

_SQRT_2 = np.sqrt(2.0)
_INV_SQRT_2PI = 1.0 / np.sqrt(2.0 * np.pi)


def _result(kind: str, inputs: Sequence[Tensor], values: np.ndarray,
            vjp: VJP, saved=None) -> Tensor:
    tape = tape_of(kind, inputs)
    if tape is None:
        return Tensor(values)
    return tape.record(kind, inputs, values, vjp, saved)


def _require_same(op: str, a: Tensor, b: Tensor) -> None:
    if a.shape != b.shape:
        raise ShapeError(op, a.shape, b.shape)


def _require_rank(op: str, t: Tensor, rank: int) -> None:
    if t.values.ndim != rank:
        raise ShapeError(op, t.shape, detail=f"expected rank {rank}")


def const(values, dtype=None) -> Tensor:
    """A tensor that never receives gradient"""
    return Tensor(values, dtype=dtype)


def matmul(a: Tensor, b: Tensor) -> Tensor:
    """(m, k) @ (k, n) -> (m, n)"""
    if a.values.ndim != 2 or b.values.ndim != 2 or a.shape[1] != b.shape[0]:
        raise ShapeError("matmul", a.shape, b.shape)
    av, bv = a.values, b.values
    out = av @ bv

    counter = tape_of("matmul", (a, b))
    if counter is None:
        counter = active_tape()
    if counter is not None:
        counter.macs += a.shape[0] * a.shape[1] * b.shape[1]

    def vjp(g):
        return g @ bv.T, av.T @ g

    return _result("matmul", (a, b), out, vjp)


def add(a: Tensor, b: Tensor) -> Tensor:
    _require_same("add", a, b)
    return _result("add", (a, b), a.values + b.values, lambda g: (g, g))


def sub(a: Tensor, b: Tensor) -> Tensor:
    _require_same("sub", a, b)
    return _result("sub", (a, b), a.values - b.values, lambda g: (g, -g))


def mul(a: Tensor, b: Tensor) -> Tensor:
    _require_same("mul", a, b)
    av, bv = a.values, b.values
    return _result("mul", (a, b), av * bv, lambda g: (g * bv, g * av))


def scale(a: Tensor, s: float) -> Tensor:
    return _result("scale", (a,), a.values * s, lambda g: (g * s,))


def add_row(a: Tensor, row: Tensor) -> Tensor:
    """(m, n) + (n,): add one row vector to every row"""
    if a.values.ndim != 2 or row.values.ndim != 1 or a.shape[1] != row.shape[0]:
        raise ShapeError("add_row", a.shape, row.shape)
    return _result("add_row", (a, row), a.values + row.values,
                   lambda g: (g, g.sum(axis=0)))


def softmax(x: Tensor) -> Tensor:
    """Softmax over the last axis of a 2D tensor"""
    _require_rank("softmax", x, 2)
    if x.shape[-1] == 0:
        raise ShapeError("softmax", x.shape, detail="empty axis")
    shifted = x.values - x.values.max(axis=-1, keepdims=True)
    e = np.exp(shifted)
    y = e / e.sum(axis=-1, keepdims=True)

    def vjp(g):
        return (y * (g - (g * y).sum(axis=-1, keepdims=True)),)

    return _result("softmax", (x,), y, vjp, saved=y)


def layer_norm(x: Tensor, weight: Tensor, bias: Tensor, eps: float = 1e-5) -> Tensor:
    """Per-row normalization to zero mean / unit variance, then affine"""
    _require_rank("layer_norm", x, 2)
    if weight.shape != (x.shape[1],) or bias.shape != (x.shape[1],):
        raise ShapeError("layer_norm", x.shape, weight.shape, bias.shape)
    xv = x.values
    mu = xv.mean(axis=-1, keepdims=True)
    centered = xv - mu
    var = (centered * centered).mean(axis=-1, keepdims=True)
    inv_std = 1.0 / np.sqrt(var + eps)
    xhat = centered * inv_std
    wv = weight.values
    out = xhat * wv + bias.values

    def vjp(g):
        gxhat = g * wv
        gx = inv_std * (gxhat - gxhat.mean(axis=-1, keepdims=True)
                        - xhat * (gxhat * xhat).mean(axis=-1, keepdims=True))
        return gx, (g * xhat).sum(axis=0), g.sum(axis=0)

    return _result("layer_norm", (x, weight, bias), out, vjp, saved=(xhat, inv_std))


def gelu(x: Tensor) -> Tensor:
    """Exact (erf) GELU"""
    xv = x.values
    cdf = 0.5 * (1.0 + erf(xv / _SQRT_2))
    out = xv * cdf

    def vjp(g):
        pdf = _INV_SQRT_2PI * np.exp(-0.5 * xv * xv)
        return (g * (cdf + xv * pdf),)

    return _result("gelu", (x,), out.astype(xv.dtype, copy=False), vjp)


def max_reduce(x: Tensor, axis: int) -> Tuple[Tensor, np.ndarray]:
    """
    Max along one axis. Returns (values, argmax); ties resolve to the lowest
    index and the gradient flows only to that element.
    """
    axis = axis % x.values.ndim
    idx = np.argmax(x.values, axis=axis)
    out = np.take_along_axis(x.values, np.expand_dims(idx, axis), axis=axis).squeeze(axis)
    shape = x.shape

    def vjp(g):
        gx = np.zeros(shape, dtype=g.dtype)
        np.put_along_axis(gx, np.expand_dims(idx, axis), np.expand_dims(g, axis), axis=axis)
        return (gx,)

    if out.ndim == 0:
        out = out.reshape(())
    return _result("max_reduce", (x,), out, vjp, saved=idx), idx


def sum(x: Tensor, axis: Optional[int] = None) -> Tensor:
    shape = x.shape
    if axis is None:
        out = np.asarray(x.values.sum())

        def vjp(g):
            return (np.broadcast_to(g, shape).copy(),)
    else:
        axis = axis % x.values.ndim
        out = x.values.sum(axis=axis)

        def vjp(g):
            return (np.broadcast_to(np.expand_dims(g, axis), shape).copy(),)

    return _result("sum", (x,), out, vjp)


def mean(x: Tensor, axis: Optional[int] = None) -> Tensor:
    shape = x.shape
    if axis is None:
        count = x.values.size
        out = np.asarray(x.values.mean())

        def vjp(g):
            return (np.broadcast_to(g / count, shape).copy(),)
    else:
        axis = axis % x.values.ndim
        count = shape[axis]
        out = x.values.mean(axis=axis)

        def vjp(g):
            return (np.broadcast_to(np.expand_dims(g / count, axis), shape).copy(),)

    return _result("mean", (x,), out, vjp)


def reshape(x: Tensor, shape: Sequence[int]) -> Tensor:
    shape = tuple(shape)
    if int(np.prod(shape)) != x.values.size:
        raise ShapeError("reshape", x.shape, shape)
    original = x.shape
    return _result("reshape", (x,), x.values.reshape(shape), lambda g: (g.reshape(original),))


def transpose(x: Tensor, axes: Optional[Sequence[int]] = None) -> Tensor:
    if axes is None:
        axes = tuple(reversed(range(x.values.ndim)))
    axes = tuple(axes)
    if sorted(axes) != list(range(x.values.ndim)):
        raise ShapeError("transpose", x.shape, detail=f"bad axes {axes}")
    inverse = tuple(np.argsort(axes))
    return _result("transpose", (x,), x.values.transpose(axes),
                   lambda g: (g.transpose(inverse),))


def concat(tensors: Sequence[Tensor], axis: int = 0) -> Tensor:
    if not tensors:
        raise ShapeError("concat", detail="no inputs")
    ndim = tensors[0].values.ndim
    axis = axis % ndim
    for t in tensors[1:]:
        if t.values.ndim != ndim or any(
                t.shape[d] != tensors[0].shape[d] for d in range(ndim) if d != axis):
            raise ShapeError("concat", tensors[0].shape, t.shape)
    sizes = [t.shape[axis] for t in tensors]
    splits = np.cumsum(sizes)[:-1]
    out = np.concatenate([t.values for t in tensors], axis=axis)

    def vjp(g):
        return tuple(np.split(g, splits, axis=axis))

    return _result("concat", tuple(tensors), out, vjp)


def gather_rows(x: Tensor, index: Sequence[int]) -> Tensor:
    """Rows of x at `index` (repeats allowed); gradients accumulate per row"""
    idx = np.asarray(index, dtype=np.int64)
    if idx.ndim != 1 or idx.size == 0:
        raise ShapeError("gather_rows", x.shape, idx.shape, detail="index must be a nonempty vector")
    if idx.min() < 0 or idx.max() >= x.shape[0]:
        raise ShapeError("gather_rows", x.shape, idx.shape, detail="index out of range")
    shape = x.shape

    def vjp(g):
        gx = np.zeros(shape, dtype=g.dtype)
        np.add.at(gx, idx, g)
        return (gx,)

    return _result("gather_rows", (x,), x.values[idx], vjp, saved=idx)


def row_norm(x: Tensor) -> Tensor:
    """Euclidean norm of each row of a 2D tensor; subgradient 0 at the origin"""
    _require_rank("row_norm", x, 2)
    xv = x.values
    norms = np.sqrt((xv * xv).sum(axis=1))

    def vjp(g):
        safe = np.where(norms > 0, norms, 1.0)
        coeff = np.where(norms > 0, g / safe, 0.0)
        return (coeff[:, None] * xv,)

    return _result("row_norm", (x,), norms, vjp)


def linear(x: Tensor, weight: Tensor, bias: Optional[Tensor] = None) -> Tensor:
    """x @ W (+ b)"""
    out = matmul(x, weight)
    return add_row(out, bias) if bias is not None else out
