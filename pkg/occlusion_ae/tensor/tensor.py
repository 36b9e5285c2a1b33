"""
Dense arrays recorded on an append-only tape for reverse-mode differentiation.

A Tensor is an immutable numpy array plus, when it participates in a
gradient computation, a handle (node_id) into the Tape that produced it.
Ops append one Node per result; Tape.backward walks the nodes once in
reverse creation order.
"""
import threading
from dataclasses import dataclass
from typing import Any, Callable, Dict, List, Optional, Sequence, Tuple, Union

import numpy as np

from ..framework.errors import ShapeError, TapeError

ArrayLike = Union[np.ndarray, float, int, Sequence[Any]]
VJP = Callable[[np.ndarray], Tuple[Optional[np.ndarray], ...]]

_FLOAT_DTYPES = (np.dtype(np.float32), np.dtype(np.float64))
_state = threading.local()


class Tensor:
    """Immutable dense array, optionally attached to a Tape node"""

    __slots__ = ("values", "requires_grad", "node_id", "tape")

    def __init__(self, values: ArrayLike, dtype: Any = None, requires_grad: bool = False,
                 node_id: Optional[int] = None, tape: Optional["Tape"] = None):
        arr = np.asarray(values, dtype=dtype)
        if arr.dtype not in _FLOAT_DTYPES:
            arr = arr.astype(np.float64)
        if any(d <= 0 for d in arr.shape):
            raise ShapeError("tensor", arr.shape, detail="dimensions must be positive")
        self.values = arr
        self.requires_grad = requires_grad
        self.node_id = node_id
        self.tape = tape

    @property
    def shape(self) -> Tuple[int, ...]:
        return self.values.shape

    @property
    def dtype(self) -> np.dtype:
        return self.values.dtype

    @property
    def size(self) -> int:
        return int(self.values.size)

    def numpy(self) -> np.ndarray:
        return self.values

    def item(self) -> float:
        if self.values.size != 1:
            raise ShapeError("item", self.shape, detail="not a single value")
        return float(self.values.reshape(()))

    def detach(self) -> "Tensor":
        return Tensor(self.values)

    def astype(self, dtype: Any) -> "Tensor":
        return Tensor(self.values.astype(dtype))

    def __repr__(self) -> str:
        grad = ", requires_grad" if self.requires_grad else ""
        return f"Tensor(shape={self.shape}, dtype={self.dtype}{grad})"

    # Thin operator sugar over the functional ops
    def __add__(self, other: "Tensor") -> "Tensor":
        from . import ops
        return ops.add(self, other)

    def __sub__(self, other: "Tensor") -> "Tensor":
        from . import ops
        return ops.sub(self, other)

    def __mul__(self, other: Union["Tensor", float]) -> "Tensor":
        from . import ops
        if isinstance(other, Tensor):
            return ops.mul(self, other)
        return ops.scale(self, float(other))

    __rmul__ = __mul__

    def __matmul__(self, other: "Tensor") -> "Tensor":
        from . import ops
        return ops.matmul(self, other)

    @property
    def T(self) -> "Tensor":
        from . import ops
        return ops.transpose(self)


@dataclass
class Node:
    kind: str
    inputs: Tuple[Optional[int], ...]
    shape: Tuple[int, ...]
    vjp: Optional[VJP] = None
    saved: Any = None
    dtype: Any = np.float64


class Tape:
    """
    Append-only record of differentiable operations.

    Usage:
        with Tape() as tape:
            w = tape.watch(weights)
            loss = f(w)
        grads = tape.backward(loss)
    """

    def __init__(self):
        self.nodes: List[Node] = []
        self.macs = 0
        self._backward_done = False

    def __enter__(self) -> "Tape":
        _stack().append(self)
        return self

    def __exit__(self, exc_type, exc, tb) -> None:
        stack = _stack()
        if stack and stack[-1] is self:
            stack.pop()

    def __len__(self) -> int:
        return len(self.nodes)

    def watch(self, tensor: Union[Tensor, ArrayLike]) -> Tensor:
        """Register a leaf that gradients are taken with respect to"""
        values = tensor.values if isinstance(tensor, Tensor) else np.asarray(tensor)
        node_id = self._append(Node("leaf", (), values.shape, dtype=values.dtype))
        return Tensor(values, requires_grad=True, node_id=node_id, tape=self)

    def record(self, kind: str, inputs: Sequence[Tensor], values: np.ndarray,
               vjp: VJP, saved: Any = None) -> Tensor:
        """Append a node for `values` computed from `inputs`"""
        input_ids = tuple(t.node_id if t.tape is self else None for t in inputs)
        node_id = self._append(Node(kind, input_ids, values.shape, vjp, saved, values.dtype))
        return Tensor(values, requires_grad=True, node_id=node_id, tape=self)

    def _append(self, node: Node) -> int:
        if self._backward_done:
            raise TapeError("tape already consumed by backward; call reset() before reuse")
        for input_id in node.inputs:
            if input_id is not None and input_id >= len(self.nodes):
                raise TapeError(f"node input {input_id} does not precede node {len(self.nodes)}")
        self.nodes.append(node)
        return len(self.nodes) - 1

    def backward(self, loss: Tensor) -> Dict[int, Tensor]:
        """
        Gradients of a scalar loss with respect to every watched leaf.

        Returns node_id -> gradient Tensor for each leaf; leaves the loss does
        not depend on get zeros.
        """
        if self._backward_done:
            raise TapeError("backward already called on this tape; call reset() first")
        if loss.tape is not self or loss.node_id is None:
            raise TapeError("loss was not produced on this tape")
        if loss.values.size != 1:
            raise TapeError(f"backward needs a scalar loss, got shape {loss.shape}")

        grads: Dict[int, np.ndarray] = {loss.node_id: np.ones(loss.shape, dtype=loss.dtype)}
        for node_id in range(loss.node_id, -1, -1):
            g = grads.get(node_id)
            node = self.nodes[node_id]
            if g is None or node.vjp is None:
                continue
            for input_id, input_grad in zip(node.inputs, node.vjp(g)):
                if input_id is None or input_grad is None:
                    continue
                if input_id in grads:
                    grads[input_id] = grads[input_id] + input_grad
                else:
                    grads[input_id] = input_grad
        self._backward_done = True

        result: Dict[int, Tensor] = {}
        for node_id, node in enumerate(self.nodes):
            if node.kind != "leaf":
                continue
            g = grads.get(node_id)
            result[node_id] = Tensor(g if g is not None else np.zeros(node.shape, dtype=node.dtype))
        return result

    def reset(self) -> None:
        """Clear all nodes so the tape can record a new computation"""
        self.nodes.clear()
        self.macs = 0
        self._backward_done = False


def _stack() -> List[Tape]:
    if not hasattr(_state, "stack"):
        _state.stack = []
    return _state.stack


def active_tape() -> Optional[Tape]:
    """Innermost tape opened with `with Tape()` on this thread"""
    stack = _stack()
    return stack[-1] if stack else None


def tape_of(op: str, inputs: Sequence[Tensor]) -> Optional[Tape]:
    """The tape shared by the recorded inputs, or None for a constant result"""
    tape = None
    for t in inputs:
        if t.tape is None or not t.requires_grad:
            continue
        if tape is None:
            tape = t.tape
        elif t.tape is not tape:
            raise TapeError(f"{op}: inputs recorded on different tapes")
    return tape
