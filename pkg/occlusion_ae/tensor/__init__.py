"""Dense arrays with tape-based reverse-mode differentiation."""

from . import ops
from .gradcheck import GradCheckReport, grad_check
from .tensor import Node, Tape, Tensor, active_tape

__all__ = [
    "ops",
    "Tensor",
    "Tape",
    "Node",
    "active_tape",
    "grad_check",
    "GradCheckReport",
]
