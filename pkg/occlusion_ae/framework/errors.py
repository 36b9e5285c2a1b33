"""
Error taxonomy shared by every module.

Each error class carries the CLI exit code it maps to, so `dispatch` can turn
an exception into a process status without inspecting messages.
"""

from typing import Optional, Sequence


class OcclusionAEError(Exception):
    """Base class for all package errors"""
    exit_code: int = 1


class ConfigError(OcclusionAEError, ValueError):
    """Unknown key, bad value or invalid combination in a configuration"""
    exit_code = 1


class ShapeError(OcclusionAEError, ValueError):
    """Operand shapes do not conform for an operation"""
    exit_code = 3

    def __init__(self, op: str, *shapes: Sequence[int], detail: str = ""):
        self.op = op
        self.shapes = tuple(tuple(s) for s in shapes)
        rendered = " and ".join(str(s) for s in self.shapes)
        message = f"{op}: incompatible shapes {rendered}" if shapes else f"{op}: invalid shape"
        if detail:
            message += f" ({detail})"
        super().__init__(message)


class TapeError(OcclusionAEError, RuntimeError):
    """Misuse of a gradient tape (double backward, mixed tapes, non-scalar loss)"""
    exit_code = 3


class NumericError(OcclusionAEError, ArithmeticError):
    """Non-finite loss, gradient or input"""
    exit_code = 3

    def __init__(self, message: str, parameter: Optional[str] = None):
        self.parameter = parameter
        super().__init__(message)


class DataError(OcclusionAEError):
    """Malformed or unreadable data file, manifest or dataset"""
    exit_code = 2

    def __init__(self, message: str, path: Optional[str] = None,
                 line: Optional[int] = None, offset: Optional[int] = None):
        self.path = path
        self.line = line
        self.offset = offset
        where = []
        if path is not None:
            where.append(str(path))
        if line is not None:
            where.append(f"line {line}")
        if offset is not None:
            where.append(f"byte {offset}")
        super().__init__(f"{', '.join(where)}: {message}" if where else message)
