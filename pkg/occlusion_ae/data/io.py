"""
File formats.

xyz   ASCII, one `x y z` triple per line, `#` comments, 9 significant digits.
OPC1  b"OPC1", u32 point count, little-endian float32 x, y, z per point.
OAE1  b"OAE1", u32 version, u32 tensor count, then per tensor: u32 name
      length, UTF-8 name, u32 rank, u64 dims, u32 dtype code (0 = float32,
      1 = float64), raw little-endian values; trailing u64 checksum
      (8-byte BLAKE2b) of every preceding byte.
"""
import hashlib
import struct
from dataclasses import dataclass, field
from pathlib import Path
from typing import List, Optional, Union

import numpy as np

from ..framework.errors import DataError
from ..framework.logger import get_logger
from ..geometry import PointCloud, as_cloud
from ..model.weights import ModelWeights
from ..tensor import Tensor

logger = get_logger("data.io")

PathLike = Union[str, Path]

CLOUD_MAGIC = b"OPC1"
CHECKPOINT_MAGIC = b"OAE1"
CHECKPOINT_VERSION = 1
DTYPE_CODES = {0: np.dtype("<f4"), 1: np.dtype("<f8")}
CODE_FOR_DTYPE = {np.dtype(np.float32): 0, np.dtype(np.float64): 1}


def _cloud_format(path: Path, fmt: Optional[str]) -> str:
    fmt = fmt or path.suffix.lstrip(".").lower()
    if fmt not in ("xyz", "bin"):
        raise DataError(f"unknown point cloud format '{fmt}' (use xyz or bin)", path=str(path))
    return fmt


def save_pointcloud(path: PathLike, cloud: np.ndarray, fmt: Optional[str] = None) -> None:
    path = Path(path)
    fmt = _cloud_format(path, fmt)
    points = np.asarray(cloud, dtype=np.float32)
    if points.ndim != 2 or points.shape[1] != 3:
        raise DataError(f"expected an (N, 3) point cloud, got shape {points.shape}", path=str(path))
    path.parent.mkdir(parents=True, exist_ok=True)
    if fmt == "bin":
        payload = CLOUD_MAGIC + struct.pack("<I", len(points)) + points.astype("<f4").tobytes()
        path.write_bytes(payload)
    else:
        lines = [f"{x:.9g} {y:.9g} {z:.9g}" for x, y, z in points.tolist()]
        path.write_text("\n".join(lines) + ("\n" if lines else ""), encoding="utf-8")


def load_pointcloud(path: PathLike, fmt: Optional[str] = None) -> PointCloud:
    path = Path(path)
    fmt = _cloud_format(path, fmt)
    try:
        if fmt == "bin":
            return _parse_bin(path.read_bytes(), str(path))
        return _parse_xyz(path.read_text(encoding="utf-8"), str(path))
    except OSError as e:
        raise DataError(f"cannot read point cloud: {e}", path=str(path))


def _parse_bin(data: bytes, source: str) -> PointCloud:
    if len(data) < 8:
        raise DataError("truncated header", path=source, offset=len(data))
    if data[:4] != CLOUD_MAGIC:
        raise DataError(f"bad magic {data[:4]!r}", path=source, offset=0)
    (count,) = struct.unpack_from("<I", data, 4)
    expected = 8 + 12 * count
    if len(data) < expected:
        raise DataError(f"file holds {len(data)} bytes, {expected} needed for {count} points",
                        path=source, offset=len(data))
    if len(data) > expected:
        raise DataError("trailing bytes after the last point", path=source, offset=expected)
    points = np.frombuffer(data, dtype="<f4", count=3 * count, offset=8).reshape(count, 3)
    return points.astype(np.float32)


def _parse_xyz(text: str, source: str) -> PointCloud:
    rows: List[List[float]] = []
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        fields = line.split()
        if len(fields) != 3:
            raise DataError(f"expected 3 fields, got {len(fields)}", path=source, line=lineno)
        try:
            rows.append([float(v) for v in fields])
        except ValueError:
            raise DataError(f"non-numeric coordinate in '{line}'", path=source, line=lineno)
    if not rows:
        raise DataError("no points", path=source)
    return np.asarray(rows, dtype=np.float32)


def io_pointcloud(path: PathLike, mode: str, fmt: Optional[str] = None,
                  cloud: Optional[np.ndarray] = None) -> Optional[PointCloud]:
    """Load or save one point cloud"""
    if mode == "load":
        return as_cloud(load_pointcloud(path, fmt))
    if mode == "save":
        if cloud is None:
            raise DataError("save needs a cloud", path=str(path))
        save_pointcloud(path, cloud, fmt)
        return None
    raise DataError(f"unknown mode '{mode}'", path=str(path))


def checksum(data: bytes) -> int:
    return int.from_bytes(hashlib.blake2b(data, digest_size=8).digest(), "little")


def encode_checkpoint(weights: ModelWeights) -> bytes:
    chunks = [CHECKPOINT_MAGIC, struct.pack("<II", CHECKPOINT_VERSION, len(weights))]
    for name, tensor in weights.items():
        values = tensor.values
        code = CODE_FOR_DTYPE.get(values.dtype)
        if code is None:
            raise DataError(f"tensor '{name}' has unsupported dtype {values.dtype}")
        encoded = name.encode("utf-8")
        chunks.append(struct.pack("<I", len(encoded)))
        chunks.append(encoded)
        chunks.append(struct.pack("<I", values.ndim))
        chunks.append(struct.pack(f"<{values.ndim}Q", *values.shape))
        chunks.append(struct.pack("<I", code))
        chunks.append(values.astype(DTYPE_CODES[code]).tobytes())
    body = b"".join(chunks)
    return body + struct.pack("<Q", checksum(body))


def decode_checkpoint(data: bytes, source: str = "<checkpoint>") -> ModelWeights:
    if len(data) < 20:
        raise DataError("truncated checkpoint", path=source, offset=len(data))
    body, (stored,) = data[:-8], struct.unpack("<Q", data[-8:])
    if checksum(body) != stored:
        raise DataError("checksum mismatch", path=source, offset=len(body))
    if body[:4] != CHECKPOINT_MAGIC:
        raise DataError(f"bad magic {body[:4]!r}", path=source, offset=0)

    reader = _Reader(body, source, offset=4)
    version, count = reader.unpack("<II")
    if version != CHECKPOINT_VERSION:
        raise DataError(f"unsupported checkpoint version {version}", path=source, offset=4)
    weights = ModelWeights()
    for _ in range(count):
        (name_len,) = reader.unpack("<I")
        name = reader.take(name_len).decode("utf-8")
        (rank,) = reader.unpack("<I")
        dims = reader.unpack(f"<{rank}Q")
        code_offset = reader.offset
        (code,) = reader.unpack("<I")
        if code not in DTYPE_CODES:
            raise DataError(f"unknown dtype code {code} for tensor '{name}'", path=source, offset=code_offset)
        dtype = DTYPE_CODES[code]
        size = int(np.prod(dims)) if rank else 1
        raw = reader.take(size * dtype.itemsize)
        values = np.frombuffer(raw, dtype=dtype).reshape(dims).astype(dtype.newbyteorder("="))
        weights.register(name, Tensor(values))
    if reader.offset != len(body):
        raise DataError("trailing bytes after the last tensor", path=source, offset=reader.offset)
    return weights


class _Reader:
    def __init__(self, data: bytes, source: str, offset: int = 0):
        self.data = data
        self.source = source
        self.offset = offset

    def take(self, size: int) -> bytes:
        if self.offset + size > len(self.data):
            raise DataError("truncated checkpoint", path=self.source, offset=self.offset)
        chunk = self.data[self.offset:self.offset + size]
        self.offset += size
        return chunk

    def unpack(self, fmt: str) -> tuple:
        return struct.unpack(fmt, self.take(struct.calcsize(fmt)))


@dataclass
class CheckpointLoad:
    weights: ModelWeights
    missing: List[str] = field(default_factory=list)
    extra: List[str] = field(default_factory=list)


def save_checkpoint(path: PathLike, weights: ModelWeights) -> None:
    path = Path(path)
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        tmp = path.with_name(path.name + ".tmp")
        tmp.write_bytes(encode_checkpoint(weights))
        tmp.replace(path)
    except OSError as e:
        raise DataError(f"cannot write checkpoint: {e}", path=str(path))


def load_checkpoint(path: PathLike, template: Optional[ModelWeights] = None,
                    strict: bool = True) -> CheckpointLoad:
    """
    Read a checkpoint. With a template, names and shapes are compared: in
    strict mode any missing or extra name is an error; otherwise missing
    parameters are taken from the template and extras are dropped.
    """
    path = Path(path)
    try:
        data = path.read_bytes()
    except OSError as e:
        raise DataError(f"cannot read checkpoint: {e}", path=str(path))
    loaded = decode_checkpoint(data, str(path))
    if template is None:
        return CheckpointLoad(weights=loaded)

    missing = [name for name in template.names() if name not in loaded]
    extra = [name for name in loaded.names() if name not in template]
    if strict and (missing or extra):
        raise DataError(f"parameter names differ: missing {missing}, extra {extra}", path=str(path))
    for name in template.names():
        if name in loaded and loaded[name].shape != template[name].shape:
            raise DataError(f"tensor '{name}' has shape {loaded[name].shape}, "
                            f"model expects {template[name].shape}", path=str(path))
    if missing or extra:
        logger.warning(f"Checkpoint {path}: missing {missing}, ignoring extra {extra}")

    weights = ModelWeights({
        name: loaded[name] if name in loaded else template[name] for name in template.names()
    })
    return CheckpointLoad(weights=weights, missing=missing, extra=extra)


def io_checkpoint(path: PathLike, mode: str, weights: Optional[ModelWeights] = None,
                  strict: bool = True) -> Optional[ModelWeights]:
    """Save `weights`, or load into the layout of `weights` when given"""
    if mode == "save":
        if weights is None:
            raise DataError("save needs weights", path=str(path))
        save_checkpoint(path, weights)
        return None
    if mode == "load":
        return load_checkpoint(path, template=weights, strict=strict).weights
    raise DataError(f"unknown mode '{mode}'", path=str(path))
