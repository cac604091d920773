"""HXT1 tensor container.

Little-endian: magic ``HXT1``, rank (u32), one u32 per dim, then the raw
float64 values in row-major order.
"""
from __future__ import annotations

import struct
from pathlib import Path
from typing import Dict, Mapping, Union

import numpy as np

from app.core.errors import ParseError
from app.numcore.tensor import Tensor

MAGIC = b"HXT1"
SUFFIX = ".hxt"

ArrayLike = Union[Tensor, np.ndarray]


def _as_array(value: ArrayLike) -> np.ndarray:
    return value.data if isinstance(value, Tensor) else np.asarray(value, dtype=np.float64)


def tensor_to_bytes(value: ArrayLike) -> bytes:
    array = _as_array(value)
    header = MAGIC + struct.pack("<I", array.ndim) + struct.pack(f"<{array.ndim}I", *array.shape)
    return header + np.ascontiguousarray(array, dtype="<f8").tobytes()


def tensor_from_bytes(buffer: bytes) -> np.ndarray:
    if buffer[:4] != MAGIC:
        raise ParseError("not an HXT1 tensor: bad magic bytes")
    try:
        (rank,) = struct.unpack_from("<I", buffer, 4)
        dims = struct.unpack_from(f"<{rank}I", buffer, 8)
    except struct.error:
        raise ParseError("truncated HXT1 header") from None
    offset = 8 + 4 * rank
    count = int(np.prod(dims, dtype=np.int64))
    if len(buffer) - offset != 8 * count:
        raise ParseError(f"HXT1 payload holds {len(buffer) - offset} bytes, expected {8 * count}")
    values = np.frombuffer(buffer, dtype="<f8", count=count, offset=offset)
    return values.astype(np.float64).reshape(dims)


def save_tensor(path: Union[str, Path], value: ArrayLike) -> None:
    Path(path).write_bytes(tensor_to_bytes(value))


def load_tensor(path: Union[str, Path]) -> np.ndarray:
    return tensor_from_bytes(Path(path).read_bytes())


def save_named(directory: Union[str, Path], named: Mapping[str, ArrayLike]) -> None:
    """Write one file per named tensor, ``{name}.hxt``."""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    for name in sorted(named):
        save_tensor(directory / f"{name}{SUFFIX}", named[name])


def load_named(directory: Union[str, Path]) -> Dict[str, np.ndarray]:
    directory = Path(directory)
    return {
        path.name[: -len(SUFFIX)]: load_tensor(path)
        for path in sorted(directory.glob(f"*{SUFFIX}"))
    }
