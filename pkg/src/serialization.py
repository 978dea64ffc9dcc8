"""
Array Serialization
Binary codec for parameter arrays and memory snapshots: a little-endian uint32
shape header (rank, dims) followed by row-major little-endian float32 values.
"""
import io
import logging
from pathlib import Path
from typing import BinaryIO, Dict, Union

import numpy as np

from .errors import CheckpointError

logger = logging.getLogger(__name__)

PARAMS_MAGIC = b"TTMP"
FORMAT_VERSION = 1
_U32 = np.dtype("<u4")
_F32 = np.dtype("<f4")


def _read_exact(stream: BinaryIO, size: int, what: str) -> bytes:
    data = stream.read(size)
    if len(data) != size:
        raise CheckpointError(f"Truncated file while reading {what} ({len(data)}/{size} bytes)")
    return data


def _read_u32(stream: BinaryIO, count: int, what: str) -> np.ndarray:
    return np.frombuffer(_read_exact(stream, count * _U32.itemsize, what), dtype=_U32)


def write_array(stream: BinaryIO, array: np.ndarray) -> None:
    """Write one array block (rank, dims, float32 data)."""
    array = np.asarray(array, dtype=_F32)
    header = np.asarray([array.ndim, *array.shape], dtype=_U32)
    stream.write(header.tobytes())
    stream.write(array.tobytes(order="C"))


def read_array(stream: BinaryIO) -> np.ndarray:
    rank = int(_read_u32(stream, 1, "rank")[0])
    if rank > 3:
        raise CheckpointError(f"Array rank {rank} exceeds 3")
    shape = tuple(int(s) for s in _read_u32(stream, rank, "shape"))
    count = int(np.prod(shape, dtype=np.int64))
    data = np.frombuffer(_read_exact(stream, count * _F32.itemsize, "array data"), dtype=_F32)
    return data.reshape(shape).astype(np.float32)


def encode_array(array: np.ndarray) -> bytes:
    buffer = io.BytesIO()
    write_array(buffer, array)
    return buffer.getvalue()


def decode_array(data: bytes) -> np.ndarray:
    stream = io.BytesIO(data)
    array = read_array(stream)
    if stream.read(1):
        raise CheckpointError("Trailing bytes after array block")
    return array


def save_arrays(path: Union[str, Path], arrays: Dict[str, np.ndarray]) -> None:
    """
    Write named arrays, sorted by name.

    Layout: magic, uint32 version, uint32 count, then per array a uint32 name
    length, the UTF-8 name and one array block.
    """
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("wb") as fh:
        fh.write(PARAMS_MAGIC)
        fh.write(np.asarray([FORMAT_VERSION, len(arrays)], dtype=_U32).tobytes())
        for name in sorted(arrays):
            encoded = name.encode("utf-8")
            fh.write(np.asarray([len(encoded)], dtype=_U32).tobytes())
            fh.write(encoded)
            write_array(fh, arrays[name])
    logger.debug(f"Wrote {len(arrays)} arrays to {path}")


def load_arrays(path: Union[str, Path]) -> Dict[str, np.ndarray]:
    path = Path(path)
    if not path.exists():
        raise CheckpointError(f"Array file not found: {path}")
    arrays: Dict[str, np.ndarray] = {}
    with path.open("rb") as fh:
        if _read_exact(fh, len(PARAMS_MAGIC), "magic") != PARAMS_MAGIC:
            raise CheckpointError(f"{path} is not a parameter file")
        version, count = (int(v) for v in _read_u32(fh, 2, "header"))
        if version != FORMAT_VERSION:
            raise CheckpointError(f"Unsupported parameter file version {version}")
        for _ in range(count):
            length = int(_read_u32(fh, 1, "name length")[0])
            name = _read_exact(fh, length, "name").decode("utf-8")
            arrays[name] = read_array(fh)
        if fh.read(1):
            raise CheckpointError(f"Trailing bytes in {path}")
    return arrays


def save_memory_snapshot(path: Union[str, Path], memory: np.ndarray) -> None:
    """Memory snapshot file: a single array block."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_bytes(encode_array(memory))
    logger.info(f"Memory snapshot {tuple(memory.shape)} written to {path}")


def load_memory_snapshot(path: Union[str, Path]) -> np.ndarray:
    path = Path(path)
    if not path.exists():
        raise CheckpointError(f"Memory snapshot not found: {path}")
    return decode_array(path.read_bytes())
