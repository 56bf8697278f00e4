"""
Little-endian binary persistence shared by gram, stats and checkpoint files.

Files:
- grams/*.egrm: one envelope gram per utterance
- stats.nsta: per-bin normalisation statistics
- *.cgvc: trainer checkpoints

All writes go to a temporary sibling first and are moved into place with os.replace,
so readers never observe a half-written file.
"""

import logging
import os
import struct
import tempfile
from pathlib import Path
from typing import Sequence, Tuple, Union

import numpy as np

from src.errors import FormatError

logger = logging.getLogger(__name__)

PathLike = Union[str, Path]


def write_atomic(path: PathLike, payload: bytes) -> Path:
    """Write `payload` to `path` via a temp file in the same directory."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp_name = tempfile.mkstemp(prefix=f".{path.name}.", suffix=".tmp", dir=path.parent)
    try:
        with os.fdopen(fd, "wb") as handle:
            handle.write(payload)
            handle.flush()
            os.fsync(handle.fileno())
        os.replace(tmp_name, path)
    except OSError:
        logger.error(f"[Storage] Failed writing {path}")
        if os.path.exists(tmp_name):
            os.unlink(tmp_name)
        raise
    logger.debug(f"[Storage] Wrote {len(payload)} bytes to {path}")
    return path


def read_bytes(path: PathLike, kind: str) -> bytes:
    try:
        return Path(path).read_bytes()
    except FileNotFoundError:
        raise
    except OSError as e:
        raise FormatError(f"cannot read {kind} file {path}: {e}") from e


class BinaryWriter:
    """Accumulates little-endian fields."""

    def __init__(self):
        self._parts = []

    def raw(self, data: bytes) -> "BinaryWriter":
        self._parts.append(data)
        return self

    def u32(self, value: int) -> "BinaryWriter":
        return self.raw(struct.pack("<I", value))

    def u64(self, value: int) -> "BinaryWriter":
        return self.raw(struct.pack("<Q", value))

    def f64(self, value: float) -> "BinaryWriter":
        return self.raw(struct.pack("<d", value))

    def text(self, value: str) -> "BinaryWriter":
        encoded = value.encode("utf-8")
        return self.u32(len(encoded)).raw(encoded)

    def array(self, values: np.ndarray) -> "BinaryWriter":
        return self.raw(np.ascontiguousarray(values, dtype="<f8").tobytes())

    def tensor(self, name: str, values: np.ndarray) -> "BinaryWriter":
        self.text(name).u32(values.ndim)
        for dim in values.shape:
            self.u32(dim)
        return self.array(values)

    def getvalue(self) -> bytes:
        return b"".join(self._parts)


class BinaryReader:
    """Cursor over a byte buffer; running past the end is a FormatError."""

    def __init__(self, data: bytes, source: str = "buffer"):
        self._data = data
        self._pos = 0
        self.source = source

    def _take(self, size: int) -> bytes:
        end = self._pos + size
        if size < 0 or end > len(self._data):
            raise FormatError(f"{self.source}: truncated at byte {self._pos} (wanted {size} more)")
        chunk = self._data[self._pos : end]
        self._pos = end
        return chunk

    def magic(self, expected: bytes) -> None:
        found = self._take(len(expected))
        if found != expected:
            raise FormatError(f"{self.source}: bad magic {found!r}, expected {expected!r}")

    def version(self, supported: int) -> int:
        found = self.u32()
        if found != supported:
            raise FormatError(f"{self.source}: unsupported version {found}, expected {supported}")
        return found

    def u32(self) -> int:
        return struct.unpack("<I", self._take(4))[0]

    def u64(self) -> int:
        return struct.unpack("<Q", self._take(8))[0]

    def f64(self) -> float:
        return struct.unpack("<d", self._take(8))[0]

    def text(self) -> str:
        size = self.u32()
        try:
            return self._take(size).decode("utf-8")
        except UnicodeDecodeError as e:
            raise FormatError(f"{self.source}: invalid UTF-8 string") from e

    def array(self, shape: Sequence[int]) -> np.ndarray:
        count = int(np.prod(shape, dtype=np.int64))
        values = np.frombuffer(self._take(8 * count), dtype="<f8").astype(np.float64)
        return values.reshape(tuple(shape))

    def tensor(self) -> Tuple[str, np.ndarray]:
        name = self.text()
        rank = self.u32()
        shape = tuple(self.u32() for _ in range(rank))
        return name, self.array(shape)

    def finish(self) -> None:
        if self._pos != len(self._data):
            raise FormatError(f"{self.source}: {len(self._data) - self._pos} trailing bytes")
