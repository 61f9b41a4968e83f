"""Reader and writer for the flat F32 tensor container.

Layout::

    [8 bytes]  little-endian u64 header length N
    [N bytes]  UTF-8 JSON: {name: {"dtype": "F32", "shape": [...], "data_offsets": [begin, end]}, ...}
    [...]      raw little-endian tensor data, offsets relative to the start of this section
"""

from __future__ import annotations

import json
import math
import struct
from dataclasses import dataclass, field
from types import MappingProxyType
from typing import Iterable, Mapping

import numpy as np

from .exceptions import DtypeError, HeaderError, OffsetError, UnknownTensorError

F32 = "F32"
_HEADER_KEYS = {"dtype", "shape", "data_offsets"}


@dataclass(frozen=True)
class TensorMeta:
    name: str
    shape: tuple[int, ...]
    begin: int
    end: int
    dtype: str = F32

    def __post_init__(self):
        if self.dtype != F32:
            raise DtypeError(f"tensor {self.name!r}: dtype {self.dtype!r} is not supported, only F32")
        if not self.shape or any(int(d) < 1 for d in self.shape):
            raise HeaderError(f"tensor {self.name!r}: shape must be non-empty with positive dims, got {list(self.shape)}")
        if not 0 <= self.begin < self.end:
            raise OffsetError(f"tensor {self.name!r}: invalid offsets [{self.begin}, {self.end})")
        if self.end - self.begin != 4 * self.size:
            raise OffsetError(
                f"tensor {self.name!r}: byte range {self.end - self.begin} does not match "
                f"shape {list(self.shape)} ({4 * self.size} bytes)"
            )

    @property
    def size(self) -> int:
        return math.prod(self.shape)

    @property
    def nbytes(self) -> int:
        return self.end - self.begin


@dataclass(frozen=True)
class ModelContainer:
    """Immutable set of named F32 tensors backed by one data section."""

    tensors: Mapping[str, TensorMeta]
    data: bytes
    _header: bytes = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        object.__setattr__(self, "tensors", MappingProxyType(dict(self.tensors)))
        object.__setattr__(self, "data", bytes(self.data))
        _check_layout(self.tensors.values(), len(self.data))
        object.__setattr__(self, "_header", _encode_header(self.tensors.values()))

    @property
    def file_size(self) -> int:
        return 8 + len(self._header) + len(self.data)

    @property
    def names(self) -> list[str]:
        return list(self.tensors)

    @property
    def n_params(self) -> int:
        return sum(t.size for t in self.tensors.values())

    def meta(self, name: str) -> TensorMeta:
        try:
            return self.tensors[name]
        except KeyError:
            raise UnknownTensorError(name) from None

    def raw(self, name: str) -> bytes:
        t = self.meta(name)
        return self.data[t.begin:t.end]

    def bits(self, name: str) -> np.ndarray:
        """Read-only flat uint32 view of a tensor's bit patterns."""
        t = self.meta(name)
        return np.frombuffer(self.data, dtype="<u4", count=t.size, offset=t.begin)

    def array(self, name: str) -> np.ndarray:
        """Read-only float32 view of a tensor, reshaped."""
        t = self.meta(name)
        return np.frombuffer(self.data, dtype="<f4", count=t.size, offset=t.begin).reshape(t.shape)

    def replace(self, updates: Mapping[str, np.ndarray | bytes]) -> ModelContainer:
        """Return a new container with the given tensors' contents swapped.

        Values may be raw bytes, uint32 bit patterns or float arrays; shapes stay fixed.
        """
        buf = bytearray(self.data)
        for name, value in updates.items():
            t = self.meta(name)
            if isinstance(value, (bytes, bytearray, memoryview)):
                raw = bytes(value)
            else:
                arr = np.asarray(value)
                if arr.dtype.kind in "ui":
                    raw = arr.astype("<u4").tobytes()
                else:
                    raw = arr.astype("<f4").tobytes()
            if len(raw) != t.nbytes:
                raise ValueError(f"tensor {name!r}: expected {t.nbytes} bytes, got {len(raw)}")
            buf[t.begin:t.end] = raw
        return ModelContainer(self.tensors, bytes(buf))

    @classmethod
    def from_arrays(cls, arrays: Mapping[str, np.ndarray] | Iterable[tuple[str, np.ndarray]]) -> ModelContainer:
        """Pack arrays back to back in the given order."""
        items = arrays.items() if isinstance(arrays, Mapping) else arrays
        tensors, chunks, offset = {}, [], 0
        for name, value in items:
            arr = np.ascontiguousarray(value, dtype="<f4")
            if arr.ndim == 0:
                arr = arr.reshape(1)
            raw = arr.tobytes()
            tensors[name] = TensorMeta(name, tuple(int(d) for d in arr.shape), offset, offset + len(raw))
            chunks.append(raw)
            offset += len(raw)
        return cls(tensors, b"".join(chunks))


def _check_layout(metas: Iterable[TensorMeta], data_len: int) -> None:
    spans = sorted((t.begin, t.end, t.name) for t in metas)
    cursor = 0
    for begin, end, name in spans:
        if end > data_len:
            raise OffsetError(f"tensor {name!r}: offsets [{begin}, {end}) exceed data section of {data_len} bytes")
        if begin < cursor:
            raise OffsetError(f"tensor {name!r}: offsets [{begin}, {end}) overlap a previous tensor")
        if begin > cursor:
            raise OffsetError(f"gap in data section before tensor {name!r} at byte {cursor}")
        cursor = end
    if cursor != data_len:
        raise OffsetError(f"data section has {data_len - cursor} trailing bytes beyond declared tensors")


def _encode_header(metas: Iterable[TensorMeta]) -> bytes:
    header = {
        t.name: {"dtype": t.dtype, "shape": list(t.shape), "data_offsets": [t.begin, t.end]}
        for t in metas
    }
    return json.dumps(header, separators=(",", ":"), ensure_ascii=False).encode("utf-8")


def parse_container(buf: bytes) -> ModelContainer:
    buf = bytes(buf)
    if len(buf) < 8:
        raise HeaderError(f"file too small for header length field ({len(buf)} bytes)")
    (header_len,) = struct.unpack_from("<Q", buf, 0)
    if header_len == 0 or 8 + header_len > len(buf):
        raise HeaderError(f"declared header length {header_len} does not fit in {len(buf)}-byte file")
    try:
        header = json.loads(buf[8:8 + header_len].decode("utf-8"))
    except UnicodeDecodeError as e:
        raise HeaderError(f"header is not valid UTF-8: {e}") from e
    except json.JSONDecodeError as e:
        raise HeaderError(f"header is not valid JSON: {e}") from e
    if not isinstance(header, dict):
        raise HeaderError("header must be a JSON object")

    tensors = {}
    for name, entry in header.items():
        if not isinstance(entry, dict) or set(entry) != _HEADER_KEYS:
            raise HeaderError(f"tensor {name!r}: entry must have exactly the keys {sorted(_HEADER_KEYS)}")
        dtype, shape, offsets = entry["dtype"], entry["shape"], entry["data_offsets"]
        if not isinstance(dtype, str):
            raise HeaderError(f"tensor {name!r}: dtype must be a string")
        if dtype != F32:
            raise DtypeError(f"tensor {name!r}: dtype {dtype!r} is not supported, only F32")
        if not (isinstance(shape, list) and all(_is_int(d) for d in shape)):
            raise HeaderError(f"tensor {name!r}: shape must be a list of integers")
        if not (isinstance(offsets, list) and len(offsets) == 2 and all(_is_int(o) for o in offsets)):
            raise HeaderError(f"tensor {name!r}: data_offsets must be [begin, end]")
        tensors[name] = TensorMeta(name, tuple(shape), offsets[0], offsets[1], dtype)

    return ModelContainer(tensors, buf[8 + header_len:])


def _is_int(x) -> bool:
    return isinstance(x, int) and not isinstance(x, bool)


def write_container(c: ModelContainer) -> bytes:
    header = c._header
    return struct.pack("<Q", len(header)) + header + c.data


def read_container(path) -> ModelContainer:
    with open(path, "rb") as f:
        return parse_container(f.read())


def save_container(c: ModelContainer, path) -> None:
    with open(path, "wb") as f:
        f.write(write_container(c))


def param_at(c: ModelContainer, tensor: str, index: int) -> tuple[int, float]:
    """Return ``(pattern, value)`` of one parameter; pattern is the u32 read little-endian."""
    t = c.meta(tensor)
    if not 0 <= index < t.size:
        raise IndexError(f"index {index} out of range for tensor {tensor!r} with {t.size} elements")
    off = t.begin + 4 * index
    (pattern,) = struct.unpack_from("<I", c.data, off)
    (value,) = struct.unpack_from("<f", c.data, off)
    return pattern, value
