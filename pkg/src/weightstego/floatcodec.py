"""Bit-level placement of payload bytes inside IEEE-754 binary32 parameters.

A parameter is viewed as the big-endian byte string ``b3 b2 b1 b0`` of its
32-bit pattern, ``b3`` holding the sign bit and the top seven exponent bits.
"""

from __future__ import annotations

import enum
import struct
from typing import NamedTuple

import numpy as np

from .exceptions import PayloadLengthError

FAST_POS_PREFIX = 0x3C
FAST_NEG_PREFIX = 0xBC


class EmbedMethod(enum.Enum):
    LSB = "lsb"
    MSB_RESERVATION = "msb_reservation"
    FAST = "fast"
    HALF = "half"

    @property
    def bytes_per_param(self) -> int:
        return _BYTES_PER_PARAM[self]

    @classmethod
    def parse(cls, value: "str | EmbedMethod") -> "EmbedMethod":
        if isinstance(value, cls):
            return value
        key = str(value).strip().lower().replace("-", "_")
        key = _ALIASES.get(key, key)
        try:
            return cls(key)
        except ValueError:
            raise ValueError(f"unknown embedding method {value!r}; choose from {[m.value for m in cls]}") from None


_BYTES_PER_PARAM = {
    EmbedMethod.LSB: 1,
    EmbedMethod.MSB_RESERVATION: 3,
    EmbedMethod.FAST: 3,
    EmbedMethod.HALF: 2,
}
_ALIASES = {"msb": "msb_reservation", "half_substitution": "half", "fast_substitution": "fast"}


class Float32Parts(NamedTuple):
    sign: int
    exponent: int
    mantissa: int

    def pattern(self) -> int:
        return (self.sign << 31) | (self.exponent << 23) | self.mantissa


def decompose(pattern: int) -> Float32Parts:
    pattern &= 0xFFFFFFFF
    return Float32Parts(pattern >> 31, (pattern >> 23) & 0xFF, pattern & 0x7FFFFF)


def bits_to_float(pattern: int) -> float:
    return struct.unpack("<f", struct.pack("<I", pattern & 0xFFFFFFFF))[0]


def float_to_bits(value: float) -> int:
    return struct.unpack("<I", struct.pack("<f", value))[0]


def embed_into_param(pattern: int, payload: bytes, method: EmbedMethod) -> int:
    out = embed_bits(np.array([pattern], dtype=np.uint32), payload, method)
    return int(out[0])


def recover_from_param(pattern: int, method: EmbedMethod) -> bytes:
    return recover_bits(np.array([pattern], dtype=np.uint32), method)


def embed_bits(patterns: np.ndarray, payload: bytes, method: EmbedMethod) -> np.ndarray:
    """Vectorised embedding: ``len(payload)`` must equal ``len(patterns) * bytes_per_param``."""
    method = EmbedMethod.parse(method)
    bpp = method.bytes_per_param
    patterns = np.asarray(patterns, dtype=np.uint32)
    chunk = np.frombuffer(bytes(payload), dtype=np.uint8)
    if chunk.size != patterns.size * bpp:
        raise PayloadLengthError(
            f"{method.value} needs {patterns.size * bpp} payload bytes for {patterns.size} parameter(s), got {chunk.size}"
        )
    # big-endian packing of each chunk into the low bytes
    rows = chunk.reshape(patterns.size, bpp).astype(np.uint32)
    low = np.zeros(patterns.size, dtype=np.uint32)
    for i in range(bpp):
        low = (low << np.uint32(8)) | rows[:, i]

    if method is EmbedMethod.FAST:
        prefix = np.where(patterns >> np.uint32(31), np.uint32(FAST_NEG_PREFIX), np.uint32(FAST_POS_PREFIX))
        return (prefix << np.uint32(24)) | low
    keep = np.uint32((0xFFFFFFFF << (8 * bpp)) & 0xFFFFFFFF)
    return (patterns & keep) | low


def recover_bits(patterns: np.ndarray, method: EmbedMethod) -> bytes:
    method = EmbedMethod.parse(method)
    bpp = method.bytes_per_param
    be = np.asarray(patterns, dtype=np.uint32).astype(">u4").view(np.uint8).reshape(-1, 4)
    return be[:, 4 - bpp:].tobytes()
