"""White-box overlap detection and low-byte sanitization."""

from __future__ import annotations

import csv
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .container import ModelContainer
from .embed import Payload
from .floatcodec import EmbedMethod, recover_bits

SANITIZE_MODES = ("randomize", "truncate")
_LOW_MASK = np.uint32(0xFFFF0000)


@dataclass(frozen=True)
class TensorOverlap:
    tensor: str
    candidate_stream_len: int
    matched_qgrams: int
    total_qgrams: int

    @property
    def overlap_rate(self) -> float:
        return self.matched_qgrams / self.total_qgrams


@dataclass(frozen=True)
class OverlapReport:
    rows: tuple[TensorOverlap, ...]
    q: int
    method: EmbedMethod

    @property
    def argmax(self) -> str:
        return max(self.rows, key=lambda r: r.overlap_rate).tensor

    def rate(self, tensor: str) -> float:
        for r in self.rows:
            if r.tensor == tensor:
                return r.overlap_rate
        raise KeyError(tensor)

    def write_csv(self, f) -> None:
        w = csv.writer(f, lineterminator="\n")
        w.writerow(["tensor", "candidate_stream_len", "matched_qgrams", "total_qgrams", "overlap_rate"])
        for r in self.rows:
            w.writerow([r.tensor, r.candidate_stream_len, r.matched_qgrams, r.total_qgrams, f"{r.overlap_rate:.6f}"])


def detect_overlap(
    c: ModelContainer,
    payload: Payload | bytes,
    method: EmbedMethod,
    q: int = 16,
    tensors: Sequence[str] | None = None,
) -> OverlapReport:
    """Fraction of the payload's non-overlapping q-grams found in each tensor's candidate bytes.

    The candidate stream of a tensor is what extraction with ``method`` would
    read from every one of its parameters, in order.
    """
    method = EmbedMethod.parse(method)
    data = payload.data if isinstance(payload, Payload) else bytes(payload)
    if q < 1:
        raise ValueError("q must be positive")
    if q > len(data):
        raise ValueError(f"q={q} is larger than the {len(data)}-byte payload")
    grams = [data[i:i + q] for i in range(0, len(data) - q + 1, q)]
    rows = []
    for name in (c.names if tensors is None else tensors):
        stream = recover_bits(c.bits(name), method)
        matched = sum(1 for g in grams if g in stream)
        rows.append(TensorOverlap(name, len(stream), matched, len(grams)))
    return OverlapReport(tuple(rows), q, method)


def sanitize(
    c: ModelContainer,
    tensors: Sequence[str] | None = None,
    mode: str = "randomize",
    seed: int = 0,
) -> ModelContainer:
    """Overwrite the two low bytes of every parameter in ``tensors``.

    ``truncate`` zeroes them, ``randomize`` fills them from a seeded generator.
    The two high bytes (sign, exponent, top 7 mantissa bits) are kept.
    """
    if mode not in SANITIZE_MODES:
        raise ValueError(f"unknown sanitize mode {mode!r}; choose from {SANITIZE_MODES}")
    names = c.names if tensors is None else list(tensors)
    rng = np.random.default_rng(seed)
    updates = {}
    for name in names:
        bits = c.bits(name)
        high = bits & _LOW_MASK
        if mode == "truncate":
            updates[name] = high
        else:
            updates[name] = high | rng.integers(0, 1 << 16, size=bits.size, dtype=np.uint32)
    return c.replace(updates)
