from __future__ import annotations

import hashlib
import json
import math
from dataclasses import dataclass, field
from typing import Sequence

from .container import ModelContainer
from .exceptions import CapacityExceeded, ManifestError, PlanError, UnknownTensorError
from .floatcodec import EmbedMethod, embed_bits

MANIFEST_VERSION = 1


@dataclass(frozen=True)
class Payload:
    data: bytes
    sha256: str = field(init=False)

    def __post_init__(self):
        object.__setattr__(self, "data", bytes(self.data))
        if not self.data:
            raise ValueError("payload must contain at least one byte")
        object.__setattr__(self, "sha256", hashlib.sha256(self.data).hexdigest())

    @property
    def length(self) -> int:
        return len(self.data)

    @classmethod
    def from_file(cls, path) -> Payload:
        with open(path, "rb") as f:
            return cls(f.read())


@dataclass(frozen=True)
class Segment:
    tensor: str
    start_param: int
    param_count: int

    def to_dict(self) -> dict:
        return {"tensor": self.tensor, "start_param": self.start_param, "param_count": self.param_count}


@dataclass(frozen=True)
class EmbedPlan:
    method: EmbedMethod
    segments: tuple[Segment, ...]

    @property
    def param_count(self) -> int:
        return sum(s.param_count for s in self.segments)

    @property
    def capacity(self) -> int:
        return self.param_count * self.method.bytes_per_param

    def validate(self, c: ModelContainer) -> None:
        taken: dict[str, list[tuple[int, int]]] = {}
        for seg in self.segments:
            if seg.tensor not in c.tensors:
                raise UnknownTensorError(seg.tensor)
            size = c.tensors[seg.tensor].size
            start, stop = seg.start_param, seg.start_param + seg.param_count
            if seg.start_param < 0 or seg.param_count < 1 or stop > size:
                raise PlanError(f"segment {seg.to_dict()} out of bounds for tensor with {size} parameters")
            for a, b in taken.get(seg.tensor, []):
                if start < b and a < stop:
                    raise PlanError(f"segment {seg.to_dict()} overlaps another segment")
            taken.setdefault(seg.tensor, []).append((start, stop))


@dataclass(frozen=True)
class Manifest:
    """Everything extraction needs: method, parameter ranges, length and digest."""

    method: EmbedMethod
    segments: tuple[Segment, ...]
    payload_length: int
    payload_sha256: str
    model_file_size: int
    version: int = MANIFEST_VERSION

    @property
    def plan(self) -> EmbedPlan:
        return EmbedPlan(self.method, self.segments)

    def to_dict(self) -> dict:
        return {
            "version": self.version,
            "method": self.method.value,
            "segments": [s.to_dict() for s in self.segments],
            "payload_length": self.payload_length,
            "payload_sha256": self.payload_sha256,
            "model_file_size": self.model_file_size,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2) + "\n"

    @classmethod
    def from_dict(cls, d: dict) -> Manifest:
        try:
            segments = tuple(
                Segment(str(s["tensor"]), int(s["start_param"]), int(s["param_count"])) for s in d["segments"]
            )
            m = cls(
                method=EmbedMethod.parse(d["method"]),
                segments=segments,
                payload_length=int(d["payload_length"]),
                payload_sha256=str(d["payload_sha256"]).lower(),
                model_file_size=int(d["model_file_size"]),
                version=int(d["version"]),
            )
        except (KeyError, TypeError, ValueError) as e:
            raise ManifestError(f"invalid manifest: {e}") from e
        if m.version != MANIFEST_VERSION:
            raise ManifestError(f"unsupported manifest version {m.version}")
        if len(m.payload_sha256) != 64:
            raise ManifestError("payload_sha256 must be 64 hex characters")
        return m

    @classmethod
    def from_json(cls, text: str) -> Manifest:
        try:
            return cls.from_dict(json.loads(text))
        except json.JSONDecodeError as e:
            raise ManifestError(f"manifest is not valid JSON: {e}") from e

    def save(self, path) -> None:
        with open(path, "w", encoding="utf-8") as f:
            f.write(self.to_json())

    @classmethod
    def load(cls, path) -> Manifest:
        with open(path, encoding="utf-8") as f:
            return cls.from_json(f.read())


def default_fill_order(c: ModelContainer) -> list[str]:
    """Tensors closest to the output first (reverse declaration order)."""
    return list(reversed(c.names))


def capacity(c: ModelContainer, method: EmbedMethod, tensors: Sequence[str] | None = None) -> int:
    method = EmbedMethod.parse(method)
    names = c.names if tensors is None else tensors
    return sum(c.meta(n).size for n in names) * method.bytes_per_param


def build_plan(
    c: ModelContainer,
    method: EmbedMethod,
    payload_len: int,
    tensors: Sequence[str] | None = None,
) -> EmbedPlan:
    method = EmbedMethod.parse(method)
    names = default_fill_order(c) if tensors is None else list(tensors)
    if len(set(names)) != len(names):
        raise PlanError("tensor list contains duplicates")
    if payload_len < 1:
        raise PlanError("payload length must be positive")
    available = capacity(c, method, names)
    if payload_len > available:
        raise CapacityExceeded(available, payload_len)

    remaining = math.ceil(payload_len / method.bytes_per_param)
    segments = []
    for name in names:
        if remaining == 0:
            break
        take = min(remaining, c.meta(name).size)
        segments.append(Segment(name, 0, take))
        remaining -= take
    return EmbedPlan(method, tuple(segments))


def embed_payload(c: ModelContainer, p: Payload, plan: EmbedPlan) -> tuple[ModelContainer, Manifest]:
    plan.validate(c)
    bpp = plan.method.bytes_per_param
    if plan.capacity < p.length:
        raise CapacityExceeded(plan.capacity, p.length)
    # the final chunk and any surplus planned parameters are zero-filled
    stream = p.data + bytes(plan.capacity - p.length)
    updates = {}
    pos = 0
    for seg in plan.segments:
        bits = updates.get(seg.tensor)
        if bits is None:
            bits = c.bits(seg.tensor).copy()
        stop = seg.start_param + seg.param_count
        n = seg.param_count * bpp
        bits[seg.start_param:stop] = embed_bits(bits[seg.start_param:stop], stream[pos:pos + n], plan.method)
        updates[seg.tensor] = bits
        pos += n

    manifest = Manifest(plan.method, plan.segments, p.length, p.sha256, c.file_size)
    return c.replace(updates), manifest
