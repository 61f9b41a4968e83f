"""Feature-vector trigger: sign binarization plus a saturating match counter."""

from __future__ import annotations

import string
from dataclasses import dataclass
from typing import Iterable, Iterator

import numpy as np


def normalize_hex(value: str) -> str:
    h = value.strip().lower()
    if h.startswith("0x"):
        h = h[2:]
    if not h or any(ch not in string.hexdigits for ch in h):
        raise ValueError(f"not a hex string: {value!r}")
    return h


@dataclass(frozen=True)
class TriggerSpec:
    target_hex: str
    threshold: float = 0.0
    activation_bound: int = 5

    def __post_init__(self):
        h = normalize_hex(self.target_hex)
        object.__setattr__(self, "target_hex", h)
        if self.activation_bound < 1:
            raise ValueError("activation_bound must be at least 1")

    @property
    def width(self) -> int:
        return 4 * len(self.target_hex)


@dataclass(frozen=True)
class MatchCounter:
    count: int = 0

    def __post_init__(self):
        if self.count < 0:
            raise ValueError("counter cannot be negative")


def binarize(t, delta: float = 0.0, width: int | None = 128) -> str:
    """Bit i is 1 iff ``t[i] > delta``; bits are packed MSB-first into hex.

    ``width`` pins the expected vector length; pass ``None`` to accept any
    multiple of four.
    """
    t = np.asarray(t, dtype=np.float64).ravel()
    if width is not None and t.size != width:
        raise ValueError(f"expected a vector of length {width}, got {t.size}")
    if t.size == 0 or t.size % 4:
        raise ValueError(f"vector length {t.size} is not a positive multiple of 4")
    bits = (t > delta).astype(np.uint8)
    nibbles = bits.reshape(-1, 4) @ np.array([8, 4, 2, 1], dtype=np.uint8)
    return "".join("0123456789abcdef"[n] for n in nibbles)


def trigger_condition(vector, spec: TriggerSpec) -> bool:
    return binarize(vector, spec.threshold, width=spec.width) == spec.target_hex


def observe(counter: MatchCounter, matched: bool, spec: TriggerSpec) -> tuple[MatchCounter, bool]:
    count = counter.count + 1 if matched else max(counter.count - 1, 0)
    return MatchCounter(count), count > spec.activation_bound


@dataclass(frozen=True)
class Observation:
    step: int
    match: bool
    count: int
    activated: bool


def simulate(vectors: Iterable, spec: TriggerSpec, counter: MatchCounter = MatchCounter()) -> Iterator[Observation]:
    """Feed vectors through the trigger, yielding one log entry per observation."""
    for step, v in enumerate(vectors):
        matched = trigger_condition(v, spec)
        counter, activated = observe(counter, matched, spec)
        yield Observation(step, matched, counter.count, activated)


def first_activation(observations: Iterable[Observation]) -> int | None:
    for obs in observations:
        if obs.activated:
            return obs.step
    return None
