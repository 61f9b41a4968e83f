"""Byte entropy and embedding-rate reporting."""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .container import ModelContainer, write_container
from .floatcodec import EmbedMethod


@dataclass(frozen=True)
class EntropyReport:
    label: str
    raw_entropy: float
    baseline: float
    normalized: float
    scaled: float
    gain: float


def byte_entropy(data: bytes) -> float:
    """Shannon entropy of the byte histogram, in bits per byte."""
    arr = np.frombuffer(bytes(data), dtype=np.uint8)
    if arr.size == 0:
        raise ValueError("entropy of an empty byte sequence is undefined")
    counts = np.bincount(arr, minlength=256)
    p = counts[counts > 0] / arr.size
    return float(max(0.0, -np.sum(p * np.log2(p))))


def container_entropy(c: ModelContainer, per_tensor: bool = False) -> dict[str, float]:
    """Entropy of the whole serialized file, optionally also of each tensor's data range."""
    out = {"<file>": byte_entropy(write_container(c))}
    if per_tensor:
        for name in c.names:
            out[name] = byte_entropy(c.raw(name))
    return out


def _logistic(x: float) -> float:
    return 1.0 / (1.0 + math.exp(-x))


def entropy_delta_report(
    models: Sequence[tuple[str, float]],
    baseline_label: str,
    logistic_gain: float = 1.0,
) -> list[EntropyReport]:
    """Normalize each entropy against the baseline and squash it into (-0.5, 0.5).

    ``normalized = (H_i - H_base) / (H_max - H_min)`` over all entries, and
    ``scaled = logistic(gain * normalized) - 0.5``.
    """
    if len(models) < 2:
        raise ValueError("need at least two entries to normalize")
    values = dict(models)
    if baseline_label not in values:
        raise KeyError(f"baseline {baseline_label!r} not among entries")
    base = values[baseline_label]
    hi = max(h for _, h in models)
    lo = min(h for _, h in models)
    if hi == lo:
        raise ValueError("all entropies are equal; normalization is undefined")
    reports = []
    for label, h in models:
        norm = (h - base) / (hi - lo)
        reports.append(EntropyReport(label, h, base, norm, _logistic(logistic_gain * norm) - 0.5, logistic_gain))
    return reports


def write_entropy_csv(reports: Sequence[EntropyReport], f) -> None:
    w = csv.writer(f, lineterminator="\n")
    w.writerow(["label", "raw_entropy", "normalized", "scaled"])
    for r in reports:
        w.writerow([r.label, f"{r.raw_entropy:.6f}", f"{r.normalized:.6f}", f"{r.scaled:.6f}"])


def embedding_rate(payload_len: float, model_file_len: float) -> float:
    if model_file_len <= 0:
        raise ValueError("model size must be positive")
    return payload_len / model_file_len


def neuron_param_bytes(n_inputs: int, n_neurons: int = 1) -> int:
    """Storage of ``n_neurons`` F32 neurons with ``n_inputs`` weights and one bias each."""
    return 4 * n_neurons * (n_inputs + 1)


def neuron_capacity(n_params: int, method: EmbedMethod, n_neurons: int = 1) -> int:
    return n_neurons * n_params * EmbedMethod.parse(method).bytes_per_param
