"""Embedding-quality score and per-model averages."""

from __future__ import annotations

import csv
import re
from collections import OrderedDict
from dataclasses import dataclass, field
from typing import Iterable, Mapping

# extra effort (retraining, index permutations) costs 0.1 each on the penalty
DEFAULT_PENALTIES = {
    "lsb": 1.0,
    "msb_reservation": 1.0,
    "fast": 1.0,
    "half": 1.0,
    "value_mapping": 1.1,
    "sign_mapping": 1.1,
    "resilience_training": 1.2,
}

_UNITS = {"B": 1, "KB": 1024, "MB": 1024 ** 2, "GB": 1024 ** 3}
_SIZE_RE = re.compile(r"^\s*([0-9]*\.?[0-9]+)\s*([KMG]?B)?\s*$", re.IGNORECASE)


def method_key(method: str) -> str:
    key = method.strip().lower().replace("-", "_").replace(" ", "_")
    return {"msb": "msb_reservation", "half_substitution": "half", "fast_substitution": "fast"}.get(key, key)


@dataclass(frozen=True)
class EvalParams:
    alpha: float = 0.5
    epsilon: float = 0.1
    penalties: Mapping[str, float] = field(default_factory=lambda: dict(DEFAULT_PENALTIES))

    def __post_init__(self):
        if not 0 < self.alpha < 1:
            raise ValueError("alpha must lie in (0, 1)")
        if self.epsilon <= 0:
            raise ValueError("epsilon must be positive")

    def penalty(self, method: str) -> float:
        key = method_key(method)
        try:
            return self.penalties[key]
        except KeyError:
            raise ValueError(f"no penalty configured for method {method!r}") from None


@dataclass(frozen=True)
class EvalCell:
    embedding_rate: float
    base_acc: float
    acc: float | None
    embeddable: bool = True
    model: str = ""
    sample: str = ""

    @property
    def impact(self) -> float:
        """Relative accuracy loss, floored at 0; a cell that cannot be embedded counts as total loss."""
        if not self.embeddable:
            return 1.0
        return max((self.base_acc - self.acc) / self.base_acc, 0.0)

    @property
    def effective_rate(self) -> float:
        return self.embedding_rate if self.embeddable else 0.0


def quality(cell: EvalCell, params: EvalParams = EvalParams(), penalty: float = 1.0) -> float:
    a, eps = params.alpha, params.epsilon
    return a * (cell.effective_rate + eps) / ((1 - a) * (cell.impact + eps) * penalty)


def quality_table(
    cells: Iterable[EvalCell],
    method: str = "half",
    params: EvalParams = EvalParams(),
) -> tuple[dict[str, float], float]:
    """Return ``({model: AVG(Q_M)}, AVG(Q))`` with AVG(Q) the mean over models."""
    penalty = params.penalty(method)
    per_model: dict[str, list[float]] = OrderedDict()
    for cell in cells:
        per_model.setdefault(cell.model, []).append(quality(cell, params, penalty))
    if not per_model:
        raise ValueError("no cells to evaluate")
    avg_m = {m: sum(qs) / len(qs) for m, qs in per_model.items()}
    return avg_m, sum(avg_m.values()) / len(avg_m)


def parse_size(label: str | float) -> float:
    """``"4.74MB"`` -> bytes, binary units; bare numbers are bytes."""
    if isinstance(label, (int, float)):
        return float(label)
    m = _SIZE_RE.match(label)
    if not m:
        raise ValueError(f"cannot parse size {label!r}")
    return float(m.group(1)) * _UNITS[(m.group(2) or "B").upper()]


def _parse_acc(text: str) -> float | None:
    text = text.strip()
    if text in ("", "-"):
        return None
    if text.endswith("%"):
        return float(text[:-1]) / 100
    return float(text)


def read_cells_csv(f) -> list[EvalCell]:
    """Rows: ``model,sample,model_size,payload_size,base,acc``; ``acc`` of ``-`` marks a non-embeddable cell."""
    cells = []
    for row in csv.DictReader(f):
        base = _parse_acc(row["base"])
        acc = _parse_acc(row["acc"])
        embeddable = acc is not None
        flag = (row.get("embeddable") or "").strip().lower()
        if flag in ("0", "false", "no"):
            embeddable = False
        rate = parse_size(row["payload_size"]) / parse_size(row["model_size"]) if embeddable else 0.0
        cells.append(EvalCell(rate, base, acc, embeddable, row["model"].strip(), row["sample"].strip()))
    return cells


def write_table_csv(avg_m: Mapping[str, float], avg_q: float, f, method: str = "") -> None:
    w = csv.writer(f, lineterminator="\n")
    w.writerow(["method", "model", "avg_q_m", "avg_q"])
    for model, q in avg_m.items():
        w.writerow([method, model, f"{q:.4f}", f"{avg_q:.4f}"])
