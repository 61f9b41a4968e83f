"""End-to-end desk runs shared by the CLI ``demo``/``trigger-sim`` commands and the tests."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .mininet import DEFAULT_OFFSET, MiniNet, class_means, gen_dataset, train
from .trigger import Observation, TriggerSpec, binarize, first_activation, simulate

TRIGGER_ARCHITECTURE = (64, 256, 128, 10)


@dataclass
class TriggerDemo:
    net: MiniNet
    spec: TriggerSpec
    target_class: int
    centroid: np.ndarray

    def near_samples(self, n: int, scale: float = 0.02, seed: int = 0) -> np.ndarray:
        rng = np.random.default_rng(seed)
        return (self.centroid + scale * rng.standard_normal((n, self.centroid.size))).astype(np.float32)

    def vectors(self, X) -> np.ndarray:
        return self.net.hidden_activations(X)

    def run(self, X) -> list[Observation]:
        return list(simulate(self.vectors(X), self.spec))


def build_trigger_demo(
    data_seed: int = 0,
    train_seed: int = 7,
    target_class: int = 3,
    epochs: int = 5,
    dataset=None,
) -> TriggerDemo:
    """Train a net with a 128-wide penultimate layer and derive the target from one class centre."""
    ds = gen_dataset(data_seed) if dataset is None else dataset
    net = train(ds, TRIGGER_ARCHITECTURE, epochs=epochs, seed=train_seed)
    means = class_means(data_seed) + DEFAULT_OFFSET
    centroid = means[target_class].astype(np.float32)
    target = binarize(net.hidden_activations(centroid[None, :])[0])
    return TriggerDemo(net, TriggerSpec(target), target_class, centroid)


def steps_to_activation(demo: TriggerDemo, X) -> int | None:
    """Number of observations until activation (1-based), or None."""
    step = first_activation(simulate(demo.vectors(X), demo.spec))
    return None if step is None else step + 1
