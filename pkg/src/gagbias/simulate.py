"""Seeded multinomial draws from the gag-factor model.

Serves as the brute-force oracle for recovery and goodness-of-fit tests.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .model import CompleteTable, ModelParams, ObservedTable, collapse, complete_probabilities

__all__ = ["SimConfig", "sample_complete", "sample_observed", "sample_units"]


@dataclass(frozen=True)
class SimConfig:
    params: ModelParams
    n: int
    seed: int = 0

    def __post_init__(self):
        if int(self.n) != self.n or self.n < 0:
            raise ValueError("n must be a non-negative integer")
        if not 0 <= int(self.seed) < 2**64:
            raise ValueError("seed must fit in 64 bits")


def _probabilities(params: ModelParams) -> np.ndarray:
    p = np.clip(complete_probabilities(params).values, 0.0, None)
    return p / p.sum()


def sample_complete(config: SimConfig) -> CompleteTable:
    rng = np.random.default_rng(int(config.seed))
    counts = rng.multinomial(int(config.n), _probabilities(config.params))
    return CompleteTable(counts.astype(float))


def sample_observed(config: SimConfig) -> ObservedTable:
    return collapse(sample_complete(config))


def sample_units(params: ModelParams, n_per_unit: int, units: int, seed: int = 0) -> list[ObservedTable]:
    """Independent observed tables, one per sampling unit, from one seed."""
    rng = np.random.default_rng(int(seed))
    p = _probabilities(params)
    out = []
    for _ in range(units):
        counts = rng.multinomial(int(n_per_unit), p)
        out.append(collapse(CompleteTable(counts.astype(float))))
    return out
