"""Class distributions and node impurity measures."""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

CRITERIA = ("gini", "entropy", "log_loss")


@dataclass(frozen=True)
class ClassDistribution:
    counts: tuple

    def __post_init__(self):
        if any(c < 0 for c in self.counts):
            raise ValueError("class counts must be non-negative")

    @classmethod
    def from_proportions(cls, props: Sequence[float]) -> "ClassDistribution":
        # proportions are stored as weights; only ratios matter
        return cls(tuple(float(p) for p in props))

    @property
    def total(self) -> float:
        return math.fsum(self.counts)

    @property
    def proportions(self) -> tuple:
        total = self.total
        if total <= 0:
            raise ValueError("empty distribution")
        return tuple(c / total for c in self.counts)


def _as_dist(dist) -> ClassDistribution:
    return dist if isinstance(dist, ClassDistribution) else ClassDistribution(tuple(dist))


def gini(dist) -> float:
    """1 - sum_i p_i^2."""
    return 1.0 - math.fsum(p * p for p in _as_dist(dist).proportions)


def impurity(dist, criterion: str = "gini") -> float:
    """Gini, entropy (bits) or log_loss (nats) of a class distribution; 0 log 0 := 0."""
    props = _as_dist(dist).proportions
    if criterion == "gini":
        return 1.0 - math.fsum(p * p for p in props)
    if criterion == "entropy":
        return -math.fsum(p * math.log2(p) for p in props if p > 0)
    if criterion == "log_loss":
        return -math.fsum(p * math.log(p) for p in props if p > 0)
    raise ValueError(f"unknown criterion {criterion!r}")
