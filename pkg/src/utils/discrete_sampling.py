"""
Discrete samplers used to pick a factor or a datapoint.

``AliasTable`` is Walker's alias method (O(n) build, O(1) draw) for fixed
weights. ``SumTree`` supports O(log n) weight updates and draws, for weight
vectors that change after every event.
"""
import logging
from typing import Sequence

import numpy as np

from src.core.exceptions import EmptyDistributionError


logger = logging.getLogger(__name__)


class AliasTable:
    """
    Walker alias structure over the indices ``0..n-1``.

    Attributes:
        probabilities: acceptance threshold of each column
        aliases: fallback index of each column
        total: total (unnormalized) mass of the weights
    """

    def __init__(self, weights: Sequence[float]):
        weights = np.asarray(weights, dtype=float)
        if weights.ndim != 1 or weights.size == 0:
            raise ValueError("weights must be a non-empty 1-D array")
        if np.any(weights < 0) or not np.all(np.isfinite(weights)):
            raise ValueError("weights must be finite and non-negative")

        self.total = float(weights.sum())
        self.size = weights.size
        self.probabilities = np.ones(self.size)
        self.aliases = np.arange(self.size)
        if self.total <= 0.0:
            # Kept constructible so tables can be built for every cell;
            # drawing from it raises.
            return

        scaled = weights * (self.size / self.total)
        small = [i for i, p in enumerate(scaled) if p < 1.0]
        large = [i for i, p in enumerate(scaled) if p >= 1.0]
        while small and large:
            small_index, large_index = small.pop(), large.pop()
            self.probabilities[small_index] = scaled[small_index]
            self.aliases[small_index] = large_index
            scaled[large_index] -= 1.0 - scaled[small_index]
            if scaled[large_index] < 1.0:
                small.append(large_index)
            else:
                large.append(large_index)
        # Leftovers are 1 up to rounding.
        for index in small + large:
            self.probabilities[index] = 1.0

    @property
    def is_empty(self) -> bool:
        return self.total <= 0.0

    def sample(self, rng: np.random.Generator) -> int:
        """Draw one index."""
        if self.is_empty:
            raise EmptyDistributionError("alias table has zero mass")
        column = int(rng.random() * self.size)
        if column == self.size:  # rng.random() < 1, kept for safety on rounding
            column -= 1
        if rng.random() < self.probabilities[column]:
            return column
        return int(self.aliases[column])

    def sample_many(self, rng: np.random.Generator, count: int) -> np.ndarray:
        """Draw ``count`` indices at once."""
        if self.is_empty:
            raise EmptyDistributionError("alias table has zero mass")
        columns = rng.integers(0, self.size, size=count)
        keep = rng.random(count) < self.probabilities[columns]
        return np.where(keep, columns, self.aliases[columns])

    def pmf(self) -> np.ndarray:
        """Probability mass function encoded by the table."""
        mass = self.probabilities / self.size
        out = mass.copy()
        np.add.at(out, self.aliases, (1.0 - self.probabilities) / self.size)
        return out


class SumTree:
    """Binary sum tree over non-negative weights with point updates."""

    def __init__(self, weights: Sequence[float]):
        weights = np.asarray(weights, dtype=float)
        if weights.ndim != 1 or weights.size == 0:
            raise ValueError("weights must be a non-empty 1-D array")
        if np.any(weights < 0):
            raise ValueError("weights must be non-negative")
        self.size = weights.size
        capacity = 1
        while capacity < self.size:
            capacity *= 2
        self._capacity = capacity
        self._tree = np.zeros(2 * capacity)
        self._tree[capacity:capacity + self.size] = weights
        for node in range(capacity - 1, 0, -1):
            self._tree[node] = self._tree[2 * node] + self._tree[2 * node + 1]

    @property
    def total(self) -> float:
        return float(self._tree[1])

    def weight(self, index: int) -> float:
        return float(self._tree[self._capacity + index])

    def update(self, index: int, weight: float) -> None:
        if weight < 0:
            raise ValueError(f"weight must be non-negative, got {weight}")
        node = self._capacity + index
        self._tree[node] = weight
        node //= 2
        while node >= 1:
            self._tree[node] = self._tree[2 * node] + self._tree[2 * node + 1]
            node //= 2

    def sample(self, rng: np.random.Generator) -> int:
        total = self.total
        if total <= 0.0:
            raise EmptyDistributionError("sum tree has zero mass")
        target = rng.random() * total
        node = 1
        while node < self._capacity:
            left = 2 * node
            if target < self._tree[left] or self._tree[left + 1] <= 0.0:
                node = left
            else:
                target -= self._tree[left]
                node = left + 1
        index = node - self._capacity
        # Rounding can land on a zero-weight padding leaf; fall back to the
        # last positive leaf.
        if index >= self.size or self._tree[node] <= 0.0:
            positive = np.flatnonzero(self._tree[self._capacity:self._capacity + self.size] > 0)
            index = int(positive[-1])
        return index
