"""
Abstract factor of a factor-graph target.
"""
import math
from abc import ABC, abstractmethod
from typing import Optional, Sequence

import numpy as np


class Factor(ABC):
    """
    One factor gamma_f(x_f) of the target, acting on the coordinates N_f.

    All methods take the restrictions x_f, v_f (ordered as ``neighborhood``),
    so the gradient is structurally zero outside N_f.
    """

    def __init__(self, neighborhood: Sequence[int]):
        indices = np.asarray(sorted(set(int(k) for k in neighborhood)), dtype=int)
        if indices.size == 0:
            raise ValueError("factor neighborhood must be non-empty")
        if indices[0] < 0:
            raise ValueError("coordinate indices must be non-negative")
        self.neighborhood = indices

    @property
    def size(self) -> int:
        return self.neighborhood.size

    @abstractmethod
    def energy(self, x_f: np.ndarray) -> float:
        pass

    @abstractmethod
    def gradient(self, x_f: np.ndarray) -> np.ndarray:
        pass

    @abstractmethod
    def first_arrival(self, x_f: np.ndarray, v_f: np.ndarray, rng: np.random.Generator,
                      horizon: float = math.inf) -> float:
        """First arrival of the local rate max(0, <grad U_f(x_f + v_f t), v_f>)."""
        pass

    def bound(self, x_f: np.ndarray, v_f: np.ndarray, window: float) -> Optional[float]:
        """
        Constant bound on the local rate over [0, window), or ``None`` when the
        factor provides no bound (thinning samplers then reject the graph).
        """
        return None

    def rate(self, x_f: np.ndarray, v_f: np.ndarray, t: float = 0.0) -> float:
        return max(0.0, float(np.dot(self.gradient(x_f + v_f * t), v_f)))
