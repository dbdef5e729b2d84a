"""
Abstract energy model and bounce-time strategy.
"""
import math
from abc import ABC, abstractmethod
from typing import Optional

import numpy as np

from src.data.sampler_types import ArrivalResult


class BounceTimeStrategy(ABC):
    """
    Simulates the first bounce time of an energy model along a ray.
    """

    #: Short name used in configs and summaries.
    kind: str = "abstract"

    @abstractmethod
    def first_arrival(self, model: "EnergyModel", x: np.ndarray, v: np.ndarray,
                      rng: np.random.Generator, horizon: float = math.inf) -> ArrivalResult:
        """
        Draw the first arrival of the process with rate max(0, <grad U(x + vt), v>).

        Args:
            model: The energy model
            x: Current position
            v: Current velocity
            rng: Random stream consumed by the engine
            horizon: Arrivals at or beyond it are reported as ``math.inf``

        Returns:
            ArrivalResult: the bounce time (``math.inf`` for none)
        """
        pass


class EnergyModel(ABC):
    """
    Target density exp(-U(x)) on R^d together with its bounce-time machinery.
    """

    def __init__(self, dimension: int, strategy: Optional[BounceTimeStrategy] = None):
        if dimension < 1:
            raise ValueError(f"dimension must be positive, got {dimension}")
        self.dimension = dimension
        self._strategy = strategy

    @abstractmethod
    def energy(self, x: np.ndarray) -> float:
        """U(x) = -log of the unnormalized density."""
        pass

    @abstractmethod
    def gradient(self, x: np.ndarray) -> np.ndarray:
        """Gradient of U at x."""
        pass

    @property
    def strategy(self) -> BounceTimeStrategy:
        if self._strategy is None:
            raise ValueError(f"{type(self).__name__} has no bounce-time strategy")
        return self._strategy

    def set_strategy(self, strategy: BounceTimeStrategy) -> None:
        self._strategy = strategy

    def directional_derivative(self, x: np.ndarray, v: np.ndarray, t: float = 0.0) -> float:
        """d/dt U(x + vt)."""
        return float(np.dot(self.gradient(x + v * t), v))

    def rate_on_ray(self, x: np.ndarray, v: np.ndarray, t: float) -> float:
        """chi(t) = max(0, <grad U(x + vt), v>)."""
        return max(0.0, self.directional_derivative(x, v, t))

    def bounce_time(self, x: np.ndarray, v: np.ndarray, rng: np.random.Generator,
                    horizon: float = math.inf) -> ArrivalResult:
        return self.strategy.first_arrival(self, x, v, rng, horizon)
