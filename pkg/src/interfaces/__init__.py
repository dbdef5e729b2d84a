"""
Interfaces module for abstract base classes.
"""
from .energy_model import BounceTimeStrategy, EnergyModel
from .factor import Factor
from .result_repository import ResultRepository

__all__ = ['BounceTimeStrategy', 'EnergyModel', 'Factor', 'ResultRepository']
