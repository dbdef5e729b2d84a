"""
Abstract repository for experiment configs and results.
"""
from abc import ABC, abstractmethod
from typing import Any, Dict, Iterable, List, Sequence

from src.data.experiment_models import ExperimentConfig, RunSummary


class ResultRepository(ABC):
    """
    Loads experiment configurations and persists run outputs.
    """

    @abstractmethod
    def load_config(self, path: str) -> ExperimentConfig:
        """
        Load and validate an experiment configuration.

        Raises:
            InvalidConfigError: If the file does not parse or validate
        """
        pass

    @abstractmethod
    def save_summary(self, summary: RunSummary, path: str) -> str:
        """
        Save a run summary with a stable byte representation.

        Returns:
            str: The path written
        """
        pass

    @abstractmethod
    def write_table(self, path: str, header: Sequence[str], rows: Iterable[Sequence[Any]]) -> str:
        """
        Write delimiter-separated rows with a header line.

        Returns:
            str: The path written
        """
        pass

    @abstractmethod
    def exists(self, path: str) -> bool:
        pass

    @abstractmethod
    def validate_config(self, path: str) -> List[str]:
        """
        Check a configuration without running it.

        Returns:
            List[str]: Problems found (empty when valid)
        """
        pass
