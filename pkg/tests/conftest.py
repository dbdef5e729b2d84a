"""Shared fixtures: seeded random streams and small well-conditioned targets."""
import numpy as np
import pytest

from src.services.energy_models import build_chain_gmrf, chain_precision


CHAIN_DIMENSION = 10
CHAIN_RHO = 0.3


@pytest.fixture
def rng():
    return np.random.default_rng(20240917)


@pytest.fixture
def chain_graph():
    return build_chain_gmrf(CHAIN_DIMENSION, CHAIN_RHO)


@pytest.fixture
def chain_matrix():
    return chain_precision(CHAIN_DIMENSION, CHAIN_RHO)


@pytest.fixture
def write_config(tmp_path):
    """Write JSON text to a config file and return its path."""

    def write(text: str, name: str = "experiment.json") -> str:
        path = tmp_path / name
        path.write_text(text, encoding="utf-8")
        return str(path)

    return write
