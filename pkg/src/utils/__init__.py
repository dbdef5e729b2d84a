"""
Utilities module.
"""
from .logging_config import setup_logging, get_logger, log_duration
from .random_streams import make_rng, spawn_streams, replicate_stream

__all__ = [
    'setup_logging',
    'get_logger',
    'log_duration',
    'make_rng',
    'spawn_streams',
    'replicate_stream',
]
