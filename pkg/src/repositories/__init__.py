"""
Repositories module for data persistence.
"""
from .json_result_repository import JsonResultRepository

__all__ = ['JsonResultRepository']
