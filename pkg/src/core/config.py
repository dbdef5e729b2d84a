import os
from dotenv import load_dotenv
from typing import Optional

load_dotenv()


class AppSettings:
    """Application settings and constants."""

    # Default directories
    DEFAULT_OUTPUT_DIR = "results"

    # Run guards
    DEFAULT_MAX_EVENTS = 5_000_000
    DEFAULT_MAX_WALL_SECONDS = 600.0

    # Convex line search
    LINE_SEARCH_TOL = 1e-10
    LINE_SEARCH_MAX_ITER = 200

    # Velocity norm drift allowed over a run (reflections only)
    NORM_DRIFT_TOL = 1e-9

    # Factor selection in the thinning sampler
    ALIAS_MAX_FACTORS = 64

    # Estimators
    DEFAULT_BATCH_COUNT = 50
    MIN_ESS_LENGTH = 100
    DENSITY_GRID_POINTS = 2000

    # Radial process thinning window
    RADIAL_WINDOW = 0.5

    # Logging settings
    DEFAULT_LOG_LEVEL = "INFO"
    LOG_FILE = None  # Set to path if you want file logging


class Config:
    """Environment overrides for the run guards and output locations."""

    LOG_LEVEL: str = os.getenv("BPS_LOG_LEVEL", AppSettings.DEFAULT_LOG_LEVEL)
    OUTPUT_DIR: str = os.getenv("BPS_OUTPUT_DIR", AppSettings.DEFAULT_OUTPUT_DIR)
    MAX_EVENTS: Optional[str] = os.getenv("BPS_MAX_EVENTS")
    MAX_WALL_SECONDS: Optional[str] = os.getenv("BPS_MAX_WALL_SECONDS")

    def __init__(self):
        self.max_events = self._parse_int(self.MAX_EVENTS, AppSettings.DEFAULT_MAX_EVENTS)
        self.max_wall_seconds = self._parse_float(
            self.MAX_WALL_SECONDS, AppSettings.DEFAULT_MAX_WALL_SECONDS
        )
        self._validate_config()

    @staticmethod
    def _parse_int(raw: Optional[str], default: int) -> int:
        return int(raw) if raw else default

    @staticmethod
    def _parse_float(raw: Optional[str], default: float) -> float:
        return float(raw) if raw else default

    def _validate_config(self):
        if self.max_events <= 0:
            raise ValueError("BPS_MAX_EVENTS must be a positive integer.")
        if self.max_wall_seconds <= 0:
            raise ValueError("BPS_MAX_WALL_SECONDS must be positive.")
        if self.LOG_LEVEL.upper() not in ("DEBUG", "INFO", "WARNING", "ERROR", "CRITICAL"):
            raise ValueError(f"BPS_LOG_LEVEL has an unknown level: {self.LOG_LEVEL}")


# Singleton instances
app_config = Config()
app_settings = AppSettings()
