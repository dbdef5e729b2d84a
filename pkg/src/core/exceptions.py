"""
Exception hierarchy for the sampler library.
"""
from typing import List, Optional


class BPSError(Exception):
    """Base class for every sampler failure."""


class EnvelopeViolationError(BPSError):
    """A thinning bound was exceeded by the intensity it should dominate."""

    def __init__(self, rate: float, bound: float, time: Optional[float] = None):
        self.rate = rate
        self.bound = bound
        self.time = time
        where = f" at t={time!r}" if time is not None else ""
        super().__init__(f"intensity {rate!r} exceeds bound {bound!r}{where}")


class DegenerateBounceError(BPSError):
    """Reflection requested against a zero gradient."""


class LineSearchError(BPSError):
    """Convex line search failed to bracket or converge (energy likely non-convex)."""


class NormDriftError(BPSError):
    """Velocity norm drifted across reflections beyond tolerance."""


class TrajectoryQueryError(BPSError):
    """A path was queried outside its recorded time range."""


class EmptyDistributionError(BPSError):
    """Sampling from a discrete distribution with zero total mass."""


class RadialCollapseError(BPSError):
    """The radial process reached the origin."""


class InvalidConfigError(BPSError):
    """An experiment configuration failed validation."""

    def __init__(self, problems: List[str]):
        self.problems = list(problems)
        super().__init__("; ".join(self.problems) if self.problems else "invalid configuration")
