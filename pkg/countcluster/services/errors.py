"""
Exceptions raised by the guidance pipeline.

Everything derives from ``ValueError`` so callers that only care about
"bad input or failed computation" can keep catching that.
"""

from typing import Optional


class CountClusterError(ValueError):
    """Base class for all pipeline errors."""


class InvalidAttentionMapError(CountClusterError):
    """Map has the wrong shape or contains non-finite scores."""


class DegenerateMapError(CountClusterError):
    """Map is constant, so normalization and clustering are undefined."""


class InvalidObjectCountError(CountClusterError):
    """Requested object count is outside the supported range."""


class MapTooSmallError(CountClusterError):
    """k centers cannot be placed on the map even after relaxation."""


class InvalidThresholdError(CountClusterError):
    """Threshold tau is outside the open interval (0, 1)."""


class EmptyClusterError(CountClusterError):
    """A cluster has no member patches."""


class TrajectoryFinishedError(CountClusterError):
    """Attempt to step a simulation that already reached t = 0."""


class DivergedError(CountClusterError):
    """Gradient or latent became non-finite."""


class MetricsError(CountClusterError):
    """Metric inputs are empty or misaligned."""


class ConfigError(CountClusterError):
    """Configuration file or flag value is invalid."""


class RunFailedError(CountClusterError):
    """A simulated run failed; carries the run context."""

    def __init__(self, message: str, seed: Optional[int] = None, timestep: Optional[int] = None):
        context = []
        if seed is not None:
            context.append(f"seed={seed}")
        if timestep is not None:
            context.append(f"t={timestep}")
        prefix = f"[{' '.join(context)}] " if context else ""
        super().__init__(f"{prefix}{message}")
        self.seed = seed
        self.timestep = timestep
