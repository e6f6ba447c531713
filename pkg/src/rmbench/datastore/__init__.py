"""Episodic dataset storage: binary episode files, stats, conversions."""

from .dataset import (Dataset, NormStats, compute_stats, to_absolute,
                      to_relative)
from .format import (ACTION_CHANNEL, CHUNK_STEPS, Episode, ValidationReport,
                     read_channels, read_episode, read_header, validate,
                     write_episode)

__all__ = [
    "ACTION_CHANNEL", "CHUNK_STEPS", "Dataset", "Episode", "NormStats",
    "ValidationReport", "compute_stats", "read_channels", "read_episode",
    "read_header", "to_absolute", "to_relative", "validate", "write_episode",
]
