"""Speed regression on reduced fan-rig sensor data, and impeller health checks."""

from fanwatch.core import (
    AlignedTable,
    Channel,
    ConfigError,
    DataError,
    Dataset,
    Impeller,
    RawRecording,
    SplitPair,
    validate,
)

__version__ = "0.1.0"

__all__ = [
    "AlignedTable",
    "Channel",
    "ConfigError",
    "DataError",
    "Dataset",
    "Impeller",
    "RawRecording",
    "SplitPair",
    "validate",
]
