"""Link-level simulation of low-resolution ADC mmWave receivers."""

from .errors import (
    ConfigError,
    DegenerateInputError,
    QuantlinkError,
    UnsupportedSizeError,
)

__version__ = "0.1.0"

__all__ = [
    "ConfigError",
    "DegenerateInputError",
    "QuantlinkError",
    "UnsupportedSizeError",
    "__version__",
]
