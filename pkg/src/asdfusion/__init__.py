"""Multimodal active speaker detection: audio, diarization, optical flow and fusion."""
from ._accel import backend
from .errors import AsdError, ConfigError, DataError, NumericError

__version__ = "0.1.0"

__all__ = ["AsdError", "ConfigError", "DataError", "NumericError", "backend", "__version__"]
