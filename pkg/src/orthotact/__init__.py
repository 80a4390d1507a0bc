"""Orthogonal-code (CDMA-style) encoding for single-wire tactile sensor arrays."""

from .codebook import (
    CodeBook,
    assign_codes,
    fwht,
    smallest_order,
    sylvester_hadamard,
    verify_orthogonality,
)
from .sensor import SensorModel, PressureFrame
from .encoder import EncoderConfig, ChipStream, NodeWaveform
from .channel import ChannelConfig, AnalogTrace
from .decoder import DecoderConfig, DecodedFrame, NodeOutcome
from .config import SystemConfig

__all__ = [
    "AnalogTrace",
    "ChannelConfig",
    "ChipStream",
    "CodeBook",
    "DecodedFrame",
    "DecoderConfig",
    "EncoderConfig",
    "NodeOutcome",
    "NodeWaveform",
    "PressureFrame",
    "SensorModel",
    "SystemConfig",
    "assign_codes",
    "fwht",
    "smallest_order",
    "sylvester_hadamard",
    "verify_orthogonality",
]

__version__ = "0.1.0"
