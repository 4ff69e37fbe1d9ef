"""Dim-light DVS pixel simulator with parasitic-capacitor event delay.

The package couples an ideal logarithmic DVS pixel with a per-event delay
caused by charging the photodiode junction capacitance, and ships the
statistics needed to measure the resulting gap in the distribution of
inter-event times.
"""

from dvsdelay.circuit import PixelParams, Polarity
from dvsdelay.errors import (
    ConfigError,
    ConvergenceError,
    DataError,
    DomainError,
    InfiniteDelayError,
)
from dvsdelay.simulator import EventRecord, Mode, SimConfig
from dvsdelay.stimulus import FrameSequence, LumaTrace, RampStimulus

__version__ = "0.1.0"

__all__ = [
    "ConfigError",
    "ConvergenceError",
    "DataError",
    "DomainError",
    "EventRecord",
    "FrameSequence",
    "InfiniteDelayError",
    "LumaTrace",
    "Mode",
    "PixelParams",
    "Polarity",
    "RampStimulus",
    "SimConfig",
    "__version__",
]
