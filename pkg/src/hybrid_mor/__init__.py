"""Moment matching model reduction for linear hybrid systems."""

from .errors import (
    AlignmentError,
    AssumptionError,
    ConvergenceError,
    DimensionError,
    HybridMorError,
    PreconditionError,
    SimulationError,
    SingularityError,
    StabilityError,
    ValidationError,
    WarmupTooShortError,
)
from .hybrid_sim import HybridFilter, LinearHybridSystem, SignalGenerator, simulate
from .hybrid_time import HybridTimeDomain, build_domain
from .signal import HybridSignal

__version__ = "0.1.0"
