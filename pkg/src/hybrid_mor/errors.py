"""Exception hierarchy for hybrid_mor."""


class HybridMorError(Exception):
    """Base class for all errors raised by this package."""


class DimensionError(HybridMorError, ValueError):
    """Matrix or vector shapes are inconsistent."""


class SingularityError(HybridMorError, ArithmeticError):
    """A linear solve is (numerically) singular."""


class AssumptionError(HybridMorError):
    """A standing modelling assumption is violated.

    Parameters
    ----------
    assumption : str
        Short name of the violated assumption, e.g. ``"jump-spacing"``,
        ``"generator"``, ``"filter"`` or ``"two-sided-invertibility"``.
    message : str
        Human readable detail.
    """

    def __init__(self, assumption, message):
        self.assumption = assumption
        super().__init__(f"[{assumption}] {message}")


class PreconditionError(HybridMorError):
    """An operation was called outside of its domain of validity."""


class ValidationError(HybridMorError, ValueError):
    """Invalid user supplied data (domain rules, configuration files)."""


class StabilityError(HybridMorError):
    """A system required to be exponentially stable is not."""


class ConvergenceError(HybridMorError):
    """An iterative or attractivity-based computation did not converge."""


class WarmupTooShortError(ConvergenceError):
    """Forward/backward attraction did not forget its initialisation."""

    def __init__(self, message, discrepancy=None, contraction=None):
        self.discrepancy = discrepancy
        self.contraction = contraction
        super().__init__(message)


class AlignmentError(HybridMorError, ValueError):
    """Two hybrid signals do not share a common sampling grid."""


class SimulationError(HybridMorError):
    """Failure inside a simulation, tagged with the hybrid time ``(t, j)``."""

    def __init__(self, message, t=None, j=None):
        self.t = t
        self.j = j
        super().__init__(f"{message} (at t={t}, j={j})")
