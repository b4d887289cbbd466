"""Hybrid time domains: jump instants, interval bookkeeping and event detection.

A domain covers a finite window ``[t_start, t_end]`` and is split by the jump
instants into flow intervals. Interval ``k`` carries the jump counter
``j = j_first + k``; by default ``j = 0`` is the interval that contains
``t = 0``. A jump happens at every instant strictly inside the window; an
instant that coincides with ``t_end`` closes the window without a jump.
"""

import math
import warnings
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence, Union

import numpy as np

from .errors import AssumptionError, PreconditionError, ValidationError
from .linalg import as_matrix, as_vector, expm

__all__ = [
    "TOL_EVENT",
    "EventResolutionWarning",
    "triangular_wave",
    "BoundaryTerm",
    "Boundary",
    "Guard",
    "Explicit",
    "Periodic",
    "StateTriggered",
    "Interval",
    "HybridTimeDomain",
    "detect_next_jump",
    "detect_previous_jump",
    "build_domain",
]

TOL_EVENT = 1e-9
DELTA_LOWER = 1e-6


class EventResolutionWarning(UserWarning):
    """A guard crossing could not be separated from the current time."""


def triangular_wave(t):
    """Triangular wave ``(2/pi) int_0^t sign(sin s) ds - 1``.

    Period ``2 pi``, range ``[-1, 1]``, equal to -1 at multiples of ``2 pi``
    and +1 at odd multiples of ``pi``.
    """
    r = np.mod(t, 2.0 * np.pi)
    ramp = np.where(r <= np.pi, r, 2.0 * np.pi - r)
    out = 2.0 / np.pi * ramp - 1.0
    return float(out) if np.ndim(out) == 0 else out


_WAVES = {"sin": np.sin, "cos": np.cos, "triangular": triangular_wave}


@dataclass(frozen=True)
class BoundaryTerm:
    """One additive term ``amplitude * wave(frequency * (t - shift))``."""

    kind: str
    amplitude: float = 1.0
    frequency: float = 1.0
    shift: float = 0.0

    def __post_init__(self):
        if self.kind not in _WAVES:
            raise ValidationError(
                f"unknown boundary term kind {self.kind!r}; expected one of {sorted(_WAVES)}"
            )

    def __call__(self, t):
        return self.amplitude * _WAVES[self.kind](self.frequency * (t - self.shift))


@dataclass(frozen=True)
class Boundary:
    """Time-varying flow-set boundary ``b(t) = offset + sum(terms)``."""

    offset: float = 0.0
    terms: tuple = ()

    def __call__(self, t):
        return self.offset + sum(term(t) for term in self.terms)

    @classmethod
    def paper_example(cls):
        """``sin(sqrt(3)/2 t) + 0.8 tri(sqrt(5) (t - 1)) + 3``."""
        return cls(
            offset=3.0,
            terms=(
                BoundaryTerm("sin", 1.0, math.sqrt(3.0) / 2.0, 0.0),
                BoundaryTerm("triangular", 0.8, math.sqrt(5.0), 1.0),
            ),
        )


@dataclass(frozen=True)
class Guard:
    """Jump when ``trigger(x)`` reaches ``boundary(t)`` from below.

    ``trigger`` is either a state index or a scalar function of the state.
    """

    boundary: Callable[[float], float]
    trigger: Union[int, Callable[[np.ndarray], float]] = 0

    def trigger_value(self, x):
        if callable(self.trigger):
            return float(self.trigger(x))
        return float(np.asarray(x).reshape(-1)[self.trigger])

    def gap(self, t, x):
        """Negative inside the flow set, zero on the jump set."""
        value = self.trigger_value(x) - float(self.boundary(t))
        if math.isnan(value):
            raise ValidationError(f"guard evaluation returned NaN at t={t}")
        return value


@dataclass(frozen=True)
class Explicit:
    instants: tuple

    def __init__(self, instants):
        object.__setattr__(self, "instants", tuple(float(t) for t in instants))


@dataclass(frozen=True)
class Periodic:
    period: float
    phase: float = 0.0


@dataclass(frozen=True)
class StateTriggered:
    """Jumps triggered by an autonomous linear hybrid system.

    The triggering state flows as ``x' = flow @ x`` and jumps as
    ``x+ = jump @ x``; ``state0`` is its value at ``t0`` (which must lie in
    the interior of the flow set).
    """

    guard: Guard
    flow: np.ndarray
    jump: np.ndarray
    state0: np.ndarray
    t0: float = 0.0
    scan_step: float = 1e-2

    def __init__(self, guard, flow, jump, state0, t0=0.0, scan_step=1e-2):
        flow = as_matrix(flow, "flow")
        jump = as_matrix(jump, "jump", shape=flow.shape)
        state0 = as_vector(state0, "state0", size=flow.shape[0])
        object.__setattr__(self, "guard", guard)
        object.__setattr__(self, "flow", flow)
        object.__setattr__(self, "jump", jump)
        object.__setattr__(self, "state0", state0)
        object.__setattr__(self, "t0", float(t0))
        object.__setattr__(self, "scan_step", float(scan_step))


@dataclass(frozen=True)
class Interval:
    j: int
    start: float
    end: float
    full: bool  # both ends are genuine jump instants

    @property
    def length(self):
        return self.end - self.start


@dataclass(frozen=True)
class HybridTimeDomain:
    """Immutable finite hybrid time domain.

    Attributes
    ----------
    instants : ndarray
        Jump instants within ``[t_start, t_end]``, strictly increasing.
    t_start, t_end : float
        Simulation window.
    j_first : int
        Jump counter of the first flow interval.
    rule : object
        The rule (:class:`Explicit`, :class:`Periodic`,
        :class:`StateTriggered`) that generated the instants.
    """

    instants: np.ndarray
    t_start: float
    t_end: float
    j_first: int = 0
    rule: object = None
    delta_lower: float = DELTA_LOWER
    delta_upper: Optional[float] = None
    intervals: tuple = field(init=False, repr=False)

    def __post_init__(self):
        inst = np.asarray(self.instants, dtype=float).reshape(-1)
        object.__setattr__(self, "instants", inst)
        if not self.t_end > self.t_start:
            raise ValidationError(f"empty window [{self.t_start}, {self.t_end}]")
        if inst.size and np.any(np.diff(inst) <= 0):
            raise ValidationError("jump instants must be strictly increasing")
        if inst.size and (inst[0] < self.t_start or inst[-1] > self.t_end):
            raise ValidationError("jump instants must lie inside the window")
        deltas = np.diff(inst)
        upper = self.delta_upper if self.delta_upper is not None else self.t_end - self.t_start
        if deltas.size and deltas.min() < self.delta_lower:
            k = int(np.argmin(deltas))
            raise AssumptionError(
                "jump-spacing",
                f"spacing {deltas[k]:.3g} between t={inst[k]:.9g} and "
                f"t={inst[k + 1]:.9g} is below the dwell-time bound {self.delta_lower:.3g}",
            )
        if deltas.size and deltas.max() > upper * (1 + 1e-12):
            raise AssumptionError(
                "jump-spacing", f"spacing {deltas.max():.3g} exceeds upper bound {upper:.3g}"
            )

        inner = inst[(inst > self.t_start) & (inst < self.t_end)]
        edges = np.concatenate([[self.t_start], inner, [self.t_end]])
        is_instant = set(inst.tolist())
        ivs = []
        for k in range(edges.size - 1):
            a, b = float(edges[k]), float(edges[k + 1])
            ivs.append(Interval(self.j_first + k, a, b, a in is_instant and b in is_instant))
        object.__setattr__(self, "intervals", tuple(ivs))

    # -- queries ---------------------------------------------------------

    @property
    def jumps(self):
        """Instants at which a jump is applied (strictly inside the window)."""
        return self.instants[(self.instants > self.t_start) & (self.instants < self.t_end)]

    @property
    def deltas(self):
        return np.diff(self.instants)

    @property
    def j_last(self):
        return self.intervals[-1].j

    def interval(self, j):
        k = j - self.j_first
        if not 0 <= k < len(self.intervals):
            raise IndexError(f"jump index {j} outside domain [{self.j_first}, {self.j_last}]")
        return self.intervals[k]

    def locate(self, t):
        """Hybrid time ``(t, j)`` reached by flowing to ``t``.

        At a jump instant the post-jump interval is returned.
        """
        if t < self.t_start or t > self.t_end:
            raise ValueError(f"t={t} outside window [{self.t_start}, {self.t_end}]")
        k = int(np.searchsorted(self.jumps, t, side="right"))
        return self.intervals[k]

    def restrict(self, t_start, t_end=None):
        """Sub-domain on ``[t_start, t_end]`` keeping the jump counter."""
        t_end = self.t_end if t_end is None else t_end
        if t_start < self.t_start or t_end > self.t_end:
            raise ValueError("restriction window must lie inside the domain window")
        first = self.locate(t_start)
        inst = self.instants[(self.instants >= t_start) & (self.instants <= t_end)]
        return HybridTimeDomain(
            inst, t_start, t_end, first.j, self.rule, self.delta_lower, self.delta_upper
        )

    def reversed(self):
        """Time-reversed domain ``t -> -t`` with ``j`` counted from 0.

        Interval ``k`` of the result covers interval ``j_last - k`` of this one.
        """
        return HybridTimeDomain(
            -self.instants[::-1], -self.t_end, -self.t_start, 0, None, self.delta_lower, self.delta_upper
        )

    def grid(self, interval, min_points=50, max_step=None):
        """Sampling grid for one interval (endpoints included)."""
        count = min_points
        if max_step is not None and interval.length > 0:
            count = max(count, int(math.ceil(interval.length / max_step)) + 1)
        return np.linspace(interval.start, interval.end, count)


def _origin_j_first(edges_inner, t_start, t_end):
    if t_start <= 0.0 <= t_end:
        return -int(np.searchsorted(edges_inner, 0.0, side="right"))
    return 0


def detect_next_jump(guard, trajectory, t_now, dt_max, t_end, tol_event=TOL_EVENT):
    """First time after ``t_now`` at which the guard fires.

    ``trajectory(t)`` returns the flowing state. Sign changes of
    ``guard.gap`` are bracketed on a grid of step ``dt_max`` and refined by
    bisection to width ``tol_event``; the returned time is the right end of
    the final bracket. Returns ``None`` when no crossing occurs before
    ``t_end``.
    """
    g0 = guard.gap(t_now, trajectory(t_now))
    if g0 >= 0:
        raise PreconditionError(f"trigger is not inside the flow set at t={t_now}")
    lo = t_now
    while lo < t_end:
        hi = min(lo + dt_max, t_end)
        if guard.gap(hi, trajectory(hi)) >= 0:
            break
        lo = hi
    else:
        return None
    if lo >= t_end:
        return None
    while hi - lo > tol_event:
        mid = 0.5 * (lo + hi)
        if guard.gap(mid, trajectory(mid)) >= 0:
            hi = mid
        else:
            lo = mid
    if hi - t_now <= tol_event:
        warnings.warn(
            f"guard crossing at t={hi} is not resolved from t_now={t_now}",
            EventResolutionWarning,
            stacklevel=2,
        )
    return hi


def detect_previous_jump(guard, pre_jump_trajectory, t_now, dt_max, t_stop, tol_event=TOL_EVENT):
    """Latest time before ``t_now`` at which a jump must have happened.

    ``pre_jump_trajectory(t)`` is the state that would have jumped onto the
    current trajectory at time ``t`` (i.e. the current flow mapped through
    the inverse jump map). The previous jump is where that pre-image meets
    the boundary: it lies outside the flow set just before ``t_now`` and
    inside further back. Returns ``None`` if no such time exists after
    ``t_stop``.
    """
    if guard.gap(t_now, pre_jump_trajectory(t_now)) < 0:
        raise ValidationError(
            f"backward reconstruction ambiguous at t={t_now}: the pre-jump image "
            "is already inside the flow set"
        )
    hi = t_now
    while hi > t_stop:
        lo = max(hi - dt_max, t_stop)
        if guard.gap(lo, pre_jump_trajectory(lo)) < 0:
            break
        hi = lo
    else:
        return None
    if hi <= t_stop:
        return None
    while hi - lo > tol_event:
        mid = 0.5 * (lo + hi)
        if guard.gap(mid, pre_jump_trajectory(mid)) < 0:
            lo = mid
        else:
            hi = mid
    return hi


def _state_triggered_instants(rule, t_start, t_end, tol_event):
    guard = rule.guard
    S, J = rule.flow, rule.jump
    jinv = np.linalg.inv(J)
    instants = []

    # forward in time from t0
    t_now, x_now = rule.t0, rule.state0.copy()
    for _ in range(100000):
        if t_now >= t_end:
            break
        traj = lambda t, tr=t_now, xr=x_now: expm(S, t - tr) @ xr
        # flow-set re-entry after a jump
        for _ in range(1000):
            if guard.gap(t_now, traj(t_now)) < 0:
                break
            t_now += tol_event
        else:
            raise AssumptionError("jump-spacing", f"trajectory stays on the jump set at t={t_now}")
        t_hit = detect_next_jump(guard, traj, t_now, rule.scan_step, t_end, tol_event)
        if t_hit is None:
            break
        instants.append(t_hit)
        x_now = J @ traj(t_hit)
        t_now = t_hit

    # backward in time from t0
    backward = []
    t_now, x_now = rule.t0, rule.state0.copy()
    while t_now > t_start:
        pre = lambda t, tr=t_now, xr=x_now: jinv @ (expm(S, t - tr) @ xr)
        t_hit = detect_previous_jump(guard, pre, t_now, rule.scan_step, t_start, tol_event)
        if t_hit is None:
            break
        backward.append(t_hit)
        x_now = pre(t_hit)
        t_now = t_hit
    return backward[::-1] + instants


def build_domain(rule, window=None, delta_lower=DELTA_LOWER, delta_upper=None, tol_event=TOL_EVENT, j_first=None):
    """Generate a :class:`HybridTimeDomain` from a rule on ``window``.

    Parameters
    ----------
    rule : Explicit, Periodic or StateTriggered
    window : (float, float), optional
        ``(t_start, t_end)``. Required except for :class:`Explicit`, where it
        defaults to the first and last listed instants.
    j_first : int, optional
        Jump counter of the first interval; by default the interval holding
        ``t = 0`` gets ``j = 0``.
    """
    if isinstance(rule, Explicit):
        inst = np.asarray(rule.instants, dtype=float)
        if inst.size and np.any(np.diff(inst) <= 0):
            raise ValidationError(f"explicit jump instants are not strictly increasing: {rule.instants}")
        if window is None:
            if inst.size < 2:
                raise ValidationError("an explicit rule without window needs at least two instants")
            window = (inst[0], inst[-1])
        t_start, t_end = map(float, window)
        inst = inst[(inst >= t_start) & (inst <= t_end)]
    elif isinstance(rule, Periodic):
        if not rule.period > 0:
            raise ValidationError(f"period must be positive, got {rule.period}")
        if window is None:
            raise ValidationError("a periodic rule needs a window")
        t_start, t_end = map(float, window)
        T, phase = float(rule.period), float(rule.phase)
        eps = 1e-12 * max(1.0, abs(t_start), abs(t_end))
        k0 = math.ceil((t_start - phase - eps) / T)
        k1 = math.floor((t_end - phase + eps) / T)
        inst = phase + T * np.arange(k0, k1 + 1)
        # snap endpoints hit up to rounding
        inst[np.abs(inst - t_start) <= eps] = t_start
        inst[np.abs(inst - t_end) <= eps] = t_end
    elif isinstance(rule, StateTriggered):
        if window is None:
            raise ValidationError("a state-triggered rule needs a window")
        t_start, t_end = map(float, window)
        if not t_start <= rule.t0 <= t_end:
            raise ValidationError("the trigger initial time must lie in the window")
        inst = np.asarray(_state_triggered_instants(rule, t_start, t_end, tol_event))
    else:
        raise ValidationError(f"unknown domain rule {rule!r}")

    if not t_end > t_start:
        raise ValidationError(f"empty window [{t_start}, {t_end}]")
    if j_first is None:
        inner = inst[(inst > t_start) & (inst < t_end)]
        j_first = _origin_j_first(inner, t_start, t_end)
    return HybridTimeDomain(inst, t_start, t_end, j_first, rule, delta_lower, delta_upper)
