"""Linear hybrid systems, signal generators, filters and their simulation.

Every simulated object exposes the same three hooks, which lets constant
plants and reduced models with time-varying coefficients share one
simulator::

    flow_matrices(t, j)   -> (A_c, B_c)
    jump_matrices(t, j)   -> (A_d, B_d)   # evaluated at the pre-jump (t, j)
    output_matrix(t, j)   -> C
"""

import warnings
from dataclasses import dataclass, field
from typing import NamedTuple, Optional

import numpy as np
from scipy.integrate import solve_ivp

from .errors import AssumptionError, DimensionError, SimulationError
from .linalg import as_matrix, as_vector, observability_rank, reachability_rank, spectral_radius
from .signal import HybridSignal, Segment

__all__ = [
    "LinearHybridSystem",
    "SignalGenerator",
    "HybridFilter",
    "SimOptions",
    "simulate_hybrid",
    "simulate",
    "simulate_interconnection_direct",
    "simulate_interconnection_swapped",
    "StabilityReport",
    "check_exponential_stability",
    "zero_input",
    "exponential_input",
]

EPS_STAB = 1e-3


@dataclass(frozen=True)
class SimOptions:
    """Integrator settings (Dormand-Prince 5(4) via ``solve_ivp``)."""

    rtol: float = 1e-7
    atol: float = 1e-9
    min_points: int = 50
    max_step_out: Optional[float] = 0.02  # spacing of the reported grid


DEFAULT_OPTIONS = SimOptions()


@dataclass(frozen=True)
class LinearHybridSystem:
    """``x' = A_c x + B_c u_c`` during flows, ``x+ = A_d x + B_d u_d`` at jumps, ``y = C x``."""

    A_c: np.ndarray
    A_d: np.ndarray
    B_c: np.ndarray
    B_d: np.ndarray
    C: np.ndarray
    invertible_Ad: bool = field(init=False)

    def __post_init__(self):
        A_c = as_matrix(self.A_c, "A_c")
        n = A_c.shape[0]
        if A_c.shape != (n, n):
            raise DimensionError(f"A_c must be square, got {A_c.shape}")
        A_d = as_matrix(self.A_d, "A_d", shape=(n, n))
        B_c = as_matrix(self.B_c, "B_c", shape=(n, None))
        B_d = as_matrix(self.B_d, "B_d", shape=(n, B_c.shape[1]))
        C = as_matrix(self.C, "C", shape=(None, n))
        for name, val in (("A_c", A_c), ("A_d", A_d), ("B_c", B_c), ("B_d", B_d), ("C", C)):
            object.__setattr__(self, name, val)
        cond = np.linalg.cond(A_d)
        object.__setattr__(self, "invertible_Ad", bool(np.isfinite(cond) and cond < 1e12))

    @property
    def n(self):
        return self.A_c.shape[0]

    @property
    def m(self):
        return self.B_c.shape[1]

    @property
    def p(self):
        return self.C.shape[0]

    def flow_matrices(self, t, j):
        return self.A_c, self.B_c

    def jump_matrices(self, t, j):
        return self.A_d, self.B_d

    def output_matrix(self, t, j):
        return self.C


@dataclass(frozen=True)
class SignalGenerator:
    """Autonomous hybrid generator ``w' = S w``, ``w+ = J w`` with outputs ``L_c w``, ``L_d w``."""

    S: np.ndarray
    J: np.ndarray
    L_c: np.ndarray
    L_d: np.ndarray
    omega0: np.ndarray

    def __post_init__(self):
        S = as_matrix(self.S, "S")
        nu = S.shape[0]
        if S.shape != (nu, nu):
            raise DimensionError(f"S must be square, got {S.shape}")
        J = as_matrix(self.J, "J", shape=(nu, nu))
        L_c = as_matrix(self.L_c, "L_c", shape=(None, nu))
        L_d = as_matrix(self.L_d, "L_d", shape=(L_c.shape[0], nu))
        omega0 = as_vector(self.omega0, "omega0", size=nu)
        for name, val in (("S", S), ("J", J), ("L_c", L_c), ("L_d", L_d), ("omega0", omega0)):
            object.__setattr__(self, name, val)
        if np.linalg.matrix_rank(J) < nu:
            raise AssumptionError("generator", "the generator jump matrix J must be invertible")
        if observability_rank(S, L_c) < nu:
            raise AssumptionError("generator", "the pair (S, L_c) must be observable")
        if observability_rank(J, L_d) < nu:
            raise AssumptionError("generator", "the pair (J, L_d) must be observable")

    @property
    def nu(self):
        return self.S.shape[0]


@dataclass(frozen=True)
class HybridFilter:
    """``v' = Q_c v + R_c eta_c`` during flows, ``v+ = Q_d v + R_d eta_d`` at jumps."""

    Q_c: np.ndarray
    Q_d: np.ndarray
    R_c: np.ndarray
    R_d: np.ndarray
    varpi0: Optional[np.ndarray] = None

    def __post_init__(self):
        Q_c = as_matrix(self.Q_c, "Q_c")
        nu = Q_c.shape[0]
        if Q_c.shape != (nu, nu):
            raise DimensionError(f"Q_c must be square, got {Q_c.shape}")
        Q_d = as_matrix(self.Q_d, "Q_d", shape=(nu, nu))
        R_c = as_matrix(self.R_c, "R_c", shape=(nu, None))
        R_d = as_matrix(self.R_d, "R_d", shape=(nu, R_c.shape[1]))
        varpi0 = np.zeros(nu) if self.varpi0 is None else as_vector(self.varpi0, "varpi0", size=nu)
        for name, val in (("Q_c", Q_c), ("Q_d", Q_d), ("R_c", R_c), ("R_d", R_d), ("varpi0", varpi0)):
            object.__setattr__(self, name, val)
        if np.linalg.matrix_rank(Q_d) < nu:
            raise AssumptionError("filter", "the filter jump matrix Q_d must be invertible")
        if reachability_rank(Q_c, R_c) < nu:
            raise AssumptionError("filter", "the pair (Q_c, R_c) must be reachable")
        if reachability_rank(Q_d, R_d) < nu:
            raise AssumptionError("filter", "the pair (Q_d, R_d) must be reachable")

    @property
    def nu(self):
        return self.Q_c.shape[0]

    @property
    def p(self):
        return self.R_c.shape[1]


# -- inputs ------------------------------------------------------------------


def zero_input(m):
    z = np.zeros(m)
    return lambda t: z


def exponential_input(rates, amplitudes=None):
    """``u_i(t) = a_i exp(-r_i t)``."""
    rates = np.asarray(rates, dtype=float)
    amps = np.ones_like(rates) if amplitudes is None else np.asarray(amplitudes, dtype=float)
    return lambda t: amps * np.exp(-rates * t)


def _eval_input(u, t, j, m):
    if u is None:
        return np.zeros(m)
    try:
        val = np.asarray(u(t), dtype=float).reshape(-1)
    except Exception as exc:  # noqa: BLE001 - re-raised with location
        raise SimulationError(f"input evaluation failed: {exc}", t, j) from exc
    if val.size != m:
        raise SimulationError(f"input has length {val.size}, expected {m}", t, j)
    return val


# -- core integrator ---------------------------------------------------------


def simulate_hybrid(domain, flow, jump, z0, options=DEFAULT_OPTIONS, name="z"):
    """Integrate a hybrid ODE over every interval of ``domain``.

    ``flow(t, j, z)`` is the vector field and ``jump(t, j, z)`` the jump map
    applied at the end of each interval except the last. Integration always
    stops exactly at the jump instant before the jump map is applied.
    """
    z = np.asarray(z0, dtype=float).reshape(-1).copy()
    segments = []
    last = len(domain.intervals) - 1
    for k, iv in enumerate(domain.intervals):
        grid = domain.grid(iv, options.min_points, options.max_step_out)
        j = iv.j
        try:
            sol = solve_ivp(
                lambda t, y: flow(t, j, y),
                (iv.start, iv.end),
                z,
                method="RK45",
                t_eval=grid,
                rtol=options.rtol,
                atol=options.atol,
            )
        except SimulationError:
            raise
        except Exception as exc:  # noqa: BLE001
            raise SimulationError(f"integration failed: {exc}", iv.start, j) from exc
        if not sol.success:
            raise SimulationError(f"integration failed: {sol.message}", iv.start, j)
        values = sol.y.T.copy()
        values[0] = z
        segments.append(Segment(j, grid, values))
        if k < last:
            z = np.asarray(jump(iv.end, j, values[-1]), dtype=float).reshape(-1)
    return HybridSignal(segments, name)


# -- plant simulation ----------------------------------------------------------


def simulate(system, domain, u_c=None, u_d=None, x0=None, options=DEFAULT_OPTIONS):
    """Simulate ``system`` driven by inputs ``u_c(t)``, ``u_d(t)``.

    Returns
    -------
    (state, output) : tuple of HybridSignal
    """
    A_c, B_c = system.flow_matrices(domain.t_start, domain.j_first)
    n, m = B_c.shape
    x0 = np.zeros(n) if x0 is None else as_vector(x0, "x0", size=n)

    def flow(t, j, x):
        A, B = system.flow_matrices(t, j)
        return A @ x + B @ _eval_input(u_c, t, j, m)

    def jump(t, j, x):
        A, B = system.jump_matrices(t, j)
        return A @ x + B @ _eval_input(u_d, t, j, m)

    state = simulate_hybrid(domain, flow, jump, x0, options, name="x")
    output = state.map(lambda t, j, x: system.output_matrix(t, j) @ x, name="y")
    return state, output


class DirectRun(NamedTuple):
    y: HybridSignal
    omega: HybridSignal
    x: HybridSignal


def simulate_interconnection_direct(system, generator, domain, x0=None, options=DEFAULT_OPTIONS):
    """Plant driven by the generator: ``u_c = L_c w`` in flows, ``u_d = L_d w`` at jumps."""
    n = system.flow_matrices(domain.t_start, domain.j_first)[0].shape[0]
    m = system.flow_matrices(domain.t_start, domain.j_first)[1].shape[1]
    if generator.L_c.shape[0] != m:
        raise DimensionError(f"generator provides {generator.L_c.shape[0]} inputs, system expects {m}")
    x0 = np.zeros(n) if x0 is None else as_vector(x0, "x0", size=n)
    S, J, L_c, L_d = generator.S, generator.J, generator.L_c, generator.L_d

    def flow(t, j, z):
        x, w = z[:n], z[n:]
        A, B = system.flow_matrices(t, j)
        return np.concatenate([A @ x + B @ (L_c @ w), S @ w])

    def jump(t, j, z):
        x, w = z[:n], z[n:]
        A, B = system.jump_matrices(t, j)
        return np.concatenate([A @ x + B @ (L_d @ w), J @ w])

    z = simulate_hybrid(domain, flow, jump, np.concatenate([x0, generator.omega0]), options)
    x = z.map(lambda t, j, v: v[:n], name="x")
    omega = z.map(lambda t, j, v: v[n:], name="omega")
    y = x.map(lambda t, j, v: system.output_matrix(t, j) @ v, name="y")
    return DirectRun(y, omega, x)


class SwappedRun(NamedTuple):
    varpi: HybridSignal
    x: HybridSignal
    y: HybridSignal


def simulate_interconnection_swapped(
    system, filt, domain, x0=None, varpi0=None, u_c=None, u_d=None, options=DEFAULT_OPTIONS
):
    """Filter driven by the plant output: ``eta_c = y`` in flows, ``eta_d = y`` (pre-jump) at jumps."""
    A0, B0 = system.flow_matrices(domain.t_start, domain.j_first)
    n, m = B0.shape
    p = system.output_matrix(domain.t_start, domain.j_first).shape[0]
    if filt.p != p:
        raise DimensionError(f"filter expects {filt.p} inputs, system has {p} outputs")
    x0 = np.zeros(n) if x0 is None else as_vector(x0, "x0", size=n)
    varpi0 = filt.varpi0 if varpi0 is None else as_vector(varpi0, "varpi0", size=filt.nu)
    if u_c is not None:
        u_first = np.linalg.norm(_eval_input(u_c, domain.t_start, domain.j_first, m))
        u_last = np.linalg.norm(_eval_input(u_c, domain.t_end, domain.j_last, m))
        if u_last > u_first:
            warnings.warn("swapped interconnection input is not decaying", RuntimeWarning, stacklevel=2)
    Q_c, Q_d, R_c, R_d = filt.Q_c, filt.Q_d, filt.R_c, filt.R_d

    def flow(t, j, z):
        x, v = z[:n], z[n:]
        A, B = system.flow_matrices(t, j)
        y = system.output_matrix(t, j) @ x
        return np.concatenate([A @ x + B @ _eval_input(u_c, t, j, m), Q_c @ v + R_c @ y])

    def jump(t, j, z):
        x, v = z[:n], z[n:]
        A, B = system.jump_matrices(t, j)
        y = system.output_matrix(t, j) @ x
        return np.concatenate([A @ x + B @ _eval_input(u_d, t, j, m), Q_d @ v + R_d @ y])

    z = simulate_hybrid(domain, flow, jump, np.concatenate([x0, varpi0]), options)
    x = z.map(lambda t, j, v: v[:n], name="x")
    varpi = z.map(lambda t, j, v: v[n:], name="varpi")
    y = x.map(lambda t, j, v: system.output_matrix(t, j) @ v, name="y")
    return SwappedRun(varpi, x, y)


# -- stability -----------------------------------------------------------------


@dataclass
class StabilityReport:
    """Outcome of the free-response exponential stability test."""

    stable: bool
    slope: Optional[float]
    slopes: list
    epsilon: float = EPS_STAB
    spectral_radius: Optional[float] = None

    def as_dict(self):
        return {
            "stable": self.stable,
            "slope": self.slope,
            "slopes": list(self.slopes),
            "epsilon": self.epsilon,
            "spectral_radius": self.spectral_radius,
        }


def check_exponential_stability(system, domain, basis=None, epsilon=EPS_STAB, options=DEFAULT_OPTIONS, period=None):
    """Fit ``log ||x(t)||`` of free responses and require slope ``< -epsilon``.

    ``basis`` defaults to the canonical basis of the state space. When
    ``period`` is given and the coefficients are constant, the spectral
    radius of the one-period monodromy ``A_d exp(A_c T)`` is reported too.
    """
    from .linalg import expm
    from .signal import log_slope

    A0, B0 = system.flow_matrices(domain.t_start, domain.j_first)
    n = A0.shape[0]
    basis = np.eye(n) if basis is None else np.atleast_2d(basis)

    slopes = []
    for x0 in basis:
        state, _ = simulate(system, domain, None, None, x0, options)
        slopes.append(log_slope(state))
    fitted = [s for s in slopes if s is not None]
    worst = max(fitted) if fitted else None
    rho = None
    if period is not None:
        Ad, _ = system.jump_matrices(domain.t_start, domain.j_first)
        rho = spectral_radius(Ad @ expm(A0, period))
    stable = worst is not None and worst < -epsilon
    return StabilityReport(stable, worst, slopes, epsilon, rho)
