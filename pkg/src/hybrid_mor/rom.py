"""Reduced-order models matching hybrid moments.

A reduced model has state ``xi`` of dimension ``nu`` and the same input
and output sizes as the plant::

    xi' = F_c xi + G_c u_c,   xi+ = F_d xi + G_d u_d,   psi = H xi

Any coefficient may be a constant array or a callable ``(t, j) -> array``.
Jump coefficients are evaluated at the pre-jump hybrid time ``(t_{j+1}, j)``,
so post-jump quantities such as ``Upsilon_hat+`` are looked up at ``j + 1``.
"""

import functools
from dataclasses import dataclass
from typing import Callable, Optional, Union

import numpy as np
from scipy.signal import place_poles

from .errors import AssumptionError, DimensionError, PreconditionError
from .hybrid_sim import (
    DEFAULT_OPTIONS,
    check_exponential_stability,
    simulate_hybrid,
)
from .hybrid_time import Periodic
from .linalg import expm, spectral_radius
from .signal import HybridSignal, Segment

__all__ = [
    "ReducedModel",
    "build_direct_rom",
    "build_swapped_rom",
    "build_two_sided_rom",
    "check_rom_stability",
    "moment_direct",
    "moment_swapped",
    "auxiliary_signal",
    "rom_pi_equation",
    "rom_upsilon_equation",
    "simulate_phi",
    "identity_deviation",
    "placement_gain",
    "periodic_direct_gains",
    "periodic_swapped_gain",
]

KINDS = ("direct", "swapped", "two_sided_i", "two_sided_ii")
COND_LIMIT = 1e10

Coefficient = Union[np.ndarray, Callable[[float, int], np.ndarray]]


def _value(coef, t, j):
    return coef(t, j) if callable(coef) else coef


@dataclass(frozen=True)
class ReducedModel:
    """Hybrid reduced-order model with possibly time-varying coefficients."""

    kind: str
    F_c: Coefficient
    F_d: Coefficient
    G_c: Coefficient
    G_d: Coefficient
    H: Coefficient
    nu: int
    m: int
    p: int
    domain: Optional[object] = None  # window on which time-varying parts are defined

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown reduced model kind {self.kind!r}")
        for name in ("F_c", "F_d", "G_c", "G_d", "H"):
            coef = getattr(self, name)
            if not callable(coef):
                object.__setattr__(self, name, np.atleast_2d(np.asarray(coef, dtype=float)))
        t0 = self.domain.t_start if self.domain is not None else 0.0
        j0 = self.domain.j_first if self.domain is not None else 0
        expected = {
            "F_c": (self.nu, self.nu),
            "G_c": (self.nu, self.m),
            "H": (self.p, self.nu),
        }
        for name, shape in expected.items():
            got = np.shape(_value(getattr(self, name), t0, j0))
            if got != shape:
                raise DimensionError(f"{name} has shape {got}, expected {shape}")

    @property
    def is_constant(self):
        return not any(callable(getattr(self, k)) for k in ("F_c", "F_d", "G_c", "G_d", "H"))

    def flow_matrices(self, t, j):
        return _value(self.F_c, t, j), _value(self.G_c, t, j)

    def jump_matrices(self, t, j):
        return _value(self.F_d, t, j), _value(self.G_d, t, j)

    def output_matrix(self, t, j):
        return _value(self.H, t, j)

    def describe(self):
        """Constant parts as plain lists, time-varying ones marked as such."""
        out = {"kind": self.kind, "nu": self.nu, "m": self.m, "p": self.p}
        for k in ("F_c", "F_d", "G_c", "G_d", "H"):
            coef = getattr(self, k)
            out[k] = "time-varying" if callable(coef) else np.asarray(coef).tolist()
        return out


def _cached(fn):
    return functools.lru_cache(maxsize=4096)(fn)


# -- builders ---------------------------------------------------------------------


def build_direct_rom(generator, Pi_hat, system_C, G_c, G_d):
    """ROM matching the direct moment ``C Pi_hat``.

    Flow ``(S - G_c L_c)``, jump ``(J - G_d L_d)``, output ``C Pi_hat(t, j)``.
    Gains may be constant or callables ``(t, j)``.
    """
    C = np.atleast_2d(np.asarray(system_C, dtype=float))
    S, J, L_c, L_d = generator.S, generator.J, generator.L_c, generator.L_d
    nu, m = generator.nu, L_c.shape[0]
    if C.shape[1] != Pi_hat.shape[0]:
        raise DimensionError(f"C has {C.shape[1]} columns, Pi_hat has {Pi_hat.shape[0]} rows")

    def lift(coef, base, L):
        if callable(coef):
            return lambda t, j: base - coef(t, j) @ L
        coef = np.atleast_2d(np.asarray(coef, dtype=float))
        if coef.shape != (nu, m):
            raise DimensionError(f"gain has shape {coef.shape}, expected {(nu, m)}")
        return base - coef @ L

    F_c = lift(G_c, S, L_c)
    F_d = lift(G_d, J, L_d)

    @_cached
    def H(t, j):
        return C @ Pi_hat.at(t, j)

    return ReducedModel("direct", F_c, F_d, G_c, G_d, H, nu, m, C.shape[0], Pi_hat.domain)


def build_swapped_rom(filt, Upsilon_hat, system_B, H):
    """ROM matching the swapped moment ``(Upsilon_hat B_c, Upsilon_hat+ B_d)``.

    ``system_B`` is the pair ``(B_c, B_d)`` and ``H`` a constant ``p x nu`` gain.
    """
    B_c, B_d = (np.atleast_2d(np.asarray(b, dtype=float)) for b in system_B)
    H = np.atleast_2d(np.asarray(H, dtype=float))
    nu, p = filt.nu, filt.p
    if H.shape != (p, nu):
        raise DimensionError(f"H has shape {H.shape}, expected {(p, nu)}")
    F_c = filt.Q_c - filt.R_c @ H
    F_d = filt.Q_d - filt.R_d @ H
    if np.linalg.matrix_rank(F_d) < nu:
        raise PreconditionError("Q_d - R_d H must be invertible")

    @_cached
    def G_c(t, j):
        return Upsilon_hat.at(t, j) @ B_c

    @_cached
    def G_d(t, j):
        return Upsilon_hat.at(t, j + 1) @ B_d

    return ReducedModel("swapped", F_c, F_d, G_c, G_d, H, nu, B_c.shape[1], p, Upsilon_hat.domain)


def _check_same_domain(Pi_hat, Upsilon_hat):
    a, b = Pi_hat.domain, Upsilon_hat.domain
    if (
        a.j_first != b.j_first
        or len(a.intervals) != len(b.intervals)
        or not np.allclose([a.t_start, a.t_end], [b.t_start, b.t_end])
        or not np.allclose(a.jumps, b.jumps)
    ):
        raise DimensionError("Pi_hat and Upsilon_hat must live on the same hybrid time domain")


def _det_root(fn, j, a, b, iters=60):
    """Bisect a sign change of ``det fn(t, j)`` on ``[a, b]``."""
    da = np.linalg.det(fn(a, j))
    for _ in range(iters):
        mid = 0.5 * (a + b)
        dm = np.linalg.det(fn(mid, j))
        if np.sign(dm) == np.sign(da):
            a, da = mid, dm
        else:
            b = mid
    return 0.5 * (a + b)


def _worst_condition(fn, domain, min_points=50, max_step=0.05):
    """Largest condition number of ``fn`` over the sampling grid.

    A sign change of the determinant between neighbouring samples means the
    matrix is singular in between; that point is located and reported with
    an infinite condition number.
    """
    worst = (0.0, None, None)
    for iv in domain.intervals:
        prev = None
        for t in domain.grid(iv, min_points, max_step):
            X = fn(t, iv.j)
            c = np.linalg.cond(X)
            if not np.isfinite(c) or c > worst[0]:
                worst = (c if np.isfinite(c) else np.inf, float(t), iv.j)
            det = np.linalg.det(X)
            if prev is not None and np.sign(det) != np.sign(prev[1]) and det != 0:
                return (np.inf, float(_det_root(fn, iv.j, prev[0], t)), iv.j)
            prev = (t, det)
    return worst


def build_two_sided_rom(variant, system, generator, filt, Pi_hat, Upsilon_hat, cond_limit=COND_LIMIT):
    """ROM matching both moments through ``Phi = Upsilon_hat Pi_hat``.

    variant ``"i"``
        Direct form with ``G_c = Phi^{-1} Upsilon_hat B_c`` and
        ``G_d = (Phi+)^{-1} Upsilon_hat+ B_d``.
    variant ``"ii"``
        Swapped form with ``H = C Pi_hat Phi^{-1}``.

    Raises
    ------
    AssumptionError
        ``Phi`` is ill conditioned (``cond > cond_limit``) at some sample, or
        the variant's jump matrix is singular at some jump.
    """
    if variant not in ("i", "ii"):
        raise ValueError(f"variant must be 'i' or 'ii', got {variant!r}")
    _check_same_domain(Pi_hat, Upsilon_hat)
    domain = Pi_hat.domain
    S, J, L_c, L_d = generator.S, generator.J, generator.L_c, generator.L_d
    Q_c, Q_d, R_c, R_d = filt.Q_c, filt.Q_d, filt.R_c, filt.R_d
    C, B_c, B_d = system.C, system.B_c, system.B_d
    nu, m, p = generator.nu, system.m, system.p
    if filt.nu != nu:
        raise DimensionError(f"generator order {nu} and filter order {filt.nu} differ")

    @_cached
    def Phi(t, j):
        return Upsilon_hat.at(t, j) @ Pi_hat.at(t, j)

    cond, t_bad, j_bad = _worst_condition(Phi, domain)
    if cond > cond_limit:
        raise AssumptionError(
            "two-sided-invertibility",
            f"Upsilon_hat Pi_hat has condition number {cond:.3g} at (t={t_bad}, j={j_bad})",
        )

    if variant == "i":

        @_cached
        def G_c(t, j):
            return np.linalg.solve(Phi(t, j), Upsilon_hat.at(t, j) @ B_c)

        @_cached
        def G_d(t, j):
            return np.linalg.solve(Phi(t, j + 1), Upsilon_hat.at(t, j + 1) @ B_d)

        def F_c(t, j):
            return S - G_c(t, j) @ L_c

        def F_d(t, j):
            return J - G_d(t, j) @ L_d

        @_cached
        def H(t, j):
            return C @ Pi_hat.at(t, j)

        kind = "two_sided_i"
    else:

        @_cached
        def H(t, j):
            return np.linalg.solve(Phi(t, j).T, (C @ Pi_hat.at(t, j)).T).T

        def F_c(t, j):
            return Q_c - R_c @ H(t, j)

        def F_d(t, j):
            return Q_d - R_d @ H(t, j)

        @_cached
        def G_c(t, j):
            return Upsilon_hat.at(t, j) @ B_c

        @_cached
        def G_d(t, j):
            return Upsilon_hat.at(t, j + 1) @ B_d

        kind = "two_sided_ii"

    for iv in domain.intervals[:-1]:
        c = np.linalg.cond(F_d(iv.end, iv.j))
        if not np.isfinite(c) or c > cond_limit:
            raise AssumptionError(
                "two-sided-invertibility",
                f"reduced jump matrix is singular at the jump t={iv.end} (j={iv.j} -> {iv.j + 1})",
            )
    return ReducedModel(kind, F_c, F_d, G_c, G_d, H, nu, m, p, domain)


# -- analysis -------------------------------------------------------------------------


def check_rom_stability(rom, domain, basis=None, epsilon=1e-3, options=DEFAULT_OPTIONS):
    """Free-response stability report; adds ``rho(F_d e^{F_c T})`` for constant periodic models."""
    period = None
    if rom.is_constant and isinstance(domain.rule, Periodic):
        period = float(domain.rule.period)
    return check_exponential_stability(rom, domain, basis, epsilon, options, period)


def moment_direct(Pi_hat, C, min_points=50, max_step=0.02):
    """``C Pi_hat(t, j)`` sampled on the domain of ``Pi_hat``."""
    C = np.atleast_2d(np.asarray(C, dtype=float))
    if C.shape[1] != Pi_hat.shape[0]:
        raise DimensionError(f"C has {C.shape[1]} columns, Pi_hat has {Pi_hat.shape[0]} rows")
    return Pi_hat.signal(min_points, max_step).map(lambda t, j, X: C @ X, name="CPi")


def moment_swapped(Upsilon_hat, B_c, B_d, min_points=50, max_step=0.02):
    """``(Upsilon_hat B_c, Upsilon_hat B_d)`` sampled on the domain of ``Upsilon_hat``.

    The jump-side moment ``Upsilon_hat+ B_d`` at the jump closing interval
    ``j`` is the first sample of segment ``j + 1`` of the second signal.
    """
    B_c = np.atleast_2d(np.asarray(B_c, dtype=float))
    B_d = np.atleast_2d(np.asarray(B_d, dtype=float))
    n = Upsilon_hat.shape[1]
    if B_c.shape[0] != n or B_d.shape[0] != n:
        raise DimensionError(f"input matrices need {n} rows")
    sig = Upsilon_hat.signal(min_points, max_step)
    return sig.map(lambda t, j, U: U @ B_c, name="UBc"), sig.map(lambda t, j, U: U @ B_d, name="UBd")


def auxiliary_signal(Upsilon_hat, filt, system, domain, u_c, u_d, options=DEFAULT_OPTIONS):
    """``d' = Q_c d + Upsilon_hat B_c u_c``, ``d+ = Q_d d + Upsilon_hat+ B_d u_d``, ``d(0) = 0``."""
    Q_c, Q_d = filt.Q_c, filt.Q_d
    B_c, B_d = system.B_c, system.B_d
    m = B_c.shape[1]

    def u(fn, t):
        return np.zeros(m) if fn is None else np.asarray(fn(t), dtype=float).reshape(-1)

    def flow(t, j, d):
        return Q_c @ d + Upsilon_hat.at(t, j) @ B_c @ u(u_c, t)

    def jump(t, j, d):
        return Q_d @ d + Upsilon_hat.at(t, j + 1) @ B_d @ u(u_d, t)

    return simulate_hybrid(domain, flow, jump, np.zeros(filt.nu), options, name="d")


def _matrix_ode(domain, flow, jump, X0, options, name):
    shape = np.shape(X0)
    sig = simulate_hybrid(
        domain,
        lambda t, j, z: flow(t, j, z.reshape(shape)).ravel(),
        lambda t, j, z: jump(t, j, z.reshape(shape)).ravel(),
        np.asarray(X0, dtype=float).ravel(),
        options,
        name,
    )
    return sig.map(lambda t, j, v: v.reshape(shape), name=name)


def rom_pi_equation(rom, generator, domain, P0, options=DEFAULT_OPTIONS):
    """Integrate the reduced model's own direct equation.

    ``P' = F_c P - P S + G_c L_c`` and ``P+ J = F_d P + G_d L_d``.
    """
    S, J, L_c, L_d = generator.S, generator.J, generator.L_c, generator.L_d

    def flow(t, j, P):
        F, G = rom.flow_matrices(t, j)
        return F @ P - P @ S + G @ L_c

    def jump(t, j, P):
        F, G = rom.jump_matrices(t, j)
        return np.linalg.solve(J.T, (F @ P + G @ L_d).T).T

    return _matrix_ode(domain, flow, jump, P0, options, "P")


def _matrix_ode_backward(domain, flow, jump_inverse, X_end, options, name):
    """Integrate a matrix hybrid ODE backward from ``X(t_end) = X_end``.

    ``flow(t, j, X)`` is the forward-time vector field and
    ``jump_inverse(t, j, X_post)`` returns the pre-jump value at ``(t, j)``.
    The result is returned in forward time.
    """
    shape = np.shape(X_end)
    mirrored = domain.reversed()
    offset = domain.j_last  # mirrored interval k holds original j = offset - k
    sig = simulate_hybrid(
        mirrored,
        lambda s, k, z: -flow(-s, offset - k, z.reshape(shape)).ravel(),
        lambda s, k, z: jump_inverse(-s, offset - k - 1, z.reshape(shape)).ravel(),
        np.asarray(X_end, dtype=float).ravel(),
        options,
        name,
    )
    segs = [
        Segment(offset - seg.j, -seg.t[::-1], seg.values[::-1].reshape((seg.t.size, *shape)))
        for seg in reversed(sig.segments)
    ]
    return HybridSignal(segs, name)


def rom_upsilon_equation(rom, filt, domain, Y_end, options=DEFAULT_OPTIONS):
    """Integrate the reduced model's own swapped equation backward from ``Y(t_end) = Y_end``.

    ``Y' = Q_c Y - R_c H - Y F_c`` and ``Y+ F_d = Q_d Y - R_d H``. Like every
    equation of this type its steady state attracts backward in time, hence
    the direction.
    """
    Q_c, Q_d, R_c, R_d = filt.Q_c, filt.Q_d, filt.R_c, filt.R_d

    def flow(t, j, Y):
        F, _ = rom.flow_matrices(t, j)
        return Q_c @ Y - R_c @ rom.output_matrix(t, j) - Y @ F

    def jump_inverse(t, j, Y_post):
        F, _ = rom.jump_matrices(t, j)
        return np.linalg.solve(Q_d, Y_post @ F + R_d @ rom.output_matrix(t, j))

    return _matrix_ode_backward(domain, flow, jump_inverse, Y_end, options, "Y")


def simulate_phi(system, generator, filt, Pi_hat, Upsilon_hat, domain, Phi0=None, options=DEFAULT_OPTIONS):
    """Integrate the cross equation satisfied by ``Phi = Upsilon_hat Pi_hat``.

    Flow ``Phi' = Q_c Phi - R_c C Pi_hat - Phi S + Upsilon_hat B_c L_c`` and
    jump ``Phi+ J = Q_d Phi + Upsilon_hat+ B_d L_d - R_d C Pi_hat``.
    """
    S, J, L_c, L_d = generator.S, generator.J, generator.L_c, generator.L_d
    Q_c, Q_d, R_c, R_d = filt.Q_c, filt.Q_d, filt.R_c, filt.R_d
    C, B_c, B_d = system.C, system.B_c, system.B_d
    if Phi0 is None:
        Phi0 = Upsilon_hat.at(domain.t_start, domain.j_first) @ Pi_hat.at(domain.t_start, domain.j_first)

    def flow(t, j, Phi):
        return Q_c @ Phi - R_c @ C @ Pi_hat.at(t, j) - Phi @ S + Upsilon_hat.at(t, j) @ B_c @ L_c

    def jump(t, j, Phi):
        rhs = Q_d @ Phi + Upsilon_hat.at(t, j + 1) @ B_d @ L_d - R_d @ C @ Pi_hat.at(t, j)
        return np.linalg.solve(J.T, rhs.T).T

    return _matrix_ode(domain, flow, jump, Phi0, options, "Phi")


def identity_deviation(signal, reference):
    """Largest entrywise gap between a sampled matrix signal and ``reference``.

    ``reference`` is a constant array or a callable ``(t, j)``.
    """
    worst = 0.0
    for seg in signal.segments:
        for t, X in zip(seg.t, seg.values):
            ref = reference(t, seg.j) if callable(reference) else reference
            worst = max(worst, float(np.max(np.abs(X - ref))))
    return worst


# -- gain helpers (periodic jumps only) ---------------------------------------------------


def placement_gain(A, B, poles):
    """``K`` with ``eig(A - B K) = poles`` (scipy pole placement)."""
    A = np.atleast_2d(np.asarray(A, dtype=float))
    B = np.atleast_2d(np.asarray(B, dtype=float))
    return place_poles(A, B, np.asarray(poles, dtype=float)).gain_matrix


def _default_poles(size, base):
    return [-base * (1.0 + 0.5 * k) for k in range(size)]


def periodic_direct_gains(generator, T, base=1.0, attempts=6):
    """Constant ``(G_c, G_d)`` making the direct ROM stable under period-``T`` jumps.

    ``G_d = 0`` and ``G_c`` places ``S - G_c L_c`` at negative real poles,
    scaled up until ``rho(J e^{(S - G_c L_c) T}) < 1``.
    """
    S, J, L_c = generator.S, generator.J, generator.L_c
    nu, m = generator.nu, L_c.shape[0]
    for k in range(attempts):
        K = placement_gain(S.T, L_c.T, _default_poles(nu, base * 2.0 ** k))
        G_c = K.T
        rho = spectral_radius(J @ expm(S - G_c @ L_c, T))
        if rho < 1.0:
            return G_c, np.zeros((nu, m))
    raise PreconditionError(f"no stabilizing direct gain found (last spectral radius {rho:.3g})")


def periodic_swapped_gain(filt, T, base=1.0, attempts=6):
    """Constant ``H`` with ``rho((Q_d - R_d H) e^{(Q_c - R_c H) T}) < 1``."""
    Q_c, Q_d, R_c, R_d = filt.Q_c, filt.Q_d, filt.R_c, filt.R_d
    for k in range(attempts):
        H = placement_gain(Q_c, R_c, _default_poles(filt.nu, base * 2.0 ** k))
        F_d = Q_d - R_d @ H
        if np.linalg.matrix_rank(F_d) < filt.nu:
            continue
        rho = spectral_radius(F_d @ expm(Q_c - R_c @ H, T))
        if rho < 1.0:
            return H
    raise PreconditionError("no stabilizing swapped gain found")
