"""Steady-state solutions of the hybrid Pi- and Upsilon-equations.

The direct (Pi) equation pairs a plant with a signal generator::

    dPi/dt = A_c Pi - Pi S + B_c L_c        during flows
    Pi+ J  = A_d Pi + B_d L_d               at jumps

and the swapped (Upsilon) equation pairs a filter with the plant::

    dU/dt = Q_c U - R_c C - U A_c           during flows
    U+ A_d = Q_d U - R_d C                  at jumps

Three independent routes are offered for each: a truncated boundary
series, attraction (forward for Pi, backward for Upsilon) and, for periodic
jumps, an exact algebraic Sylvester solve. All of them return a
:class:`MatrixSolution` whose flow between anchors is evaluated in closed
form.
"""

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import (
    ConvergenceError,
    PreconditionError,
    StabilityError,
    WarmupTooShortError,
)
from .hybrid_sim import DEFAULT_OPTIONS, simulate_hybrid
from .hybrid_time import HybridTimeDomain, Periodic
from .linalg import expm, flow_integral, solve_sylvester, spectral_radius, sylvester_flow
from .signal import HybridSignal, Segment

__all__ = [
    "MatrixSolution",
    "PiSolution",
    "UpsilonSolution",
    "pi_flow_closed_form",
    "pi_jump",
    "upsilon_flow_closed_form",
    "upsilon_jump_inverse",
    "pi_boundary_series",
    "upsilon_boundary_series",
    "pi_series_solution",
    "upsilon_series_solution",
    "steady_state_pi",
    "steady_state_upsilon",
    "periodic_pi",
    "periodic_upsilon",
    "periodic_pi_solution",
    "periodic_upsilon_solution",
]

TOL_ATTRACT = 1e-6
SERIES_REL_TOL = 1e-10
SERIES_MAX_TERMS = 200
SERIES_MIN_TERMS = 10
UNIT_CIRCLE_TOL = 1e-6


# -- coefficient bundles -------------------------------------------------------


def _pi_coefficients(system, generator):
    return system.A_c, generator.S, system.B_c @ generator.L_c


def _upsilon_coefficients(system, filt):
    return filt.Q_c, system.A_c, -filt.R_c @ system.C


@dataclass
class MatrixSolution:
    """Matrix-valued hybrid trajectory ``X(t, j)`` known through anchors.

    ``anchors[k] = (t_a, X_a)`` pins the solution on interval ``k`` of
    ``domain``; any other point of that interval follows from the closed-form
    flow ``dX/dt = P X - X Q + K`` run forward or backward from ``t_a``.
    """

    domain: HybridTimeDomain
    anchors: list
    coefficients: tuple  # (P, Q, K)
    method: str
    info: dict = field(default_factory=dict)

    @property
    def shape(self):
        return self.anchors[0][1].shape

    def at(self, t, j):
        iv = self.domain.interval(j)
        slack = 1e-9 * max(1.0, abs(iv.end))
        if not iv.start - slack <= t <= iv.end + slack:
            raise ValueError(f"t={t} outside interval j={j} [{iv.start}, {iv.end}]")
        t_a, X_a = self.anchors[j - self.domain.j_first]
        P, Q, K = self.coefficients
        if t == t_a:
            return X_a.copy()
        return sylvester_flow(P, Q, K, X_a, t - t_a)

    def at_time(self, t):
        """Value at ``t`` on the interval reached by flowing (post-jump at instants)."""
        return self.at(t, self.domain.locate(t).j)

    @property
    def boundary_values(self):
        """Post-jump values ``X(t_j, j)`` for every interval that starts with a jump."""
        out = {}
        jumps = set(self.domain.jumps.tolist())
        for iv in self.domain.intervals:
            if iv.start in jumps:
                out[iv.j] = self.at(iv.start, iv.j)
        return out

    def pre_jump_values(self):
        """Values ``X(t_{j+1}, j)`` just before every jump in the window."""
        return {iv.j: self.at(iv.end, iv.j) for iv in self.domain.intervals[:-1]}

    def signal(self, min_points=50, max_step=0.02, name="X"):
        segs = []
        for iv in self.domain.intervals:
            grid = self.domain.grid(iv, min_points, max_step)
            segs.append(Segment(iv.j, grid, np.array([self.at(t, iv.j) for t in grid])))
        return HybridSignal(segs, name)

    def restrict(self, t_start, t_end=None):
        """Same trajectory on a sub-window."""
        sub = self.domain.restrict(t_start, t_end)
        anchors = []
        for iv in sub.intervals:
            t_a = min(max(self.anchors[iv.j - self.domain.j_first][0], iv.start), iv.end)
            anchors.append((t_a, self.at(t_a, iv.j)))
        return type(self)(sub, anchors, self.coefficients, self.method, dict(self.info))

    def max_difference(self, other):
        """Largest entrywise gap at interval endpoints shared by both solutions."""
        worst = 0.0
        for iv in self.domain.intervals:
            for t in (iv.start, iv.end):
                worst = max(worst, float(np.max(np.abs(self.at(t, iv.j) - other.at(t, iv.j)))))
        return worst


class PiSolution(MatrixSolution):
    """Steady-state solution of the direct (Pi) equation, ``n x nu`` samples."""

    def jump_residual(self, system, generator):
        worst = 0.0
        for iv in self.domain.intervals[:-1]:
            pre = self.at(iv.end, iv.j)
            post = self.at(iv.end, iv.j + 1)
            res = post @ generator.J - system.A_d @ pre - system.B_d @ generator.L_d
            worst = max(worst, float(np.max(np.abs(res))))
        return worst


class UpsilonSolution(MatrixSolution):
    """Steady-state solution of the swapped (Upsilon) equation, ``nu x n`` samples."""

    def jump_residual(self, system, filt):
        worst = 0.0
        for iv in self.domain.intervals[:-1]:
            pre = self.at(iv.end, iv.j)
            post = self.at(iv.end, iv.j + 1)
            res = post @ system.A_d - filt.Q_d @ pre + filt.R_d @ system.C
            worst = max(worst, float(np.max(np.abs(res))))
        return worst


# -- single-step maps ------------------------------------------------------------


def pi_flow_closed_form(Pi_j, system, generator, t, t_j, t_next=None):
    """Flow the Pi-equation from ``Pi(t_j) = Pi_j`` to ``t``.

    The convolution integral comes from one exponential of the block matrix
    ``[[A_c, B_c L_c], [0, S]]``.
    """
    if t < t_j or (t_next is not None and t > t_next):
        raise ValueError(f"t={t} outside interval [{t_j}, {t_next}]")
    P, Q, K = _pi_coefficients(system, generator)
    if t == t_j:
        return np.array(Pi_j, dtype=float)
    return sylvester_flow(P, Q, K, np.asarray(Pi_j, dtype=float), t - t_j)


def pi_jump(Pi_pre, system, generator):
    """``Pi+ = (A_d Pi + B_d L_d) J^{-1}``, by a linear solve with ``J``."""
    rhs = system.A_d @ Pi_pre + system.B_d @ generator.L_d
    try:
        return np.linalg.solve(generator.J.T, rhs.T).T
    except np.linalg.LinAlgError as exc:
        raise PreconditionError("generator jump matrix J is singular") from exc


def upsilon_flow_closed_form(U_a, system, filt, t, t_a):
    """Flow the Upsilon-equation from ``U(t_a) = U_a`` to ``t`` (either direction)."""
    P, Q, K = _upsilon_coefficients(system, filt)
    if t == t_a:
        return np.array(U_a, dtype=float)
    return sylvester_flow(P, Q, K, np.asarray(U_a, dtype=float), t - t_a)


def upsilon_jump_inverse(U_post, system, filt):
    """Pre-jump value ``Q_d^{-1} (U+ A_d + R_d C)`` from the post-jump one."""
    rhs = U_post @ system.A_d + filt.R_d @ system.C
    try:
        return np.linalg.solve(filt.Q_d, rhs)
    except np.linalg.LinAlgError as exc:
        raise PreconditionError("filter jump matrix Q_d is singular") from exc


def upsilon_jump(U_pre, system, filt):
    """Post-jump value ``(Q_d U - R_d C) A_d^{-1}``; needs ``A_d`` invertible."""
    rhs = filt.Q_d @ U_pre - filt.R_d @ system.C
    try:
        return np.linalg.solve(system.A_d.T, rhs.T).T
    except np.linalg.LinAlgError as exc:
        raise PreconditionError("A_d is singular") from exc


# -- boundary series ---------------------------------------------------------------


def _pi_step(system, generator, delta):
    """``(F, G, M)`` with ``Pi_next = F Pi G + M`` over a flow of length ``delta`` plus a jump."""
    A_c, S, K = _pi_coefficients(system, generator)
    E, integral = flow_integral(A_c, K, S, delta)
    e_neg = expm(S, -delta)
    Jinv = np.linalg.inv(generator.J)
    F = system.A_d @ E
    G = e_neg @ Jinv
    M = (system.A_d @ integral @ e_neg + system.B_d @ generator.L_d) @ Jinv
    return F, G, M


def _upsilon_step(system, filt, delta):
    """``(G, F, N)`` with ``U_prev = G U F + N`` for a jump plus a backward flow of length ``delta``."""
    Q_c, A_c, K = _upsilon_coefficients(system, filt)
    Qdinv = np.linalg.inv(filt.Q_d)
    G = expm(Q_c, -delta) @ Qdinv
    F = system.A_d @ expm(A_c, delta)
    N = sylvester_flow(Q_c, A_c, K, Qdinv @ filt.R_d @ system.C, -delta)
    return G, F, N


def _check_decay(norms, n_min):
    k = len(norms) - 1
    if k >= n_min and norms[k] > 0 and norms[k] >= norms[k - n_min]:
        raise StabilityError(
            f"boundary series terms are not decaying (term {k}: {norms[k]:.3g} "
            f">= term {k - n_min}: {norms[k - n_min]:.3g}); the plant is not exponentially "
            "stable on this domain"
        )


def _full_intervals(domain):
    jumps = set(domain.instants.tolist())
    return {iv.j: iv for iv in domain.intervals if iv.start in jumps and iv.end in jumps}


def pi_boundary_series(
    system, generator, domain, j, n_trunc=None, rel_tol=SERIES_REL_TOL,
    max_terms=SERIES_MAX_TERMS, n_min=SERIES_MIN_TERMS, return_terms=False,
):
    """Truncated series for the post-jump value ``Pi_hat(t_j, j)``.

    Summation runs backward over the jumps ``t_j, t_{j-1}, ...``. With
    ``n_trunc=None`` terms are added until one falls below
    ``rel_tol * ||partial sum||`` (at most ``max_terms``).

    Raises
    ------
    PreconditionError
        The domain does not reach far enough into the past.
    StabilityError
        Terms stop decaying, i.e. the plant is not exponentially stable.
    """
    full = _full_intervals(domain)
    n, nu = system.n, generator.nu
    total = np.zeros((n, nu))
    left, right = np.eye(n), np.eye(nu)
    norms = []
    limit = n_trunc if n_trunc is not None else max_terms
    if limit < 1:
        raise ValueError("n_trunc must be at least 1")
    i = j
    while len(norms) < limit:
        iv = full.get(i - 1)
        if iv is None:
            if n_trunc is None and norms and norms[-1] <= rel_tol * np.linalg.norm(total):
                break
            raise PreconditionError(
                f"domain does not extend {limit} jumps before t_{j} (stopped at j={i})"
            )
        F, G, M = _pi_step(system, generator, iv.length)
        term = left @ M @ right
        total = total + term
        norms.append(float(np.linalg.norm(term)))
        _check_decay(norms, n_min)
        left, right = left @ F, G @ right
        i -= 1
        if n_trunc is None and norms[-1] <= rel_tol * np.linalg.norm(total):
            break
    if n_trunc is None and norms[-1] > rel_tol * max(np.linalg.norm(total), 1e-300) and len(norms) >= max_terms:
        raise ConvergenceError(f"series did not converge in {max_terms} terms")
    return (total, len(norms)) if return_terms else total


def upsilon_boundary_series(
    system, filt, domain, j, n_trunc=None, rel_tol=SERIES_REL_TOL,
    max_terms=SERIES_MAX_TERMS, n_min=SERIES_MIN_TERMS, return_terms=False,
):
    """Truncated series for the post-jump value ``Upsilon_hat(t_j, j)``.

    Summation runs forward over the intervals ``j, j+1, ...``; every one of
    them must be bounded by jumps on both sides.
    """
    if not system.invertible_Ad:
        raise PreconditionError("the Upsilon series needs an invertible A_d")
    full = _full_intervals(domain)
    nu, n = filt.nu, system.n
    total = np.zeros((nu, n))
    left, right = np.eye(nu), np.eye(n)
    norms = []
    limit = n_trunc if n_trunc is not None else max_terms
    if limit < 1:
        raise ValueError("n_trunc must be at least 1")
    i = j
    while len(norms) < limit:
        iv = full.get(i)
        if iv is None:
            if n_trunc is None and norms and norms[-1] <= rel_tol * np.linalg.norm(total):
                break
            raise PreconditionError(
                f"domain does not extend {limit} jumps after t_{j} (stopped at j={i})"
            )
        G, F, N = _upsilon_step(system, filt, iv.length)
        term = left @ N @ right
        total = total + term
        norms.append(float(np.linalg.norm(term)))
        _check_decay(norms, n_min)
        left, right = left @ G, F @ right
        i += 1
        if n_trunc is None and norms[-1] <= rel_tol * np.linalg.norm(total):
            break
    if n_trunc is None and norms[-1] > rel_tol * max(np.linalg.norm(total), 1e-300) and len(norms) >= max_terms:
        raise ConvergenceError(f"series did not converge in {max_terms} terms")
    return (total, len(norms)) if return_terms else total


# -- propagation helpers -------------------------------------------------------------


def _propagate_pi_forward(system, generator, domain, t0, X0, t_report):
    """Closed-form forward pass from ``(t0, X0)``; anchors for ``domain.restrict(*t_report)``."""
    report = domain.restrict(*t_report)
    k0 = domain.locate(t0).j - domain.j_first
    t, X = t0, np.array(X0, dtype=float)
    anchors = {}
    for iv in domain.intervals[k0:]:
        if iv.start > report.t_end:
            break
        if iv.j >= report.j_first and iv.end >= report.t_start:
            t_a = max(report.t_start, t)
            anchors[iv.j] = (t_a, pi_flow_closed_form(X, system, generator, t_a, t))
        if iv.end >= report.t_end or iv is domain.intervals[-1]:
            break
        X = pi_jump(pi_flow_closed_form(X, system, generator, iv.end, t), system, generator)
        t = iv.end
    return report, [anchors[iv.j] for iv in report.intervals]


def _propagate_upsilon_backward(system, filt, domain, t0, X0, t_report):
    """Closed-form backward pass from ``(t0, X0)``; anchors for the report window."""
    report = domain.restrict(*t_report)
    k0 = domain.locate(t0).j - domain.j_first
    t, X = t0, np.array(X0, dtype=float)
    anchors = {}
    for iv in reversed(domain.intervals[: k0 + 1]):
        if iv.end < report.t_start:
            break
        if iv.j <= report.j_last and iv.start <= report.t_end:
            t_a = min(report.t_end, t)
            anchors[iv.j] = (t_a, upsilon_flow_closed_form(X, system, filt, t_a, t))
        if iv.start <= report.t_start or iv is domain.intervals[0]:
            break
        X = upsilon_jump_inverse(upsilon_flow_closed_form(X, system, filt, iv.start, t), system, filt)
        t = iv.start
    return report, [anchors[iv.j] for iv in report.intervals]


def _report_window(domain, t_report):
    if t_report is None:
        return (max(domain.t_start, 0.0), domain.t_end)
    t0, t1 = t_report
    return (float(t0), float(domain.t_end if t1 is None else t1))


def pi_series_solution(system, generator, domain, t_report=None, n_trunc=None):
    """Pi_hat on ``t_report`` from the boundary series at the last jump before the window."""
    window = _report_window(domain, t_report)
    first = domain.locate(window[0])
    if first.start not in set(domain.jumps.tolist()):
        raise PreconditionError("the domain needs jumps before the report window for the series route")
    X0, terms = pi_boundary_series(system, generator, domain, first.j, n_trunc, return_terms=True)
    report, anchors = _propagate_pi_forward(system, generator, domain, first.start, X0, window)
    info = {"n_trunc": terms, "series_index": first.j}
    return PiSolution(report, anchors, _pi_coefficients(system, generator), f"series({terms})", info)


def upsilon_series_solution(system, filt, domain, t_report=None, n_trunc=None):
    """Upsilon_hat on ``t_report`` from the boundary series at the first jump after the window."""
    window = _report_window(domain, t_report)
    last = domain.locate(window[1])
    nxt = last.j if last.start == window[1] and last.start in set(domain.jumps.tolist()) else last.j + 1
    try:
        iv_next = domain.interval(nxt)
    except IndexError as exc:
        raise PreconditionError("the domain needs jumps after the report window for the series route") from exc
    X0, terms = upsilon_boundary_series(system, filt, domain, nxt, n_trunc, return_terms=True)
    report, anchors = _propagate_upsilon_backward(system, filt, domain, iv_next.start, X0, window)
    info = {"n_trunc": terms, "series_index": nxt}
    return UpsilonSolution(report, anchors, _upsilon_coefficients(system, filt), f"series({terms})", info)


# -- attraction routes ------------------------------------------------------------------


def _random_matrix(rng, shape):
    return rng.uniform(-1.0, 1.0, size=shape)


def _ode_pi_pass(system, generator, domain, t0, X0, t_report, options):
    """Forward pass integrating the Pi-equation numerically (cross-check route)."""
    sub = domain.restrict(t0, t_report[1])
    n, nu = X0.shape
    A_c, S, K = _pi_coefficients(system, generator)

    def flow(t, j, z):
        X = z.reshape(n, nu)
        return (A_c @ X - X @ S + K).ravel()

    def jump(t, j, z):
        return pi_jump(z.reshape(n, nu), system, generator).ravel()

    sig = simulate_hybrid(sub, flow, jump, X0.ravel(), options, name="Pi")
    report = domain.restrict(*t_report)
    anchors = []
    for iv in report.intervals:
        seg = sig.segment(iv.j)  # exact integrator node, no interpolation
        anchors.append((float(seg.t[0]), seg.values[0].reshape(n, nu)))
    return report, anchors


def _ode_upsilon_pass(system, filt, domain, t0, X0, t_report, options):
    """Backward pass integrating the Upsilon-equation numerically in reversed time."""
    sub = domain.restrict(t_report[0], t0)
    mirrored = sub.reversed()
    nu, n = X0.shape
    Q_c, A_c, K = _upsilon_coefficients(system, filt)
    offset = sub.j_last  # mirrored interval k <-> original j = offset - k

    def flow(s, k, z):
        X = z.reshape(nu, n)
        return -(Q_c @ X - X @ A_c + K).ravel()

    def jump(s, k, z):
        return upsilon_jump_inverse(z.reshape(nu, n), system, filt).ravel()

    sig = simulate_hybrid(mirrored, flow, jump, X0.ravel(), options, name="Upsilon")
    report = domain.restrict(*t_report)
    anchors = []
    for iv in report.intervals:
        seg = sig.segment(offset - iv.j)
        anchors.append((-float(seg.t[0]), seg.values[0].reshape(nu, n)))
    return report, anchors


def _discrepancy(anchors_a, anchors_b):
    return max(float(np.max(np.abs(a[1] - b[1]))) for a, b in zip(anchors_a, anchors_b))


def steady_state_pi(
    system, generator, domain, warmup=10.0, t_report=None, Pi_init=None, seed=42,
    tol_attract=TOL_ATTRACT, max_doublings=3, integrator="closed_form", options=DEFAULT_OPTIONS,
):
    """Pi_hat by forward attraction from ``t = t_report[0] - warmup``.

    Two passes are run, from ``Pi_init`` (random when omitted) and from a
    second random initial value; both use a generator seeded with ``seed``.
    If they disagree by more than ``tol_attract`` anywhere on the report
    window the warmup is doubled, at most ``max_doublings`` times.

    Raises
    ------
    WarmupTooShortError
        The passes still disagree after the last doubling, or the domain
        does not reach back far enough.
    """
    window = _report_window(domain, t_report)
    n, nu = system.n, generator.nu
    rng = np.random.default_rng(seed)
    first = _random_matrix(rng, (n, nu)) if Pi_init is None else np.asarray(Pi_init, dtype=float).reshape(n, nu)
    second = _random_matrix(rng, (n, nu))
    init_gap = float(np.max(np.abs(first - second)))

    def one_pass(t0, X0):
        if integrator == "closed_form":
            return _propagate_pi_forward(system, generator, domain, t0, X0, window)
        if integrator == "ode":
            return _ode_pi_pass(system, generator, domain, t0, X0, window, options)
        raise ValueError(f"unknown integrator {integrator!r}")

    w = float(warmup)
    for attempt in range(max_doublings + 1):
        t0 = window[0] - w
        if t0 < domain.t_start - 1e-12:
            raise WarmupTooShortError(
                f"warmup {w} reaches t={t0}, before the domain start {domain.t_start}"
            )
        report, anchors = one_pass(t0, first)
        _, other = one_pass(t0, second)
        gap = _discrepancy(anchors, other)
        contraction = gap / init_gap if init_gap > 0 else 0.0
        if gap <= tol_attract:
            info = {"warmup": w, "doublings": attempt, "discrepancy": gap, "contraction": contraction}
            return PiSolution(report, anchors, _pi_coefficients(system, generator), f"forward_attraction({w:g})", info)
        if attempt < max_doublings:
            w *= 2.0
    raise WarmupTooShortError(
        f"forward attraction did not forget its initial value: discrepancy {gap:.3g} > "
        f"{tol_attract:.3g} with warmup {w} (contraction {contraction:.3g})",
        discrepancy=gap,
        contraction=contraction,
    )


def steady_state_upsilon(
    system, filt, domain, horizon=None, t_report=None, Upsilon_final=None, seed=42,
    tol_attract=TOL_ATTRACT, max_doublings=3, integrator="closed_form", options=DEFAULT_OPTIONS,
):
    """Upsilon_hat by backward attraction from ``t = horizon``.

    ``horizon`` is an absolute time beyond the report window (default: the
    report end plus 10). On disagreement the distance ``horizon - t_report[1]``
    is doubled, at most ``max_doublings`` times.
    """
    if not system.invertible_Ad:
        raise PreconditionError("backward attraction of Upsilon needs an invertible A_d")
    window = _report_window(domain, t_report)
    nu, n = filt.nu, system.n
    rng = np.random.default_rng(seed)
    first = (
        _random_matrix(rng, (nu, n)) if Upsilon_final is None
        else np.asarray(Upsilon_final, dtype=float).reshape(nu, n)
    )
    second = _random_matrix(rng, (nu, n))
    init_gap = float(np.max(np.abs(first - second)))
    reach = (window[1] + 10.0 if horizon is None else float(horizon)) - window[1]
    if reach < 0:
        raise ValueError("horizon must not precede the report window end")

    def one_pass(t0, X0):
        if integrator == "closed_form":
            return _propagate_upsilon_backward(system, filt, domain, t0, X0, window)
        if integrator == "ode":
            return _ode_upsilon_pass(system, filt, domain, t0, X0, window, options)
        raise ValueError(f"unknown integrator {integrator!r}")

    for attempt in range(max_doublings + 1):
        t0 = window[1] + reach
        if t0 > domain.t_end + 1e-12:
            raise WarmupTooShortError(f"horizon t={t0} lies beyond the domain end {domain.t_end}")
        report, anchors = one_pass(t0, first)
        _, other = one_pass(t0, second)
        gap = _discrepancy(anchors, other)
        contraction = gap / init_gap if init_gap > 0 else 0.0
        if gap <= tol_attract:
            info = {"horizon": t0, "doublings": attempt, "discrepancy": gap, "contraction": contraction}
            return UpsilonSolution(
                report, anchors, _upsilon_coefficients(system, filt), f"backward_attraction({t0:g})", info
            )
        if attempt < max_doublings:
            reach *= 2.0
    raise WarmupTooShortError(
        f"backward attraction did not forget its final value: discrepancy {gap:.3g} > "
        f"{tol_attract:.3g} with horizon {t0} (contraction {contraction:.3g})",
        discrepancy=gap,
        contraction=contraction,
    )


# -- periodic jumps -------------------------------------------------------------------


def _require_periodic_stable(system, T):
    mono = system.A_d @ expm(system.A_c, T)
    rho = spectral_radius(mono)
    if rho >= 1.0:
        raise PreconditionError(
            f"spectral radius of A_d exp(A_c T) is {rho:.6g} >= 1; the plant is not "
            "exponentially stable under period-T jumps"
        )
    return mono


def _require_unit_circle(matrix, name):
    mods = np.abs(np.linalg.eigvals(matrix))
    if np.max(np.abs(mods - 1.0)) > UNIT_CIRCLE_TOL:
        raise PreconditionError(
            f"eigenvalues of {name} must lie on the unit circle, moduli are {np.round(mods, 9).tolist()}"
        )


def periodic_pi(system, generator, T):
    """Pi_hat at every jump for period-``T`` jumps (algebraic Sylvester solve).

    Solves ``Pi (J e^{ST}) - (A_d e^{A_c T}) Pi = B_d L_d e^{ST} + A_d W``
    with ``W = int_0^T e^{A_c (T - s)} B_c L_c e^{S s} ds``.
    """
    T = float(T)
    if not T > 0:
        raise ValueError("period must be positive")
    mono = _require_periodic_stable(system, T)
    eS = expm(generator.S, T)
    right = generator.J @ eS
    _require_unit_circle(right, "J exp(S T)")
    A_c, S, K = _pi_coefficients(system, generator)
    _, W = flow_integral(A_c, K, S, T)
    rhs = system.B_d @ generator.L_d @ eS + system.A_d @ W
    return solve_sylvester(mono, right, rhs)


def periodic_upsilon(system, filt, T):
    """Upsilon_hat at every jump for period-``T`` jumps.

    Solves ``U (A_d e^{A_c T}) - (Q_d e^{Q_c T}) U = -R_d C e^{A_c T} - Q_d W``
    with ``W = int_0^T e^{Q_c (T - s)} R_c C e^{A_c s} ds``, which is what the
    jump relation ``U+ A_d = Q_d U - R_d C`` gives for a periodic solution.
    """
    T = float(T)
    if not T > 0:
        raise ValueError("period must be positive")
    mono = _require_periodic_stable(system, T)
    left = filt.Q_d @ expm(filt.Q_c, T)
    _require_unit_circle(left, "Q_d exp(Q_c T)")
    _, W = flow_integral(filt.Q_c, filt.R_c @ system.C, system.A_c, T)
    rhs = -filt.R_d @ system.C @ expm(system.A_c, T) - filt.Q_d @ W
    return solve_sylvester(left, mono, rhs)


def _periodic_anchors(domain, T, phase, value):
    anchors = []
    for iv in domain.intervals:
        mid = 0.5 * (iv.start + iv.end)
        t_k = phase + math.floor((mid - phase) / T) * T
        anchors.append((t_k, value))
    return anchors


def _periodic_rule(domain, T):
    rule = domain.rule
    if isinstance(rule, Periodic):
        return float(rule.period), float(rule.phase)
    if T is None:
        raise PreconditionError("periodic solutions need a periodic domain or an explicit period")
    phase = float(domain.jumps[0]) if domain.jumps.size else 0.0
    return float(T), phase


def periodic_pi_solution(system, generator, domain, T=None):
    T, phase = _periodic_rule(domain, T)
    value = periodic_pi(system, generator, T)
    return PiSolution(
        domain, _periodic_anchors(domain, T, phase, value), _pi_coefficients(system, generator),
        "periodic_exact", {"period": T},
    )


def periodic_upsilon_solution(system, filt, domain, T=None):
    T, phase = _periodic_rule(domain, T)
    value = periodic_upsilon(system, filt, T)
    return UpsilonSolution(
        domain, _periodic_anchors(domain, T, phase, value), _upsilon_coefficients(system, filt),
        "periodic_exact", {"period": T},
    )
