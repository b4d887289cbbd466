"""Scenario execution: task scheduling, metrics and CSV emission."""

import json
import logging
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from ..errors import (
    AssumptionError,
    ConvergenceError,
    HybridMorError,
    PreconditionError,
    StabilityError,
    ValidationError,
)
from ..hybrid_sim import (
    SimOptions,
    check_exponential_stability,
    simulate_interconnection_direct,
    simulate_interconnection_swapped,
)
from ..hybrid_time import Periodic
from ..rom import (
    auxiliary_signal,
    build_direct_rom,
    build_swapped_rom,
    build_two_sided_rom,
    check_rom_stability,
    identity_deviation,
    periodic_direct_gains,
    periodic_swapped_gain,
    rom_pi_equation,
    rom_upsilon_equation,
    simulate_phi,
)
from ..signal import error_norm, log_slope
from ..sylvester_hybrid import (
    periodic_pi_solution,
    periodic_upsilon_solution,
    pi_series_solution,
    steady_state_pi,
    steady_state_upsilon,
    upsilon_series_solution,
)

log = logging.getLogger(__name__)

ORDER = (
    "steady_state_pi",
    "steady_state_upsilon",
    "direct_rom",
    "swapped_rom",
    "two_sided_i",
    "two_sided_ii",
    "validate",
)
DEPENDS = {
    "direct_rom": ("steady_state_pi",),
    "swapped_rom": ("steady_state_upsilon",),
    "two_sided_i": ("steady_state_pi", "steady_state_upsilon"),
    "two_sided_ii": ("steady_state_pi", "steady_state_upsilon"),
}
IDENTITY_OPTIONS = SimOptions(rtol=1e-12, atol=1e-14)

EXIT_OK, EXIT_VALIDATION, EXIT_NUMERIC = 0, 2, 3


class NumericFailure(HybridMorError):
    """A computed quantity missed its tolerance."""


@dataclass
class TaskResult:
    name: str
    status: str = "pending"  # ok | precondition_failed | numeric_failed | skipped
    metrics: dict = field(default_factory=dict)
    files: list = field(default_factory=list)
    error: str = ""
    runtime: float = 0.0

    def as_dict(self):
        return {
            "status": self.status,
            "metrics": self.metrics,
            "files": self.files,
            "error": self.error,
            "runtime_s": round(self.runtime, 3),
        }


@dataclass
class MetricsReport:
    scenario: str
    seed: int
    tasks: dict = field(default_factory=dict)
    checks: list = field(default_factory=list)

    @property
    def exit_code(self):
        states = {r.status for r in self.tasks.values()}
        if "precondition_failed" in states:
            return EXIT_VALIDATION
        if "numeric_failed" in states or "skipped" in states:
            return EXIT_NUMERIC
        return EXIT_OK

    def as_dict(self):
        return {
            "scenario": self.scenario,
            "seed": self.seed,
            "exit_code": self.exit_code,
            "assumption_checks": self.checks,
            "tasks": {k: v.as_dict() for k, v in self.tasks.items()},
        }

    def write(self, path):
        Path(path).write_text(json.dumps(_jsonable(self.as_dict()), indent=2) + "\n")
        return path


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _jsonable(obj.tolist())
    if isinstance(obj, (np.floating, float)):
        v = float(obj)
        return v if np.isfinite(v) else str(v)
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (np.bool_,)):
        return bool(obj)
    return obj


# -- metric helpers ------------------------------------------------------------------


def _value_at(signal, t):
    """Post-jump sample nearest to ``t``."""
    times, _, values = signal.samples()
    k = int(np.searchsorted(times, t, side="right")) - 1
    k = min(max(k, 0), times.size - 1)
    if k + 1 < times.size and abs(times[k + 1] - t) < abs(times[k] - t):
        k += 1
    return float(np.linalg.norm(values[k]))


def emit_error_decay(signal_a, signal_b, path, name="error", checkpoints=()):
    """Write ``(t, j, ||a - b||)`` to ``path`` and summarise its decay.

    Raises
    ------
    AlignmentError
        If the two signals are not sampled on the same grid.
    """
    err = error_norm(signal_a, signal_b, name=name)
    err.to_csv(path, name)
    _, _, v = err.samples()
    v = np.asarray(v, dtype=float).reshape(-1)
    return {
        "csv": str(path),
        "initial": float(v[0]),
        "peak": float(v.max()),
        "final": float(v[-1]),
        "slope": log_slope(err),  # None when not a fit
        "at": {f"{c:g}": _value_at(err, c) for c in checkpoints},
    }


def _ratio(num, den):
    return float(num / den) if den > 0 else (0.0 if num == 0 else float("inf"))


# -- runner --------------------------------------------------------------------------


class _Context:
    def __init__(self, scenario, out_dir):
        self.sc = scenario
        self.out = Path(out_dir)
        self.rep = scenario.report_domain
        self.pi = None
        self.upsilon = None
        self.roms = {}
        self._direct = None
        self._swapped = None

    def path(self, name):
        return self.out / name

    def direct_run(self):
        if self._direct is None:
            self._direct = simulate_interconnection_direct(self.sc.system, self.sc.generator, self.rep, self.sc.x0)
        return self._direct

    def swapped_run(self):
        """Plant started at rest, filter at rest, driven by the scenario inputs."""
        if self._swapped is None:
            u_c, u_d = self.sc.input_functions()
            self._swapped = simulate_interconnection_swapped(
                self.sc.system, self.sc.filter, self.rep, None, None, u_c, u_d
            )
        return self._swapped


def _task_steady_state_pi(ctx, res):
    sc, st = ctx.sc, ctx.sc.settings
    pi = steady_state_pi(
        sc.system, sc.generator, sc.domain, st.warmup, sc.window, st.Pi_init,
        st.seed, st.tol_attract, st.max_doublings,
    )
    ctx.pi = pi
    m = res.metrics
    m["method"] = pi.method
    m.update(pi.info)
    m["Pi_hat_0"] = pi.at_time(sc.window[0]).ravel()
    m["jump_residual"] = pi.jump_residual(sc.system, sc.generator)
    routes = {}
    try:
        routes["series"] = pi_series_solution(sc.system, sc.generator, sc.domain, sc.window).max_difference(pi)
    except HybridMorError as exc:
        routes["series"] = f"unavailable: {exc}"
    if isinstance(sc.rule, Periodic):
        try:
            routes["periodic_exact"] = periodic_pi_solution(sc.system, sc.generator, ctx.rep).max_difference(pi)
        except HybridMorError as exc:
            routes["periodic_exact"] = f"unavailable: {exc}"
    m["route_residuals"] = routes
    path = ctx.path("Pi_hat.csv")
    pi.signal(name="Pi").to_csv(path, "Pi")
    res.files.append(str(path))
    ref = sc.reference.get("Pi_hat_0")
    if ref is not None:
        tol = float(sc.reference.get("tolerance", 5e-3))
        gap = float(np.max(np.abs(np.asarray(m["Pi_hat_0"]) - np.asarray(ref, dtype=float))))
        m["reference"] = {"Pi_hat_0": ref, "max_abs_error": gap, "tolerance": tol, "passed": gap <= tol}
        if gap > tol:
            raise NumericFailure(f"Pi_hat_0 differs from the reference by {gap:.3g} > {tol:.3g}")


def _task_steady_state_upsilon(ctx, res):
    sc, st = ctx.sc, ctx.sc.settings
    up = steady_state_upsilon(
        sc.system, sc.filter, sc.domain, sc.horizon, sc.window, st.Upsilon_final,
        st.seed, st.tol_attract, st.max_doublings,
    )
    ctx.upsilon = up
    m = res.metrics
    m["method"] = up.method
    m.update(up.info)
    m["Upsilon_hat_0"] = up.at_time(sc.window[0]).ravel()
    m["jump_residual"] = up.jump_residual(sc.system, sc.filter)
    routes = {}
    try:
        routes["series"] = upsilon_series_solution(sc.system, sc.filter, sc.domain, sc.window).max_difference(up)
    except HybridMorError as exc:
        routes["series"] = f"unavailable: {exc}"
    if isinstance(sc.rule, Periodic):
        try:
            routes["periodic_exact"] = periodic_upsilon_solution(sc.system, sc.filter, ctx.rep).max_difference(up)
        except HybridMorError as exc:
            routes["periodic_exact"] = f"unavailable: {exc}"
    m["route_residuals"] = routes
    path = ctx.path("Upsilon_hat.csv")
    up.signal(name="Upsilon").to_csv(path, "Upsilon")
    res.files.append(str(path))


def _xi0(ctx, rom):
    xi0 = ctx.sc.settings.xi0
    return np.zeros(rom.nu) if xi0 is None else np.asarray(xi0, dtype=float).reshape(rom.nu)


def _direct_channel(ctx, rom, tag, res):
    sc = ctx.sc
    full = ctx.direct_run()
    red = simulate_interconnection_direct(rom, sc.generator, ctx.rep, _xi0(ctx, rom))
    path = ctx.path(f"{tag}_direct_error.csv")
    metrics = emit_error_decay(full.y, red.y, path, "e", sc.settings.checkpoints)
    metrics["ratio_final_initial"] = _ratio(metrics["final"], metrics["initial"])
    metrics["passed"] = metrics["ratio_final_initial"] <= sc.settings.decay_ratio
    res.files.append(str(path))
    return metrics


def _swapped_channel(ctx, rom, tag, res):
    sc = ctx.sc
    full = ctx.swapped_run()
    u_c, u_d = sc.input_functions()
    red = simulate_interconnection_swapped(rom, sc.filter, ctx.rep, None, None, u_c, u_d)
    path = ctx.path(f"{tag}_swapped_error.csv")
    metrics = emit_error_decay(full.varpi, red.varpi, path, "e", sc.settings.checkpoints)
    # both interconnections start at rest, so the peak is the reference size
    metrics["ratio_final_peak"] = _ratio(metrics["final"], metrics["peak"])
    metrics["passed"] = metrics["ratio_final_peak"] <= sc.settings.decay_ratio
    res.files.append(str(path))
    return metrics


def _stability(ctx, rom, res):
    rep = check_rom_stability(rom, ctx.rep, epsilon=ctx.sc.settings.epsilon_stab)
    res.metrics["stability"] = rep.as_dict()
    return rep.stable


def _identity_checks(ctx, rom, res):
    sc = ctx.sc
    ids = {}
    eye = np.eye(rom.nu)
    t0, j0 = ctx.rep.t_start, ctx.rep.j_first
    if rom.kind in ("direct", "two_sided_i"):
        ids["P_identity"] = identity_deviation(rom_pi_equation(rom, sc.generator, ctx.rep, eye, IDENTITY_OPTIONS), eye)
    if rom.kind in ("swapped", "two_sided_ii"):
        ids["Y_identity"] = identity_deviation(rom_upsilon_equation(rom, sc.filter, ctx.rep, eye, IDENTITY_OPTIONS), eye)
    if rom.kind.startswith("two_sided"):
        pi, up = ctx.pi, ctx.upsilon

        def phi(t, j):
            return up.at(t, j) @ pi.at(t, j)

        ids["Phi_dynamics"] = identity_deviation(
            simulate_phi(sc.system, sc.generator, sc.filter, pi, up, ctx.rep, options=IDENTITY_OPTIONS), phi
        )
        if rom.kind == "two_sided_i":
            t1, j1 = ctx.rep.t_end, ctx.rep.j_last
            cross = rom_upsilon_equation(rom, sc.filter, ctx.rep, phi(t1, j1), IDENTITY_OPTIONS)
        else:
            cross = rom_pi_equation(rom, sc.generator, ctx.rep, phi(t0, j0), IDENTITY_OPTIONS)
        ids["Phi_cross"] = identity_deviation(cross, phi)
    res.metrics["identities"] = ids


def _finish_rom(ctx, rom, res, direct, swapped):
    stable = _stability(ctx, rom, res)
    channels = {}
    if direct:
        channels["direct"] = _direct_channel(ctx, rom, res.name, res)
    if swapped:
        channels["swapped"] = _swapped_channel(ctx, rom, res.name, res)
    res.metrics["channels"] = channels
    _identity_checks(ctx, rom, res)
    res.metrics["model"] = rom.describe()
    ctx.roms[res.name] = rom
    if not stable:
        raise NumericFailure("reduced model failed the exponential stability check")
    bad = [k for k, v in channels.items() if not v["passed"]]
    if bad:
        raise NumericFailure(f"matching error did not decay enough on channel(s) {bad}")


def _period(ctx):
    if not isinstance(ctx.sc.rule, Periodic):
        raise PreconditionError("automatic gains are only available for periodic jumps")
    return float(ctx.sc.rule.period)


def _task_direct_rom(ctx, res):
    sc = ctx.sc
    gain_cfg = sc.gains.get("direct", "auto")
    if gain_cfg == "auto":
        G_c, G_d = periodic_direct_gains(sc.generator, _period(ctx))
    else:
        G_c, G_d = np.array(gain_cfg["G_c"], dtype=float), np.array(gain_cfg["G_d"], dtype=float)
    rom = build_direct_rom(sc.generator, ctx.pi, sc.system.C, G_c, G_d)
    _finish_rom(ctx, rom, res, direct=True, swapped=False)


def _task_swapped_rom(ctx, res):
    sc = ctx.sc
    gain_cfg = sc.gains.get("swapped", "auto")
    H = periodic_swapped_gain(sc.filter, _period(ctx)) if gain_cfg == "auto" else np.array(gain_cfg["H"], dtype=float)
    rom = build_swapped_rom(sc.filter, ctx.upsilon, (sc.system.B_c, sc.system.B_d), H)
    _finish_rom(ctx, rom, res, direct=False, swapped=True)


def _task_two_sided(variant):
    def task(ctx, res):
        sc = ctx.sc
        rom = build_two_sided_rom(variant, sc.system, sc.generator, sc.filter, ctx.pi, ctx.upsilon)
        _finish_rom(ctx, rom, res, direct=True, swapped=True)

    return task


def _task_validate(ctx, res):
    sc, st = ctx.sc, ctx.sc.settings
    m = res.metrics
    failures = []
    rng = np.random.default_rng(st.seed)
    basis, _ = np.linalg.qr(rng.standard_normal((sc.system.n, sc.system.n)))
    period = float(sc.rule.period) if isinstance(sc.rule, Periodic) else None
    stab = check_exponential_stability(sc.system, ctx.rep, basis.T, st.epsilon_stab, period=period)
    m["system_stability"] = stab.as_dict()
    if not stab.stable:
        failures.append("system stability")

    cps = st.checkpoints
    if ctx.pi is not None:
        run = ctx.direct_run()
        yss = run.omega.map(lambda t, j, w: sc.system.C @ ctx.pi.at(t, j) @ w, name="yss")
        path = ctx.path("direct_steady_state_error.csv")
        law = emit_error_decay(run.y, yss, path, "e", cps)
        res.files.append(str(path))
        if len(cps) >= 2:
            law["ratio"] = _ratio(law["at"][f"{cps[-1]:g}"], law["at"][f"{cps[0]:g}"])
        else:
            law["ratio"] = _ratio(law["final"], law["initial"])
        law["passed"] = law["ratio"] <= st.decay_ratio and law["slope"] is not None and law["slope"] < 0
        m["direct_steady_state"] = law
        if not law["passed"]:
            failures.append("direct steady-state law")
    if ctx.upsilon is not None:
        run = ctx.swapped_run()
        u_c, u_d = sc.input_functions()
        d = auxiliary_signal(ctx.upsilon, sc.filter, sc.system, ctx.rep, u_c, u_d)
        path = ctx.path("auxiliary_error.csv")
        law = emit_error_decay(d, run.varpi, path, "e", cps)
        res.files.append(str(path))
        at_end = law["at"][f"{cps[-1]:g}"] if cps else law["final"]
        law["ratio"] = _ratio(at_end, law["peak"])
        law["passed"] = law["ratio"] <= st.decay_ratio
        # d = varpi + Upsilon_hat x along the whole run
        ident = d.map(lambda t, j, v: v)
        recon = run.x.map(lambda t, j, x: ctx.upsilon.at(t, j) @ x)
        worst = 0.0
        for sd, sv, sr in zip(ident.segments, run.varpi.segments, recon.segments):
            worst = max(worst, float(np.max(np.abs(sd.values - sv.values - sr.values))))
        law["identity_residual"] = worst
        m["auxiliary"] = law
        if not law["passed"]:
            failures.append("auxiliary law")
    if failures:
        raise NumericFailure(f"validation failed: {failures}")


TASK_FUNCTIONS = {
    "steady_state_pi": _task_steady_state_pi,
    "steady_state_upsilon": _task_steady_state_upsilon,
    "direct_rom": _task_direct_rom,
    "swapped_rom": _task_swapped_rom,
    "two_sided_i": _task_two_sided("i"),
    "two_sided_ii": _task_two_sided("ii"),
    "validate": _task_validate,
}


def plan(tasks):
    """Requested tasks plus their prerequisites, in execution order."""
    wanted = set(tasks)
    for t in list(wanted):
        wanted.update(DEPENDS.get(t, ()))
    return [t for t in ORDER if t in wanted]


def run(scenario, out_dir="hybrid_mor_out", tasks=None):
    """Execute the scenario's tasks and write CSVs plus ``report.json`` to ``out_dir``.

    A failing task is recorded and the remaining independent tasks still run;
    tasks whose prerequisites failed are marked ``skipped``.
    """
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    ctx = _Context(scenario, out)
    report = MetricsReport(scenario.name, scenario.settings.seed, checks=list(scenario.checks))
    for name in plan(scenario.tasks if tasks is None else tasks):
        res = TaskResult(name)
        report.tasks[name] = res
        deps = [d for d in DEPENDS.get(name, ()) if report.tasks.get(d) is None or report.tasks[d].status not in ("ok", "numeric_failed")]
        missing = (name in ("direct_rom", "two_sided_i", "two_sided_ii") and ctx.pi is None) or (
            name in ("swapped_rom", "two_sided_i", "two_sided_ii") and ctx.upsilon is None
        )
        if deps or missing:
            res.status = "skipped"
            res.error = f"prerequisite failed: {deps or 'steady-state solution unavailable'}"
            continue
        start = time.perf_counter()
        try:
            TASK_FUNCTIONS[name](ctx, res)
            res.status = "ok"
        except NumericFailure as exc:
            res.status, res.error = "numeric_failed", str(exc)
        except (ConvergenceError, StabilityError) as exc:
            res.status, res.error = "numeric_failed", f"{type(exc).__name__}: {exc}"
        except (PreconditionError, AssumptionError, ValidationError) as exc:
            res.status, res.error = "precondition_failed", f"{type(exc).__name__}: {exc}"
        except HybridMorError as exc:
            res.status, res.error = "numeric_failed", f"{type(exc).__name__}: {exc}"
        res.runtime = time.perf_counter() - start
        log.info("task %s: %s (%.2fs) %s", name, res.status, res.runtime, res.error)
    report.write(out / "report.json")
    return report
