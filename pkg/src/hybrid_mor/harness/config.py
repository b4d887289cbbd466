"""Scenario files: YAML parsing, validation and assumption checks."""

import dataclasses
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path
from typing import Optional

import numpy as np
import yaml

from ..errors import AssumptionError, DimensionError, HybridMorError, ValidationError
from ..hybrid_sim import HybridFilter, LinearHybridSystem, SignalGenerator, exponential_input
from ..hybrid_time import (
    Boundary,
    BoundaryTerm,
    Explicit,
    Guard,
    Periodic,
    StateTriggered,
    build_domain,
)

TASKS = (
    "steady_state_pi",
    "steady_state_upsilon",
    "direct_rom",
    "swapped_rom",
    "two_sided_i",
    "two_sided_ii",
    "validate",
)
NEEDS_GENERATOR = {"steady_state_pi", "direct_rom", "two_sided_i", "two_sided_ii"}
NEEDS_FILTER = {"steady_state_upsilon", "swapped_rom", "two_sided_i", "two_sided_ii"}


@dataclass
class Settings:
    warmup: float = 10.0
    horizon: Optional[float] = None  # absolute time; default window end + 10
    seed: int = 42
    tol_attract: float = 1e-6
    max_doublings: int = 3
    Pi_init: Optional[list] = None
    Upsilon_final: Optional[list] = None
    checkpoints: tuple = ()
    decay_ratio: float = 1e-3
    epsilon_stab: float = 1e-3
    xi0: Optional[list] = None


@dataclass
class Scenario:
    name: str
    system: LinearHybridSystem
    generator: Optional[SignalGenerator]
    filter: Optional[HybridFilter]
    rule: object
    window: tuple
    domain: object  # computation domain, wider than the window
    x0: np.ndarray
    inputs: dict
    tasks: list
    gains: dict
    settings: Settings
    reference: dict = field(default_factory=dict)
    checks: list = field(default_factory=list)
    source: Optional[str] = None

    @property
    def report_domain(self):
        return self.domain.restrict(*self.window)

    @property
    def horizon(self):
        return self.settings.horizon if self.settings.horizon is not None else self.window[1] + 10.0

    def input_functions(self):
        return self.inputs.get("u_c"), self.inputs.get("u_d")


# -- field helpers ----------------------------------------------------------------


def _get(node, key, where, default=dataclasses.MISSING):
    if not isinstance(node, dict):
        raise ValidationError(f"{where}: expected a mapping")
    if key not in node:
        if default is dataclasses.MISSING:
            raise ValidationError(f"{where}.{key}: missing required field")
        return default
    return node[key]


def _matrix(node, key, where, default=dataclasses.MISSING):
    value = _get(node, key, where, default)
    if value is None:
        return None
    try:
        m = np.array(value, dtype=float)
    except (TypeError, ValueError) as exc:
        raise ValidationError(f"{where}.{key}: not a numeric matrix ({exc})") from exc
    if m.ndim > 2:
        raise ValidationError(f"{where}.{key}: matrices are written as lists of rows")
    return m


def _input_matrix(node, key, where):
    if key in node:
        return _matrix(node, key, where)
    tkey = f"{key}_transposed"
    if tkey in node:
        return np.atleast_2d(_matrix(node, tkey, where)).T
    raise ValidationError(f"{where}.{key}: missing required field")


def _build(kind, where, fn):
    try:
        return fn()
    except AssumptionError:
        raise
    except (DimensionError, ValueError) as exc:
        raise ValidationError(f"{where}: {exc}") from exc


def _input_function(node, where):
    if node is None:
        return None
    kind = _get(node, "kind", where)
    if kind == "zero":
        return None
    if kind == "exponential":
        rates = _get(node, "rates", where)
        return exponential_input(rates, node.get("amplitudes"))
    raise ValidationError(f"{where}.kind: unknown input kind {kind!r}")


def _boundary(node, where):
    terms = []
    for k, term in enumerate(_get(node, "terms", where, [])):
        tw = f"{where}.terms[{k}]"
        terms.append(
            BoundaryTerm(
                str(_get(term, "kind", tw)),
                float(term.get("amplitude", 1.0)),
                float(term.get("frequency", 1.0)),
                float(term.get("shift", 0.0)),
            )
        )
    return Boundary(float(node.get("offset", 0.0)), tuple(terms))


def _rule(node, generator, where="domain"):
    kind = _get(node, "rule", where)
    if kind == "explicit":
        return Explicit(_get(node, "instants", where))
    if kind == "periodic":
        return Periodic(float(_get(node, "period", where)), float(node.get("phase", 0.0)))
    if kind == "state_triggered":
        gnode = _get(node, "guard", where)
        guard = Guard(_boundary(_get(gnode, "boundary", f"{where}.guard"), f"{where}.guard.boundary"),
                      int(gnode.get("index", 0)))
        trigger = node.get("trigger", "generator")
        if trigger == "generator":
            if generator is None:
                raise ValidationError(f"{where}.trigger: 'generator' requested but no generator is defined")
            flow, jump, state0 = generator.S, generator.J, generator.omega0
        else:
            tw = f"{where}.trigger"
            flow, jump, state0 = _matrix(trigger, "flow", tw), _matrix(trigger, "jump", tw), _matrix(trigger, "state0", tw)
        return StateTriggered(guard, flow, jump, state0, float(node.get("t0", 0.0)),
                              float(node.get("scan_step", 1e-2)))
    raise ValidationError(f"{where}.rule: unknown rule {kind!r} (explicit, periodic, state_triggered)")


def computation_window(rule, window, settings, horizon):
    """Window wide enough for every warmup/horizon doubling."""
    grow = 2.0 ** settings.max_doublings
    lo = window[0] - settings.warmup * grow
    hi = window[1] + max(horizon - window[1], 0.0) * grow
    if isinstance(rule, Explicit):
        inst = rule.instants
        if not inst:
            raise ValidationError("domain.instants: at least one instant is required")
        lo, hi = max(lo, inst[0]), min(hi, inst[-1])
        lo, hi = min(lo, window[0]), max(hi, window[1])
    return lo, hi


# -- entry points -----------------------------------------------------------------------


def parse_scenario(data, source=None, overrides=None):
    """Validate a parsed mapping and build a :class:`Scenario`."""
    if not isinstance(data, dict):
        raise ValidationError("scenario file must contain a mapping at top level")
    overrides = overrides or {}
    checks = []

    snode = _get(data, "system", "scenario")
    system = _build("system", "system", lambda: LinearHybridSystem(
        _matrix(snode, "A_c", "system"), _matrix(snode, "A_d", "system"),
        _input_matrix(snode, "B_c", "system"), _input_matrix(snode, "B_d", "system"),
        _matrix(snode, "C", "system"),
    ))

    generator = None
    if data.get("generator") is not None:
        g = data["generator"]
        try:
            generator = _build("generator", "generator", lambda: SignalGenerator(
                _matrix(g, "S", "generator"), _matrix(g, "J", "generator"),
                _matrix(g, "L_c", "generator"), _matrix(g, "L_d", "generator"),
                _matrix(g, "omega0", "generator"),
            ))
            checks.append({"assumption": "generator", "passed": True})
        except AssumptionError as exc:
            raise ValidationError(str(exc)) from exc
        if generator.L_c.shape[0] != system.m:
            raise ValidationError(f"generator.L_c: {generator.L_c.shape[0]} rows, system has {system.m} inputs")

    filt = None
    if data.get("filter") is not None:
        f = data["filter"]
        try:
            filt = _build("filter", "filter", lambda: HybridFilter(
                _matrix(f, "Q_c", "filter"), _matrix(f, "Q_d", "filter"),
                _matrix(f, "R_c", "filter"), _matrix(f, "R_d", "filter"),
                _matrix(f, "varpi0", "filter", None),
            ))
            checks.append({"assumption": "filter", "passed": True})
        except AssumptionError as exc:
            raise ValidationError(str(exc)) from exc
        if filt.p != system.p:
            raise ValidationError(f"filter.R_c: {filt.p} columns, system has {system.p} outputs")

    tasks = list(data.get("tasks") or [])
    if "tasks" in overrides and overrides["tasks"]:
        tasks = list(overrides["tasks"])
    for t in tasks:
        if t not in TASKS:
            raise ValidationError(f"tasks: unknown task {t!r}; expected one of {list(TASKS)}")
        if t in NEEDS_GENERATOR and generator is None:
            raise ValidationError(f"tasks: {t!r} needs a generator")
        if t in NEEDS_FILTER and filt is None:
            raise ValidationError(f"tasks: {t!r} needs a filter")

    snode = data.get("settings") or {}
    known = {f.name for f in dataclasses.fields(Settings)}
    unknown = set(snode) - known
    if unknown:
        raise ValidationError(f"settings: unknown fields {sorted(unknown)}")
    settings = Settings(**snode)
    settings.checkpoints = tuple(float(c) for c in settings.checkpoints)
    for key in ("seed", "tol_attract"):
        if overrides.get(key) is not None:
            setattr(settings, key, overrides[key])

    window = tuple(float(v) for v in _get(data, "window", "scenario"))
    if len(window) != 2 or not window[1] > window[0]:
        raise ValidationError(f"window: expected [t_start, t_end] with t_end > t_start, got {window}")
    horizon = settings.horizon if settings.horizon is not None else window[1] + 10.0
    rule = _rule(_get(data, "domain", "scenario"), generator)
    dnode = data["domain"]
    try:
        domain = build_domain(
            rule,
            computation_window(rule, window, settings, horizon),
            delta_lower=float(dnode.get("delta_lower", 1e-6)),
            delta_upper=dnode.get("delta_upper"),
            tol_event=float(dnode.get("tol_event", 1e-9)),
        )
        checks.append({"assumption": "jump-spacing", "passed": True,
                       "min_spacing": float(domain.deltas.min()) if domain.deltas.size else None})
    except AssumptionError as exc:
        raise ValidationError(str(exc)) from exc
    if domain.t_start > window[0] or domain.t_end < window[1]:
        raise ValidationError("domain: the jump instants do not cover the window")

    x0 = _matrix(data, "x0", "scenario", None)
    x0 = np.zeros(system.n) if x0 is None else x0.reshape(-1)
    if x0.size != system.n:
        raise ValidationError(f"x0: length {x0.size}, system has {system.n} states")

    inode = data.get("inputs") or {}
    inputs = {k: _input_function(inode.get(k), f"inputs.{k}") for k in ("u_c", "u_d")}

    return Scenario(
        name=str(data.get("name", Path(source).stem if source else "scenario")),
        system=system, generator=generator, filter=filt, rule=rule, window=window,
        domain=domain, x0=x0, inputs=inputs, tasks=tasks, gains=dict(data.get("gains") or {}),
        settings=settings, reference=dict(data.get("reference") or {}), checks=checks,
        source=str(source) if source else None,
    )


def load_scenario(path, overrides=None):
    """Read and validate a YAML scenario file.

    Raises
    ------
    ValidationError
        On parse errors (with line and column), missing or malformed fields,
        dimension mismatches and violated modelling assumptions.
    """
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ValidationError(f"cannot read {path}: {exc}") from exc
    try:
        data = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        mark = getattr(exc, "problem_mark", None)
        where = f" at line {mark.line + 1}, column {mark.column + 1}" if mark else ""
        raise ValidationError(f"{path}: parse error{where}: {getattr(exc, 'problem', exc)}") from exc
    try:
        return parse_scenario(data, source=path, overrides=overrides)
    except ValidationError:
        raise
    except HybridMorError as exc:
        raise ValidationError(str(exc)) from exc


def builtin_scenario_path(name="paper_example"):
    return Path(str(resources.files("hybrid_mor") / "scenarios" / f"{name}.yaml"))


def load_builtin(name="paper_example", overrides=None):
    return load_scenario(builtin_scenario_path(name), overrides)
