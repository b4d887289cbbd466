import numpy as np
import pytest

from hybrid_mor.harness.config import load_builtin
from hybrid_mor.hybrid_sim import HybridFilter, LinearHybridSystem, SignalGenerator, SimOptions
from hybrid_mor.hybrid_time import Periodic, build_domain
from hybrid_mor.linalg import expm, spectral_radius
from hybrid_mor.rom import identity_deviation, rom_pi_equation, rom_upsilon_equation, simulate_phi
from hybrid_mor.sylvester_hybrid import (
    periodic_pi_solution,
    periodic_upsilon_solution,
    pi_series_solution,
    steady_state_pi,
    steady_state_upsilon,
    upsilon_series_solution,
)


def _rotation(theta):
    c, s = np.cos(theta), np.sin(theta)
    return np.array([[c, -s], [s, c]])


def _neutral_pair(rng, nu):
    """Flow/jump pair whose period map has its spectrum on the unit circle."""
    if nu == 1:
        return np.zeros((1, 1)), np.array([[rng.choice([-1.0, 1.0])]])
    w = rng.uniform(0.5, 2.0)
    return np.array([[0.0, w], [-w, 0.0]]), _rotation(rng.uniform(0.2, 1.2))


def desk_instance(seed, n=None, nu=None, T=None):
    """Random exponentially stable plant with periodic jumps plus generator and filter.

    Returns a dict with system, generator, filter, period and a domain
    covering [-150, 100].
    """
    rng = np.random.default_rng(seed)
    n = n or int(rng.integers(1, 5))
    nu = nu or int(rng.integers(1, 3))
    T = T or float(rng.uniform(0.5, 2.0))
    m, p = int(rng.integers(1, 3)), int(rng.integers(1, 3))
    for _ in range(100):
        M = rng.standard_normal((n, n))
        A_c = M - (np.max(np.linalg.eigvals(M).real) + rng.uniform(0.3, 1.0)) * np.eye(n)
        A_d = rng.standard_normal((n, n))
        A_d *= rng.uniform(0.4, 0.9) / np.linalg.norm(A_d, 2)
        if spectral_radius(A_d @ expm(A_c, T)) < 0.5 and np.linalg.cond(A_d) < 1e3:
            break
    else:
        raise RuntimeError(f"no stable plant found for seed {seed}")
    system = LinearHybridSystem(
        A_c, A_d, rng.standard_normal((n, m)), rng.standard_normal((n, m)), rng.standard_normal((p, n))
    )
    S, J = _neutral_pair(rng, nu)
    generator = SignalGenerator(S, J, rng.standard_normal((m, nu)), rng.standard_normal((m, nu)), rng.standard_normal(nu))
    Q_c, Q_d = _neutral_pair(rng, nu)
    filt = HybridFilter(Q_c, Q_d, rng.standard_normal((nu, p)), rng.standard_normal((nu, p)))
    domain = build_domain(Periodic(T, 0.0), (-150.0, 100.0))
    return {"system": system, "generator": generator, "filter": filt, "T": T, "domain": domain,
            "n": n, "nu": nu, "m": m, "p": p}


ACCEPTANCE_KEY = pytest.StashKey[list]()


def pytest_configure(config):
    config.stash[ACCEPTANCE_KEY] = []


def pytest_terminal_summary(terminalreporter, config):
    lines = config.stash.get(ACCEPTANCE_KEY, [])
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in lines:
            terminalreporter.write_line(line)


@pytest.fixture
def criterion(pytestconfig):
    """Record one pass/fail line per acceptance criterion for the end-of-run summary."""

    def record(number, title, passed, detail, runtime):
        line = f"criterion {number} [{'PASS' if passed else 'FAIL'}] {title}: {detail} ({runtime:.1f}s)"
        print(line)
        pytestconfig.stash[ACCEPTANCE_KEY].append(line)
        return passed

    return record


@pytest.fixture(scope="session")
def example_scenario():
    return load_builtin("paper_example")


@pytest.fixture(scope="session")
def example_run(tmp_path_factory, example_scenario):
    from hybrid_mor.harness.runner import run

    out = tmp_path_factory.mktemp("paper_example")
    return run(example_scenario, out), out


IDENTITY_OPTIONS = SimOptions(rtol=1e-12, atol=1e-14)


def identity_suite(system, generator, filt, domain, rom, pi=None, up=None):
    """Largest deviations of the matched-model identities for ``rom`` on ``domain``.

    Keys: ``P`` (own direct equation from I), ``Y`` (own swapped equation
    back from I), ``Phi`` (cross equation simulated against
    ``Upsilon_hat Pi_hat``) and ``Phi_cross`` (the two-sided model's other
    equation started from ``Upsilon_hat Pi_hat``).
    """
    out = {}
    eye = np.eye(rom.nu)
    if rom.kind in ("direct", "two_sided_i"):
        out["P"] = identity_deviation(rom_pi_equation(rom, generator, domain, eye, IDENTITY_OPTIONS), eye)
    if rom.kind in ("swapped", "two_sided_ii"):
        out["Y"] = identity_deviation(rom_upsilon_equation(rom, filt, domain, eye, IDENTITY_OPTIONS), eye)
    if rom.kind.startswith("two_sided"):
        phi = lambda t, j: up.at(t, j) @ pi.at(t, j)
        out["Phi"] = identity_deviation(
            simulate_phi(system, generator, filt, pi, up, domain, options=IDENTITY_OPTIONS), phi)
        if rom.kind == "two_sided_i":
            cross = rom_upsilon_equation(rom, filt, domain, phi(domain.t_end, domain.j_last), IDENTITY_OPTIONS)
        else:
            cross = rom_pi_equation(rom, generator, domain, phi(domain.t_start, domain.j_first), IDENTITY_OPTIONS)
        out["Phi_cross"] = identity_deviation(cross, phi)
    return out


def three_routes(inst, report=(0.0, 5.0)):
    """Series, attraction and periodic-exact solutions for both equations of a desk instance."""
    sys, gen, filt, domain = inst["system"], inst["generator"], inst["filter"], inst["domain"]
    pis = [
        pi_series_solution(sys, gen, domain, report),
        steady_state_pi(sys, gen, domain, warmup=70.0, t_report=report, tol_attract=1e-8, max_doublings=1),
        periodic_pi_solution(sys, gen, domain).restrict(*report),
    ]
    ups = [
        upsilon_series_solution(sys, filt, domain, report),
        steady_state_upsilon(sys, filt, domain, horizon=50.0, t_report=report, tol_attract=1e-8, max_doublings=1),
        periodic_upsilon_solution(sys, filt, domain).restrict(*report),
    ]
    return pis, ups
