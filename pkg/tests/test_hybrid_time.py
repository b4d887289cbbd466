import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy.integrate import quad

from hybrid_mor.errors import AssumptionError, ValidationError
from hybrid_mor.hybrid_time import (
    Boundary,
    EventResolutionWarning,
    Explicit,
    Guard,
    Periodic,
    StateTriggered,
    build_domain,
    detect_next_jump,
    triangular_wave,
)

S_GEN, J_GEN, OMEGA0 = np.array([[2.0]]), np.array([[0.01]]), np.array([0.2739])


def test_triangular_wave_landmarks():
    assert triangular_wave(0.0) == -1.0
    assert triangular_wave(math.pi) == pytest.approx(1.0, abs=1e-15)
    oracle = 2 / math.pi * quad(lambda s: np.sign(np.sin(s)), 0, 2 * math.pi, points=[math.pi], epsabs=1e-13)[0] - 1
    assert triangular_wave(2 * math.pi) == pytest.approx(oracle, abs=1e-10)


@settings(max_examples=50, deadline=None)
@given(st.floats(0.0, 20.0))
def test_triangular_wave_against_quadrature(t):
    kinks = [k * math.pi for k in range(1, int(t / math.pi) + 1)]
    oracle = 2 / math.pi * quad(lambda s: np.sign(np.sin(s)), 0, t, points=kinks or None, limit=200)[0] - 1
    assert triangular_wave(t) == pytest.approx(oracle, abs=1e-8)


def test_detect_constant_boundary():
    guard = Guard(Boundary(3.0), 0)
    t_hit = detect_next_jump(guard, lambda t: OMEGA0 * math.exp(2 * t), 0.0, 0.01, 10.0)
    assert t_hit == pytest.approx(math.log(3 / 0.2739) / 2, abs=1e-8)


def test_detect_no_crossing_is_end_of_window():
    guard = Guard(Boundary(3.0), 0)
    assert detect_next_jump(guard, lambda t: np.zeros(1), 0.0, 0.01, 5.0) is None


def test_detect_unresolved_crossing_warns():
    guard = Guard(lambda t: 1.0 - t, 0)
    with pytest.warns(EventResolutionWarning):
        detect_next_jump(guard, lambda t: np.zeros(1), 1.0 - 1e-10, 0.01, 2.0)


def _example_rule():
    return StateTriggered(Guard(Boundary.paper_example(), 0), S_GEN, J_GEN, OMEGA0, 0.0, 0.01)


def test_example_instants_match_dense_sampling():
    domain = build_domain(_example_rule(), (0.0, 15.0))
    inst = domain.instants
    assert inst.size > 5 and np.all(np.diff(inst) > 0)
    assert np.ptp(np.diff(inst)) > 0.05  # not periodic
    # independent oracle: march the scalar generator with step 1e-4, interpolate inside the crossing step
    b = Boundary.paper_example()
    oracle, t, w, h = [], 0.0, OMEGA0[0], 1e-4
    while t < 15.0 and len(oracle) < inst.size:
        t_next, w_next = t + h, w * math.exp(2 * h)
        if w_next >= b(t_next):
            g0, g1 = w - b(t), w_next - b(t_next)
            t_cross = t - g0 * h / (g1 - g0)
            oracle.append(t_cross)
            t, w = t_cross, J_GEN[0, 0] * w * math.exp(2 * (t_cross - t))
        else:
            t, w = t_next, w_next
    np.testing.assert_allclose(inst[: len(oracle)], oracle, atol=1e-6)


def test_example_instants_backward_match_forward():
    # the domain on [-20, 15] must contain the forward-only instants unchanged
    fwd = build_domain(_example_rule(), (0.0, 15.0)).instants
    both = build_domain(_example_rule(), (-20.0, 15.0))
    assert np.all(both.instants[both.instants < 0] < 0)
    np.testing.assert_allclose(both.instants[both.instants > 0], fwd, atol=1e-9)
    assert both.instants[0] < -19.0
    assert np.all(both.deltas > 0)
    # the interval holding t = 0 carries j = 0
    assert both.locate(0.0).j == 0


def test_state_triggered_is_reproducible():
    a = build_domain(_example_rule(), (-5.0, 10.0))
    b = build_domain(_example_rule(), (-5.0, 10.0))
    np.testing.assert_allclose(a.instants, b.instants, atol=1e-9)


def test_dwell_time_violation():
    with pytest.raises(AssumptionError, match="jump-spacing"):
        build_domain(_example_rule(), (0.0, 15.0), delta_lower=2.0)


def test_periodic_instants():
    d = build_domain(Periodic(1.0), (0.0, 5.0))
    np.testing.assert_array_equal(d.instants, [0, 1, 2, 3, 4, 5])
    assert [iv.j for iv in d.intervals] == [0, 1, 2, 3, 4]
    assert all(iv.full for iv in d.intervals)


def test_explicit_instants():
    d = build_domain(Explicit([0, 0.7, 1.9]))
    np.testing.assert_allclose(d.deltas, [0.7, 1.2])
    with pytest.raises(ValidationError, match="increasing"):
        build_domain(Explicit([0, 1, 1]))


def test_negative_time_indexing():
    d = build_domain(Periodic(1.0), (-3.0, 2.0))
    assert d.j_first == -3
    assert d.locate(0.0).j == 0
    assert d.locate(-0.5).j == -1
    assert d.locate(1.0).j == 1  # post-jump at an instant


def test_restrict_and_reverse():
    d = build_domain(Periodic(0.5), (-2.0, 3.0))
    r = d.restrict(0.0, 1.6)
    assert r.j_first == d.locate(0.0).j and r.t_end == 1.6
    assert not r.intervals[-1].full
    rev = d.reversed()
    assert rev.t_start == -3.0 and rev.t_end == 2.0
    assert len(rev.intervals) == len(d.intervals)
    assert rev.intervals[0].length == pytest.approx(d.intervals[-1].length)


@settings(max_examples=30, deadline=None)
@given(st.lists(st.floats(0.01, 2.0), min_size=1, max_size=20), st.floats(-5.0, 5.0))
def test_accepted_domains_have_positive_finite_spacing(gaps, t0):
    inst = t0 + np.concatenate([[0.0], np.cumsum(gaps)])
    d = build_domain(Explicit(inst))
    if d.deltas.size:
        assert d.deltas.min() > 0 and np.isfinite(d.deltas.max())
    assert d.intervals[0].start == d.t_start and d.intervals[-1].end == d.t_end
    for a, b in zip(d.intervals, d.intervals[1:]):
        assert a.end == b.start and b.j == a.j + 1
