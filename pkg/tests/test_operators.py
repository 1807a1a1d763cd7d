import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from conftest import step_paths
from softpath.errors import (
    HorizonMismatch,
    InconsistentTower,
    InvalidTimeChange,
    NeverVisitsA,
    NonStabilizingTower,
    StartOutsideA,
)
from softpath.operators import (
    PathTower,
    TimeChange,
    apply_time_change,
    project_infinity,
    project_last_visit,
    reconstruct_from_tower,
    record_last_visit_in,
    trace_on,
)
from softpath.paths import INF, StepPath, make_step_path, time_at_infinity
from softpath.paths import TIME_GAP


def P(*pts, T=1.0):
    return make_step_path(T, pts)


def brute_R(x, m, t):
    """(R_m x)(t) straight from the definition: last value in {1..m} seen up to t, else 1."""
    last = 1
    for ti, vi in x.points:
        if ti > t:
            break
        if vi != INF and vi <= m:
            last = vi
    return last


# --- examples ---------------------------------------------------------------------

def test_projection_examples(spike):
    assert project_last_visit(spike, 3) == StepPath.constant(1)
    assert project_last_visit(P((0, 7), (0.4, 2)), 3) == P((0, 1), (0.4, 2))
    assert project_last_visit(P((0, 1), (0.2, "inf"), (0.5, 2)), INF) == P((0, 1), (0.5, 2))
    assert project_infinity(P((0, "inf"), (0.5, 3))) == P((0, 1), (0.5, 3))


def test_time_change_examples():
    x = P((0, 1), (0.5, 2))
    lam = TimeChange([(0, 0), (0.4, 0.5), (1, 1)])
    assert apply_time_change(x, lam) == P((0, 1), (0.4, 2))
    assert apply_time_change(x, TimeChange.identity()) == x
    c = StepPath.constant(3)
    assert apply_time_change(c, lam) == c
    with pytest.raises(HorizonMismatch):
        apply_time_change(x, TimeChange.identity(2.0))


@pytest.mark.parametrize(
    "knots",
    [
        [(0, 0)],
        [(0, 0.1), (1, 1)],
        [(0, 0), (1, 0.9)],
        [(0, 0), (0.5, 0.6), (0.4, 0.7), (1, 1)],
        [(0, 0), (0.5, 0.5), (0.6, 0.5), (1, 1)],
    ],
)
def test_time_change_validation(knots):
    with pytest.raises(InvalidTimeChange):
        TimeChange(knots)


def test_time_change_json():
    lam = TimeChange([(0, 0), (0.4, 0.5), (1, 1)])
    assert lam.to_dict() == {"knots": [[0.0, 0.0], [0.4, 0.5], [1.0, 1.0]]}
    assert TimeChange.from_dict(lam.to_dict()) == lam
    assert lam.inverse().inverse() == lam


def test_tower_examples(spike):
    tw = PathTower.of(spike, 6)
    assert reconstruct_from_tower(tw) == spike
    ones = PathTower([StepPath.constant(1)] * 4)
    assert reconstruct_from_tower(ones) == StepPath.constant(1)
    # truncated staircase: level m carries a segment at value m
    M = 6
    stair = [
        make_step_path(1, [(0, 1)] + [(1 - 2.0**-k, k + 1) for k in range(1, m)])
        for m in range(1, M + 1)
    ]
    tw = PathTower(stair)
    with pytest.raises(NonStabilizingTower):
        reconstruct_from_tower(tw)


def test_tower_validation(spike):
    assert len(PathTower([StepPath.constant(1), StepPath.constant(2)])) == 2
    with pytest.raises(InconsistentTower):
        PathTower([StepPath.constant(1), StepPath.constant(2), P((0, 1), (0.5, 3))])
    with pytest.raises(InconsistentTower):
        PathTower([StepPath.constant(2)])
    with pytest.raises(InconsistentTower):
        PathTower([StepPath.constant(1), StepPath.constant(1, 2.0)])
    assert PathTower.of(spike, 5)[5] == spike


def test_trace_examples(spike):
    tr = trace_on(spike, {1})
    assert tr == StepPath.constant(1, 0.8)
    x = P((0, 2), (0.5, 3))
    assert trace_on(x, {2, 3}) == x
    with pytest.raises(NeverVisitsA):
        trace_on(P((0, 4)), {1, 2})


def test_trace_terminal_jump():
    x = P((0, 1), (0.3, 5), (1.0, 2))
    tr = trace_on(x, {1, 2})
    assert tr.horizon == pytest.approx(0.3)
    assert tr.points == [(0.0, 1), (tr.horizon, 2)]


def test_last_visit_process_examples(spike):
    assert record_last_visit_in(spike, {1}) == StepPath.constant(1)
    x = P((0, 2), (0.5, 3))
    assert record_last_visit_in(x, {2, 3}) == x
    assert record_last_visit_in(P((0, 2), (0.4, 9), (0.6, 3)), {2, 3}) == P((0, 2), (0.6, 3))
    with pytest.raises(StartOutsideA):
        record_last_visit_in(P((0, 9), (0.5, 2)), {2})


# --- properties --------------------------------------------------------------------

@given(step_paths(allow_inf=True, terminal_jump=True), st.integers(1, 9))
def test_projection_matches_definition(x, m):
    y = project_last_visit(x, m)
    for t in list(x.times) + [x.horizon]:
        assert y(t) == brute_R(x, m, t)
    assert np.isfinite(y.values).all() and (y.values <= m).all()


@given(step_paths(allow_inf=True, terminal_jump=True), st.integers(1, 8))
def test_tower_monotone(x, m):
    a, b = project_last_visit(x, m), project_last_visit(x, m + 1)
    for t in np.union1d(a.times, b.times):
        assert a(t) <= b(t)


@given(step_paths(allow_inf=True, terminal_jump=True))
def test_stabilisation(x):
    top = project_last_visit(x, INF)
    M = x.max_finite_value()
    for m in range(M, M + 3):
        assert project_last_visit(x, m) == top


@given(step_paths(allow_inf=True, terminal_jump=True), st.integers(1, 8), st.integers(0, 4))
def test_idempotence_against_grid(x, m, extra):
    ell = m + extra
    lhs = project_last_visit(project_last_visit(x, ell), m)
    assert lhs == project_last_visit(x, m)
    grid = np.linspace(0, 1, 501)
    assert all(lhs(t) == brute_R(x, m, t) for t in grid)


@given(step_paths(terminal_jump=True))
def test_fixed_point_without_infinity(x):
    assert project_last_visit(x, INF) == x


@st.composite
def time_changes(draw):
    k = draw(st.integers(0, 4))
    s = sorted(draw(st.sets(st.integers(1, 99), min_size=k, max_size=k)))
    lam = sorted(draw(st.sets(st.integers(1, 99), min_size=k, max_size=k)))
    return TimeChange([(0, 0)] + [(a / 100, b / 100) for a, b in zip(s, lam)] + [(1, 1)])


@given(step_paths(allow_inf=True, terminal_jump=True), time_changes(), st.integers(1, 9))
def test_time_change_equivariance(x, lam, m):
    a = project_last_visit(apply_time_change(x, lam), m)
    b = apply_time_change(project_last_visit(x, m), lam)
    assert np.array_equal(a.values, b.values)
    assert np.abs(a.times - b.times).max() <= TIME_GAP * x.horizon


@given(step_paths(vmax=6, terminal_jump=True), st.sets(st.integers(1, 6), min_size=1))
def test_last_visit_process_agrees_on_A(x, A):
    if x.points[0][1] not in A:
        return
    v = record_last_visit_in(x, A)
    assert set(v.values.tolist()) <= set(A)
    for t in np.append(x.times, x.horizon):
        if x(t) in A:
            assert v(t) == x(t)


@given(step_paths(vmax=6), st.integers(1, 6))
def test_last_visit_process_generalises_projection(x, m):
    if x.points[0][1] > m:
        return
    assert record_last_visit_in(x, range(1, m + 1)) == project_last_visit(x, m)


@given(step_paths(vmax=6, allow_inf=True, terminal_jump=True), st.sets(st.integers(1, 6), min_size=1))
def test_trace_horizon_and_values(x, A):
    inside = sum(d for v, d in zip(x.values, x.durations) if v in A)
    if inside == 0:
        with pytest.raises(NeverVisitsA):
            trace_on(x, A)
        return
    tr = trace_on(x, A)
    assert tr.horizon == pytest.approx(inside, abs=1e-12)
    assert set(tr.values.tolist()) <= set(A)


@given(step_paths(terminal_jump=True))
def test_tower_round_trip(x):
    M = x.max_finite_value()
    tw = PathTower.of(x, M + 1)
    y = reconstruct_from_tower(tw)
    assert y == x
    assert all(project_last_visit(y, m) == tw[m] for m in range(1, M + 2))


@given(step_paths(allow_inf=True))
def test_projection_removes_infinity(x):
    assert time_at_infinity(project_last_visit(x, INF)) == 0
