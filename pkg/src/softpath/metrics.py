"""State metric, strong Skorohod metric between step paths, and the soft metric.

The Skorohod distance between step paths is computed combinatorially.  The
uniform part of the cost only takes values in the finite set of pairwise state
distances, so each candidate threshold ``delta`` is tried in increasing order.
For a fixed ``delta`` the smallest admissible log-slope bound ``eps`` is found
by bisection.  The feasibility test places the pulled-back breakpoints of
``y`` left to right while tracking the reachable positions as a union of
intervals.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import _backend, _purecore
from .errors import HorizonMismatch, TooLarge
from .operators import TimeChange, apply_time_change, project_last_visit
from .paths import INF, StepPath, state

DEFAULT_TOL = 1e-9
_ULP = np.finfo(np.float64).eps
_MAX_RECENTRE = 64


@dataclass(frozen=True)
class MetricResult:
    distance: float
    witness: TimeChange | None = None
    certified_error: float = 0.0
    terms: tuple[float, ...] = field(default=())


def _inv(v):
    v = np.asarray(v, dtype=np.float64)
    return np.where(np.isinf(v), 0.0, 1.0 / v)


def state_dist(a, b) -> float:
    """``|1/a - 1/b|`` with ``1/inf = 0``."""
    a, b = state(a), state(b)
    ia = 0.0 if a == INF else 1.0 / a
    ib = 0.0 if b == INF else 1.0 / b
    return abs(ia - ib)


def log_slope_norm(lam: TimeChange) -> float:
    """Largest ``|log|`` of a chord slope; attained on the linear pieces."""
    return float(np.abs(np.log(lam.slopes())).max())


def sup_dist(x: StepPath, y: StepPath) -> float:
    """Uniform distance ``sup_t d(x(t), y(t))`` between two step paths."""
    if x.horizon != y.horizon:
        raise HorizonMismatch("paths live on different horizons")
    t = np.union1d(x.times, y.times)
    ix = np.searchsorted(x.times, t, side="right") - 1
    iy = np.searchsorted(y.times, t, side="right") - 1
    return float(np.abs(_inv(x.values[ix]) - _inv(y.values[iy])).max())


def _intervals(x: StepPath):
    """Segment boundaries, segment values and the value at the horizon."""
    T = x.horizon
    if len(x) > 1 and x.times[-1] == T:
        return np.append(x.times[:-1], T), x.values[:-1], x.values[-1]
    return np.append(x.times, T), x.values, x.values[-1]


def _key(x: StepPath):
    return (len(x), x.times.tolist(), x.values.tolist())


def skorohod_dist(x: StepPath, y: StepPath, tol: float = DEFAULT_TOL, *, backend=None) -> MetricResult:
    """Strong Skorohod distance with a witness time change.

    The returned distance is attained by the witness and exceeds the true
    infimum by at most ``certified_error = tol``.
    """
    if x.horizon != y.horizon:
        raise HorizonMismatch(f"horizons differ: {x.horizon} vs {y.horizon}")
    if x == y:
        return MetricResult(0.0, TimeChange.identity(x.horizon), 0.0)
    if _key(y) < _key(x):
        # canonical argument order keeps the result exactly symmetric
        res = skorohod_dist(y, x, tol, backend=backend)
        return MetricResult(res.distance, res.witness.inverse(), res.certified_error)
    core = _backend.get(backend)
    T = x.horizon
    s, a, xT = _intervals(x)
    u, b, yT = _intervals(y)
    D = np.abs(_inv(b)[:, None] - _inv(a)[None, :])
    dT = abs(float(_inv(xT) - _inv(yT)))

    best = sup_dist(x, y)
    choice = None
    slack = (s.size + u.size + 4) * _ULP * T
    deltas = np.unique(np.concatenate((D.ravel(), [0.0, dT])))
    for delta in deltas[deltas >= dT]:
        delta = float(delta)
        if delta >= best:
            break
        compat = np.ascontiguousarray(D <= delta, dtype=np.uint8)
        if not (compat[0, 0] and compat[-1, -1]):
            continue
        if core.feasible(s, u, compat, delta, slack):
            best, choice = delta, (compat, delta)
            break
        eps = core.min_feasible_eps(s, u, compat, delta, best, tol, slack)
        if eps < best:
            best, choice = eps, (compat, eps)
    if choice is None:
        return MetricResult(best, TimeChange.identity(T), tol)
    witness = _witness(s, u, choice[0], choice[1], slack)
    return MetricResult(best, witness, tol)


def _witness(s, u, compat, eps, slack) -> TimeChange:
    """Backtrack through the reachable sets to an explicit time change."""
    sets = _purecore.reachable_sets(s.tolist(), u.tolist(), compat.tolist(), eps, slack)
    Q = u.size - 1
    T = float(s[-1])
    snap = 1e3 * slack
    p = [0.0] * (Q + 1)
    p[Q] = T
    for j in range(Q - 1, 0, -1):
        du = u[j + 1] - u[j]
        lo = math.exp(-eps) * du
        hi = math.exp(eps) * du
        A, B = _component(s, compat[j], p[j + 1], slack)
        win_lo = max(p[j + 1] - hi, A) - slack
        win_hi = min(p[j + 1] - lo, B) + slack
        ideal = p[j + 1] - du
        best_pt, best_gap = None, math.inf
        for f1, f2 in sets[j]:
            l1, l2 = max(f1, win_lo), min(f2, win_hi)
            if l1 > l2:
                continue
            pt = min(max(ideal, l1), l2)
            if abs(pt - ideal) < best_gap:
                best_pt, best_gap = pt, abs(pt - ideal)
        if best_pt is None:  # only reachable through rounding; stay close
            best_pt = min(max(ideal, win_lo), win_hi)
        k = int(np.argmin(np.abs(s - best_pt)))
        if abs(s[k] - best_pt) <= snap:
            best_pt = float(s[k])
        p[j] = min(best_pt, np.nextafter(p[j + 1], -np.inf))
    return TimeChange(zip(p, u.tolist()))


def _component(s, row, pos, slack):
    P = s.size - 1
    i = 0
    while i < P:
        if not row[i]:
            i += 1
            continue
        a = i
        while i < P and row[i]:
            i += 1
        if s[a] - slack <= pos <= s[i] + slack:
            return float(s[a]), float(s[i])
    return 0.0, float(s[-1])


def witness_cost(x: StepPath, y: StepPath, lam: TimeChange) -> float:
    """``max(sup_t d(x(t), y(lam(t))), ||lam||)`` for an explicit time change."""
    return max(sup_dist(x, apply_time_change(y, lam)), log_slope_norm(lam))


def skorohod_dist_oracle(x: StepPath, y: StepPath, depth: int = 6) -> float:
    """Brute-force minimum over piecewise-linear time changes on a refined grid.

    For each admissible uniform level ``delta`` the pulled-back breakpoints
    of ``y`` range over the dyadic grid of mesh ``T / 2**depth`` plus the
    breakpoints of both paths.  Then, for ``r = 1..depth``, a local mesh of
    step ``T / 2**(depth + r)`` is laid around the best knots and re-centred
    until it stops improving.  Every candidate is a genuine time change, so
    the value bounds ``d_S`` from above.  Meant for small test instances only.
    """
    if x.horizon != y.horizon:
        raise HorizonMismatch("paths live on different horizons")
    if len(x) > 7 or len(y) > 7 or depth > 12:
        raise TooLarge("oracle is limited to <= 6 jumps per path and depth <= 12")
    if x == y:
        return 0.0
    T = x.horizon
    s, a, xT = _intervals(x)
    u, b, yT = _intervals(y)
    D = np.abs(_inv(b)[:, None] - _inv(a)[None, :])
    dT = abs(float(_inv(xT) - _inv(yT)))
    h = T / 2**depth
    base = np.concatenate((np.linspace(0.0, T, 2**depth + 1), s, u))
    best = math.inf
    for delta in np.unique(np.concatenate((D.ravel(), [dT]))):
        if delta < dT:
            continue
        if delta >= best:
            break
        value, knots = _grid_search(s, u, D <= delta, base)
        for r in range(1, depth + 1):
            # re-centre on the current knots until this mesh stops helping
            for _ in range(_MAX_RECENTRE):
                if not knots:
                    break
                local = (np.asarray(knots)[:, None] + (h / 2**r) * np.arange(-4, 5)).ravel()
                v2, k2 = _grid_search(s, u, D <= delta, np.concatenate((base, local)))
                if v2 >= value:
                    break
                value, knots = v2, k2
        best = min(best, max(float(delta), value))
    return best


def _grid_search(s, u, compat, grid):
    """Minimax log-slope over knots from ``grid`` keeping y-segment j on x-segments allowed by ``compat[j]``."""
    T = float(s[-1])
    P = s.size - 1
    grid = np.unique(np.clip(grid, 0.0, T))
    G = grid.size
    # x-segments met by the open interval (grid[g'], grid[g])
    first = np.clip(np.searchsorted(s, grid, side="right") - 1, 0, P - 1)
    last = np.clip(np.searchsorted(s, grid, side="left") - 1, 0, P - 1)
    gap = grid[None, :] - grid[:, None]
    upper = gap > 0
    span = first[:, None] <= last[None, :]
    cost = np.full(G, np.inf)
    cost[0] = 0.0
    back = []
    for j in range(u.size - 1):
        bad = np.concatenate(([0], np.cumsum(~compat[j])))
        ok = span & (bad[np.minimum(last + 1, P)][None, :] - bad[first][:, None] == 0)
        SL = np.abs(np.log(np.where(upper, gap, 1.0) / (u[j + 1] - u[j])))
        total = np.maximum(cost[:, None], SL)
        total[~(upper & ok)] = np.inf
        back.append(total.argmin(axis=0))
        cost = total.min(axis=0)
        if j < u.size - 2:
            cost[-1] = np.inf  # interior knots stay below T
    if not np.isfinite(cost[-1]):
        return math.inf, []
    knots = []
    g = G - 1
    for arg in reversed(back[1:]):
        g = int(arg[g])
        knots.append(float(grid[g]))
    return float(cost[-1]), knots[::-1]


def soft_dist(x: StepPath, y: StepPath, tol: float = DEFAULT_TOL, *, backend=None) -> MetricResult:
    """The soft metric: sum of ``2**-m`` times the Skorohod distance of the level-m projections.

    Beyond the largest finite value of either path every projection equals
    the projection onto all finite states, so the tail is summed in closed
    form.
    """
    if x.horizon != y.horizon:
        raise HorizonMismatch(f"horizons differ: {x.horizon} vs {y.horizon}")
    M = max(x.max_finite_value(), y.max_finite_value())
    terms = []
    parts = []
    for m in range(1, M):
        d = _level_dist(project_last_visit(x, m), project_last_visit(y, m), tol, backend)
        terms.append(d)
        parts.append(d * 2.0**-m)
    d_top = _level_dist(project_last_visit(x, INF), project_last_visit(y, INF), tol, backend)
    terms.append(d_top)
    parts.append(d_top * 2.0 ** -(M - 1))
    return MetricResult(math.fsum(parts), None, tol, tuple(terms))


def _level_dist(xm, ym, tol, backend) -> float:
    if xm == ym:
        return 0.0
    return skorohod_dist(xm, ym, tol, backend=backend).distance


def level_distances(x: StepPath, y: StepPath, m_max: int, tol: float = DEFAULT_TOL) -> list[float]:
    """``d_S(R_m x, R_m y)`` for ``m = 1..m_max``."""
    return [
        _level_dist(project_last_visit(x, m), project_last_visit(y, m), tol, None)
        for m in range(1, m_max + 1)
    ]
