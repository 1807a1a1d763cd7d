"""Finite step trajectories on [0, T] with values in N u {inf}.

A :class:`StepPath` is right-continuous and piecewise constant with finitely
many breakpoints.  Values are positive integers or ``math.inf`` (the point at
infinity of the one-point compactification).  Internally times and values are
kept in read-only float64 arrays; integers up to 2**53 are exact.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from typing import Iterable, NamedTuple, Sequence

import numpy as np

from .errors import (
    EmptyPath,
    GapTooSmall,
    InvalidState,
    NonMonotoneTimes,
    NonZeroStart,
    OutOfHorizon,
)

INF = math.inf

#: minimum breakpoint gap, relative to the horizon
TIME_GAP = 1e-12


def state(v) -> int | float:
    """Normalize a state value to ``int`` (finite) or ``math.inf``."""
    if isinstance(v, str):
        if v.strip().lower() in ("inf", "infinity", "+inf"):
            return INF
        v = float(v)
    if v == INF:
        return INF
    f = float(v)
    if not math.isfinite(f) or f != int(f) or f < 1:
        raise InvalidState(f"state values are integers >= 1 or inf, got {v!r}")
    return int(f)


def _check_values(values: np.ndarray) -> None:
    if np.isnan(values).any():
        raise InvalidState("NaN state value")
    fin = values[np.isfinite(values)]
    if (values == -np.inf).any() or (fin < 1).any() or (fin != np.floor(fin)).any():
        raise InvalidState("state values are integers >= 1 or inf")


class LastVisit(NamedTuple):
    """Result of :func:`last_visit_time`.

    ``attained`` is False when the supremum is a boundary point at which the
    path has already left the target set (the left limit is in the set).
    """

    time: float
    attained: bool


@dataclass(frozen=True)
class VisitStats:
    site: int
    count: int
    holding_times: tuple[float, ...]


class StepPath:
    """Canonical right-continuous step path.

    Use :func:`make_step_path` or :meth:`from_arrays` to build one.
    A breakpoint exactly at ``horizon`` encodes a jump at the final time.
    """

    __slots__ = ("horizon", "times", "values")

    def __init__(self, horizon: float, times: np.ndarray, values: np.ndarray):
        # trusted constructor: arrays are assumed canonical
        times = np.asarray(times, dtype=np.float64)
        values = np.asarray(values, dtype=np.float64)
        times.flags.writeable = False
        values.flags.writeable = False
        object.__setattr__(self, "horizon", float(horizon))
        object.__setattr__(self, "times", times)
        object.__setattr__(self, "values", values)

    def __setattr__(self, name, value):
        raise AttributeError("StepPath is immutable")

    # construction -----------------------------------------------------
    @classmethod
    def from_arrays(cls, horizon, times, values, *, coalesce: bool = False) -> "StepPath":
        """Validate, merge equal neighbours and build a path.

        With ``coalesce=True`` segments shorter than the minimum gap are
        absorbed instead of raising :class:`GapTooSmall`; simulators use this
        for exponential sojourns that fall below float resolution.
        """
        horizon = float(horizon)
        if not (horizon > 0 and math.isfinite(horizon)):
            raise OutOfHorizon(f"horizon must be positive and finite, got {horizon}")
        t = np.array(times, dtype=np.float64).ravel()
        v = np.array(values, dtype=np.float64).ravel()
        if t.size == 0:
            raise EmptyPath("a path needs at least one point")
        if t.size != v.size:
            raise ValueError("times and values differ in length")
        if t[0] != 0.0:
            raise NonZeroStart(f"first breakpoint must be at 0, got {t[0]}")
        _check_values(v)
        if t.size > 1 and not (np.diff(t) > 0).all():
            raise NonMonotoneTimes("breakpoint times must be strictly increasing")
        if t[-1] > horizon:
            raise OutOfHorizon(f"breakpoint {t[-1]} beyond horizon {horizon}")
        t, v = _merge(t, v)
        tau = TIME_GAP * horizon
        if coalesce:
            t, v = _coalesce(t, v, horizon, tau)
        else:
            if t.size > 1 and np.diff(t).min() < tau:
                raise GapTooSmall("breakpoints closer than the minimum gap")
            if t.size > 1 and t[-1] < horizon and horizon - t[-1] < tau:
                raise GapTooSmall("final segment shorter than the minimum gap")
        return cls(horizon, t, v)

    @classmethod
    def constant(cls, value, horizon: float = 1.0) -> "StepPath":
        return cls.from_arrays(horizon, [0.0], [state(value)])

    # basic accessors ---------------------------------------------------
    @property
    def points(self) -> list[tuple[float, int | float]]:
        return [(float(t), _pyval(v)) for t, v in zip(self.times, self.values)]

    @property
    def ends(self) -> np.ndarray:
        """Right end of every segment (the last one ends at the horizon)."""
        return np.append(self.times[1:], self.horizon)

    @property
    def durations(self) -> np.ndarray:
        return self.ends - self.times

    @property
    def terminal_value(self):
        return _pyval(self.values[-1])

    def max_finite_value(self) -> int:
        fin = self.values[np.isfinite(self.values)]
        return int(fin.max()) if fin.size else 1

    def __len__(self) -> int:
        return self.times.size

    def __call__(self, t):
        return eval_at(self, t)

    def __eq__(self, other) -> bool:
        if not isinstance(other, StepPath):
            return NotImplemented
        return (
            self.horizon == other.horizon
            and np.array_equal(self.times, other.times)
            and np.array_equal(self.values, other.values)
        )

    def __hash__(self) -> int:
        return hash((self.horizon, self.times.tobytes(), self.values.tobytes()))

    def __repr__(self) -> str:
        pts = ", ".join(f"({t:g}, {_fmt(v)})" for t, v in self.points[:8])
        more = ", ..." if len(self) > 8 else ""
        return f"StepPath(T={self.horizon:g}, [{pts}{more}])"

    # serialization -----------------------------------------------------
    def to_dict(self) -> dict:
        return {
            "T": self.horizon,
            "points": [[t, "inf" if v == INF else v] for t, v in self.points],
        }

    @classmethod
    def from_dict(cls, d: dict) -> "StepPath":
        return make_step_path(d["T"], [(t, v) for t, v in d["points"]])

    def to_json(self) -> str:
        return json.dumps(self.to_dict())

    @classmethod
    def from_json(cls, s: str) -> "StepPath":
        return cls.from_dict(json.loads(s))


def _pyval(v: float):
    return INF if v == np.inf else int(v)


def _fmt(v) -> str:
    return "inf" if v == INF else str(v)


def _merge(t: np.ndarray, v: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    if v.size < 2:
        return t, v
    keep = np.empty(v.size, dtype=bool)
    keep[0] = True
    keep[1:] = v[1:] != v[:-1]
    return t[keep], v[keep]


def _coalesce(t, v, horizon, tau):
    short = np.diff(np.append(t, horizon)) < tau
    if t.size > 1 and t[-1] == horizon:
        short[-1] = False
    if not short.any():
        return t, v
    kt, kv = [0.0], [v[0]]
    for ti, vi in zip(t[1:], v[1:]):
        if ti - kt[-1] < tau:
            # previous segment too short: the new value takes it over
            kv[-1] = vi
        elif ti < horizon and horizon - ti < tau:
            continue
        else:
            kt.append(ti)
            kv.append(vi)
    return _merge(np.array(kt), np.array(kv))


def make_step_path(
    horizon: float,
    points: Iterable[tuple[float, object]],
    *,
    coalesce: bool = False,
) -> StepPath:
    """Build a canonical step path from ``(time, value)`` pairs.

    >>> make_step_path(1, [(0, 1), (0.3, 1)]).points
    [(0.0, 1)]
    """
    pts = list(points)
    if not pts:
        raise EmptyPath("a path needs at least one point")
    times = [float(t) for t, _ in pts]
    values = [state(v) for _, v in pts]
    return StepPath.from_arrays(horizon, times, values, coalesce=coalesce)


def in_levels(values: np.ndarray, m) -> np.ndarray:
    """Mask of values in {1..m}; for ``m = inf`` the finite values."""
    if m == INF:
        return np.isfinite(values)
    return values <= m


def _check_time(x: StepPath, t: float) -> None:
    if not (0.0 <= t <= x.horizon):
        raise OutOfHorizon(f"time {t} outside [0, {x.horizon}]")


def segment_index(x: StepPath, t: float) -> int:
    return int(np.searchsorted(x.times, t, side="right")) - 1


def eval_at(x: StepPath, t: float):
    """Right-continuous evaluation; ``eval_at(x, T)`` is the final value."""
    _check_time(x, t)
    return _pyval(x.values[segment_index(x, t)])


def last_visit_time(x: StepPath, m, t: float) -> LastVisit | None:
    """Supremum of ``{s <= t : x(s) <= m}``, or ``None`` when the set is empty."""
    _check_time(x, t)
    m = state(m)
    i = segment_index(x, t)
    inside = in_levels(x.values[: i + 1], m)
    if inside[i]:
        return LastVisit(float(t), True)
    hits = np.flatnonzero(inside)
    if hits.size == 0:
        return None
    return LastVisit(float(x.times[hits[-1] + 1]), False)


def time_at_infinity(x: StepPath) -> float:
    d = x.durations[x.values == np.inf]
    return math.fsum(d.tolist())


def visit_stats(x: StepPath, j: int) -> VisitStats:
    """Number of visits to ``j`` and their holding times.

    A zero-length terminal segment (jump exactly at the horizon) is not a
    visit.
    """
    d = x.durations
    sel = (x.values == j) & (d > 0)
    hold = tuple(float(h) for h in d[sel])
    return VisitStats(int(j), len(hold), hold)


def is_continuous_at_T(x: StepPath) -> bool:
    return bool(x.times[-1] < x.horizon)


def decompose(x: StepPath) -> tuple[float, list[tuple[float, int | float]]]:
    return x.horizon, x.points


def occupation_times(x: StepPath) -> dict:
    """Total time spent at each value (``inf`` included)."""
    out: dict = {}
    for v, d in zip(x.values.tolist(), x.durations.tolist()):
        if d > 0:
            out.setdefault(_pyval(v), []).append(d)
    return {k: math.fsum(v) for k, v in out.items()}


def load_path(path) -> StepPath:
    with open(path) as fh:
        return StepPath.from_dict(json.load(fh))


def dump_path(x: StepPath, path) -> None:
    with open(path, "w") as fh:
        json.dump(x.to_dict(), fh)
        fh.write("\n")


def as_paths(items: Sequence) -> list[StepPath]:
    return [p if isinstance(p, StepPath) else StepPath.from_dict(p) for p in items]
