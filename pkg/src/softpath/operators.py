"""Last-visit projections, time changes, towers, trace and last-visit transforms."""

from __future__ import annotations

import json
import math
from typing import Iterable, Sequence

import numpy as np

from .errors import (
    HorizonMismatch,
    InconsistentTower,
    InvalidTimeChange,
    NeverVisitsA,
    NonStabilizingTower,
    StartOutsideA,
)
from .paths import INF, StepPath, in_levels, state


class TimeChange:
    """Increasing piecewise-linear bijection of [0, T] fixing both ends.

    ``knots`` are pairs ``(s, lam(s))``; the map is linear in between.
    """

    __slots__ = ("s", "lam")

    def __init__(self, knots: Iterable[tuple[float, float]]):
        k = np.array([tuple(map(float, p)) for p in knots], dtype=np.float64)
        if k.ndim != 2 or k.shape[0] < 2:
            raise InvalidTimeChange("a time change needs at least two knots")
        s, lam = k[:, 0].copy(), k[:, 1].copy()
        if s[0] != 0 or lam[0] != 0 or s[-1] != lam[-1] or not s[-1] > 0:
            raise InvalidTimeChange("time change must fix 0 and T")
        if not ((np.diff(s) > 0).all() and (np.diff(lam) > 0).all()):
            raise InvalidTimeChange("time change must be strictly increasing")
        s.flags.writeable = False
        lam.flags.writeable = False
        object.__setattr__(self, "s", s)
        object.__setattr__(self, "lam", lam)

    def __setattr__(self, name, value):
        raise AttributeError("TimeChange is immutable")

    @classmethod
    def identity(cls, horizon: float = 1.0) -> "TimeChange":
        return cls([(0.0, 0.0), (horizon, horizon)])

    @property
    def horizon(self) -> float:
        return float(self.s[-1])

    @property
    def knots(self) -> list[tuple[float, float]]:
        return list(zip(self.s.tolist(), self.lam.tolist()))

    def __call__(self, t):
        return np.interp(t, self.s, self.lam)

    def inverse_at(self, t):
        # exact on knot images: np.interp returns fp[j] when x == xp[j]
        return np.interp(t, self.lam, self.s)

    def inverse(self) -> "TimeChange":
        return TimeChange(zip(self.lam, self.s))

    def slopes(self) -> np.ndarray:
        return np.diff(self.lam) / np.diff(self.s)

    def __eq__(self, other):
        if not isinstance(other, TimeChange):
            return NotImplemented
        return np.array_equal(self.s, other.s) and np.array_equal(self.lam, other.lam)

    def __repr__(self):
        return f"TimeChange({self.knots!r})"

    def to_dict(self) -> dict:
        return {"knots": [list(k) for k in self.knots]}

    @classmethod
    def from_dict(cls, d: dict) -> "TimeChange":
        return cls(d["knots"])

    def to_json(self) -> str:
        return json.dumps(self.to_dict())


def _last_visit_fill(values: np.ndarray, inside: np.ndarray, default: float) -> np.ndarray:
    idx = np.where(inside, np.arange(values.size), -1)
    np.maximum.accumulate(idx, out=idx)
    return np.where(idx >= 0, values[np.maximum(idx, 0)], default)


def project_last_visit(x: StepPath, m) -> StepPath:
    """The last-visit projection onto {1..m} (``m = inf`` gives the finite states).

    Before the first visit to the target set the projection is 1.
    """
    m = state(m)
    out = _last_visit_fill(x.values, in_levels(x.values, m), 1.0)
    return StepPath.from_arrays(x.horizon, x.times, out)


def project_infinity(x: StepPath) -> StepPath:
    return project_last_visit(x, INF)


def _as_set(A) -> np.ndarray:
    a = np.array(sorted({state(v) for v in A}), dtype=np.float64)
    if a.size == 0:
        raise ValueError("target set must be non-empty")
    return a


def record_last_visit_in(x: StepPath, A) -> StepPath:
    """Same-clock surgery: freeze the path at the last value seen in ``A``."""
    a = _as_set(A)
    inside = np.isin(x.values, a)
    if not inside[0]:
        raise StartOutsideA(f"x(0) = {x.values[0]:g} is not in the target set")
    out = _last_visit_fill(x.values, inside, 1.0)
    return StepPath.from_arrays(x.horizon, x.times, out)


def trace_on(x: StepPath, A) -> StepPath:
    """Excise the time spent outside ``A`` and glue the rest together.

    The result lives on ``[0, time spent in A]``.
    """
    a = _as_set(A)
    d = x.durations
    keep = np.isin(x.values, a) & (d > 0)
    if not keep.any():
        raise NeverVisitsA("the path spends no time in the target set")
    kd = d[keep]
    horizon = math.fsum(kd.tolist())
    times = np.concatenate(([0.0], np.cumsum(kd[:-1])))
    values = x.values[keep]
    if x.times[-1] == x.horizon and x.values[-1] in a and x.values[-1] != values[-1]:
        times = np.append(times, horizon)
        values = np.append(values, x.values[-1])
    return StepPath.from_arrays(horizon, times, values)


def apply_time_change(x: StepPath, lam: TimeChange) -> StepPath:
    """Return ``x o lam``; breakpoint ``t_i`` of x moves to ``lam^-1(t_i)``."""
    if lam.horizon != x.horizon:
        raise HorizonMismatch(f"time change on [0, {lam.horizon}], path on [0, {x.horizon}]")
    return StepPath.from_arrays(x.horizon, lam.inverse_at(x.times), x.values)


class PathTower:
    """Consistent family ``y_1, ..., y_M`` with ``R_m y_{m+1} = y_m``."""

    __slots__ = ("levels",)

    def __init__(self, levels: Sequence[StepPath]):
        levels = tuple(levels)
        if not levels:
            raise InconsistentTower("a tower needs at least one level")
        T = levels[0].horizon
        for m, y in enumerate(levels, start=1):
            if y.horizon != T:
                raise InconsistentTower("levels have different horizons")
            if not (np.isfinite(y.values).all() and (y.values <= m).all()):
                raise InconsistentTower(f"level {m} leaves S_{m}")
            if m < len(levels) and project_last_visit(levels[m], m) != y:
                raise InconsistentTower(f"R_{m} y_{m + 1} != y_{m}")
        object.__setattr__(self, "levels", levels)

    def __setattr__(self, name, value):
        raise AttributeError("PathTower is immutable")

    @classmethod
    def of(cls, x: StepPath, top: int) -> "PathTower":
        return cls([project_last_visit(x, m) for m in range(1, top + 1)])

    def __len__(self):
        return len(self.levels)

    def __getitem__(self, m: int) -> StepPath:
        """Level ``m`` (1-based)."""
        if m < 1:
            raise IndexError("levels are 1-based")
        return self.levels[m - 1]

    @property
    def horizon(self) -> float:
        return self.levels[0].horizon


def reconstruct_from_tower(tw: PathTower | Sequence[StepPath]) -> StepPath:
    """Recover the path whose projections are the tower levels.

    Finite data only pins down a finite-jump limit when the top two levels
    agree; otherwise :class:`NonStabilizingTower` is raised.
    """
    if not isinstance(tw, PathTower):
        tw = PathTower(tw)
    if len(tw) < 2 or tw.levels[-1] != tw.levels[-2]:
        raise NonStabilizingTower("top levels differ: the tower has not stabilized")
    return tw.levels[-1]
