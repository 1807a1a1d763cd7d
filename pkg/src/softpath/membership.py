"""Membership diagnostics for E* and Monte Carlo estimators of the tightness conditions."""

from __future__ import annotations

import json
import math
import os
from dataclasses import dataclass, field
from typing import Mapping, Sequence

import numpy as np

from .errors import EmptyEnsemble
from .operators import PathTower, project_last_visit
from .paths import INF, StepPath, is_continuous_at_T, state, time_at_infinity, visit_stats


@dataclass(frozen=True)
class Ensemble:
    paths: tuple
    weights: np.ndarray = field(default=None, repr=False)

    def __post_init__(self):
        paths = tuple(self.paths)
        if not paths:
            raise EmptyEnsemble("an ensemble needs at least one path")
        T = paths[0].horizon
        if any(p.horizon != T for p in paths):
            raise ValueError("all paths in an ensemble share one horizon")
        if self.weights is None:
            w = np.full(len(paths), 1.0 / len(paths))
        else:
            w = np.asarray(self.weights, dtype=np.float64)
            if w.shape != (len(paths),) or (w < 0).any() or not np.isfinite(w).all():
                raise ValueError("weights must be one non-negative number per path")
            total = math.fsum(w.tolist())
            if total <= 0:
                raise ValueError("weights sum to zero")
            w = w / total
        w.flags.writeable = False
        object.__setattr__(self, "paths", paths)
        object.__setattr__(self, "weights", w)

    def __len__(self):
        return len(self.paths)

    @property
    def horizon(self) -> float:
        return self.paths[0].horizon

    @property
    def n_eff(self) -> float:
        return 1.0 / math.fsum((self.weights**2).tolist())

    def mean(self, f: np.ndarray) -> tuple[float, float]:
        """Weighted mean of per-path values and its Monte Carlo standard error."""
        f = np.asarray(f, dtype=np.float64)
        w = self.weights
        mu = math.fsum((w * f).tolist())
        var = math.fsum((w * (f - mu) ** 2).tolist())
        return mu, math.sqrt(max(var, 0.0) / self.n_eff)


def load_ensemble(src) -> Ensemble:
    """Read an ensemble from a directory of path JSON files or a single JSON file.

    A single file may hold one path, a list of paths, or
    ``{"paths": [...], "weights": [...]}``.
    """
    src = os.fspath(src)
    if os.path.isdir(src):
        names = sorted(f for f in os.listdir(src) if f.endswith(".json") and f != "manifest.json")
        paths = []
        for name in names:
            with open(os.path.join(src, name)) as fh:
                paths.append(StepPath.from_dict(json.load(fh)))
        return Ensemble(paths)
    with open(src) as fh:
        data = json.load(fh)
    if isinstance(data, list):
        return Ensemble([StepPath.from_dict(d) for d in data])
    if "paths" in data:
        return Ensemble([StepPath.from_dict(d) for d in data["paths"]], data.get("weights"))
    return Ensemble([StepPath.from_dict(data)])


# --- E* membership ----------------------------------------------------------

@dataclass(frozen=True)
class MembershipReport:
    in_E_star: bool
    lambda_T: float
    continuous_at_T: bool
    has_infinite_value_segment: bool
    failing_condition: str | None = None


def check_E_star(x: StepPath) -> MembershipReport:
    """Check the four conditions characterising E* on a step path.

    One-sided limits always exist for step paths, so (a) holds.  Condition
    (b) can only fail through segments at infinity, which are reported under
    (d).  Condition (c) is continuity at the horizon.  The first failing
    condition in alphabetical order is reported.
    """
    lam = time_at_infinity(x)
    cont = is_continuous_at_T(x)
    has_inf = bool(((x.values == np.inf) & (x.durations > 0)).any())
    fail = None
    if not cont:
        fail = "c"
    elif has_inf:
        fail = "d"
    return MembershipReport(fail is None, lam, cont, has_inf, fail)


@dataclass(frozen=True)
class TowerReport:
    passed: bool
    condition: str | None = None  # "visits", "holding" or "continuity"
    m: int | None = None
    level: int | None = None
    value: float | None = None


def check_tower_conditions(tw: PathTower | Sequence[StepPath], k_caps: Mapping[int, int] | int | None = None,
                           eps_floors: Mapping[int, float] | float | None = None) -> TowerReport:
    """Scan the tower level by level for the first violated condition.

    For every ``m`` with a cap, each level ``l >= m`` must visit ``m`` at most
    ``k_caps[m]`` times with every holding time at ``m`` at least
    ``eps_floors[m]``.  Every level must be continuous at the horizon.
    A scalar cap or floor applies to all ``m``.
    """
    if not isinstance(tw, PathTower):
        tw = PathTower(tw)
    M = len(tw)

    def lookup(table, m):
        if table is None:
            return None
        if isinstance(table, Mapping):
            return table.get(m)
        return table

    for ell in range(1, M + 1):
        y = tw[ell]
        if not is_continuous_at_T(y):
            return TowerReport(False, "continuity", None, ell, float(y.horizon))
        for m in range(1, ell + 1):
            vs = visit_stats(y, m)
            cap = lookup(k_caps, m)
            if cap is not None and vs.count > cap:
                return TowerReport(False, "visits", m, ell, float(vs.count))
            floor = lookup(eps_floors, m)
            if floor is not None and vs.holding_times and min(vs.holding_times) < floor:
                return TowerReport(False, "holding", m, ell, min(vs.holding_times))
    return TowerReport(True)


# --- per-path functionals ------------------------------------------------------

def time_at_or_above(x: StepPath, m) -> float:
    d = x.durations[x.values >= m]
    return math.fsum(d.tolist())


def visit_count(x: StepPath, m: int) -> int:
    return visit_stats(x, m).count


def min_holding(x: StepPath, m: int) -> float:
    """Shortest holding time at ``m``; ``inf`` when ``m`` is never visited."""
    h = visit_stats(x, m).holding_times
    return min(h) if h else INF


def kth_holding(x: StepPath, m: int, k: int) -> float | None:
    h = visit_stats(x, m).holding_times
    return h[k - 1] if k <= len(h) else None


def _projected(ens: Ensemble, ell) -> list[StepPath]:
    ell = state(ell)
    return [project_last_visit(p, ell) for p in ens.paths]


def visit_counts(ens: Ensemble, m: int, ell) -> np.ndarray:
    return np.array([visit_count(p, m) for p in _projected(ens, ell)], dtype=np.int64)


def min_holdings(ens: Ensemble, m: int, ell) -> np.ndarray:
    return np.array([min_holding(p, m) for p in _projected(ens, ell)])


def _check(ens):
    if not isinstance(ens, Ensemble):
        ens = Ensemble(ens)
    return ens


def estimate_condition_a(ens: Ensemble, ell, m) -> tuple[float, float]:
    ens = _check(ens)
    return ens.mean([time_at_or_above(p, m) for p in _projected(ens, ell)])


def estimate_condition_b(ens: Ensemble, m: int, k: int, ell) -> tuple[float, float]:
    if k < 1:
        raise ValueError("k must be >= 1")
    ens = _check(ens)
    return ens.mean(visit_counts(ens, m, ell) >= k)


def estimate_condition_c(ens: Ensemble, m: int, eps: float, ell, *, k: int | None = None) -> tuple[float, float]:
    """Probability that some holding time at ``m`` of ``R_ell x`` is below ``eps``.

    With ``k`` given, the event is instead that the ``k``-th visit exists and
    is shorter than ``eps``.  Paths that never visit ``m`` contribute 0.
    """
    if not eps > 0:
        raise ValueError("eps must be positive")
    ens = _check(ens)
    proj = _projected(ens, ell)
    if k is None:
        hit = [min_holding(p, m) < eps for p in proj]
    else:
        hit = []
        for p in proj:
            h = kth_holding(p, m, k)
            hit.append(h is not None and h < eps)
    return ens.mean(hit)


# --- condition grids ---------------------------------------------------------

CSV_HEADER = ("condition", "m", "k_or_eps", "ell", "estimate", "std_error", "n_paths")


@dataclass
class ConditionEstimates:
    n_paths: int = 0
    cond_a: dict = field(default_factory=dict)  # (ell, m) -> (est, se)
    cond_b: dict = field(default_factory=dict)  # (m, k, ell) -> (est, se)
    cond_c: dict = field(default_factory=dict)  # (m, eps, ell) -> (est, se)

    def rows(self) -> list[tuple]:
        out = []
        for (ell, m), (e, s) in sorted(self.cond_a.items()):
            out.append(("a", m, "", ell, e, s, self.n_paths))
        for (m, k, ell), (e, s) in sorted(self.cond_b.items()):
            out.append(("b", m, k, ell, e, s, self.n_paths))
        for (m, eps, ell), (e, s) in sorted(self.cond_c.items()):
            out.append(("c", m, eps, ell, e, s, self.n_paths))
        return out

    def to_dict(self) -> dict:
        return {
            "n_paths": self.n_paths,
            "rows": [dict(zip(CSV_HEADER, r)) for r in self.rows()],
        }


def estimate_grid(ens: Ensemble, ells: Sequence, ms: Sequence[int], ks: Sequence[int] = (),
                  epss: Sequence[float] = ()) -> ConditionEstimates:
    """All three condition estimates over the given grids, projecting once per ``ell``."""
    ens = _check(ens)
    out = ConditionEstimates(len(ens))
    for ell in ells:
        proj = _projected(ens, ell)
        for m in ms:
            out.cond_a[(ell, m)] = ens.mean([time_at_or_above(p, m) for p in proj])
            counts = np.array([visit_count(p, m) for p in proj])
            for k in ks:
                out.cond_b[(m, k, ell)] = ens.mean(counts >= k)
            mins = np.array([min_holding(p, m) for p in proj])
            for eps in epss:
                out.cond_c[(m, eps, ell)] = ens.mean(mins < eps)
    return out
