"""End-to-end experiments: the metastability pipeline, path-family convergence tests and report output."""

from __future__ import annotations

import csv
import json
import math
import os
import sys
from dataclasses import dataclass, field

import numpy as np
from scipy import stats

from .chains import ZeroRangeSpec, derive_seeds, run_replicas, spec_from_mapping
from .errors import BadConfiguration
from .membership import CSV_HEADER, ConditionEstimates, Ensemble, estimate_grid, min_holding
from .metrics import level_distances, soft_dist
from .operators import project_last_visit, record_last_visit_in, trace_on
from .paths import StepPath, make_step_path, visit_stats

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

KS_QUANTILES = (0.1, 0.25, 0.5, 0.75, 0.9)


@dataclass
class ExperimentConfig:
    model: dict
    N_sweep: list
    T: float
    replicas: int
    m_grid: list
    ell_grid: list
    k_grid: list
    eps_grid: list
    out: str = "out"
    seed: int = 0
    start: object = None

    def __post_init__(self):
        for name in ("N_sweep", "m_grid", "ell_grid", "k_grid", "eps_grid"):
            if not getattr(self, name):
                raise BadConfiguration(f"{name} must be non-empty")
        if any(b <= a for a, b in zip(self.N_sweep, self.N_sweep[1:])):
            raise BadConfiguration("N_sweep must be strictly increasing")
        if not self.T > 0 or self.replicas < 1:
            raise BadConfiguration("need T > 0 and replicas >= 1")

    @classmethod
    def from_mapping(cls, d: dict) -> "ExperimentConfig":
        grids = d.get("grids", {})
        return cls(
            model=dict(d["model"]),
            N_sweep=[int(n) for n in d["N_sweep"]],
            T=float(d["T"]),
            replicas=int(d["replicas"]),
            m_grid=[int(v) for v in grids.get("m", d.get("m_grid", []))],
            ell_grid=[int(v) for v in grids.get("ell", d.get("ell_grid", []))],
            k_grid=[int(v) for v in grids.get("k", d.get("k_grid", []))],
            eps_grid=[float(v) for v in grids.get("eps", d.get("eps_grid", []))],
            out=str(d.get("out", "out")),
            seed=int(d.get("seed", 0)),
            start=d.get("start"),
        )

    @classmethod
    def from_toml(cls, path) -> "ExperimentConfig":
        with open(path, "rb") as fh:
            return cls.from_mapping(tomllib.load(fh))

    def spec_for(self, N: int):
        return spec_from_mapping({**self.model, "N": N})

    def to_dict(self) -> dict:
        return {
            "model": self.model, "N_sweep": self.N_sweep, "T": self.T, "replicas": self.replicas,
            "m_grid": self.m_grid, "ell_grid": self.ell_grid, "k_grid": self.k_grid,
            "eps_grid": self.eps_grid, "seed": self.seed, "start": self.start,
        }


@dataclass
class ConvergenceReport:
    config: dict = field(default_factory=dict)
    per_N: list = field(default_factory=list)
    trends: dict = field(default_factory=dict)
    invariants: dict = field(default_factory=dict)
    conditions: dict = field(default_factory=dict)  # N -> ConditionEstimates

    @property
    def hard_ok(self) -> bool:
        return all(v["ok"] for v in self.invariants.values())

    def to_dict(self) -> dict:
        return _clean({
            "config": self.config,
            "per_N": self.per_N,
            "trends": self.trends,
            "invariants": self.invariants,
            "hard_invariants_hold": self.hard_ok,
            "conditions": {str(N): c.to_dict() for N, c in self.conditions.items()},
        })


def _clean(obj):
    """JSON-safe copy: non-finite floats become strings, tuples become lists."""
    if isinstance(obj, dict):
        return {str(k): _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        f = float(obj)
        if math.isfinite(f):
            return f
        return "nan" if math.isnan(f) else ("inf" if f > 0 else "-inf")
    if isinstance(obj, np.ndarray):
        return _clean(obj.tolist())
    return obj


# --- pipeline ----------------------------------------------------------------

def _wells(spec) -> int:
    if isinstance(spec, ZeroRangeSpec):
        return spec.L
    if spec.M is None:
        raise BadConfiguration("the trap-walk pipeline needs a deep-trap count M")
    return spec.M


def ks_exponential(h) -> dict:
    """KS distance of holding times to the exponential law with the fitted mean."""
    h = np.asarray(h, dtype=np.float64)
    if h.size < 2:
        return {"n": int(h.size), "mean": float(h.mean()) if h.size else math.nan,
                "ks_stat": math.nan, "p_value": math.nan}
    mean = math.fsum(h.tolist()) / h.size
    res = stats.kstest(h, "expon", args=(0.0, mean))
    return {"n": int(h.size), "mean": mean, "ks_stat": float(res.statistic), "p_value": float(res.pvalue)}


def markov_diagnostic(sequences) -> dict:
    """Chi-squared test that the next well is independent of the previous one given the current.

    A diagnostic only: it cannot establish that the trace is Markov.
    """
    triples: dict = {}
    for seq in sequences:
        for a, b, c in zip(seq, seq[1:], seq[2:]):
            triples.setdefault(b, {}).setdefault((a, c), 0)
            triples[b][(a, c)] += 1
    chi2, dof = 0.0, 0
    for cur in sorted(triples):
        tab = triples[cur]
        prev = sorted({a for a, _ in tab})
        nxt = sorted({c for _, c in tab})
        if len(prev) < 2 or len(nxt) < 2:
            continue
        m = np.array([[tab.get((a, c), 0) for c in nxt] for a in prev], dtype=np.float64)
        res = stats.chi2_contingency(m, correction=False)
        chi2 += float(res.statistic)
        dof += int(res.dof)
    p = float(stats.chi2.sf(chi2, dof)) if dof else math.nan
    return {"chi2": chi2, "dof": dof, "p_value": p, "flag": bool(dof and p < 0.01)}


def _ecdf_summary(h) -> dict:
    h = np.sort(np.asarray(h, dtype=np.float64))
    if h.size == 0:
        return {"n": 0}
    q = np.quantile(h, KS_QUANTILES)
    return {"n": int(h.size), "mean": math.fsum(h.tolist()) / h.size,
            "quantiles": dict(zip([str(v) for v in KS_QUANTILES], q.tolist()))}


def _agree_on_wells(x: StepPath, v: StepPath, K: int) -> bool:
    inside = x.values <= K
    idx = np.searchsorted(v.times, x.times[inside], side="right") - 1
    if not np.array_equal(v.values[idx], x.values[inside]):
        return False
    # v may not jump inside a well segment of x
    ends = x.ends[inside]
    jumps = np.searchsorted(v.times, ends, side="left") - 1
    return bool(np.array_equal(jumps, idx))


def _series_verdict(series) -> str:
    vals = [v for v in series if v is not None and not (isinstance(v, float) and math.isnan(v))]
    if len(vals) < 2:
        return "insufficient points"
    d = np.diff(vals)
    if (d <= 0).all():
        return "non-increasing"
    if (d >= 0).all():
        return "non-decreasing"
    return "mixed"


def analyse_ensemble(paths: list[StepPath], K: int, cfg: ExperimentConfig) -> tuple[dict, dict, ConditionEstimates]:
    """Summaries and hard-invariant checks for one ensemble with wells ``{1..K}``."""
    T = cfg.T
    A = range(1, K + 1)
    delta = K + 1
    ens = Ensemble(paths)
    checks = {"trace_horizon": 0, "well_agreement": 0, "level_equality": 0, "valued_in_wells": 0,
              "condition_c_monotone": 0}
    dfrac, occ = [], []
    holdings = {j: [] for j in A}
    seqs = []
    for x in paths:
        occ_x = [math.fsum(x.durations[x.values == j].tolist()) for j in range(1, K + 2)]
        occ.append([o / T for o in occ_x])
        dfrac.append(occ_x[-1] / T)
        tr = trace_on(x, A)
        v = record_last_visit_in(x, A)
        if abs(tr.horizon - (T - occ_x[-1])) > 1e-12 * T:
            checks["trace_horizon"] += 1
        if not _agree_on_wells(x, v, K):
            checks["well_agreement"] += 1
        if any(project_last_visit(x, m) != project_last_visit(v, m) for m in A):
            checks["level_equality"] += 1
        if (tr.values > K).any() or (v.values > K).any():
            checks["valued_in_wells"] += 1
        # holding times of the trace, the censored final sojourn excluded
        d = tr.durations
        for j in A:
            sel = (tr.values == j) & (d > 0)
            sel[-1] = False
            holdings[j].extend(d[sel].tolist())
        seqs.append(tr.values.astype(int).tolist())
        eps = np.sort(cfg.eps_grid)
        for m in cfg.m_grid:
            mins = np.array([min_holding(project_last_visit(x, ell), m) for ell in sorted(cfg.ell_grid)])
            hit = (mins[:, None] < eps[None, :]).astype(np.int8)  # per-path condition (c) events over (ell, eps)
            if (np.diff(hit, axis=0) < 0).any() or (np.diff(hit, axis=1) < 0).any():
                checks["condition_c_monotone"] += 1
    mu, se = ens.mean(dfrac)
    occ_mean = [ens.mean(np.array(occ)[:, j])[0] for j in range(K + 1)]
    levels = {}
    for m in cfg.m_grid:
        proj = [project_last_visit(x, m) for x in paths]
        per_site = {}
        for j in range(1, m + 1):
            counts = [visit_stats(p, j).count for p in proj]
            hist = np.bincount(counts).tolist()
            hold = [h for p in proj for h in visit_stats(p, j).holding_times]
            per_site[str(j)] = {"visit_histogram": hist, "holding": _ecdf_summary(hold)}
        levels[str(m)] = per_site
    summary = {
        "delta_label": delta,
        "delta_fraction": mu,
        "delta_fraction_se": se,
        "occupation": occ_mean,
        "trace_holding_ks": {str(j): ks_exponential(holdings[j]) for j in A},
        "markov_diagnostic": markov_diagnostic(seqs),
        "levels": levels,
    }
    conds = estimate_grid(ens, cfg.ell_grid, cfg.m_grid, cfg.k_grid, cfg.eps_grid)
    return summary, checks, conds


def run_metastability_pipeline(cfg: ExperimentConfig, *, backend=None) -> ConvergenceReport:
    """Simulate every N of the sweep and compare original, trace and last-visit processes."""
    report = ConvergenceReport(config=cfg.to_dict())
    seeds = derive_seeds(cfg.seed, len(cfg.N_sweep))
    totals: dict = {}
    for N, seed in zip(cfg.N_sweep, seeds):
        spec = cfg.spec_for(N)
        K = _wells(spec)
        reps, _ = run_replicas(spec, cfg.start, cfg.T, cfg.replicas, seed, backend=backend)
        summary, checks, conds = analyse_ensemble([r.path for r in reps], K, cfg)
        summary.update(N=N, seed=seed, theta=reps[0].time_scale,
                       mean_raw_jumps=math.fsum(r.raw_jump_count for r in reps) / len(reps))
        summary["ell"] = spec.ell
        report.per_N.append(summary)
        report.conditions[N] = conds
        for k, v in checks.items():
            totals[k] = totals.get(k, 0) + v
    n_total = cfg.replicas * len(cfg.N_sweep)
    report.invariants = {k: {"ok": v == 0, "violations": v, "paths": n_total} for k, v in sorted(totals.items())}
    report.trends = build_trends(report)
    return report


def build_trends(report: ConvergenceReport) -> dict:
    Ns = [s["N"] for s in report.per_N]
    trends = {}
    df = [s["delta_fraction"] for s in report.per_N]
    verdict = _series_verdict(df)
    trends["delta_fraction"] = {
        "N": Ns, "series": df, "verdict": verdict,
        "positive": all(v > 0 for v in df),
    }
    if report.per_N:
        for j in report.per_N[0]["trace_holding_ks"]:
            ks = [s["trace_holding_ks"][j]["ks_stat"] for s in report.per_N]
            trends[f"trace_ks_site_{j}"] = {"N": Ns, "series": ks, "verdict": _series_verdict(ks)}
    if report.conditions:
        keys = sorted(next(iter(report.conditions.values())).cond_a)
        for ell, m in keys:
            series = [report.conditions[N].cond_a[(ell, m)][0] for N in Ns]
            trends[f"cond_a_ell{ell}_m{m}"] = {"N": Ns, "series": series, "verdict": _series_verdict(series)}
    return trends


# --- report output ---------------------------------------------------------------

REPORT_HEADER = ("N", "statistic", "value")


def report_rows(report: ConvergenceReport) -> list[tuple]:
    rows = []
    for s in report.per_N:
        N = s["N"]
        rows.append((N, "delta_fraction", s["delta_fraction"]))
        rows.append((N, "delta_fraction_se", s["delta_fraction_se"]))
        for j, o in enumerate(s["occupation"], start=1):
            rows.append((N, f"occupation_{j}", o))
        for j, ks in s["trace_holding_ks"].items():
            rows.append((N, f"trace_holding_mean_{j}", ks["mean"]))
            rows.append((N, f"trace_ks_stat_{j}", ks["ks_stat"]))
        rows.append((N, "markov_chi2_p", s["markov_diagnostic"]["p_value"]))
    return rows


def _fmt(v):
    if isinstance(v, float):
        return repr(v)
    return str(v)


def emit_report(report: ConvergenceReport, out_dir, fmt: str = "json") -> list[str]:
    """Write ``report.json`` or ``report.csv`` plus ``conditions.csv``; returns the file paths."""
    os.makedirs(out_dir, exist_ok=True)
    if fmt == "json":
        path = os.path.join(out_dir, "report.json")
        with open(path, "w") as fh:
            json.dump(report.to_dict(), fh, sort_keys=True, indent=2)
            fh.write("\n")
        return [path]
    if fmt != "csv":
        raise ValueError(f"unknown format {fmt!r}")
    p1 = os.path.join(out_dir, "report.csv")
    with open(p1, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(REPORT_HEADER)
        for r in report_rows(report):
            w.writerow([_fmt(v) for v in r])
    p2 = os.path.join(out_dir, "conditions.csv")
    with open(p2, "w", newline="") as fh:
        write_conditions_csv(fh, report.conditions)
    return [p1, p2]


def write_conditions_csv(fh, conditions: dict) -> None:
    """``conditions`` maps N (or None for a single ensemble) to :class:`ConditionEstimates`."""
    w = csv.writer(fh, lineterminator="\n")
    multi = any(k is not None for k in conditions)
    w.writerow((("N",) if multi else ()) + CSV_HEADER)
    for N in sorted(conditions, key=lambda k: (k is None, k)):
        for r in conditions[N].rows():
            w.writerow(([N] if multi else []) + [_fmt(v) for v in r])


# --- path families -------------------------------------------------------------------

def family_path(family: str, n: int, t0: float = 0.3, T: float = 1.0, ell: int = 3) -> StepPath:
    """The spike families: ``xn`` (height n, width 1/n), ``yn`` (height ell, width 1/n), ``zn`` (jump to n)."""
    back = [(t0 + 1.0 / n, 1)] if t0 + 1.0 / n < T else []  # wide spikes run to the horizon
    if family == "xn":
        return make_step_path(T, [(0, 1), (t0, n)] + back)
    if family == "yn":
        return make_step_path(T, [(0, 1), (t0, ell)] + back)
    if family == "zn":
        return make_step_path(T, [(0, 1), (t0, n)])
    raise ValueError(f"unknown family {family!r}")


@dataclass
class FamilyTable:
    family: str
    ns: list
    soft: list
    levels: list  # per n: [d_1, ..., d_mmax]
    m_max: int
    tol: float
    verdict: str

    def header(self) -> list[str]:
        return ["n", "soft_dist"] + [f"d_{m}" for m in range(1, self.m_max + 1)]

    def rows(self) -> list[list]:
        return [[n, s] + list(d) for n, s, d in zip(self.ns, self.soft, self.levels)]

    def write_csv(self, fh) -> None:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(self.header())
        for r in self.rows():
            w.writerow([_fmt(v) for v in r])


def path_convergence_test(family: str, target: StepPath | None = None, m_max: int = 8, *, n_max: int = 64,
                          t0: float = 0.3, T: float = 1.0, tol: float = 1e-9) -> FamilyTable:
    """Soft and per-level distances along ``n = 2, 4, 8, ... <= n_max``.

    Verdict ``CONVERGES`` iff every ``d_m`` with ``m <= m_max`` is within
    ``tol`` at the last ``n``, else ``DIVERGES``.
    """
    if target is None:
        target = StepPath.constant(1, T)
    ns = []
    n = 2
    while n <= n_max:
        ns.append(n)
        n *= 2
    if not ns:
        raise ValueError("n_max must be >= 2")
    soft, levels = [], []
    for n in ns:
        x = family_path(family, n, t0, T)
        soft.append(soft_dist(x, target).distance)
        levels.append(level_distances(x, target, m_max))
    verdict = "CONVERGES" if all(d <= tol for d in levels[-1]) else "DIVERGES"
    return FamilyTable(family, ns, soft, levels, m_max, tol, verdict)
