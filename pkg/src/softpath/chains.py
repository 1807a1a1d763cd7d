"""Seeded simulators for the sticky zero-range process and the random walk among traps.

Both simulators are exact-jump: exponential holding times plus the embedded
jump chain.  The hot loops live in the kernel backend (compiled when
available).  Uniforms are drawn here in chunks from ``numpy.random.Generator``
and handed to the kernel, so both backends see the same stream and return
bit-identical trajectories.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field
import numpy as np
import scipy.sparse as sp
from scipy.sparse.linalg import spsolve

from . import _backend
from .errors import BadConfiguration, TooLarge
from .membership import Ensemble
from .paths import StepPath

CHUNK = 1 << 14  # uniforms per kernel call; even, so jump pairs never straddle chunks
MAX_STATES = 10**6


def derive_seeds(master: int, n: int) -> list[int]:
    """Per-replica seeds: the first 64-bit word of child ``i`` of ``SeedSequence(master)``.

    Child ``i`` does not depend on ``n``, so seeds are stable as ensembles grow.
    """
    children = np.random.SeedSequence(int(master)).spawn(n)
    return [int(c.generate_state(1, np.uint64)[0]) for c in children]


def _is_python(core) -> bool:
    return core.BACKEND == "python"


# --- zero-range ---------------------------------------------------------------

@dataclass(frozen=True)
class ZeroRangeSpec:
    L: int
    N: int
    alpha: float
    rates: np.ndarray | None = None  # default r(x, y) = 1 for x != y
    ell: int | None = None  # well width; default min(isqrt(N), ceil(N/2) - 1)

    def __post_init__(self):
        if self.L < 2 or self.N < 1:
            raise BadConfiguration("need L >= 2 sites and N >= 1 particles")
        if not self.alpha > 1:
            raise BadConfiguration("alpha must exceed 1")
        r = np.ones((self.L, self.L)) - np.eye(self.L) if self.rates is None else np.array(self.rates, dtype=np.float64)
        if r.shape != (self.L, self.L) or (r < 0).any() or not np.allclose(r, r.T, rtol=0, atol=0):
            raise BadConfiguration("rates must be a symmetric non-negative L x L matrix")
        np.fill_diagonal(r, 0.0)
        if not _irreducible(r):
            raise BadConfiguration("rates must connect all sites")
        r.flags.writeable = False
        object.__setattr__(self, "rates", r)
        ell = self.ell
        if ell is None:
            ell = min(math.isqrt(self.N), (self.N + 1) // 2 - 1)
        if not (0 <= ell and 2 * ell < self.N):
            raise BadConfiguration("well width must satisfy 0 <= ell < N/2 so wells are disjoint")
        object.__setattr__(self, "ell", int(ell))

    @property
    def theta(self) -> float:
        return float(self.N) ** (1.0 + self.alpha)

    @property
    def threshold(self) -> int:
        return self.N - self.ell

    @property
    def delta_label(self) -> int:
        return self.L + 1

    def to_dict(self) -> dict:
        return {"model": "zero-range", "L": self.L, "N": self.N, "alpha": self.alpha,
                "rates": self.rates.tolist(), "ell": self.ell}


def _irreducible(r: np.ndarray) -> bool:
    seen = {0}
    todo = [0]
    while todo:
        x = todo.pop()
        for y in np.flatnonzero(r[x] > 0).tolist():
            if y not in seen:
                seen.add(y)
                todo.append(y)
    return len(seen) == r.shape[0]


def g_table(N: int, alpha: float) -> np.ndarray:
    """``g(0..N)`` with ``g(0) = 0``, ``g(1) = 1`` and ``prod_{i<=n} g(i) = n**alpha``."""
    g = np.zeros(N + 1)
    if N >= 1:
        g[1] = 1.0
    n = np.arange(2, N + 1, dtype=np.float64)
    g[2:] = (n / (n - 1)) ** alpha
    return g


def order_parameter(spec: ZeroRangeSpec, eta) -> int:
    """Well label ``x + 1`` if ``eta_x >= N - ell``, else the sentinel ``L + 1``."""
    for x, n in enumerate(eta):
        if n >= spec.threshold:
            return x + 1
    return spec.delta_label


def _check_config(spec: ZeroRangeSpec, eta0) -> np.ndarray:
    eta = np.asarray(eta0)
    if eta.shape != (spec.L,) or (eta < 0).any() or (eta != np.floor(eta)).any() or eta.sum() != spec.N:
        raise BadConfiguration(f"initial configuration must be {spec.L} non-negative integers summing to {spec.N}")
    return eta.astype(np.int64)


@dataclass
class ProjectedTrajectory:
    path: StepPath
    raw_jump_count: int
    time_scale: float
    metadata: dict = field(default_factory=dict)
    moves: np.ndarray | None = None  # (jumps, 2) source/destination sites
    sites: np.ndarray | None = None  # visited torus sites, trap walk only


def _build_path(T, times, labels):
    t = np.asarray(times, dtype=np.float64)
    v = np.asarray(labels, dtype=np.float64)
    if t.size > 1:
        # a zero exponential increment repeats a time stamp: keep the later state
        keep = np.append(t[1:] > t[:-1], True)
        t, v = t[keep], v[keep]
    return StepPath.from_arrays(T, t, v, coalesce=True)


def simulate_zero_range(spec: ZeroRangeSpec, eta0, T: float, seed: int, *,
                        record_moves: bool = False, backend=None) -> ProjectedTrajectory:
    """Run the chain on ``[0, T * theta]`` and return the projected path on ``[0, T]``."""
    core = _backend.get(backend)
    eta = _check_config(spec, eta0)
    if not T > 0:
        raise BadConfiguration("horizon must be positive")
    theta = spec.theta
    t_end = T * theta
    rng = np.random.default_rng(seed)
    gtab = g_table(spec.N, spec.alpha)
    rates = np.ascontiguousarray(spec.rates)
    label = order_parameter(spec, eta)
    times, labels = [np.zeros(1)], [np.array([label], dtype=np.int64)]
    moves = []
    half = CHUNK // 2
    t = 0.0
    jumps = 0
    py = _is_python(core)
    if py:
        eta_k, rates_k, gtab_k = eta.tolist(), rates.tolist(), gtab.tolist()
    else:
        eta_k, rates_k, gtab_k = eta.copy(), rates, gtab
    while True:
        uni = rng.random(CHUNK)
        out_t = np.empty(half)
        out_lab = np.empty(half, dtype=np.int64)
        mv_src = np.empty(half if record_moves else 1, dtype=np.int64)
        mv_dst = np.empty_like(mv_src)
        if py:
            bufs = [[0.0] * half, [0] * half, [0] * mv_src.size, [0] * mv_src.size]
            used, nrec, nj, t, label, done = core.zero_range_chunk(
                eta_k, rates_k, gtab_k, spec.threshold, spec.delta_label, uni.tolist(),
                t, t_end, label, *bufs, record_moves)
            out_t[:nrec] = bufs[0][:nrec]
            out_lab[:nrec] = bufs[1][:nrec]
            if record_moves:
                mv_src[:nj] = bufs[2][:nj]
                mv_dst[:nj] = bufs[3][:nj]
        else:
            used, nrec, nj, t, label, done = core.zero_range_chunk(
                eta_k, rates_k, gtab_k, spec.threshold, spec.delta_label, uni,
                t, t_end, label, out_t, out_lab, mv_src, mv_dst, record_moves)
        times.append(out_t[:nrec] / theta)
        labels.append(out_lab[:nrec].copy())
        if record_moves:
            moves.append(np.stack((mv_src[:nj], mv_dst[:nj]), axis=1))
        jumps += nj
        if done:
            break
    final = np.asarray(eta_k, dtype=np.int64)
    path = _build_path(T, np.concatenate(times), np.concatenate(labels))
    meta = {
        "model": "zero-range",
        "delta_label": spec.delta_label,
        "delta_label_source_convention": spec.N,
        "eta0": eta.tolist(),
        "eta_final": final.tolist(),
    }
    mv = np.concatenate(moves) if record_moves else None
    return ProjectedTrajectory(path, jumps, theta, meta, mv)


def replay_moves(eta0, moves: np.ndarray) -> np.ndarray:
    """Configurations after each recorded jump, one row per jump."""
    eta0 = np.asarray(eta0, dtype=np.int64)
    delta = np.zeros((len(moves), eta0.size), dtype=np.int64)
    idx = np.arange(len(moves))
    np.subtract.at(delta, (idx, moves[:, 0]), 1)
    np.add.at(delta, (idx, moves[:, 1]), 1)
    return eta0 + np.cumsum(delta, axis=0)


def zero_range_states(L: int, N: int) -> list[tuple[int, ...]]:
    """All configurations of ``N`` particles on ``L`` sites, first site descending."""
    if math.comb(N + L - 1, L - 1) > MAX_STATES:
        raise TooLarge(f"E_(L={L}, N={N}) has more than {MAX_STATES} configurations")

    def rec(sites, n):
        if sites == 1:
            yield (n,)
            return
        for k in range(n, -1, -1):
            for rest in rec(sites - 1, n - k):
                yield (k,) + rest

    return list(rec(L, N))


def zero_range_generator(spec: ZeroRangeSpec):
    """Dense generator matrix over :func:`zero_range_states`."""
    states = zero_range_states(spec.L, spec.N)
    index = {s: i for i, s in enumerate(states)}
    g = g_table(spec.N, spec.alpha)
    Q = np.zeros((len(states), len(states)))
    for i, s in enumerate(states):
        for x, y in itertools.permutations(range(spec.L), 2):
            rate = g[s[x]] * spec.rates[x, y]
            if rate > 0:
                t = list(s)
                t[x] -= 1
                t[y] += 1
                Q[i, index[tuple(t)]] += rate
                Q[i, i] -= rate
    return states, Q


def generator_null_vector(Q: np.ndarray) -> np.ndarray:
    """Probability vector ``pi`` with ``pi Q = 0`` via a least-squares solve."""
    n = Q.shape[0]
    A = np.vstack((Q.T, np.ones((1, n))))
    b = np.zeros(n + 1)
    b[-1] = 1.0
    pi, *_ = np.linalg.lstsq(A, b, rcond=None)
    return pi


def zero_range_stationary(spec: ZeroRangeSpec):
    """Product-form stationary law: weights ``prod_x max(eta_x, 1)**-alpha``."""
    states = zero_range_states(spec.L, spec.N)
    arr = np.maximum(np.array(states, dtype=np.float64), 1.0)
    w = np.prod(arr ** -spec.alpha, axis=1)
    return states, w / math.fsum(w.tolist())


def well_mass(spec: ZeroRangeSpec):
    """Stationary mass of each well and of the complement ``Delta``."""
    states, pi = zero_range_stationary(spec)
    mass = np.zeros(spec.L)
    delta = []
    for s, p in zip(states, pi):
        lab = order_parameter(spec, s)
        if lab == spec.delta_label:
            delta.append(p)
        else:
            mass[lab - 1] += p
    return mass, math.fsum(delta)


# --- random walk among traps ------------------------------------------------------

def default_weights(n: int) -> np.ndarray:
    j = np.arange(1, n + 1, dtype=np.float64)
    return j**-2.0


@dataclass(frozen=True)
class TrapWalkSpec:
    d: int
    N: int
    weights: np.ndarray | None = None  # W_1 >= W_2 >= ... > 0, length >= N**d
    enum_seed: int = 0
    ell: int | None = None
    M: int | None = None  # ranks above M collapse to M + 1 in the projected track

    def __post_init__(self):
        if self.d < 2 or self.N < 3:
            raise BadConfiguration("need d >= 2 and torus side N >= 3")
        V = self.N**self.d
        w = default_weights(V) if self.weights is None else np.array(self.weights, dtype=np.float64)[:V]
        if w.size < V or not (w > 0).all() or (np.diff(w) > 0).any():
            raise BadConfiguration("weights must be positive, non-increasing, one per site")
        w.flags.writeable = False
        object.__setattr__(self, "weights", w)
        ell = self.ell
        if ell is None:
            if self.d == 2:
                ell = round(self.N / math.log(self.N) ** 0.25)
            else:
                ell = round(math.sqrt(self.N))
        ell = min(int(ell), self.d * (self.N // 2))
        if ell < 1:
            raise BadConfiguration("ball radius must be >= 1")
        object.__setattr__(self, "ell", ell)
        if self.M is not None and not 1 <= self.M <= V:
            raise BadConfiguration("deep-trap count must lie in 1..N**d")

    @property
    def n_sites(self) -> int:
        return self.N**self.d

    def ranks(self) -> np.ndarray:
        """Random enumeration: ``ranks()[site]`` is the 1-based rank of the site."""
        perm = np.random.default_rng(self.enum_seed).permutation(self.n_sites)
        return (perm + 1).astype(np.int64)

    def holding_means(self) -> np.ndarray:
        return self.weights[self.ranks() - 1]

    def to_dict(self) -> dict:
        return {"model": "trap-walk", "d": self.d, "N": self.N, "enum_seed": self.enum_seed,
                "ell": self.ell, "M": self.M}


def site_index(spec: TrapWalkSpec, coords) -> int:
    c = [int(v) % spec.N for v in coords]
    return sum(v * spec.N**a for a, v in enumerate(c))


def site_coords(spec: TrapWalkSpec, site: int) -> tuple[int, ...]:
    return tuple((site // spec.N**a) % spec.N for a in range(spec.d))


def torus_dist(spec: TrapWalkSpec, a: int, b: int = 0) -> int:
    ca, cb = site_coords(spec, a), site_coords(spec, b)
    return sum(min((p - q) % spec.N, (q - p) % spec.N) for p, q in zip(ca, cb))


def estimate_escape_prob(spec: TrapWalkSpec, trials: int, seed: int, *, backend=None) -> tuple[float, float]:
    """Fraction of excursions from the centre that leave the open ball before returning."""
    if trials < 1:
        raise ValueError("trials must be >= 1")
    core = _backend.get(backend)
    rng = np.random.default_rng(seed)
    pos = np.zeros(spec.d, dtype=np.int64)
    py = _is_python(core)
    pos_k = pos.tolist() if py else pos
    succ = 0
    done = 0
    while done < trials:
        uni = rng.random(CHUNK)
        _, s, k = core.escape_chunk(pos_k, spec.N, spec.d, spec.ell, uni.tolist() if py else uni, trials - done)
        succ += s
        done += k
    v = succ / trials
    return v, math.sqrt(v * (1.0 - v) / trials)


def escape_probability_exact(spec: TrapWalkSpec) -> float:
    """Escape probability from the Dirichlet problem on the ball around site 0."""
    V = spec.n_sites
    dist = np.array([torus_dist(spec, x) for x in range(V)])
    inner = np.flatnonzero((dist > 0) & (dist < spec.ell))
    nbrs = _neighbours(spec)
    if inner.size == 0:
        return 1.0
    pos = {int(x): i for i, x in enumerate(inner)}
    n = inner.size
    A = sp.lil_matrix((n, n))
    b = np.zeros(n)
    deg = 2 * spec.d
    for x, i in pos.items():
        A[i, i] = 1.0
        for y in nbrs[x]:
            if dist[y] >= spec.ell:
                b[i] += 1.0 / deg
            elif dist[y] > 0:
                A[i, pos[y]] -= 1.0 / deg
    h = np.atleast_1d(spsolve(A.tocsr(), b))
    total = 0.0
    for y in nbrs[0]:
        total += 1.0 if dist[y] >= spec.ell else h[pos[y]]
    return total / deg


def _neighbours(spec: TrapWalkSpec) -> list[list[int]]:
    out = []
    for x in range(spec.n_sites):
        c = site_coords(spec, x)
        row = []
        for a in range(spec.d):
            for step in (1, -1):
                cc = list(c)
                cc[a] = (cc[a] + step) % spec.N
                row.append(site_index(spec, cc))
        out.append(row)
    return out


def simulate_trap_walk(spec: TrapWalkSpec, start: int, T: float, seed: int, *, theta: float | None = None,
                       escape_trials: int = 20000, record_sites: bool = False,
                       backend=None) -> ProjectedTrajectory:
    """Run the walk on ``[0, T * theta]`` and return the rank track on ``[0, T]``.

    Without an explicit ``theta`` the time scale is ``1 / v`` with ``v`` the
    Monte Carlo escape probability, estimated from a stream independent of
    the walk's.
    """
    core = _backend.get(backend)
    if not 0 <= start < spec.n_sites:
        raise BadConfiguration("start must be a torus site index")
    if not T > 0:
        raise BadConfiguration("horizon must be positive")
    esc_seed, walk_seed = np.random.SeedSequence(int(seed)).spawn(2)
    meta = {"model": "trap-walk"}
    if theta is None:
        v, se = estimate_escape_prob(spec, escape_trials, esc_seed, backend=backend)
        theta = 1.0 / v
        meta.update(escape_prob=v, escape_se=se, escape_trials=escape_trials)
    theta = float(theta)
    t_end = T * theta
    rank = spec.ranks()
    hold = np.ascontiguousarray(spec.holding_means())
    rng = np.random.default_rng(walk_seed)
    half = CHUNK // 2
    py = _is_python(core)
    hold_k, rank_k = (hold.tolist(), rank.tolist()) if py else (hold, rank)
    times, ranks, sites = [np.zeros(1)], [rank[start : start + 1]], [np.array([start])]
    site, t, jumps = int(start), 0.0, 0
    while True:
        uni = rng.random(CHUNK)
        out_t = np.empty(half)
        out_rank = np.empty(half, dtype=np.int64)
        out_site = np.empty(half if record_sites else 1, dtype=np.int64)
        if py:
            bufs = [[0.0] * half, [0] * half, [0] * out_site.size]
            used, nj, site, t, done = core.trap_walk_chunk(
                site, spec.N, spec.d, hold_k, rank_k, uni.tolist(), t, t_end, *bufs, record_sites)
            out_t[:nj] = bufs[0][:nj]
            out_rank[:nj] = bufs[1][:nj]
            if record_sites:
                out_site[:nj] = bufs[2][:nj]
        else:
            used, nj, site, t, done = core.trap_walk_chunk(
                site, spec.N, spec.d, hold_k, rank_k, uni, t, t_end, out_t, out_rank, out_site, record_sites)
        times.append(out_t[:nj] / theta)
        ranks.append(out_rank[:nj].copy())
        if record_sites:
            sites.append(out_site[:nj].copy())
        jumps += nj
        if done:
            break
    labels = np.concatenate(ranks)
    if spec.M is not None:
        labels = np.minimum(labels, spec.M + 1)
        meta["collapsed_label"] = spec.M + 1
    path = _build_path(T, np.concatenate(times), labels)
    return ProjectedTrajectory(path, jumps, theta, meta, None,
                               np.concatenate(sites) if record_sites else None)


# --- ensembles -------------------------------------------------------------------

def spec_from_mapping(cfg: dict):
    """Build a ZeroRangeSpec or TrapWalkSpec from a flat mapping (``model`` selects the type)."""
    model = cfg.get("model", "zero-range")
    if model == "zero-range":
        return ZeroRangeSpec(int(cfg["L"]), int(cfg["N"]), float(cfg["alpha"]),
                             cfg.get("rates"), cfg.get("ell"))
    if model == "trap-walk":
        return TrapWalkSpec(int(cfg["d"]), int(cfg["N"]), cfg.get("weights"), int(cfg.get("enum_seed", 0)),
                            cfg.get("ell"), cfg.get("M"))
    raise BadConfiguration(f"unknown model {model!r}")


def default_start(spec):
    """All particles on site 1, or the deepest trap (the site of rank 1)."""
    if isinstance(spec, ZeroRangeSpec):
        return [spec.N] + [0] * (spec.L - 1)
    return int(np.argmin(spec.ranks()))


def run_replicas(spec, starts, T: float, n_paths: int, seed: int, *, theta: float | None = None,
                 backend=None, **kw) -> tuple[list[ProjectedTrajectory], list[int]]:
    """Independent replicas with seeds from :func:`derive_seeds`.

    ``starts`` is one start or a sequence cycled over replicas.  Trap-walk
    replicas share one time scale, estimated from the master seed unless
    given.
    """
    if n_paths < 1:
        raise ValueError("n_paths must be >= 1")
    seeds = derive_seeds(seed, n_paths)
    if starts is None:
        starts = [default_start(spec)]
    elif isinstance(spec, ZeroRangeSpec) and np.ndim(starts) == 1:
        starts = [starts]
    elif isinstance(spec, TrapWalkSpec) and np.ndim(starts) == 0:
        starts = [starts]
    out = []
    if isinstance(spec, ZeroRangeSpec):
        for i, s in enumerate(seeds):
            out.append(simulate_zero_range(spec, starts[i % len(starts)], T, s, backend=backend, **kw))
    else:
        if theta is None:
            v, _ = estimate_escape_prob(spec, kw.pop("escape_trials", 20000), seed, backend=backend)
            theta = 1.0 / v
        for i, s in enumerate(seeds):
            out.append(simulate_trap_walk(spec, int(starts[i % len(starts)]), T, s, theta=theta,
                                          backend=backend, **kw))
    return out, seeds


def run_to_ensemble(spec, starts, T: float, n_paths: int, seed: int, **kw) -> Ensemble:
    reps, _ = run_replicas(spec, starts, T, n_paths, seed, **kw)
    return Ensemble([r.path for r in reps])
