"""Pure-Python kernels; reference behaviour for the compiled ``_core`` module.

Every kernel consumes caller-supplied uniforms in a fixed order so that the
two backends produce bit-identical output for the same random stream.
"""

from math import exp, log

BACKEND = "python"


# --- Skorohod alignment feasibility ----------------------------------------

def _propagate(s, u, compat, eps, slack, keep=None):
    P = len(s) - 1
    Q = len(u) - 1
    cur = [(0.0, 0.0)]
    el = exp(-eps)
    eh = exp(eps)
    if keep is not None:
        keep.append(cur)
    for j in range(Q):
        du = u[j + 1] - u[j]
        lo = el * du
        hi = eh * du
        row = compat[j]
        nxt = []
        i = 0
        while i < P:
            if not row[i]:
                i += 1
                continue
            a = i
            while i < P and row[i]:
                i += 1
            A = s[a] - slack
            B = s[i] + slack
            for f1, f2 in cur:
                if f2 < A or f1 > B:
                    continue
                g1 = (f1 if f1 > A else A) + lo
                if g1 > B:
                    continue
                g2 = (f2 if f2 < B else B) + hi
                if g2 > B:
                    g2 = B
                if nxt and g1 <= nxt[-1][1]:
                    if g2 > nxt[-1][1]:
                        nxt[-1] = (nxt[-1][0], g2)
                else:
                    nxt.append((g1, g2))
        if not nxt:
            return None
        cur = nxt
        if keep is not None:
            keep.append(cur)
    return cur


def feasible(s, u, compat, eps, slack):
    """Whether some time change with log-slope norm <= eps aligns y onto x.

    ``s``/``u`` are the segment boundaries of x/y (first 0, last T) and
    ``compat[j][i]`` says whether y-segment j may overlap x-segment i.
    """
    cur = _propagate(s, u, compat, eps, slack)
    return cur is not None and cur[-1][1] >= s[-1] - slack


def min_feasible_eps(s, u, compat, lo, hi, tol, slack):
    """Smallest feasible eps in (lo, hi] up to ``tol``; ``inf`` if hi fails.

    ``lo`` is assumed infeasible.
    """
    if not feasible(s, u, compat, hi, slack):
        return float("inf")
    while hi - lo > tol:
        mid = 0.5 * (lo + hi)
        if feasible(s, u, compat, mid, slack):
            hi = mid
        else:
            lo = mid
    return hi


def reachable_sets(s, u, compat, eps, slack):
    keep = []
    _propagate(s, u, compat, eps, slack, keep)
    return keep


# --- zero-range exact-jump simulation ---------------------------------------

def zero_range_chunk(eta, rates, gtab, thresh, delta_label, uni, t, t_end,
                     label, out_t, out_lab, mv_src, mv_dst, record_moves):
    """Advance the zero-range chain using pairs of uniforms from ``uni``.

    Returns ``(used, n_records, n_jumps, t, label, finished)``; ``eta`` is
    updated in place.
    """
    L = len(eta)
    n = len(uni)
    i = 0
    nrec = 0
    jumps = 0
    while i + 2 <= n:
        R = 0.0
        for x in range(L):
            gx = gtab[eta[x]]
            for y in range(L):
                R += gx * rates[x][y]
        t_new = t + (-log(1.0 - uni[i]) / R)
        if t_new > t_end:
            return i + 1, nrec, jumps, t_end, label, True
        t = t_new
        target = uni[i + 1] * R
        c = 0.0
        sx = -1
        sy = -1
        for x in range(L):
            gx = gtab[eta[x]]
            for y in range(L):
                w = gx * rates[x][y]
                if w > 0.0:
                    c += w
                    sx = x
                    sy = y
                    if target < c:
                        break
            else:
                continue
            break
        eta[sx] -= 1
        eta[sy] += 1
        if record_moves:
            mv_src[jumps] = sx
            mv_dst[jumps] = sy
        jumps += 1
        new = delta_label
        for x in range(L):
            if eta[x] >= thresh:
                new = x + 1
                break
        if new != label:
            label = new
            out_t[nrec] = t
            out_lab[nrec] = new
            nrec += 1
        i += 2
    return i, nrec, jumps, t, label, False


# --- random walk among traps on the torus ------------------------------------

def trap_walk_chunk(site, N, d, hold, rank, uni, t, t_end,
                    out_t, out_rank, out_site, record_sites):
    """Advance the trap walk; ``hold[x]`` is the mean holding time at site x.

    Returns ``(used, n_jumps, site, t, finished)``.
    """
    n = len(uni)
    i = 0
    nj = 0
    two_d = 2 * d
    while i + 2 <= n:
        t_new = t + (-log(1.0 - uni[i]) * hold[site])
        if t_new > t_end:
            return i + 1, nj, site, t_end, True
        t = t_new
        k = int(uni[i + 1] * two_d)
        if k >= two_d:
            k = two_d - 1
        dim = k >> 1
        stride = N ** dim
        c = (site // stride) % N
        if k & 1:
            nc = c - 1 if c > 0 else N - 1
        else:
            nc = c + 1 if c < N - 1 else 0
        site += (nc - c) * stride
        out_t[nj] = t
        out_rank[nj] = rank[site]
        if record_sites:
            out_site[nj] = site
        nj += 1
        i += 2
    return i, nj, site, t, False


def escape_chunk(pos, N, d, ell, uni, trials_left):
    """Embedded-walk excursions from the origin; counts exits of the open
    ball of radius ``ell`` before returning.  ``pos`` carries a partial
    excursion across calls.  Returns ``(used, successes, finished_trials)``.
    """
    n = len(uni)
    two_d = 2 * d
    i = 0
    succ = 0
    done = 0
    while done < trials_left and i < n:
        k = int(uni[i] * two_d)
        if k >= two_d:
            k = two_d - 1
        i += 1
        dim = k >> 1
        if k & 1:
            pos[dim] = pos[dim] - 1 if pos[dim] > 0 else N - 1
        else:
            pos[dim] = pos[dim] + 1 if pos[dim] < N - 1 else 0
        dist = 0
        for a in range(d):
            p = pos[a]
            dist += p if p <= N - p else N - p
        if dist >= ell:
            succ += 1
            done += 1
            for a in range(d):
                pos[a] = 0
        elif dist == 0:
            done += 1
    return i, succ, done
