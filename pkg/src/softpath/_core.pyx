# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled kernels; must stay step-for-step identical to ``_purecore``."""

from libc.math cimport exp, log
from libc.stdlib cimport malloc, free

BACKEND = "cython"


cdef int _propagate(const double[:] s, const double[:] u,
                    const unsigned char[:, :] compat, double eps, double slack,
                    double* cur_lo, double* cur_hi, double* nxt_lo, double* nxt_hi,
                    Py_ssize_t cap, double* last_hi) noexcept nogil:
    cdef Py_ssize_t P = s.shape[0] - 1
    cdef Py_ssize_t Q = u.shape[0] - 1
    cdef Py_ssize_t j, i, a, k, nc = 1, nn
    cdef double el = exp(-eps), eh = exp(eps)
    cdef double du, lo, hi, A, B, f1, f2, g1, g2
    cdef double* tmp
    cur_lo[0] = 0.0
    cur_hi[0] = 0.0
    for j in range(Q):
        du = u[j + 1] - u[j]
        lo = el * du
        hi = eh * du
        nn = 0
        i = 0
        while i < P:
            if not compat[j, i]:
                i += 1
                continue
            a = i
            while i < P and compat[j, i]:
                i += 1
            A = s[a] - slack
            B = s[i] + slack
            for k in range(nc):
                f1 = cur_lo[k]
                f2 = cur_hi[k]
                if f2 < A or f1 > B:
                    continue
                g1 = (f1 if f1 > A else A) + lo
                if g1 > B:
                    continue
                g2 = (f2 if f2 < B else B) + hi
                if g2 > B:
                    g2 = B
                if nn > 0 and g1 <= nxt_hi[nn - 1]:
                    if g2 > nxt_hi[nn - 1]:
                        nxt_hi[nn - 1] = g2
                else:
                    if nn >= cap:
                        return -1
                    nxt_lo[nn] = g1
                    nxt_hi[nn] = g2
                    nn += 1
        if nn == 0:
            return 0
        tmp = cur_lo
        cur_lo = nxt_lo
        nxt_lo = tmp
        tmp = cur_hi
        cur_hi = nxt_hi
        nxt_hi = tmp
        nc = nn
    last_hi[0] = cur_hi[nc - 1]
    return 1


cdef int _feasible(const double[:] s, const double[:] u,
                   const unsigned char[:, :] compat, double eps, double slack,
                   double* buf, Py_ssize_t cap) noexcept nogil:
    cdef double last_hi = 0.0
    cdef int r = _propagate(s, u, compat, eps, slack, buf, buf + cap,
                            buf + 2 * cap, buf + 3 * cap, cap, &last_hi)
    if r < 0:
        return -1
    return 1 if (r == 1 and last_hi >= s[s.shape[0] - 1] - slack) else 0


cdef Py_ssize_t _capacity(Py_ssize_t P, Py_ssize_t Q):
    return (P + 1) * (Q + 1) + 4


def feasible(const double[:] s, const double[:] u,
             const unsigned char[:, :] compat, double eps, double slack):
    cdef Py_ssize_t cap = _capacity(s.shape[0], u.shape[0])
    cdef double* buf = <double*> malloc(4 * cap * sizeof(double))
    cdef int r
    if buf == NULL:
        raise MemoryError()
    try:
        r = _feasible(s, u, compat, eps, slack, buf, cap)
    finally:
        free(buf)
    if r < 0:
        raise RuntimeError("interval buffer overflow")
    return r == 1


def min_feasible_eps(const double[:] s, const double[:] u,
                     const unsigned char[:, :] compat, double lo, double hi,
                     double tol, double slack):
    cdef Py_ssize_t cap = _capacity(s.shape[0], u.shape[0])
    cdef double* buf = <double*> malloc(4 * cap * sizeof(double))
    cdef double mid
    cdef int r
    if buf == NULL:
        raise MemoryError()
    try:
        with nogil:
            r = _feasible(s, u, compat, hi, slack, buf, cap)
            if r == 1:
                while hi - lo > tol:
                    mid = 0.5 * (lo + hi)
                    r = _feasible(s, u, compat, mid, slack, buf, cap)
                    if r < 0:
                        break
                    if r == 1:
                        hi = mid
                    else:
                        lo = mid
                r = 1 if r >= 0 else -1
    finally:
        free(buf)
    if r < 0:
        raise RuntimeError("interval buffer overflow")
    if r == 0:
        return float("inf")
    return hi


def zero_range_chunk(long long[:] eta, const double[:, :] rates,
                     const double[:] gtab, long long thresh, long long delta_label,
                     const double[:] uni, double t, double t_end, long long label,
                     double[:] out_t, long long[:] out_lab,
                     long long[:] mv_src, long long[:] mv_dst, bint record_moves):
    cdef Py_ssize_t L = eta.shape[0]
    cdef Py_ssize_t n = uni.shape[0]
    cdef Py_ssize_t i = 0, nrec = 0, jumps = 0, x, y, sx, sy
    cdef double R, gx, t_new, target, c, w
    cdef long long new
    cdef bint found
    with nogil:
        while i + 2 <= n:
            R = 0.0
            for x in range(L):
                gx = gtab[eta[x]]
                for y in range(L):
                    R += gx * rates[x, y]
            t_new = t + (-log(1.0 - uni[i]) / R)
            if t_new > t_end:
                with gil:
                    return i + 1, nrec, jumps, t_end, label, True
            t = t_new
            target = uni[i + 1] * R
            c = 0.0
            sx = -1
            sy = -1
            found = False
            for x in range(L):
                gx = gtab[eta[x]]
                for y in range(L):
                    w = gx * rates[x, y]
                    if w > 0.0:
                        c += w
                        sx = x
                        sy = y
                        if target < c:
                            found = True
                            break
                if found:
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


def trap_walk_chunk(long long site, long long N, int d, const double[:] hold,
                    const long long[:] rank, const double[:] uni, double t,
                    double t_end, double[:] out_t, long long[:] out_rank,
                    long long[:] out_site, bint record_sites):
    cdef Py_ssize_t n = uni.shape[0]
    cdef Py_ssize_t i = 0, nj = 0
    cdef int two_d = 2 * d, k, dim, a
    cdef long long stride, c, nc
    cdef double t_new
    with nogil:
        while i + 2 <= n:
            t_new = t + (-log(1.0 - uni[i]) * hold[site])
            if t_new > t_end:
                with gil:
                    return i + 1, nj, site, t_end, True
            t = t_new
            k = <int> (uni[i + 1] * two_d)
            if k >= two_d:
                k = two_d - 1
            dim = k >> 1
            stride = 1
            for a in range(dim):
                stride *= N
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


def escape_chunk(long long[:] pos, long long N, int d, long long ell,
                 const double[:] uni, long long trials_left):
    cdef Py_ssize_t n = uni.shape[0]
    cdef Py_ssize_t i = 0
    cdef int two_d = 2 * d, k, dim, a
    cdef long long succ = 0, done = 0, dist, p
    with nogil:
        while done < trials_left and i < n:
            k = <int> (uni[i] * two_d)
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
