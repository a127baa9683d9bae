# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled versions of the routing kernels; see ``_pykernels`` for docs."""
import numpy as np
cimport numpy as cnp

cnp.import_array()

cdef double INF = float("inf")


def route_length(double[:, ::1] dist, long depot, stops):
    cdef cnp.int64_t[::1] s = np.ascontiguousarray(stops, dtype=np.int64)
    cdef Py_ssize_t k = s.shape[0], i
    cdef double total
    if k == 0:
        return 0.0
    total = dist[depot, s[0]]
    for i in range(k - 1):
        total += dist[s[i], s[i + 1]]
    return total + dist[s[k - 1], depot]


def subset_tours(double[:, ::1] dist, long depot, nodes):
    cdef cnp.int64_t[::1] nd = np.ascontiguousarray(nodes, dtype=np.int64)
    cdef Py_ssize_t k = nd.shape[0]
    cdef Py_ssize_t full = 1 << k
    cdef cnp.ndarray[double, ndim=2] f_arr = np.full((full, k), INF)
    cdef cnp.ndarray[double, ndim=1] tour_arr = np.zeros(full)
    cdef double[:, ::1] f = f_arr
    cdef double[::1] tour = tour_arr
    cdef Py_ssize_t S, T, j, t
    cdef double base, c, best
    for j in range(k):
        f[1 << j, j] = dist[depot, nd[j]]
    for S in range(1, full):
        for j in range(k):
            base = f[S, j]
            if base == INF or not ((S >> j) & 1):
                continue
            for t in range(k):
                if (S >> t) & 1:
                    continue
                T = S | (1 << t)
                c = base + dist[nd[j], nd[t]]
                if c < f[T, t]:
                    f[T, t] = c
    for S in range(1, full):
        best = INF
        for j in range(k):
            if (S >> j) & 1:
                c = f[S, j] + dist[nd[j], depot]
                if c < best:
                    best = c
        tour[S] = best
    return tour_arr, f_arr


def subset_paths(double[:, ::1] dist, nodes):
    cdef cnp.int64_t[::1] nd = np.ascontiguousarray(nodes, dtype=np.int64)
    cdef Py_ssize_t k = nd.shape[0]
    cdef Py_ssize_t full = 1 << k
    cdef cnp.ndarray[double, ndim=3] h_arr = np.full((full, k, k), INF)
    cdef double[:, :, ::1] h = h_arr
    cdef Py_ssize_t S, T, i, j, t
    cdef double base, c
    for i in range(k):
        h[1 << i, i, i] = 0.0
        for S in range(1, full):
            if not ((S >> i) & 1):
                continue
            for j in range(k):
                base = h[S, i, j]
                if base == INF:
                    continue
                for t in range(k):
                    if (S >> t) & 1:
                        continue
                    T = S | (1 << t)
                    c = base + dist[nd[j], nd[t]]
                    if c < h[T, i, t]:
                        h[T, i, t] = c
    return h_arr


def partition_dp(cost, load, double capacity, double setup):
    cdef double[::1] cst = np.ascontiguousarray(cost, dtype=np.float64)
    cdef double[::1] ld = np.ascontiguousarray(load, dtype=np.float64)
    cdef Py_ssize_t full = cst.shape[0]
    cdef cnp.ndarray[double, ndim=1] best_arr = np.full(full, INF)
    cdef cnp.ndarray[cnp.int64_t, ndim=1] choice_arr = np.zeros(full, dtype=np.int64)
    cdef double[::1] best = best_arr
    cdef cnp.int64_t[::1] choice = choice_arr
    cdef Py_ssize_t T, low, rest, sub, S, ch
    cdef double b, c
    best[0] = 0.0
    for T in range(1, full):
        low = T & -T
        rest = T ^ low
        sub = rest
        b = INF
        ch = 0
        while True:
            S = sub | low
            if ld[S] <= capacity:
                c = cst[S] + setup + best[T ^ S]
                if c < b:
                    b = c
                    ch = S
            if sub == 0:
                break
            sub = (sub - 1) & rest
        best[T] = b
        choice[T] = ch
    return best_arr, choice_arr


def split_tour(double[:, ::1] dist, perm, demand, double capacity, depots, double setup):
    cdef cnp.int64_t[::1] p = np.ascontiguousarray(perm, dtype=np.int64)
    cdef double[::1] q = np.ascontiguousarray(demand, dtype=np.float64)
    cdef cnp.int64_t[::1] dp = np.ascontiguousarray(depots, dtype=np.int64)
    cdef Py_ssize_t n = p.shape[0], nd = dp.shape[0]
    cdef cnp.ndarray[double, ndim=1] V_arr = np.full(n + 1, INF)
    cdef cnp.ndarray[cnp.int64_t, ndim=1] pred_arr = np.zeros(n + 1, dtype=np.int64)
    cdef cnp.ndarray[cnp.int64_t, ndim=1] dep_arr = np.full(n + 1, -1, dtype=np.int64)
    cdef double[::1] V = V_arr
    cdef cnp.int64_t[::1] pred = pred_arr
    cdef cnp.int64_t[::1] dep_of = dep_arr
    cdef Py_ssize_t i, j, kk, first, v, bk
    cdef double load, inner, bd, c
    V[0] = 0.0
    for i in range(n):
        if V[i] == INF:
            continue
        load = 0.0
        inner = 0.0
        first = p[i]
        for j in range(i, n):
            v = p[j]
            load += q[v]
            if load > capacity:
                break
            if j > i:
                inner += dist[p[j - 1], v]
            bd = INF
            bk = -1
            for kk in range(nd):
                c = dist[dp[kk], first] + dist[v, dp[kk]]
                if c < bd:
                    bd = c
                    bk = dp[kk]
            c = V[i] + inner + bd + setup
            if c < V[j + 1]:
                V[j + 1] = c
                pred[j + 1] = i
                dep_of[j + 1] = bk
    return float(V[n]), pred_arr, dep_arr


def two_opt(double[:, ::1] dist, long depot, stops):
    cdef Py_ssize_t k = len(stops)
    cdef cnp.ndarray[cnp.int64_t, ndim=1] tour_arr = np.empty(k + 2, dtype=np.int64)
    cdef cnp.int64_t[::1] tour = tour_arr
    cdef Py_ssize_t n = k + 2, i, j, lo, hi, a, b, c, e, tmp
    cdef double delta
    cdef bint improved = True
    tour[0] = depot
    tour[n - 1] = depot
    for i in range(k):
        tour[i + 1] = stops[i]
    while improved:
        improved = False
        for i in range(1, n - 2):
            a = tour[i - 1]
            b = tour[i]
            for j in range(i + 1, n - 1):
                c = tour[j]
                e = tour[j + 1]
                delta = dist[a, c] + dist[b, e] - dist[a, b] - dist[c, e]
                if delta < -1e-12:
                    lo = i
                    hi = j
                    while lo < hi:
                        tmp = tour[lo]
                        tour[lo] = tour[hi]
                        tour[hi] = tmp
                        lo += 1
                        hi -= 1
                    b = tour[i]
                    improved = True
    return tour_arr[1:n - 1].copy()
