"""Pure-Python reference versions of the compiled kernels.

Every function here has a twin with the same signature in ``_ckernels``.
"""
import numpy as np

INF = float("inf")


def route_length(dist, depot, stops):
    if len(stops) == 0:
        return 0.0
    total = dist[depot, stops[0]]
    for a, b in zip(stops[:-1], stops[1:]):
        total += dist[a, b]
    return float(total + dist[stops[-1], depot])


def subset_tours(dist, depot, nodes):
    """Shortest closed tour from ``depot`` through every subset of ``nodes``.

    Returns ``(tour, last)``: ``tour[S]`` is the optimal tour length for the
    subset encoded by bitmask ``S`` and ``last[S, j]`` the best open path
    length from the depot covering ``S`` and ending at ``nodes[j]``.
    """
    d = np.asarray(dist, dtype=np.float64).tolist()
    nodes = [int(x) for x in nodes]
    k = len(nodes)
    full = 1 << k
    f = [[INF] * k for _ in range(full)]
    for j in range(k):
        f[1 << j][j] = d[depot][nodes[j]]
    for S in range(1, full):
        fS = f[S]
        for j in range(k):
            base = fS[j]
            if base == INF or not (S >> j) & 1:
                continue
            dj = d[nodes[j]]
            for t in range(k):
                if (S >> t) & 1:
                    continue
                T = S | (1 << t)
                c = base + dj[nodes[t]]
                if c < f[T][t]:
                    f[T][t] = c
    tour = [0.0] * full
    for S in range(1, full):
        best = INF
        for j in range(k):
            if (S >> j) & 1:
                c = f[S][j] + d[nodes[j]][depot]
                if c < best:
                    best = c
        tour[S] = best
    return np.array(tour), np.array(f)


def subset_paths(dist, nodes):
    """``h[S, i, j]``: shortest Hamiltonian path over subset ``S`` from ``nodes[i]`` to ``nodes[j]``."""
    d = np.asarray(dist, dtype=np.float64).tolist()
    nodes = [int(x) for x in nodes]
    k = len(nodes)
    full = 1 << k
    h = np.full((full, k, k), INF)
    for i in range(k):
        f = [[INF] * k for _ in range(full)]
        f[1 << i][i] = 0.0
        for S in range(1, full):
            if not (S >> i) & 1:
                continue
            fS = f[S]
            for j in range(k):
                base = fS[j]
                if base == INF:
                    continue
                dj = d[nodes[j]]
                for t in range(k):
                    if (S >> t) & 1:
                        continue
                    T = S | (1 << t)
                    c = base + dj[nodes[t]]
                    if c < f[T][t]:
                        f[T][t] = c
            for j in range(k):
                h[S, i, j] = fS[j]
    return h


def partition_dp(cost, load, capacity, setup):
    """Best split of every subset into capacity-feasible groups.

    ``best[T] = min_S cost[S] + setup + best[T \\ S]`` over subsets ``S`` of
    ``T`` containing the lowest element of ``T`` with ``load[S] <= capacity``.
    ``choice[T]`` holds the minimising ``S`` (ties go to the first found).
    """
    cost = np.asarray(cost, dtype=np.float64).tolist()
    load = np.asarray(load, dtype=np.float64).tolist()
    full = len(cost)
    best = [INF] * full
    choice = [0] * full
    best[0] = 0.0
    for T in range(1, full):
        low = T & -T
        rest = T ^ low
        sub = rest
        b, ch = INF, 0
        while True:
            S = sub | low
            if load[S] <= capacity:
                c = cost[S] + setup + best[T ^ S]
                if c < b:
                    b, ch = c, S
            if sub == 0:
                break
            sub = (sub - 1) & rest
        best[T] = b
        choice[T] = ch
    return np.array(best), np.array(choice, dtype=np.int64)


def split_tour(dist, perm, demand, capacity, depots, setup):
    """Optimal segmentation of a giant tour into depot-anchored routes.

    Each segment is closed at whichever of ``depots`` gives the cheapest
    out-and-back connection to its endpoints. Returns
    ``(cost, pred, depot_of)`` where ``pred[j]`` is the start of the segment
    ending before position ``j`` and ``depot_of[j]`` its depot.
    """
    d = np.asarray(dist, dtype=np.float64)
    perm = [int(x) for x in perm]
    q = np.asarray(demand, dtype=np.float64)
    depots = [int(x) for x in depots]
    n = len(perm)
    V = [INF] * (n + 1)
    V[0] = 0.0
    pred = [0] * (n + 1)
    dep_of = [-1] * (n + 1)
    for i in range(n):
        if V[i] == INF:
            continue
        load = 0.0
        inner = 0.0
        first = perm[i]
        for j in range(i, n):
            v = perm[j]
            load += q[v]
            if load > capacity:
                break
            if j > i:
                inner += d[perm[j - 1], v]
            bd, bk = INF, -1
            for k in depots:
                c = d[k, first] + d[v, k]
                if c < bd:
                    bd, bk = c, k
            c = V[i] + inner + bd + setup
            if c < V[j + 1]:
                V[j + 1] = c
                pred[j + 1] = i
                dep_of[j + 1] = bk
    return float(V[n]), np.array(pred, dtype=np.int64), np.array(dep_of, dtype=np.int64)


def two_opt(dist, depot, stops):
    """First-improvement 2-opt on a single closed route; returns new stops."""
    d = np.asarray(dist, dtype=np.float64)
    tour = [int(depot)] + [int(s) for s in stops] + [int(depot)]
    n = len(tour)
    improved = True
    while improved:
        improved = False
        for i in range(1, n - 2):
            a, b = tour[i - 1], tour[i]
            for j in range(i + 1, n - 1):
                c, e = tour[j], tour[j + 1]
                delta = d[a, c] + d[b, e] - d[a, b] - d[c, e]
                if delta < -1e-12:
                    tour[i:j + 1] = tour[i:j + 1][::-1]
                    b = tour[i]
                    improved = True
    return np.array(tour[1:-1], dtype=np.int64)
