"""Independent reference computations used to freeze expected values in tests.

These avoid the package's own code paths on purpose: reachability by
repeated boolean matrix products, screening by a plain sort, the update rule
written out term by term, and so on.
"""
import itertools
import math

import numpy as np


def reachability(M, edges, nodes=None):
    """Boolean matrix R with R[a, b] true when b is reachable from a (a reaches itself)."""
    nodes = sorted(range(1, M + 1) if nodes is None else nodes)
    pos = {n: i for i, n in enumerate(nodes)}
    n = len(nodes)
    R = np.eye(n, dtype=bool)
    for j, i in edges:
        if j in pos and i in pos:
            R[pos[j], pos[i]] = True
    for _ in range(max(1, math.ceil(math.log2(max(n, 2))))):
        R = R | ((R.astype(np.int64) @ R.astype(np.int64)) > 0)
    return nodes, R


def brute_force_source_component(M, edges, nodes=None):
    nodes, R = reachability(M, edges, nodes)
    return frozenset(n for n, row in zip(nodes, R) if row.all())


def batched_source_sizes(n, adj):
    """``adj`` has shape (G, n, n); returns how many nodes reach all others in each graph."""
    R = adj | np.eye(n, dtype=bool)[None]
    for _ in range(max(1, math.ceil(math.log2(max(n, 2))))):
        Ri = R.astype(np.int32)
        R = R | (np.matmul(Ri, Ri) > 0)
    return R.all(axis=2).sum(axis=1)


def brute_force_certify(g, b):
    """Literal check: every placement of at most b Byzantine nodes, every way to
    remove up to b incoming edges from each remaining node."""
    M = g.node_count
    for size in range(b + 1):
        for placement in itertools.combinations(range(1, M + 1), size):
            honest = [v for v in range(1, M + 1) if v not in placement]
            if not honest:
                continue
            pos = {v: k for k, v in enumerate(honest)}
            n = len(honest)
            base = np.zeros((n, n), dtype=bool)
            choices = []
            for i in honest:
                incoming = [j for j, k in g.edges if k == i and j in pos]
                opts = [c for r in range(min(b, len(incoming)) + 1) for c in itertools.combinations(incoming, r)]
                choices.append((i, opts))
                for j in incoming:
                    base[pos[j], pos[i]] = True
            combos = list(itertools.product(*(opts for _, opts in choices)))
            adj = np.repeat(base[None], len(combos), axis=0)
            for gi, combo in enumerate(combos):
                for (i, _), removed in zip(choices, combo):
                    for j in removed:
                        adj[gi, pos[j], pos[i]] = False
            if (batched_source_sizes(n, adj) < b + 1).any():
                return False
    return True


def screen_by_sort(values, b):
    """``values`` maps sender -> value. Returns (kept senders, low removed, high removed)."""
    order = sorted(values, key=lambda s: (math.inf if math.isnan(values[s]) else values[s], s))
    low = order[:b]
    high = order[len(order) - b:] if b else []
    kept = order[b:len(order) - b]
    return kept, low, high


def update_by_hand(self_value, kept, n_neighbors, b, rho, g):
    total = self_value
    for v in kept:
        total += v
    return total / (n_neighbors - 2 * b + 1) - rho * g


def finite_difference(f, w, h=1e-6):
    out = np.zeros_like(w)
    for k in range(w.size):
        e = np.zeros_like(w)
        e[k] = h
        out[k] = (f(w + e) - f(w - e)) / (2 * h)
    return out


def ridge_closed_form(X, y, lam):
    """Minimizer of mean((y - Xw)^2) + lam/2 |w|^2, from the normal equations
    (2 X^T X / n + lam I) w = 2 X^T y / n."""
    n, P = X.shape
    return np.linalg.solve(2 * X.T @ X / n + lam * np.eye(P), 2 * X.T @ y / n)


def pairwise_by_loop(W):
    dists = []
    for a in range(len(W)):
        for c in range(a + 1, len(W)):
            dists.append(math.sqrt(sum((x - z) ** 2 for x, z in zip(W[a], W[c]))))
    return max(dists), sum(dists) / len(dists)


def golden_section(f, lo, hi, tol=1e-12):
    g = (math.sqrt(5) - 1) / 2
    a, c = lo, hi
    while c - a > tol:
        x1 = c - g * (c - a)
        x2 = a + g * (c - a)
        if f(x1) <= f(x2):
            c = x2
        else:
            a = x1
    return 0.5 * (a + c)
