"""Open travelling-salesman tours: visit every goal once starting from a
fixed origin, with no return leg.

Costs come in as a full (n+1) x (n+1) matrix whose row/column 0 is the
origin.  Entries may be asymmetric and np.inf marks an unusable leg, so
all delta evaluations recompute directed costs instead of assuming
symmetry.
"""
from __future__ import annotations

import numpy as np


def tour_cost(dist: np.ndarray, order: list[int]) -> float:
    """Cost of visiting `order` (goal indices, origin excluded) from 0."""
    c = 0.0
    prev = 0
    for j in order:
        c += float(dist[prev, j])
        prev = j
    return c


def held_karp_open(dist: np.ndarray) -> tuple[list[int], float]:
    """Exact open tour by subset dynamic programming.

    dist is (n+1) x (n+1) with origin at index 0.  Returns the visiting
    order of goals 1..n and its cost.  Exponential in n; callers gate on
    the goal count."""
    n = dist.shape[0] - 1
    if n == 0:
        return [], 0.0
    full = (1 << n) - 1
    # dp[mask][j] = best cost reaching goal j+1 having visited mask
    dp = np.full((full + 1, n), np.inf)
    parent = np.full((full + 1, n), -1, dtype=np.int64)
    for j in range(n):
        dp[1 << j, j] = dist[0, j + 1]
    for mask in range(1, full + 1):
        row = dp[mask]
        for j in range(n):
            if not mask & (1 << j) or not np.isfinite(row[j]):
                continue
            base = row[j]
            for k in range(n):
                if mask & (1 << k):
                    continue
                nm = mask | (1 << k)
                nc = base + dist[j + 1, k + 1]
                if nc < dp[nm, k] - 1e-12:
                    dp[nm, k] = nc
                    parent[nm, k] = j
    end = int(np.argmin(dp[full]))
    best = float(dp[full, end])
    if not np.isfinite(best):
        return [], np.inf
    order = []
    mask, j = full, end
    while j >= 0:
        order.append(j + 1)
        pj = int(parent[mask, j])
        mask &= ~(1 << j)
        j = pj
    order.reverse()
    return order, best


def nn_2opt_open(dist: np.ndarray, max_rounds: int = 40) -> tuple[list[int], float]:
    """Nearest-neighbour construction refined by 2-opt reversals and
    or-opt relocations until no move improves.  Deterministic."""
    n = dist.shape[0] - 1
    if n == 0:
        return [], 0.0
    left = list(range(1, n + 1))
    order: list[int] = []
    cur = 0
    while left:
        nxt = min(left, key=lambda j: (float(dist[cur, j]), j))
        order.append(nxt)
        left.remove(nxt)
        cur = nxt
    best = tour_cost(dist, order)
    for _ in range(max_rounds):
        improved = False
        # 2-opt: reverse order[i:j+1]; directed costs recomputed in full
        for i in range(len(order)):
            for j in range(i + 1, len(order)):
                cand = order[:i] + order[i : j + 1][::-1] + order[j + 1 :]
                c = tour_cost(dist, cand)
                if c < best - 1e-12:
                    order, best = cand, c
                    improved = True
        # or-opt: move a run of 1..3 goals to another position
        for run in (1, 2, 3):
            for i in range(len(order) - run + 1):
                seg = order[i : i + run]
                rest = order[:i] + order[i + run :]
                for at in range(len(rest) + 1):
                    if at == i:
                        continue
                    cand = rest[:at] + seg + rest[at:]
                    c = tour_cost(dist, cand)
                    if c < best - 1e-12:
                        order, best = cand, c
                        improved = True
        if not improved:
            break
    return order, best


def solve_open_tour(dist: np.ndarray, exact_limit: int = 12) -> tuple[list[int], float]:
    """Exact solve up to exact_limit goals, heuristic beyond."""
    dist = np.asarray(dist, dtype=np.float64)
    n = dist.shape[0] - 1
    if n <= exact_limit:
        return held_karp_open(dist)
    return nn_2opt_open(dist)
