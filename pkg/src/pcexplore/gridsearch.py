"""Grid A* over a fixed lattice, shared by edge construction and by the
grid-based planning baselines.

The lattice is anchored at integer multiples of the pitch.  Callers
supply a node clearance function; endpoints are connected to nearby
lattice nodes and kept exact in the returned polyline.  An optional
per-step segment check makes every step of the result individually
verified, so a path that once passed stays reproducible by a fresh
search for as long as it remains valid.
"""
from __future__ import annotations

import heapq
from typing import Callable

import numpy as np

_OFFSETS = [
    (i, j, k)
    for i in (-1, 0, 1)
    for j in (-1, 0, 1)
    for k in (-1, 0, 1)
    if (i, j, k) != (0, 0, 0)
]
_STEPS = [float(np.sqrt(i * i + j * j + k * k)) for i, j, k in _OFFSETS]


def _bidirectional_astar(s_key, g_key, pitch, usable, step_ok, max_expansions):
    """Optimal lattice path by two opposed A* frontiers.

    Expanding from both ends means a search whose side is sealed inside
    a small pocket exhausts that pocket and proves unreachability
    without flooding the open side.  Terminates once neither frontier
    can beat the best connection found."""
    s_pos = np.array(s_key, dtype=np.float64) * pitch
    g_pos = np.array(g_key, dtype=np.float64) * pitch

    def h_fwd(key):
        return float(np.linalg.norm(np.array(key, dtype=np.float64) * pitch - g_pos))

    def h_bwd(key):
        return float(np.linalg.norm(np.array(key, dtype=np.float64) * pitch - s_pos))

    sides = [
        {"heap": [(h_fwd(s_key), 0.0, 0, s_key)], "g": {s_key: 0.0}, "parent": {}, "closed": set(), "h": h_fwd},
        {"heap": [(h_bwd(g_key), 0.0, 0, g_key)], "g": {g_key: 0.0}, "parent": {}, "closed": set(), "h": h_bwd},
    ]
    best = np.inf
    meet = None
    seq = 1
    expansions = 0
    while True:
        tops = []
        for side in sides:
            heap = side["heap"]
            while heap and heap[0][3] in side["closed"]:
                heapq.heappop(heap)
            tops.append(heap[0][0] if heap else np.inf)
        if meet is None and (not sides[0]["heap"] or not sides[1]["heap"]):
            return None  # one side exhausted its component: disconnected
        active = [i for i in (0, 1) if tops[i] < best - 1e-12]
        if not active:
            break
        # balance the frontiers: a pocketed side then exhausts first and
        # settles unreachability at the cost of the smaller component
        if len(active) == 1:
            i = active[0]
        else:
            i = 0 if len(sides[0]["closed"]) <= len(sides[1]["closed"]) else 1
        side, other = sides[i], sides[1 - i]
        _, _, _, cur = heapq.heappop(side["heap"])
        if cur in side["closed"]:
            continue
        side["closed"].add(cur)
        expansions += 1
        if expansions > max_expansions:
            return None
        cg = side["g"][cur]
        og = other["g"].get(cur)
        if og is not None and cg + og < best - 1e-12:
            best = cg + og
            meet = cur
        for off, step in zip(_OFFSETS, _STEPS):
            nb = (cur[0] + off[0], cur[1] + off[1], cur[2] + off[2])
            if nb in side["closed"] or not usable(nb) or not step_ok(cur, nb):
                continue
            ng = cg + step * pitch
            if ng < side["g"].get(nb, np.inf) - 1e-12:
                side["g"][nb] = ng
                side["parent"][nb] = cur
                # ties prefer the deeper node, then insertion order
                heapq.heappush(side["heap"], (ng + side["h"](nb), -ng, seq, nb))
                seq += 1
            og = other["g"].get(nb)
            if og is not None and ng + og < best - 1e-12:
                best = ng + og
                meet = nb
    if meet is None:
        return None
    fwd = [meet]
    while fwd[-1] != s_key:
        fwd.append(sides[0]["parent"][fwd[-1]])
    fwd.reverse()
    while fwd[-1] != g_key:
        fwd.append(sides[1]["parent"][fwd[-1]])
    return fwd


def astar_grid(
    start: np.ndarray,
    goal: np.ndarray,
    pitch: float,
    node_dist: Callable[[np.ndarray], float],
    min_clear: float,
    lo: np.ndarray,
    hi: np.ndarray,
    connect_free: Callable[[np.ndarray, np.ndarray], bool] | None = None,
    step_free: Callable[[np.ndarray, np.ndarray], bool] | None = None,
    max_expansions: int = 60000,
    node_memo: dict | None = None,
    step_memo: dict | None = None,
) -> np.ndarray | None:
    """26-connected A* between two exact points.

    A node is usable when node_dist at its position is at least
    min_clear.  When step_free is given, every lattice step must also
    pass it; steps between nodes so clear that no obstacle can intrude
    (margin covering half the longest step) skip the call.  Endpoints
    snap to the nearest usable node within two cells; connect_free, when
    given, gates the straight joins to the exact endpoints.  Returns a
    polyline starting exactly at start and ending at goal, or None.

    node_memo and step_memo cache node clearances and step verdicts by
    lattice key; callers running several searches against one frozen map
    may share them across calls (they are pure map lookups, so sharing
    never changes any result).
    """
    start = np.asarray(start, dtype=np.float64)
    goal = np.asarray(goal, dtype=np.float64)
    lo = np.asarray(lo, dtype=np.float64)
    hi = np.asarray(hi, dtype=np.float64)
    # nodes at least this clear certify any incident step geometrically
    super_clear = float(np.sqrt(min_clear**2 + 0.75 * pitch**2))

    dist_memo = node_memo if node_memo is not None else {}

    def clearance(key: tuple[int, int, int]) -> float:
        got = dist_memo.get(key)
        if got is None:
            got = float(node_dist(np.array(key, dtype=np.float64) * pitch))
            dist_memo[key] = got
        return got

    klo = [int(np.ceil((lo[i] - 1e-9) / pitch)) for i in range(3)]
    khi = [int(np.floor((hi[i] + 1e-9) / pitch)) for i in range(3)]

    def in_bounds(key: tuple[int, int, int]) -> bool:
        return (
            klo[0] <= key[0] <= khi[0]
            and klo[1] <= key[1] <= khi[1]
            and klo[2] <= key[2] <= khi[2]
        )

    def usable(key: tuple[int, int, int]) -> bool:
        return in_bounds(key) and clearance(key) >= min_clear

    if step_free is None:
        def step_ok(a_key, b_key):
            return True
    else:
        seg_memo = step_memo if step_memo is not None else {}

        def step_ok(a_key, b_key):
            if clearance(a_key) >= super_clear and clearance(b_key) >= super_clear:
                return True
            mk = (a_key, b_key) if a_key <= b_key else (b_key, a_key)
            got = seg_memo.get(mk)
            if got is None:
                got = bool(
                    step_free(
                        np.array(mk[0], dtype=np.float64) * pitch,
                        np.array(mk[1], dtype=np.float64) * pitch,
                    )
                )
                seg_memo[mk] = got
            return got

    def anchor(p: np.ndarray) -> tuple[int, int, int] | None:
        base = np.round(p / pitch).astype(np.int64)
        cands = []
        for di in range(-2, 3):
            for dj in range(-2, 3):
                for dk in range(-2, 3):
                    key = (int(base[0]) + di, int(base[1]) + dj, int(base[2]) + dk)
                    pos = np.array(key, dtype=np.float64) * pitch
                    cands.append((float(np.linalg.norm(pos - p)), key))
        cands.sort()
        for _, key in cands:
            if not usable(key):
                continue
            if connect_free is not None:
                pos = np.array(key, dtype=np.float64) * pitch
                if not connect_free(p, pos):
                    continue
            return key
        return None

    s_key = anchor(start)
    g_key = anchor(goal)
    if s_key is None or g_key is None:
        return None
    if s_key == g_key:
        keys = [s_key]
    else:
        keys = _bidirectional_astar(s_key, g_key, pitch, usable, step_ok, max_expansions)
        if keys is None:
            return None
    pts = [np.array(k, dtype=np.float64) * pitch for k in keys]
    if np.linalg.norm(pts[0] - start) > 1e-9:
        pts.insert(0, start.copy())
    if np.linalg.norm(pts[-1] - goal) > 1e-9:
        pts.append(goal.copy())
    return np.array(pts)


def simplify_path(
    path: np.ndarray, seg_free: Callable[[np.ndarray, np.ndarray], bool]
) -> np.ndarray:
    """Greedy shortcutting: from each kept point jump to the farthest
    later point whose connecting segment passes seg_free.  Consecutive
    input segments are kept as-is when no shortcut verifies."""
    pts = [np.asarray(p, dtype=np.float64) for p in path]
    if len(pts) <= 2:
        return np.array(pts)
    out = [pts[0]]
    i = 0
    while i < len(pts) - 1:
        j = len(pts) - 1
        while j > i + 1 and not seg_free(pts[i], pts[j]):
            j -= 1
        out.append(pts[j])
        i = j
    return np.array(out)
