"""Spatial-hash point-cloud map.

Points live in a hash of fixed-size cubic cells.  Inserts deduplicate
against points already stored in the same cell, nearest-neighbour
queries expand cell shells outward until the best candidate cannot be
beaten, and segment queries test an exact capsule around the segment.
The map is the collision substrate for every planner in the package, so
the query paths below are written for speed: candidate cells are pruned
by conservative distance bounds before any point maths runs.
"""
from __future__ import annotations

import struct

import numpy as np

from .geometry import as_point, points_segment_distance

# Analytic memory model of a compact open-addressed implementation:
# per stored point three float64 coordinates, per occupied cell a packed
# 64-bit key, a table slot, and an array header.
POINT_BYTES = 24
CELL_BYTES = 40
FIXED_BYTES = 64

_shell_cache: dict[int, np.ndarray] = {}
_ball_cache: dict[int, list[tuple[tuple[int, int, int], float]]] = {}


def _shell_offsets(s: int) -> np.ndarray:
    """Integer offsets at Chebyshev distance exactly s, cached."""
    got = _shell_cache.get(s)
    if got is not None:
        return got
    if s == 0:
        out = np.zeros((1, 3), dtype=np.int64)
    else:
        rng = np.arange(-s, s + 1)
        grid = np.stack(np.meshgrid(rng, rng, rng, indexing="ij"), axis=-1).reshape(-1, 3)
        out = grid[np.abs(grid).max(axis=1) == s]
    _shell_cache[s] = out
    return out


def _ball_offsets(reach: int) -> list[tuple[tuple[int, int, int], float]]:
    """Offsets within Chebyshev reach, each with a conservative lower
    bound (in cell units) on the distance from any point of the centre
    cell to the offset cell, sorted nearest-first."""
    got = _ball_cache.get(reach)
    if got is not None:
        return got
    rng = np.arange(-reach, reach + 1)
    grid = np.stack(np.meshgrid(rng, rng, rng, indexing="ij"), axis=-1).reshape(-1, 3)
    lb = np.linalg.norm(np.maximum(np.abs(grid) - 1, 0), axis=1)
    order = np.argsort(lb, kind="stable")
    out = [(tuple(int(v) for v in grid[i]), float(lb[i])) for i in order]
    _ball_cache[reach] = out
    return out


class PointCloudMap:
    """Incremental point-cloud map over a spatial hash of cubic cells."""

    def __init__(self, cell_size: float = 0.4, min_spacing: float | None = None, nn_cap: float = 5.0):
        if cell_size <= 0.0:
            raise ValueError("cell_size must be positive")
        self.cell_size = float(cell_size)
        # default keeps at most a 4x4x4 lattice of survivors per cell
        self.min_spacing = float(min_spacing) if min_spacing is not None else self.cell_size / 4.0
        self.nn_cap = float(nn_cap)
        self._cells: dict[tuple[int, int, int], list] = {}  # key -> [array, used]
        self.n_points = 0

    # ---- storage ---- #

    def key_of(self, p: np.ndarray) -> tuple[int, int, int]:
        k = np.floor(np.asarray(p) / self.cell_size).astype(np.int64)
        return (int(k[0]), int(k[1]), int(k[2]))

    def cell_points(self, key: tuple[int, int, int]) -> np.ndarray | None:
        slot = self._cells.get(key)
        if slot is None:
            return None
        return slot[0][: slot[1]]

    def keys(self):
        return self._cells.keys()

    @property
    def n_cells(self) -> int:
        return len(self._cells)

    def _append(self, key, p):
        slot = self._cells.get(key)
        if slot is None:
            arr = np.empty((8, 3))
            arr[0] = p
            self._cells[key] = [arr, 1]
        else:
            arr, used = slot
            if used == len(arr):
                grown = np.empty((2 * used, 3))
                grown[:used] = arr
                slot[0] = arr = grown
            arr[used] = p
            slot[1] = used + 1
        self.n_points += 1

    def insert_frame(self, points: np.ndarray) -> list[tuple[int, int, int]]:
        """Insert points in order, dropping any within min_spacing of a
        point already stored in the same cell.  Returns the cell keys
        that received at least one point, in first-touch order."""
        pts = np.asarray(points, dtype=np.float64).reshape(-1, 3)
        keys = np.floor(pts / self.cell_size).astype(np.int64)
        touched: list[tuple[int, int, int]] = []
        seen: set[tuple[int, int, int]] = set()
        gap2 = self.min_spacing * self.min_spacing
        for i in range(len(pts)):
            key = (int(keys[i, 0]), int(keys[i, 1]), int(keys[i, 2]))
            p = pts[i]
            slot = self._cells.get(key)
            if slot is not None:
                arr = slot[0][: slot[1]]
                d = arr - p
                if (d * d).sum(axis=1).min() < gap2:
                    continue
            self._append(key, p)
            if key not in seen:
                seen.add(key)
                touched.append(key)
        return touched

    # ---- queries ---- #

    def nearest_distance(self, p, cap: float | None = None) -> float:
        """Distance to the nearest stored point, truncated at the search
        cap; an empty neighbourhood reports the cap itself."""
        p = as_point(p)
        cap = self.nn_cap if cap is None else float(cap)
        cell = self.cell_size
        ck = np.floor(p / cell).astype(np.int64)
        best = np.inf
        s_max = int(np.ceil(cap / cell)) + 1
        for s in range(s_max + 1):
            # any cell in shell s is at least (s-1) cells away from p
            if (s - 1) * cell >= min(best, cap):
                break
            for off in _shell_offsets(s):
                key = (int(ck[0] + off[0]), int(ck[1] + off[1]), int(ck[2] + off[2]))
                slot = self._cells.get(key)
                if slot is None:
                    continue
                lo = np.array(key) * cell
                gap = np.maximum(np.maximum(lo - p, 0.0), p - (lo + cell))
                if float(gap @ gap) >= best * best:
                    continue
                arr = slot[0][: slot[1]]
                d = arr - p
                d2 = (d * d).sum(axis=1).min()
                if d2 < best * best:
                    best = float(np.sqrt(d2))
        return min(best, cap)

    def is_clear(self, p, clearance: float) -> bool:
        """True when no stored point lies strictly within clearance of p."""
        p = as_point(p)
        cell = self.cell_size
        ck = np.floor(p / cell).astype(np.int64)
        c2 = clearance * clearance
        reach = int(np.ceil(clearance / cell)) + 1
        for off, lb in _ball_offsets(reach):
            if lb * cell >= clearance:
                break
            key = (int(ck[0] + off[0]), int(ck[1] + off[1]), int(ck[2] + off[2]))
            slot = self._cells.get(key)
            if slot is None:
                continue
            arr = slot[0][: slot[1]]
            d = arr - p
            if (d * d).sum(axis=1).min() < c2:
                return False
        return True

    def gather_within(self, p, radius: float) -> np.ndarray:
        """All stored points within radius of p, shape (n, 3)."""
        p = as_point(p)
        cell = self.cell_size
        ck = np.floor(p / cell).astype(np.int64)
        reach = int(np.ceil(radius / cell)) + 1
        found = []
        for off, lb in _ball_offsets(reach):
            if lb * cell > radius:
                break
            key = (int(ck[0] + off[0]), int(ck[1] + off[1]), int(ck[2] + off[2]))
            slot = self._cells.get(key)
            if slot is None:
                continue
            arr = slot[0][: slot[1]]
            d = arr - p
            mask = (d * d).sum(axis=1) <= radius * radius
            if mask.any():
                found.append(arr[mask])
        if not found:
            return np.zeros((0, 3))
        return np.vstack(found)

    def segment_clear(self, a, b, clearance: float) -> bool:
        """True when no stored point lies strictly within clearance of
        the segment ab (exact capsule test, not a sampled one)."""
        a = as_point(a)
        b = as_point(b)
        cell = self.cell_size
        half_diag = 0.5 * np.sqrt(3.0) * cell
        lo = np.minimum(a, b) - clearance
        hi = np.maximum(a, b) + clearance
        klo = np.floor(lo / cell).astype(np.int64)
        khi = np.floor(hi / cell).astype(np.int64)
        span = khi - klo + 1
        n_keys = int(span[0] * span[1] * span[2])

        # short segments: gather occupied cells directly, one vector test
        if n_keys <= 600:
            chunks = []
            for ix in range(int(klo[0]), int(khi[0]) + 1):
                for iy in range(int(klo[1]), int(khi[1]) + 1):
                    for iz in range(int(klo[2]), int(khi[2]) + 1):
                        slot = self._cells.get((ix, iy, iz))
                        if slot is not None:
                            chunks.append(slot[0][: slot[1]])
            if not chunks:
                return True
            pts = chunks[0] if len(chunks) == 1 else np.vstack(chunks)
            return bool(points_segment_distance(pts, a, b).min() >= clearance)

        if n_keys <= len(self._cells) * 4 and n_keys <= 200_000:
            kx = np.arange(klo[0], khi[0] + 1)
            ky = np.arange(klo[1], khi[1] + 1)
            kz = np.arange(klo[2], khi[2] + 1)
            keys = np.stack(np.meshgrid(kx, ky, kz, indexing="ij"), axis=-1).reshape(-1, 3)
        else:
            keys = np.array(
                [k for k in self._cells if np.all(k >= klo) and np.all(k <= khi)],
                dtype=np.int64,
            ).reshape(-1, 3)
        if len(keys) == 0:
            return True

        centers = (keys + 0.5) * cell
        d_center = points_segment_distance(centers, a, b)
        near = keys[d_center <= clearance + half_diag]
        for k in near:
            slot = self._cells.get((int(k[0]), int(k[1]), int(k[2])))
            if slot is None:
                continue
            arr = slot[0][: slot[1]]
            if points_segment_distance(arr, a, b).min() < clearance:
                return False
        return True

    # ---- accounting / export ---- #

    def memory_bytes(self) -> int:
        """Analytic footprint of the hash: fixed overhead plus per-cell
        and per-point costs (see module constants)."""
        return FIXED_BYTES + self.n_cells * CELL_BYTES + self.n_points * POINT_BYTES

    def all_points(self) -> np.ndarray:
        if not self._cells:
            return np.zeros((0, 3))
        return np.vstack([slot[0][: slot[1]] for slot in self._cells.values()])

    def save_ply(self, path) -> None:
        """Write the cloud as binary little-endian PLY (float32 x, y, z)."""
        pts = self.all_points().astype("<f4")
        header = (
            "ply\n"
            "format binary_little_endian 1.0\n"
            f"element vertex {len(pts)}\n"
            "property float x\n"
            "property float y\n"
            "property float z\n"
            "end_header\n"
        )
        with open(path, "wb") as fh:
            fh.write(header.encode("ascii"))
            fh.write(pts.tobytes())


def load_ply_points(path) -> np.ndarray:
    """Read back a PLY written by save_ply (testing/demo helper)."""
    with open(path, "rb") as fh:
        blob = fh.read()
    head_end = blob.index(b"end_header\n") + len(b"end_header\n")
    header = blob[:head_end].decode("ascii")
    n = 0
    for line in header.splitlines():
        if line.startswith("element vertex"):
            n = int(line.split()[-1])
    flat = struct.unpack(f"<{3 * n}f", blob[head_end : head_end + 12 * n])
    return np.array(flat, dtype=np.float64).reshape(-1, 3)
