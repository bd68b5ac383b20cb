"""Observation-quality surface map.

Surface voxels carry one of three labels: poorly observed, well
observed, or frontier (a poorly observed voxel touching a well observed
one).  A voxel is certified well observed from a single scan when it is
close enough to the sensor and the four beams of the pyramidal volume
enclosing its centre mutually agree in range, which screens out grazing
incidence without ever estimating a surface normal.  Labels only move
toward well observed; certified voxels are never re-examined.

The map stores labels in a hash keyed by voxel index and keeps normals
only for frontier voxels, so its footprint scales with observed surface
area rather than scene volume.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from enum import IntEnum

import numpy as np

from .worldsim import ScanFrame

# Analytic per-entry costs of a compact implementation: packed 64-bit
# voxel key, one label byte, one table slot, and a float32 triplet for
# each frontier normal.
KEY_BYTES = 8
LABEL_BYTES = 1
SLOT_BYTES = 8
NORMAL_BYTES = 12
FIXED_BYTES = 64


class Label(IntEnum):
    POORLY = 1
    WELL = 2
    FRONTIER = 3


@dataclass
class ObsConfig:
    res: float = 0.4              # voxel edge, metres
    max_distance: float = 15.0    # distance gate between sensor and voxel centre
    ratio_threshold: float = 0.9  # min/max range ratio each beam pair must exceed
    adjacent_pairs_only: bool = False  # True: check the 4 edge-adjacent pairs, not all 6


def distance_ok(sensor: np.ndarray, center: np.ndarray, max_distance: float) -> bool:
    """Distance gate, inclusive at the boundary."""
    return float(np.linalg.norm(np.asarray(center) - np.asarray(sensor))) <= max_distance


def view_ratio_ok(l1: float, l2: float, threshold: float) -> bool:
    """True when the shorter of two neighbouring-beam ranges exceeds
    threshold times the longer one.  Near-grazing incidence stretches one
    range relative to the other and drives the ratio toward zero."""
    if not (0.0 < threshold < 1.0):
        raise ValueError("threshold must lie in (0, 1)")
    if not (np.isfinite(l1) and np.isfinite(l2)) or l1 <= 0.0 or l2 <= 0.0:
        raise ValueError("ranges must be positive and finite")
    lo, hi = (l1, l2) if l1 <= l2 else (l2, l1)
    return lo / hi > threshold


# pair index layout for a 2x2 beam block flattened row-major:
#   0 1
#   2 3
_ALL_PAIRS = ((0, 1), (0, 2), (0, 3), (1, 2), (1, 3), (2, 3))
_ADJACENT_PAIRS = ((0, 1), (0, 2), (1, 3), (2, 3))


def volume_view_ok(block: np.ndarray, threshold: float, adjacent_pairs_only: bool = False) -> bool:
    """Certify the pyramidal volume spanned by a 2x2 beam block.

    block holds the four beam ranges; any missing return (inf) fails the
    check outright.  By default all six unordered pairs must satisfy the
    ratio test; the adjacent-pairs switch relaxes it to the four
    edge-adjacent pairs.
    """
    r = np.asarray(block, dtype=np.float64).reshape(4)
    if not np.all(np.isfinite(r)):
        return False
    pairs = _ADJACENT_PAIRS if adjacent_pairs_only else _ALL_PAIRS
    for i, j in pairs:
        if not view_ratio_ok(float(r[i]), float(r[j]), threshold):
            return False
    return True


def enclosing_block(frame: ScanFrame, center: np.ndarray) -> np.ndarray | None:
    """Ranges of the 2x2 beam block whose pyramid contains center, or
    None when the centre projects outside the beam lattice."""
    row_f, col_f = frame.grid_coords(np.asarray(center, dtype=np.float64).reshape(1, 3))
    rf, cf = float(row_f[0]), float(col_f[0])
    rows, cols = frame.lidar.rows, frame.lidar.cols
    r0 = int(np.floor(rf))
    if r0 < 0 or r0 + 1 > rows - 1:
        return None
    if frame.lidar.wraps:
        if cols < 2:
            return None
        c0 = int(np.floor(cf)) % cols
        c1 = (c0 + 1) % cols
    else:
        c0 = int(np.floor(cf))
        if c0 < 0 or c0 + 1 > cols - 1:
            return None
        c1 = c0 + 1
    return np.array(
        [
            [frame.ranges[r0, c0], frame.ranges[r0, c1]],
            [frame.ranges[r0 + 1, c0], frame.ranges[r0 + 1, c1]],
        ]
    )


class ObservationMap:
    """Hash of labelled surface voxels plus frontier normals."""

    def __init__(self, res: float = 0.4):
        self.res = float(res)
        self.labels: dict[tuple[int, int, int], int] = {}
        self.normals: dict[tuple[int, int, int], np.ndarray] = {}
        self.n_well = 0

    def key_of(self, p) -> tuple[int, int, int]:
        k = np.floor(np.asarray(p) / self.res).astype(np.int64)
        return (int(k[0]), int(k[1]), int(k[2]))

    def center(self, key: tuple[int, int, int]) -> np.ndarray:
        return (np.asarray(key, dtype=np.float64) + 0.5) * self.res

    def label_of(self, key) -> int:
        return self.labels.get(key, 0)

    @property
    def n_voxels(self) -> int:
        return len(self.labels)

    @property
    def n_frontier(self) -> int:
        return len(self.normals)

    @property
    def n_poorly(self) -> int:
        return len(self.labels) - self.n_well - self.n_frontier

    def set_frontier(self, key, normal: np.ndarray) -> None:
        self.labels[key] = Label.FRONTIER
        self.normals[key] = np.asarray(normal, dtype=np.float64)

    def voxel_bounds(self) -> tuple[np.ndarray, np.ndarray] | None:
        """AABB of all labelled voxels in metres, None while empty."""
        if not self.labels:
            return None
        keys = np.array(list(self.labels.keys()), dtype=np.int64)
        return keys.min(axis=0) * self.res, (keys.max(axis=0) + 1) * self.res

    def memory_bytes(self) -> int:
        """Analytic footprint: keys, labels, table slots, and frontier
        normals (see module constants)."""
        return (
            FIXED_BYTES
            + len(self.labels) * (KEY_BYTES + LABEL_BYTES + SLOT_BYTES)
            + len(self.normals) * NORMAL_BYTES
        )

    def save_ply(self, path) -> None:
        """Voxel centres as binary PLY with the label as a colour channel."""
        colors = {
            int(Label.POORLY): (128, 128, 128),
            int(Label.WELL): (0, 200, 0),
            int(Label.FRONTIER): (255, 60, 0),
        }
        items = list(self.labels.items())
        header = (
            "ply\n"
            "format binary_little_endian 1.0\n"
            f"element vertex {len(items)}\n"
            "property float x\n"
            "property float y\n"
            "property float z\n"
            "property uchar red\n"
            "property uchar green\n"
            "property uchar blue\n"
            "end_header\n"
        )
        rec = np.dtype([("xyz", "<f4", 3), ("rgb", "u1", 3)])
        data = np.empty(len(items), dtype=rec)
        for i, (key, label) in enumerate(items):
            data["xyz"][i] = self.center(key)
            data["rgb"][i] = colors[int(label)]
        with open(path, "wb") as fh:
            fh.write(header.encode("ascii"))
            fh.write(data.tobytes())


@dataclass
class ScanUpdate:
    """Result of folding one frame into the observation map.

    touched lists every voxel key hit by the frame in first-appearance
    (beam row-major) order.  newly_well is the subset that crossed into
    well observed this frame, and frontier_removed the part of that
    subset that previously held a frontier label; frontier maintenance
    keys off both lists.
    """

    touched: list[tuple[int, int, int]] = field(default_factory=list)
    newly_well: list[tuple[int, int, int]] = field(default_factory=list)
    frontier_removed: list[tuple[int, int, int]] = field(default_factory=list)


def update_observation(obs: ObservationMap, frame: ScanFrame, cfg: ObsConfig) -> ScanUpdate:
    """Re-evaluate every voxel the frame touched.

    Voxels already well observed are skipped (labels are monotone).  A
    frontier voxel that fails certification drops back to poorly
    observed here; frontier detection re-promotes it in the same frame
    if it still qualifies.
    """
    hits = frame.hit_points()
    upd = ScanUpdate()
    if len(hits) == 0:
        return upd
    keys = np.floor(hits / obs.res).astype(np.int64)
    seen: set[tuple[int, int, int]] = set()
    for i in range(len(keys)):
        key = (int(keys[i, 0]), int(keys[i, 1]), int(keys[i, 2]))
        if key in seen:
            continue
        seen.add(key)
        upd.touched.append(key)

        old = obs.labels.get(key, 0)
        if old == Label.WELL:
            continue
        center = obs.center(key)
        certified = False
        if distance_ok(frame.origin, center, cfg.max_distance):
            block = enclosing_block(frame, center)
            if block is not None:
                certified = volume_view_ok(block, cfg.ratio_threshold, cfg.adjacent_pairs_only)
        if certified:
            obs.labels[key] = Label.WELL
            obs.n_well += 1
            upd.newly_well.append(key)
            if old == Label.FRONTIER:
                obs.normals.pop(key, None)
                upd.frontier_removed.append(key)
        else:
            obs.labels[key] = Label.POORLY
            if old == Label.FRONTIER:
                obs.normals.pop(key, None)
    return upd
