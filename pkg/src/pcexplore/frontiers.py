"""Frontier detection and incremental clustering.

Frontiers are poorly observed voxels adjacent (26-connectivity) to a
well observed one; they carry a surface normal estimated from the point
cloud.  Clusters group frontier voxels whose centres sit within a
distance threshold and whose normals agree, grown breadth-first under a
cluster-extent cap.  Between frames only clusters near the change
region are dissolved and rebuilt, yet the resulting voxel partition
stays consistent with clustering everything from scratch.
"""
from __future__ import annotations

from collections import deque
from dataclasses import dataclass, field

import numpy as np

from .cloudmap import PointCloudMap
from .obsmap import Label, ObservationMap, ScanUpdate


@dataclass
class ClusterConfig:
    link_distance: float = 1.0    # max centre distance joining two frontier voxels
    normal_agreement: float = 0.5  # min dot product between their normals
    aabb_max: float = 6.0          # cluster extent cap per axis, metres
    normal_radius_factor: float = 3.0  # normal estimation radius, in voxel edges
    max_defer: int = 5             # failed planning attempts before quarantine


_OFFSETS_26 = [
    (i, j, k)
    for i in (-1, 0, 1)
    for j in (-1, 0, 1)
    for k in (-1, 0, 1)
    if (i, j, k) != (0, 0, 0)
]

_link_cache: dict[tuple[float, float], list[tuple[int, int, int]]] = {}


def _link_offsets(link_distance: float, res: float) -> list[tuple[int, int, int]]:
    """Lattice offsets whose centre distance is below the link threshold."""
    got = _link_cache.get((link_distance, res))
    if got is not None:
        return got
    reach = int(np.ceil(link_distance / res))
    out = []
    for i in range(-reach, reach + 1):
        for j in range(-reach, reach + 1):
            for k in range(-reach, reach + 1):
                if (i, j, k) == (0, 0, 0):
                    continue
                if np.sqrt(i * i + j * j + k * k) * res < link_distance:
                    out.append((i, j, k))
    out.sort()
    _link_cache[(link_distance, res)] = out
    return out


def link_reach_cells(link_distance: float, res: float) -> int:
    offs = _link_offsets(link_distance, res)
    return max(abs(v) for o in offs for v in o) if offs else 0


def estimate_normal(cloud: PointCloudMap, center: np.ndarray, radius: float, sensor: np.ndarray) -> np.ndarray:
    """Best-fit plane normal of the cloud around center, oriented toward
    the sensor.  Falls back to the sensor direction when fewer than three
    points are available."""
    center = np.asarray(center, dtype=np.float64)
    sensor = np.asarray(sensor, dtype=np.float64)
    pts = cloud.gather_within(center, radius)
    to_sensor = sensor - center
    if len(pts) < 3:
        n = np.linalg.norm(to_sensor)
        if n == 0.0:
            return np.array([0.0, 0.0, 1.0])
        return to_sensor / n
    centred = pts - pts.mean(axis=0)
    cov = centred.T @ centred
    _, vecs = np.linalg.eigh(cov)
    normal = vecs[:, 0]  # smallest principal direction
    if float(normal @ to_sensor) < 0.0:
        normal = -normal
    return normal


def has_well_neighbor(obs: ObservationMap, key: tuple[int, int, int]) -> bool:
    labels = obs.labels
    for o in _OFFSETS_26:
        if labels.get((key[0] + o[0], key[1] + o[1], key[2] + o[2])) == Label.WELL:
            return True
    return False


@dataclass
class FrontierDelta:
    """Per-frame frontier changes plus the AABB (in voxel keys) that
    bounds them; the box drives incremental re-clustering."""

    additions: list[tuple[int, int, int]] = field(default_factory=list)
    removals: list[tuple[int, int, int]] = field(default_factory=list)
    box_lo: np.ndarray | None = None
    box_hi: np.ndarray | None = None

    @property
    def empty(self) -> bool:
        return not self.additions and not self.removals


def detect_frontiers(
    obs: ObservationMap,
    upd: ScanUpdate,
    cloud: PointCloudMap,
    sensor: np.ndarray,
    cfg: ClusterConfig,
) -> FrontierDelta:
    """Promote qualifying voxels to frontier status after a scan update.

    Two sources are examined: voxels the frame touched, and poorly
    observed neighbours of voxels that just became well observed (those
    may lie outside the touched set).  Covering both keeps the frontier
    set identical to a from-scratch rescan of the whole map.
    """
    delta = FrontierDelta(removals=list(upd.frontier_removed))
    radius = cfg.normal_radius_factor * obs.res

    def promote(key):
        normal = estimate_normal(cloud, obs.center(key), radius, sensor)
        obs.set_frontier(key, normal)
        delta.additions.append(key)

    for key in upd.touched:
        if obs.labels.get(key) == Label.POORLY and has_well_neighbor(obs, key):
            promote(key)
    for key in upd.newly_well:
        for o in _OFFSETS_26:
            nb = (key[0] + o[0], key[1] + o[1], key[2] + o[2])
            if obs.labels.get(nb) == Label.POORLY and has_well_neighbor(obs, nb):
                promote(nb)

    changed = delta.additions + delta.removals
    if changed:
        arr = np.asarray(changed, dtype=np.int64)
        delta.box_lo = arr.min(axis=0)
        delta.box_hi = arr.max(axis=0)
    return delta


def cluster_frontiers(
    keys: list[tuple[int, int, int]],
    normals: dict[tuple[int, int, int], np.ndarray],
    res: float,
    cfg: ClusterConfig,
) -> list[list[tuple[int, int, int]]]:
    """Partition frontier voxels into clusters.

    Voxels join when their centres are within the link distance and
    their normals agree.  Growth is breadth-first from each unvisited
    key in the given order; a voxel whose absorption would stretch the
    cluster AABB beyond the extent cap is left behind and seeds a later
    cluster.
    """
    offsets = _link_offsets(cfg.link_distance, res)
    pending = set(keys)
    clusters: list[list[tuple[int, int, int]]] = []
    max_cells = cfg.aabb_max / res
    for seed in keys:
        if seed not in pending:
            continue
        pending.discard(seed)
        members = [seed]
        lo = np.asarray(seed, dtype=np.int64).copy()
        hi = lo.copy()
        queue = deque([seed])
        while queue:
            cur = queue.popleft()
            n_cur = normals[cur]
            for o in offsets:
                nb = (cur[0] + o[0], cur[1] + o[1], cur[2] + o[2])
                if nb not in pending:
                    continue
                if float(n_cur @ normals[nb]) <= cfg.normal_agreement:
                    continue
                new_lo = np.minimum(lo, nb)
                new_hi = np.maximum(hi, nb)
                if np.any((new_hi - new_lo) > max_cells):
                    continue  # not absorbed; seeds a later cluster
                lo, hi = new_lo, new_hi
                pending.discard(nb)
                members.append(nb)
                queue.append(nb)
        clusters.append(members)
    return clusters


@dataclass
class FrontierCluster:
    id: int
    keys: list[tuple[int, int, int]]
    box_lo: np.ndarray
    box_hi: np.ndarray
    centroid: np.ndarray
    gen_pose: np.ndarray
    gen_odometer: float
    defer_count: int = 0
    visits: int = 0
    quarantined: bool = False


class FrontierManager:
    """Owns the live cluster set and its incremental maintenance."""

    def __init__(self, cfg: ClusterConfig):
        self.cfg = cfg
        self.clusters: dict[int, FrontierCluster] = {}
        self.next_id = 0

    def active_clusters(self) -> list[FrontierCluster]:
        return [c for c in self.clusters.values() if not c.quarantined]

    def quarantined_clusters(self) -> list[FrontierCluster]:
        return [c for c in self.clusters.values() if c.quarantined]

    def _build_cluster(self, obs, keys, uav_pos, odometer) -> FrontierCluster:
        arr = np.asarray(keys, dtype=np.int64)
        centers = (arr.astype(np.float64) + 0.5) * obs.res
        cluster = FrontierCluster(
            id=self.next_id,
            keys=list(keys),
            box_lo=arr.min(axis=0),
            box_hi=arr.max(axis=0),
            centroid=centers.mean(axis=0),
            gen_pose=np.asarray(uav_pos, dtype=np.float64).copy(),
            gen_odometer=float(odometer),
        )
        self.next_id += 1
        self.clusters[cluster.id] = cluster
        return cluster

    def recluster(
        self,
        obs: ObservationMap,
        delta: FrontierDelta,
        uav_pos: np.ndarray,
        odometer: float,
    ) -> tuple[list[int], list[int]]:
        """Dissolve clusters near the change box and rebuild them
        together with the new frontier voxels.

        The dissolve test inflates the change box by the link reach so
        that a new voxel can never silently bridge into a cluster that
        was left untouched.  Returns (new cluster ids, dissolved ids).
        """
        if delta.empty:
            return [], []
        reach = link_reach_cells(self.cfg.link_distance, obs.res)
        lo = delta.box_lo - reach
        hi = delta.box_hi + reach
        dissolved: list[int] = []
        freed: set[tuple[int, int, int]] = set()
        for cid in sorted(self.clusters):
            c = self.clusters[cid]
            if np.all(c.box_hi >= lo) and np.all(c.box_lo <= hi):
                dissolved.append(cid)
                freed.update(c.keys)
        for cid in dissolved:
            del self.clusters[cid]

        # removals first: a voxel demoted and re-promoted within one frame
        # sits in both lists and must survive as a frontier
        freed.difference_update(delta.removals)
        freed.update(delta.additions)
        # cluster in the map's frontier insertion order so a from-scratch
        # rebuild with the same order reproduces the partition
        candidates = [k for k in obs.normals if k in freed]
        new_ids = []
        for keys in cluster_frontiers(candidates, obs.normals, obs.res, self.cfg):
            new_ids.append(self._build_cluster(obs, keys, uav_pos, odometer).id)
        return new_ids, dissolved

    def mark_planned(self, cluster_id: int) -> None:
        """Count a planning visit; clusters that keep their voxels
        unchanged through too many visits are quarantined."""
        c = self.clusters.get(cluster_id)
        if c is None:
            return
        c.visits += 1
        if c.visits > self.cfg.max_defer:
            c.quarantined = True

    def mark_deferred(self, cluster_id: int) -> bool:
        """Count a failed viewpoint selection; returns True when the
        cluster just crossed into quarantine."""
        c = self.clusters.get(cluster_id)
        if c is None:
            return False
        c.defer_count += 1
        if c.defer_count >= self.cfg.max_defer and not c.quarantined:
            c.quarantined = True
            return True
        return False
