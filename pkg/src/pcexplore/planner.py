"""Global planning cycle: rank frontier clusters by how far the vehicle
would have to fly back, pick a reachable viewpoint for each of the top
ranked ones, and order the viewpoints into an open tour stitched along
the roadmap graph.
"""
from __future__ import annotations

import time
from dataclasses import dataclass, field

import numpy as np

from .atsp import solve_open_tour
from .cloudmap import PointCloudMap
from .frontiers import FrontierCluster, FrontierManager
from .obsmap import ObservationMap
from .topograph import Sphere, TopoGraph, cluster_spheres
from .worldsim import LidarModel


class FlightLog:
    """Flight-distance record: positions with cumulative distance.

    Callers must record every direction change, so the distance between
    consecutive samples is the straight segment between them and the
    cumulative column integrates the flown path exactly.
    """

    def __init__(self, log_every: float = 0.5):
        self.log_every = float(log_every)
        self.samples: list[tuple[np.ndarray, float]] = []

    @property
    def total(self) -> float:
        return self.samples[-1][1] if self.samples else 0.0

    def record(self, position, force: bool = False) -> bool:
        """Append a sample when forced or when the vehicle has moved at
        least log_every since the last one.  Returns True on append."""
        p = np.asarray(position, dtype=np.float64).copy()
        if not self.samples:
            self.samples.append((p, 0.0))
            return True
        last_p, last_c = self.samples[-1]
        d = float(np.linalg.norm(p - last_p))
        if not force and d < self.log_every:
            return False
        if d == 0.0 and not force:
            return False
        self.samples.append((p, last_c + d))
        return True


@dataclass
class Viewpoint:
    position: np.ndarray
    yaw: float
    coverage: int
    cluster_id: int


@dataclass
class GuidancePath:
    viewpoints: list[Viewpoint]
    polyline: np.ndarray
    length: float
    record: dict = field(default_factory=dict)

    @property
    def empty(self) -> bool:
        return len(self.viewpoints) == 0


@dataclass
class PlannerConfig:
    top_k: int = 8
    exact_atsp_limit: int = 12
    yaw_samples: int = 18
    lattice_radii: tuple = (2.0, 4.0, 6.0)
    lattice_azimuths: int = 12
    lattice_heights: tuple = (-1.0, 0.0, 1.0)
    normal_angle_deg: float = 60.0
    max_obs_distance: float = 15.0
    los_clearance: float = 0.2  # half the surface-map voxel size


def backtracking_distance(cluster: FrontierCluster, log: FlightLog) -> float:
    """Distance already flown since the cluster appeared plus the
    straight hop from the appearance point to the cluster centroid.
    Constant time: two stored scalars and one norm."""
    d_f = log.total - cluster.gen_odometer
    return d_f + float(np.linalg.norm(cluster.gen_pose - cluster.centroid))


def rank_clusters(clusters: list[FrontierCluster], log: FlightLog) -> list[int]:
    """Cluster ids ordered nearest-to-revisit first, ties by id."""
    keyed = [(backtracking_distance(c, log), c.id) for c in clusters]
    keyed.sort()
    return [cid for _, cid in keyed]


def sample_viewpoints(
    cluster: FrontierCluster, cloud: PointCloudMap, graph: TopoGraph, cfg: PlannerConfig
) -> list[list[tuple[np.ndarray, Sphere]]]:
    """Cylindrical candidate lattice around the cluster centroid.

    Candidates closer than safety_radius to the map are eliminated; the
    survivors carry their free-space sphere and are grouped by the same
    sphere-connectivity rule the roadmap uses, so each group occupies
    one pocket of free space."""
    c = cluster.centroid
    safety = graph.cfg.safety_radius
    cands: list[np.ndarray] = []
    for r in cfg.lattice_radii:
        for ia in range(cfg.lattice_azimuths):
            a = 2.0 * np.pi * ia / cfg.lattice_azimuths
            for h in cfg.lattice_heights:
                cands.append(c + np.array([r * np.cos(a), r * np.sin(a), h]))
    kept: list[tuple[np.ndarray, Sphere]] = []
    for p in cands:
        d = cloud.nearest_distance(p)
        if d < safety:
            continue
        kept.append((p, Sphere(center=p.copy(), radius=d)))
    if not kept:
        return []
    groups = cluster_spheres([s for _, s in kept], graph.cfg.safety_radius, graph.cfg.sphere_link)
    return [[kept[i] for i in grp] for grp in groups]


def _wrap(angle: float) -> float:
    return float(np.arctan2(np.sin(angle), np.cos(angle)))


def coverage_score(
    vp_position: np.ndarray,
    cluster: FrontierCluster,
    obs: ObservationMap,
    cloud: PointCloudMap,
    lidar: LidarModel,
    cfg: PlannerConfig,
) -> tuple[float, int]:
    """Best yaw and the number of cluster cells well observable from it.

    A cell counts when it is within range, its sight line is clear at
    line-of-sight clearance, its surface normal faces the viewpoint
    within the angle threshold, and it falls inside the sensor's field
    of view at the candidate yaw."""
    vp = np.asarray(vp_position, dtype=np.float64)
    cos_lim = float(np.cos(np.deg2rad(cfg.normal_angle_deg)))
    half_h = np.deg2rad(lidar.hfov_deg) / 2.0
    half_v = np.deg2rad(lidar.vfov_deg) / 2.0
    pitch = np.deg2rad(lidar.pitch_deg)
    visible = []  # (azimuth, elevation) of cells passing the yaw-free gates
    for key in cluster.keys:
        n = obs.normals.get(key)
        if n is None:
            continue
        cell = obs.center(key)
        rel = cell - vp
        dist = float(np.linalg.norm(rel))
        if dist > cfg.max_obs_distance or dist < 1e-9:
            continue
        if float(np.dot(n, -rel)) / dist < cos_lim:
            continue
        if not cloud.segment_clear(vp, cell, cfg.los_clearance):
            continue
        az = float(np.arctan2(rel[1], rel[0]))
        el = float(np.arcsin(np.clip(rel[2] / dist, -1.0, 1.0)))
        if abs(el - pitch) > half_v + 1e-12:
            continue
        visible.append(az)
    best_yaw, best_n = 0.0, 0
    for iy in range(cfg.yaw_samples):
        yaw = 2.0 * np.pi * iy / cfg.yaw_samples
        n_vis = sum(1 for az in visible if abs(_wrap(az - yaw)) <= half_h + 1e-12)
        if n_vis > best_n:
            best_yaw, best_n = yaw, n_vis
    return best_yaw, best_n


def select_viewpoint(
    cluster: FrontierCluster,
    graph: TopoGraph,
    cloud: PointCloudMap,
    obs: ObservationMap,
    lidar: LidarModel,
    cfg: PlannerConfig,
) -> Viewpoint | None:
    """Reachability-gated pick of the best-covering candidate.

    Each candidate group is probed through its representative (largest
    sphere, ties to the member nearest the centroid): the representative
    is temporarily wired into the graph and must be reachable from the
    odometry vertex.  The graph is restored before returning.  Among
    members of reachable groups the highest coverage wins; None when no
    group is reachable or nothing covers anything."""
    groups = sample_viewpoints(cluster, cloud, graph, cfg)
    reachable_members: list[tuple[np.ndarray, Sphere]] = []
    for grp in groups:
        rep_i = min(
            range(len(grp)),
            key=lambda i: (
                -grp[i][1].radius,
                float(np.linalg.norm(grp[i][0] - cluster.centroid)),
                i,
            ),
        )
        vid, token = graph.connect_temp(grp[rep_i][0], cloud)
        ok = graph.shortest_path(graph.odom_id, vid) is not None
        graph.rollback(token)
        if ok:
            reachable_members.extend(grp)
    best: Viewpoint | None = None
    for p, _ in reachable_members:
        yaw, score = coverage_score(p, cluster, obs, cloud, lidar, cfg)
        if score >= 1 and (best is None or score > best.coverage):
            best = Viewpoint(position=p.copy(), yaw=yaw, coverage=score, cluster_id=cluster.id)
    return best


def plan_tour(
    current_position: np.ndarray,
    viewpoints: list[Viewpoint],
    graph: TopoGraph,
    cloud: PointCloudMap,
    cfg: PlannerConfig,
) -> GuidancePath:
    """Order the viewpoints into a minimum open tour from the vehicle.

    All viewpoints are wired into the graph at once; the pairwise
    distance matrix comes from graph shortest paths with the odometry
    vertex as node 0.  Unreachable viewpoints are dropped with a warning
    record.  Legs are stitched from stored edge paths before the
    temporary vertices are rolled back."""
    record: dict = {"warnings": [], "matrix_time": 0.0, "solve_time": 0.0}
    if not viewpoints:
        return GuidancePath([], np.zeros((0, 3)), 0.0, record)
    t0 = time.perf_counter()
    tokens = []
    ids = [graph.odom_id]
    for vp in viewpoints:
        vid, token = graph.connect_temp(vp.position, cloud)
        ids.append(vid)
        tokens.append(token)

    usable = [0]
    for i in range(1, len(ids)):
        if graph.shortest_path(graph.odom_id, ids[i]) is not None:
            usable.append(i)
        else:
            record["warnings"].append(
                f"viewpoint for cluster {viewpoints[i - 1].cluster_id} unreachable, dropped"
            )
    m = len(usable)
    dist = np.zeros((m, m))
    paths: dict[tuple[int, int], list[int]] = {}
    for a in range(m):
        for b in range(a + 1, m):
            got = graph.shortest_path(ids[usable[a]], ids[usable[b]])
            if got is None:
                dist[a, b] = dist[b, a] = np.inf
                continue
            seq, length = got
            dist[a, b] = dist[b, a] = length
            paths[(a, b)] = seq
    record["matrix_time"] = time.perf_counter() - t0

    t1 = time.perf_counter()
    order, _ = solve_open_tour(dist, cfg.exact_atsp_limit)
    record["solve_time"] = time.perf_counter() - t1

    chain = []
    prev = 0
    for j in order:
        a, b = (prev, j) if prev < j else (j, prev)
        seq = paths.get((a, b))
        if seq is None:
            continue
        chain.append(seq if prev < j else seq[::-1])
        prev = j
    # stitch legs while the temporary vertices still exist
    pts: list[np.ndarray] = []
    total = 0.0
    for seq in chain:
        leg = graph.stitch(seq)
        if len(pts) and len(leg):
            leg = leg[1:]  # joint vertex shared with the previous leg
        pts.extend(np.asarray(q, dtype=np.float64) for q in leg)
    if pts:
        arr = np.array(pts)
        total = float(np.sqrt((np.diff(arr, axis=0) ** 2).sum(axis=1)).sum())
    else:
        arr = np.zeros((0, 3))
    for token in reversed(tokens):
        graph.rollback(token)

    ordered_vps = [viewpoints[usable[j] - 1] for j in order]
    record["tour_order"] = [vp.cluster_id for vp in ordered_vps]
    return GuidancePath(ordered_vps, arr, total, record)


def plan_cycle(
    manager: FrontierManager,
    graph: TopoGraph,
    cloud: PointCloudMap,
    obs: ObservationMap,
    log: FlightLog,
    uav_position: np.ndarray,
    lidar: LidarModel,
    cfg: PlannerConfig,
) -> GuidancePath:
    """One full planning pass over the current cluster set.

    Ranks the live clusters, tries to place a viewpoint for each of the
    first top_k (deferring clusters that yield none), and tours the
    placements.  An empty result with no live clusters means the run is
    finished; empty with live clusters means everything is currently
    unreachable."""
    t0 = time.perf_counter()
    active = manager.active_clusters()
    ranked = rank_clusters(active, log)
    by_id = {c.id: c for c in active}
    chosen: list[Viewpoint] = []
    for cid in ranked[: cfg.top_k]:
        vp = select_viewpoint(by_id[cid], graph, cloud, obs, lidar, cfg)
        if vp is None:
            manager.mark_deferred(cid)
        else:
            # counts planning visits; clusters that never change despite
            # repeated visits are quarantined as stagnant
            manager.mark_planned(cid)
            chosen.append(vp)
    path = plan_tour(uav_position, chosen, graph, cloud, cfg)
    path.record["ranked"] = ranked
    path.record["chosen"] = [vp.cluster_id for vp in chosen]
    path.record["cycle_time"] = time.perf_counter() - t0
    return path
