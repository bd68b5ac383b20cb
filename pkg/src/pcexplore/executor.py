"""Kinematic waypoint follower and the sense-update-plan-move loop.

The vehicle is a point that tracks the planned polyline at bounded
speed and yaw rate; dynamics, corridors, and trajectory smoothing are
out of scope.  The loop runs on fixed-step simulated time and ends when
no live frontier cluster remains or when a budget runs out.
"""
from __future__ import annotations

import time
from dataclasses import dataclass, field

import numpy as np

from .cloudmap import PointCloudMap
from .frontiers import ClusterConfig, FrontierManager, detect_frontiers
from .obsmap import ObsConfig, ObservationMap, update_observation
from .planner import FlightLog, GuidancePath, PlannerConfig, plan_cycle
from .topograph import TopoConfig, TopoGraph
from .worldsim import Pose, World, raycast_scan

RUNNING = "running"
FINISHED = "finished"
STALLED = "stalled"


@dataclass
class ExecConfig:
    dt: float = 0.1                 # one scan per step, 10 Hz
    v_max: float = 4.0
    yaw_rate_deg: float = 90.0
    replan_period: float = 1.0
    log_every: float = 0.5
    sim_time_budget: float = 900.0
    wall_time_budget: float = 1800.0


class PathFollower:
    """Cursor along a polyline; advances by arc length."""

    def __init__(self, polyline: np.ndarray):
        self.pts = np.asarray(polyline, dtype=np.float64)
        self.seg = 0
        self.into = 0.0

    @property
    def done(self) -> bool:
        return len(self.pts) < 2 or self.seg >= len(self.pts) - 1

    def position(self) -> np.ndarray:
        if len(self.pts) == 0:
            return np.zeros(3)
        if self.done:
            return self.pts[-1].copy()
        a, b = self.pts[self.seg], self.pts[self.seg + 1]
        length = float(np.linalg.norm(b - a))
        t = self.into / length if length > 0 else 1.0
        return a + t * (b - a)

    def advance(self, dist: float, on_waypoint=None) -> float:
        """Move up to dist along the line; returns distance moved.
        on_waypoint is called with each interior vertex passed."""
        moved = 0.0
        while dist > 1e-12 and not self.done:
            a, b = self.pts[self.seg], self.pts[self.seg + 1]
            length = float(np.linalg.norm(b - a))
            left = length - self.into
            if dist < left - 1e-12:
                self.into += dist
                moved += dist
                dist = 0.0
            else:
                moved += left
                dist -= left
                self.seg += 1
                self.into = 0.0
                if on_waypoint is not None and not self.done:
                    on_waypoint(b)
        return moved

    def direction(self) -> np.ndarray | None:
        if self.done:
            return None
        a, b = self.pts[self.seg], self.pts[self.seg + 1]
        d = b - a
        n = float(np.linalg.norm(d))
        return d / n if n > 0 else None


@dataclass
class ExplorationState:
    uav: Pose
    log: FlightLog
    cloud: PointCloudMap
    obs: ObservationMap
    manager: FrontierManager
    graph: TopoGraph
    cycle: int = 0
    status: str = RUNNING
    flown: float = 0.0
    t: float = 0.0
    follower: PathFollower | None = None


def step(state: ExplorationState, path_follower: PathFollower, dt: float, cfg: ExecConfig) -> float:
    """Advance the vehicle along the current polyline by v_max * dt.

    Waypoints passed force flight-log samples so the log integrates the
    flown path exactly.  Yaw turns toward the current travel direction
    at the configured rate.  Returns the distance moved."""
    if dt <= 0.0:
        return 0.0
    budget = cfg.v_max * dt
    moved = path_follower.advance(
        budget, on_waypoint=lambda p: state.log.record(p, force=True)
    )
    state.uav.position = path_follower.position()
    state.flown += moved
    state.log.record(state.uav.position, force=path_follower.done and moved > 0.0)
    d = path_follower.direction()
    if d is not None and (abs(d[0]) > 1e-12 or abs(d[1]) > 1e-12):
        want = float(np.arctan2(d[1], d[0]))
        err = float(np.arctan2(np.sin(want - state.uav.yaw), np.cos(want - state.uav.yaw)))
        limit = np.deg2rad(cfg.yaw_rate_deg) * dt
        state.uav.yaw = float(state.uav.yaw + np.clip(err, -limit, limit))
    return moved


@dataclass
class ExplorationReport:
    status: str
    sim_time: float
    wall_time: float
    path_length: float
    n_cycles: int
    n_well: int
    n_frontier: int
    n_poorly: int
    n_quarantined: int
    min_clearance: float
    cycle_records: list = field(default_factory=list)
    memory_series: list = field(default_factory=list)
    trajectory: list = field(default_factory=list)

    def summary_dict(self) -> dict:
        return {
            "status": self.status,
            "sim_time": self.sim_time,
            "wall_time": self.wall_time,
            "path_length": self.path_length,
            "n_cycles": self.n_cycles,
            "n_well": self.n_well,
            "n_frontier": self.n_frontier,
            "n_poorly": self.n_poorly,
            "n_quarantined": self.n_quarantined,
            "min_clearance": self.min_clearance,
            "cycle_records": self.cycle_records,
            "memory_series": self.memory_series,
        }


def run_exploration(
    world: World,
    start: np.ndarray,
    exec_cfg: ExecConfig | None = None,
    obs_cfg: ObsConfig | None = None,
    cluster_cfg: ClusterConfig | None = None,
    topo_cfg: TopoConfig | None = None,
    planner_cfg: PlannerConfig | None = None,
) -> tuple[ExplorationReport, ExplorationState]:
    """Drive sense, map update, planning, and motion to termination.

    Finishes when no live cluster remains; reports stalled instead when
    the only remaining clusters are quarantined as unreachable or a
    time budget runs out."""
    exec_cfg = exec_cfg or ExecConfig()
    obs_cfg = obs_cfg or ObsConfig()
    cluster_cfg = cluster_cfg or ClusterConfig()
    topo_cfg = topo_cfg or TopoConfig()
    planner_cfg = planner_cfg or PlannerConfig()

    start = np.asarray(start, dtype=np.float64)
    state = ExplorationState(
        uav=Pose(start.copy(), 0.0),
        log=FlightLog(exec_cfg.log_every),
        cloud=PointCloudMap(),
        obs=ObservationMap(res=obs_cfg.res),
        manager=FrontierManager(cluster_cfg),
        graph=TopoGraph(topo_cfg, start),
    )
    report = ExplorationReport(
        status=RUNNING,
        sim_time=0.0,
        wall_time=0.0,
        path_length=0.0,
        n_cycles=0,
        n_well=0,
        n_frontier=0,
        n_poorly=0,
        n_quarantined=0,
        min_clearance=np.inf,
    )
    wall_start = time.perf_counter()
    last_plan = -np.inf
    path: GuidancePath | None = None

    while state.status == RUNNING:
        # sense and update every map layer
        frame = raycast_scan(world, state.uav)
        touched = state.cloud.insert_frame(frame.hit_points())
        upd = update_observation(state.obs, frame, obs_cfg)
        state.log.record(state.uav.position, force=True)
        delta = detect_frontiers(state.obs, upd, state.cloud, state.uav.position, cluster_cfg)
        state.manager.recluster(state.obs, delta, state.uav.position, state.log.total)
        state.graph.update(state.cloud, touched, state.uav.position)

        clearance = state.cloud.nearest_distance(state.uav.position)
        report.min_clearance = min(report.min_clearance, clearance)
        report.trajectory.append(
            (state.t, *(float(x) for x in state.uav.position), state.uav.yaw)
        )
        report.memory_series.append(
            (state.t, state.cloud.memory_bytes(), state.obs.memory_bytes())
        )

        need_plan = (
            path is None
            or state.follower is None
            or state.follower.done
            or state.t - last_plan >= exec_cfg.replan_period - 1e-9
        )
        if need_plan:
            path = plan_cycle(
                state.manager,
                state.graph,
                state.cloud,
                state.obs,
                state.log,
                state.uav.position,
                world.lidar,
                planner_cfg,
            )
            state.follower = PathFollower(path.polyline)
            state.cycle += 1
            last_plan = state.t
            report.cycle_records.append(
                {
                    "t": state.t,
                    "ranked": path.record.get("ranked", []),
                    "chosen": path.record.get("chosen", []),
                    "tour_order": path.record.get("tour_order", []),
                    "matrix_time": path.record.get("matrix_time", 0.0),
                    "solve_time": path.record.get("solve_time", 0.0),
                    "cycle_time": path.record.get("cycle_time", 0.0),
                    "warnings": path.record.get("warnings", []),
                }
            )
            if path.empty:
                live = state.manager.active_clusters()
                if not live:
                    quarantined = [
                        c for c in state.manager.clusters.values() if c.quarantined
                    ]
                    state.status = STALLED if quarantined else FINISHED
                # with live but currently unplannable clusters the loop
                # keeps scanning; deferral counters convert persistent
                # failures into quarantine, which drains the live set

        if path is not None and not path.empty and state.follower is not None:
            step(state, state.follower, exec_cfg.dt, exec_cfg)

        state.t += exec_cfg.dt
        if state.status == RUNNING:
            if state.t > exec_cfg.sim_time_budget:
                state.status = STALLED
            elif time.perf_counter() - wall_start > exec_cfg.wall_time_budget:
                state.status = STALLED

    report.status = state.status
    report.sim_time = state.t
    report.wall_time = time.perf_counter() - wall_start
    report.path_length = state.flown
    report.n_cycles = state.cycle
    report.n_well = state.obs.n_well
    report.n_frontier = state.obs.n_frontier
    report.n_poorly = state.obs.n_poorly
    report.n_quarantined = sum(
        1 for c in state.manager.clusters.values() if c.quarantined
    )
    return report, state
