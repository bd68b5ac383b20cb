"""Headless world model and simulated LiDAR.

The world is a bounded axis-aligned space containing solid boxes and
optional spherical blobs (a point with a radius).  The simulated LiDAR
casts a regular azimuth/elevation grid of beams and reports exact ray
intersections, so repeated scans from the same pose are bitwise
identical.  World bounds delimit flight space only; they are not solid,
and beams that leave the bounds without touching geometry report no hit.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from .geometry import as_point, box_contains, ray_boxes, ray_spheres, rot_z


@dataclass
class Pose:
    """Sensor/vehicle pose: position in metres plus yaw about +z in radians."""

    position: np.ndarray
    yaw: float = 0.0

    def __post_init__(self):
        self.position = as_point(self.position)
        self.yaw = float(self.yaw)


@dataclass(frozen=True)
class LidarModel:
    """Beam-grid geometry of the scanner.

    hfov_deg / vfov_deg span the azimuth and elevation extent, delta_deg
    is the angular pitch between adjacent beams on both axes, and
    pitch_deg tilts the whole elevation fan (positive looks up).
    """

    hfov_deg: float = 360.0
    vfov_deg: float = 59.0
    delta_deg: float = 1.0
    max_range: float = 30.0
    pitch_deg: float = 0.0

    def __post_init__(self):
        if self.delta_deg <= 0.0:
            raise ValueError("delta_deg must be positive")
        if self.hfov_deg <= 0.0 or self.hfov_deg > 360.0:
            raise ValueError("hfov_deg must lie in (0, 360]")
        if self.vfov_deg <= 0.0 or self.vfov_deg > 180.0:
            raise ValueError("vfov_deg must lie in (0, 180]")
        if self.max_range <= 0.0:
            raise ValueError("max_range must be positive")

    @property
    def cols(self) -> int:
        return max(1, int(np.floor(self.hfov_deg / self.delta_deg + 1e-9)))

    @property
    def rows(self) -> int:
        return max(1, int(np.floor(self.vfov_deg / self.delta_deg + 1e-9)))

    @property
    def wraps(self) -> bool:
        # full-circle scanners wrap in azimuth, so column cols-1 and 0 are adjacent
        return self.hfov_deg >= 360.0 - 1e-9

    @property
    def delta_rad(self) -> float:
        return float(np.radians(self.delta_deg))

    @property
    def az_start(self) -> float:
        # azimuth of column 0; beams sit at bin centres so the grid is
        # symmetric about the forward axis
        return float(np.radians(-0.5 * self.hfov_deg + 0.5 * self.delta_deg))

    @property
    def el_start(self) -> float:
        return float(np.radians(-0.5 * self.vfov_deg + 0.5 * self.delta_deg + self.pitch_deg))

    def beam_angles(self) -> tuple[np.ndarray, np.ndarray]:
        """Azimuth (cols,) and elevation (rows,) of every beam, radians."""
        az = self.az_start + self.delta_rad * np.arange(self.cols)
        el = self.el_start + self.delta_rad * np.arange(self.rows)
        return az, el

    def beam_dirs(self) -> np.ndarray:
        """Unit directions in the sensor frame, shape (rows, cols, 3)."""
        az, el = self.beam_angles()
        cos_el = np.cos(el)[:, None]
        d = np.empty((self.rows, self.cols, 3))
        d[:, :, 0] = cos_el * np.cos(az)[None, :]
        d[:, :, 1] = cos_el * np.sin(az)[None, :]
        d[:, :, 2] = np.sin(el)[:, None]
        return d


@dataclass
class ScanFrame:
    """One LiDAR sweep: per-beam ranges and hit points on the beam grid.

    ranges is (rows, cols) with np.inf for beams that hit nothing within
    max_range.  points is (rows, cols, 3) and only meaningful where the
    range is finite.
    """

    origin: np.ndarray
    yaw: float
    lidar: LidarModel
    ranges: np.ndarray
    points: np.ndarray
    t: float = 0.0

    def hit_points(self) -> np.ndarray:
        """All hit points in beam-grid row-major order, shape (n, 3)."""
        mask = np.isfinite(self.ranges)
        return self.points[mask]

    def grid_coords(self, pts: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        """Project world points onto the continuous beam grid.

        Returns (row_f, col_f) arrays.  Beam (r, c) itself projects to
        exactly (r, c); callers bound-check the results.  For a wrapping
        scanner col_f is reduced modulo the column count.
        """
        q = (pts - self.origin[None, :]) @ rot_z(self.yaw)  # world -> sensor frame
        rng = np.linalg.norm(q, axis=1)
        rng = np.where(rng == 0.0, 1e-300, rng)
        az = np.arctan2(q[:, 1], q[:, 0])
        el = np.arcsin(np.clip(q[:, 2] / rng, -1.0, 1.0))
        row_f = (el - self.lidar.el_start) / self.lidar.delta_rad
        col_f = (az - self.lidar.az_start) / self.lidar.delta_rad
        if self.lidar.wraps:
            col_f = np.mod(col_f, self.lidar.cols)
        return row_f, col_f


@dataclass
class World:
    """Bounded space with solid boxes and optional sphere obstacles."""

    bounds_lo: np.ndarray
    bounds_hi: np.ndarray
    boxes_lo: np.ndarray = field(default_factory=lambda: np.zeros((0, 3)))
    boxes_hi: np.ndarray = field(default_factory=lambda: np.zeros((0, 3)))
    sphere_centers: np.ndarray = field(default_factory=lambda: np.zeros((0, 3)))
    sphere_radii: np.ndarray = field(default_factory=lambda: np.zeros((0,)))
    start: Pose = field(default_factory=lambda: Pose(np.zeros(3)))
    lidar: LidarModel = field(default_factory=LidarModel)

    def __post_init__(self):
        self.bounds_lo = as_point(self.bounds_lo)
        self.bounds_hi = as_point(self.bounds_hi)
        if np.any(self.bounds_hi <= self.bounds_lo):
            raise ValueError("bounds_hi must exceed bounds_lo on every axis")
        self.boxes_lo = np.asarray(self.boxes_lo, dtype=np.float64).reshape(-1, 3)
        self.boxes_hi = np.asarray(self.boxes_hi, dtype=np.float64).reshape(-1, 3)
        self.sphere_centers = np.asarray(self.sphere_centers, dtype=np.float64).reshape(-1, 3)
        self.sphere_radii = np.asarray(self.sphere_radii, dtype=np.float64).reshape(-1)

    def is_solid(self, p: np.ndarray) -> bool:
        """True if p lies inside any obstacle (closed surfaces included)."""
        for lo, hi in zip(self.boxes_lo, self.boxes_hi):
            if box_contains(lo, hi, p):
                return True
        if len(self.sphere_radii):
            d = np.linalg.norm(self.sphere_centers - p[None, :], axis=1)
            if np.any(d <= self.sphere_radii):
                return True
        return False


def raycast_scan(world: World, pose: Pose, lidar: LidarModel | None = None, t: float = 0.0) -> ScanFrame:
    """Cast the full beam grid from pose and return the resulting frame.

    Raises ValueError if the sensor position is inside solid geometry.
    """
    lidar = lidar or world.lidar
    origin = as_point(pose.position)
    if world.is_solid(origin):
        raise ValueError(f"sensor pose {origin} is inside solid geometry")

    dirs = (lidar.beam_dirs().reshape(-1, 3)) @ rot_z(pose.yaw).T
    t_box = ray_boxes(origin, dirs, world.boxes_lo, world.boxes_hi)
    t_sph = ray_spheres(origin, dirs, world.sphere_centers, world.sphere_radii)
    rng = np.minimum(t_box, t_sph)
    rng[rng > lidar.max_range] = np.inf

    pts = origin[None, :] + np.where(np.isfinite(rng)[:, None], rng[:, None], 0.0) * dirs
    shape = (lidar.rows, lidar.cols)
    return ScanFrame(
        origin=origin,
        yaw=float(pose.yaw),
        lidar=lidar,
        ranges=rng.reshape(shape),
        points=pts.reshape(shape + (3,)),
        t=float(t),
    )


# ---- scenario files ---- #

def world_to_dict(world: World) -> dict:
    d = {
        "bounds": {"min": world.bounds_lo.tolist(), "max": world.bounds_hi.tolist()},
        "obstacles": [
            {"min": lo.tolist(), "max": hi.tolist()}
            for lo, hi in zip(world.boxes_lo, world.boxes_hi)
        ],
        "start_pose": {"position": world.start.position.tolist(), "yaw": world.start.yaw},
        "lidar": {
            "hfov": world.lidar.hfov_deg,
            "vfov": world.lidar.vfov_deg,
            "delta_deg": world.lidar.delta_deg,
            "max_range": world.lidar.max_range,
            "pitch_deg": world.lidar.pitch_deg,
        },
    }
    if len(world.sphere_radii):
        d["point_obstacles"] = [
            [*c.tolist(), float(r)] for c, r in zip(world.sphere_centers, world.sphere_radii)
        ]
    return d


def world_from_dict(d: dict) -> World:
    lidar_d = d.get("lidar", {})
    lidar = LidarModel(
        hfov_deg=float(lidar_d.get("hfov", 360.0)),
        vfov_deg=float(lidar_d.get("vfov", 59.0)),
        delta_deg=float(lidar_d.get("delta_deg", 1.0)),
        max_range=float(lidar_d.get("max_range", 30.0)),
        pitch_deg=float(lidar_d.get("pitch_deg", 0.0)),
    )
    start_d = d.get("start_pose", {})
    start = Pose(np.asarray(start_d.get("position", [0.0, 0.0, 0.0])), float(start_d.get("yaw", 0.0)))
    obstacles = d.get("obstacles", [])
    boxes_lo = np.array([o["min"] for o in obstacles], dtype=np.float64).reshape(-1, 3)
    boxes_hi = np.array([o["max"] for o in obstacles], dtype=np.float64).reshape(-1, 3)
    if np.any(boxes_hi <= boxes_lo):
        raise ValueError("obstacle with max <= min")
    pts = d.get("point_obstacles", [])
    centers = np.array([p[:3] for p in pts], dtype=np.float64).reshape(-1, 3)
    radii = np.array([p[3] for p in pts], dtype=np.float64)
    return World(
        bounds_lo=np.asarray(d["bounds"]["min"]),
        bounds_hi=np.asarray(d["bounds"]["max"]),
        boxes_lo=boxes_lo,
        boxes_hi=boxes_hi,
        sphere_centers=centers,
        sphere_radii=radii,
        start=start,
        lidar=lidar,
    )


def save_world(world: World, path) -> None:
    with open(path, "w") as fh:
        json.dump(world_to_dict(world), fh, indent=2)


def load_world(path) -> World:
    with open(path) as fh:
        return world_from_dict(json.load(fh))
