"""World model and simulated LiDAR tests.

The raycaster is checked against a scalar slab/quadratic oracle written
independently of the vectorised implementation.
"""
from __future__ import annotations

import json

import numpy as np
import pytest

from pcexplore.worldsim import (
    LidarModel,
    Pose,
    World,
    load_world,
    raycast_scan,
    save_world,
    world_from_dict,
)


# ---- oracles ---- #

def _ray_box_oracle(origin, d, lo, hi):
    """Scalar slab intersection; returns smallest positive t or inf."""
    t_near, t_far = -np.inf, np.inf
    for ax in range(3):
        if d[ax] == 0.0:
            if origin[ax] < lo[ax] or origin[ax] > hi[ax]:
                return np.inf
            continue
        t0 = (lo[ax] - origin[ax]) / d[ax]
        t1 = (hi[ax] - origin[ax]) / d[ax]
        if t0 > t1:
            t0, t1 = t1, t0
        t_near = max(t_near, t0)
        t_far = min(t_far, t1)
    if t_near > t_far or t_far <= 0.0:
        return np.inf
    return t_near if t_near > 0.0 else t_far


def _ray_sphere_oracle(origin, d, c, r):
    oc = origin - c
    b = float(d @ oc)
    disc = b * b - (float(oc @ oc) - r * r)
    if disc < 0.0:
        return np.inf
    sq = np.sqrt(disc)
    t = -b - sq
    if t <= 0.0:
        t = -b + sq
    return t if t > 0.0 else np.inf


def _scan_oracle(world, pose, lidar):
    """Per-beam loop over the oracle intersectors."""
    dirs = lidar.beam_dirs().reshape(-1, 3)
    c, s = np.cos(pose.yaw), np.sin(pose.yaw)
    rot = np.array([[c, -s, 0], [s, c, 0], [0, 0, 1]])
    out = np.empty(len(dirs))
    for i, d in enumerate(dirs @ rot.T):
        best = np.inf
        for lo, hi in zip(world.boxes_lo, world.boxes_hi):
            best = min(best, _ray_box_oracle(pose.position, d, lo, hi))
        for ctr, r in zip(world.sphere_centers, world.sphere_radii):
            best = min(best, _ray_sphere_oracle(pose.position, d, ctr, r))
        out[i] = best if best <= lidar.max_range else np.inf
    return out.reshape(lidar.rows, lidar.cols)


# ---- beam grid ---- #

def test_beam_grid_spacing_is_exactly_delta():
    lidar = LidarModel(hfov_deg=360.0, vfov_deg=59.0, delta_deg=1.0, max_range=30.0)
    az, el = lidar.beam_angles()
    assert lidar.cols == 360
    assert lidar.rows == 59
    np.testing.assert_allclose(np.diff(az), np.radians(1.0), rtol=0, atol=1e-12)
    np.testing.assert_allclose(np.diff(el), np.radians(1.0), rtol=0, atol=1e-12)


def test_beam_grid_is_centred():
    lidar = LidarModel(hfov_deg=90.0, vfov_deg=30.0, delta_deg=2.0)
    az, el = lidar.beam_angles()
    assert abs(az[0] + az[-1]) < 1e-12
    assert abs(el[0] + el[-1]) < 1e-12


def test_pitch_offsets_elevation():
    base = LidarModel(vfov_deg=30.0, delta_deg=2.0)
    tilted = LidarModel(vfov_deg=30.0, delta_deg=2.0, pitch_deg=10.0)
    _, el0 = base.beam_angles()
    _, el1 = tilted.beam_angles()
    np.testing.assert_allclose(el1 - el0, np.radians(10.0), atol=1e-12)


def test_lidar_validation():
    with pytest.raises(ValueError):
        LidarModel(delta_deg=0.0)
    with pytest.raises(ValueError):
        LidarModel(hfov_deg=361.0)
    with pytest.raises(ValueError):
        LidarModel(max_range=-1.0)


# ---- raycasting ---- #

def test_empty_world_sees_nothing():
    world = World(bounds_lo=[-10, -10, 0], bounds_hi=[10, 10, 5])
    frame = raycast_scan(world, Pose([0.0, 0.0, 2.0]))
    assert not np.any(np.isfinite(frame.ranges))
    assert len(frame.hit_points()) == 0


def test_head_on_wall_range_is_exact():
    # wall face at x = 4, sensor at origin: the forward beam row nearest
    # elevation zero sees the face at range 4 / cos(el) / cos(az)
    world = World(
        bounds_lo=[-10, -10, -10],
        bounds_hi=[10, 10, 10],
        boxes_lo=[[4.0, -10.0, -10.0]],
        boxes_hi=[[4.4, 10.0, 10.0]],
    )
    lidar = LidarModel(hfov_deg=360.0, vfov_deg=10.0, delta_deg=1.0, max_range=30.0)
    frame = raycast_scan(world, Pose([0.0, 0.0, 0.0]), lidar)
    az, el = lidar.beam_angles()
    for r in range(lidar.rows):
        for c in [178, 179, 180, 181]:
            expect = 4.0 / (np.cos(el[r]) * np.cos(az[c]))
            if az[c] > np.pi / 2 or az[c] < -np.pi / 2:
                continue
            assert abs(frame.ranges[r, c] - expect) < 1e-9


def test_pose_inside_solid_raises():
    world = World(
        bounds_lo=[-5, -5, -5],
        bounds_hi=[5, 5, 5],
        boxes_lo=[[-1, -1, -1]],
        boxes_hi=[[1, 1, 1]],
    )
    with pytest.raises(ValueError):
        raycast_scan(world, Pose([0.0, 0.0, 0.0]))


def test_scan_matches_scalar_oracle():
    rng = np.random.default_rng(7)
    lo = rng.uniform(-8, 6, size=(6, 3))
    hi = lo + rng.uniform(0.5, 3.0, size=(6, 3))
    centers = rng.uniform(-6, 6, size=(3, 3))
    radii = rng.uniform(0.3, 1.2, size=3)
    world = World(
        bounds_lo=[-10, -10, -10],
        bounds_hi=[10, 10, 10],
        boxes_lo=lo,
        boxes_hi=hi,
        sphere_centers=centers,
        sphere_radii=radii,
    )
    lidar = LidarModel(hfov_deg=360.0, vfov_deg=40.0, delta_deg=5.0, max_range=25.0)
    pose = Pose([8.5, 8.5, 8.0], yaw=0.7)
    assert not world.is_solid(pose.position)
    frame = raycast_scan(world, pose, lidar)
    expect = _scan_oracle(world, pose, lidar)
    np.testing.assert_allclose(frame.ranges, expect, rtol=0, atol=1e-9)


def test_scan_is_deterministic():
    world = World(
        bounds_lo=[-10, -10, 0],
        bounds_hi=[10, 10, 5],
        boxes_lo=[[2, -3, 0], [-6, 2, 0]],
        boxes_hi=[[3, 3, 4], [-5, 6, 4]],
    )
    pose = Pose([0.0, 0.0, 2.0], yaw=0.3)
    a = raycast_scan(world, pose)
    b = raycast_scan(world, pose)
    assert np.array_equal(a.ranges, b.ranges)
    assert np.array_equal(a.points, b.points)


def test_hit_points_lie_on_rays():
    world = World(
        bounds_lo=[-10, -10, 0],
        bounds_hi=[10, 10, 5],
        boxes_lo=[[3, -4, 0]],
        boxes_hi=[[4, 4, 5]],
    )
    pose = Pose([0.0, 0.0, 2.0])
    frame = raycast_scan(world, pose)
    mask = np.isfinite(frame.ranges)
    pts = frame.points[mask]
    rngs = frame.ranges[mask]
    np.testing.assert_allclose(np.linalg.norm(pts - pose.position, axis=1), rngs, atol=1e-9)


def test_grid_coords_round_trip():
    # each hit point must project back onto its own beam's (row, col)
    world = World(
        bounds_lo=[-10, -10, -5],
        bounds_hi=[10, 10, 5],
        boxes_lo=[[3, -6, -4]],
        boxes_hi=[[4.5, 6, 4]],
    )
    lidar = LidarModel(hfov_deg=360.0, vfov_deg=30.0, delta_deg=3.0, max_range=20.0)
    frame = raycast_scan(world, Pose([0.0, 0.0, 0.0], yaw=0.45), lidar)
    rows, cols = np.nonzero(np.isfinite(frame.ranges))
    assert len(rows) > 20
    row_f, col_f = frame.grid_coords(frame.points[rows, cols])
    np.testing.assert_allclose(row_f, rows, atol=1e-6)
    np.testing.assert_allclose(col_f, cols, atol=1e-6)


def test_grid_coords_wraps_at_seam():
    lidar = LidarModel(hfov_deg=360.0, vfov_deg=10.0, delta_deg=1.0)
    world = World(bounds_lo=[-10, -10, -5], bounds_hi=[10, 10, 5])
    frame = raycast_scan(world, Pose([0.0, 0.0, 0.0]), lidar)
    # a point straight behind the sensor projects near the wrap column
    behind = np.array([[-5.0, 0.0, 0.0]])
    _, col_f = frame.grid_coords(behind)
    assert 0.0 <= col_f[0] < lidar.cols
    assert abs(col_f[0] - (lidar.cols - 0.5)) < 1e-6 or col_f[0] < 0.5


# ---- scenario files ---- #

def test_scenario_round_trip(tmp_path):
    world = World(
        bounds_lo=[0, 0, 0],
        bounds_hi=[20, 20, 5],
        boxes_lo=[[2, 2, 0]],
        boxes_hi=[[3, 3, 5]],
        sphere_centers=[[10, 10, 2]],
        sphere_radii=[0.5],
        start=Pose([1.0, 1.0, 1.5], yaw=0.25),
        lidar=LidarModel(hfov_deg=180.0, vfov_deg=45.0, delta_deg=2.0, max_range=12.0),
    )
    path = tmp_path / "scene.json"
    save_world(world, path)
    back = load_world(path)
    np.testing.assert_array_equal(back.bounds_lo, world.bounds_lo)
    np.testing.assert_array_equal(back.boxes_hi, world.boxes_hi)
    np.testing.assert_array_equal(back.sphere_centers, world.sphere_centers)
    np.testing.assert_array_equal(back.start.position, world.start.position)
    assert back.start.yaw == world.start.yaw
    assert back.lidar == world.lidar


def test_scenario_parses_scaled_cavern_bounds(tmp_path):
    # a 22.4 x 33 x 4.1 m scene file (a 1:10 reduction of a large cavern survey)
    blob = {
        "bounds": {"min": [0.0, 0.0, 0.0], "max": [22.4, 33.0, 4.1]},
        "obstacles": [],
        "start_pose": {"position": [2.0, 2.0, 1.5], "yaw": 0.0},
        "lidar": {"hfov": 360.0, "vfov": 59.0, "delta_deg": 1.0, "max_range": 30.0},
    }
    path = tmp_path / "cavern.json"
    path.write_text(json.dumps(blob))
    world = load_world(path)
    np.testing.assert_allclose(world.bounds_hi, [22.4, 33.0, 4.1])
    assert world.lidar.rows == 59 and world.lidar.cols == 360


def test_scenario_rejects_inverted_boxes():
    blob = {
        "bounds": {"min": [0, 0, 0], "max": [10, 10, 4]},
        "obstacles": [{"min": [5, 5, 0], "max": [4, 6, 4]}],
        "start_pose": {"position": [1, 1, 1], "yaw": 0.0},
        "lidar": {"hfov": 360.0, "vfov": 59.0, "delta_deg": 1.0, "max_range": 30.0},
    }
    with pytest.raises(ValueError):
        world_from_dict(blob)
