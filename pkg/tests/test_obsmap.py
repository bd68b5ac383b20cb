"""Observation map tests.

The ratio test is validated against an independent plane-trigonometry
oracle: two beams separated by the beam pitch hit a flat surface, the
oracle computes their ranges from the hit geometry alone, and the
recovered incidence angle must match the closed-form ratio relation.
"""
from __future__ import annotations

import numpy as np
import pytest

from pcexplore.obsmap import (
    FIXED_BYTES,
    KEY_BYTES,
    LABEL_BYTES,
    NORMAL_BYTES,
    SLOT_BYTES,
    Label,
    ObsConfig,
    ObservationMap,
    distance_ok,
    enclosing_block,
    update_observation,
    view_ratio_ok,
    volume_view_ok,
)
from pcexplore.worldsim import LidarModel, Pose, World, raycast_scan


# ---- plane-trig oracle ---- #

def _plane_ranges(incidence_deg: float, delta_deg: float, dist: float = 4.0):
    """Ranges of two beams delta apart hitting the plane x = dist.

    incidence_deg is the angle between the first beam and the surface;
    the second beam is rotated delta toward grazing.  Both ranges come
    from explicit ray/plane intersection, not from the ratio formula.
    """
    a1 = np.radians(90.0 - incidence_deg)  # from the plane normal
    a2 = a1 + np.radians(delta_deg)
    l1 = dist / np.cos(a1)
    l2 = dist / np.cos(a2)
    return float(l1), float(l2)


def _ratio(l1, l2):
    lo, hi = min(l1, l2), max(l1, l2)
    return lo / hi


def test_ratio_decreases_toward_grazing():
    # oracle sweep: quality degrades monotonically as incidence leaves 90 deg
    angles = np.linspace(89.0, 3.0, 120)
    ratios = [_ratio(*_plane_ranges(t, 1.0)) for t in angles]
    assert all(b < a for a, b in zip(ratios, ratios[1:]))
    assert ratios[0] > 0.999
    assert ratios[-1] < 0.7


def test_ratio_formula_matches_plane_oracle():
    # closed form: cot(theta) = (l2 - l1 cos d) / (l1 sin d), theta taken
    # at the longer-range beam.  Check against the geometric construction.
    for incidence in (70.0, 30.0, 10.0, 6.0):
        l1, l2 = _plane_ranges(incidence, 1.0)
        d = np.radians(1.0)
        theta = np.degrees(np.arctan2(l1 * np.sin(d), l2 - l1 * np.cos(d)))
        assert abs(theta - (incidence - 1.0)) < 1e-9


def test_ratio_example_frozen():
    # l1 = 1.0, l2 = 1.2 fails T = 0.9 (ratio 0.8333); the implied
    # incidence at the far beam is 4.9833 degrees (frozen from the
    # plane-trig oracle, which yields 5.9833 at the near beam).
    assert not view_ratio_ok(1.0, 1.2, 0.9)
    assert abs(_ratio(1.0, 1.2) - 5.0 / 6.0) < 1e-12
    d = np.radians(1.0)
    theta = np.degrees(np.arctan2(np.sin(d), 1.2 - np.cos(d)))
    assert abs(theta - 4.983338) < 1e-5
    l1, l2 = _plane_ranges(theta + 1.0, 1.0)
    assert abs(_ratio(l1, l2) - 5.0 / 6.0) < 1e-9


def test_view_ratio_validation():
    with pytest.raises(ValueError):
        view_ratio_ok(1.0, 1.0, 1.5)
    with pytest.raises(ValueError):
        view_ratio_ok(-1.0, 1.0, 0.9)
    with pytest.raises(ValueError):
        view_ratio_ok(1.0, np.inf, 0.9)
    assert view_ratio_ok(1.0, 1.0, 0.9)
    assert view_ratio_ok(1.0, 1.05, 0.9) == view_ratio_ok(1.05, 1.0, 0.9)  # symmetric
    assert not view_ratio_ok(1.2, 1.0, 0.9)


def test_distance_gate_inclusive_boundary():
    s = np.zeros(3)
    assert distance_ok(s, np.array([15.0, 0.0, 0.0]), 15.0)
    assert not distance_ok(s, np.array([15.0 + 1e-9, 0.0, 0.0]), 15.0)


# ---- pyramidal volume ---- #

def test_volume_view_requires_all_four_beams():
    block = np.array([[4.0, 4.0], [4.0, np.inf]])
    assert not volume_view_ok(block, 0.9)
    assert volume_view_ok(np.full((2, 2), 4.0), 0.9)


def test_volume_view_adjacent_pairs_switch():
    # diagonal pair ratio 1.0/1.1025 = 0.907 fails T = 0.95 while all four
    # edge-adjacent ratios are 1/1.05 = 0.952
    block = np.array([[1.0, 1.05], [1.05, 1.1025]])
    assert not volume_view_ok(block, 0.95, adjacent_pairs_only=False)
    assert volume_view_ok(block, 0.95, adjacent_pairs_only=True)


def test_enclosing_block_brackets_the_point():
    world = World(
        bounds_lo=[-10, -10, -10],
        bounds_hi=[10, 10, 10],
        boxes_lo=[[4.0, -10, -10]],
        boxes_hi=[[4.4, 10, 10]],
    )
    lidar = LidarModel(hfov_deg=360.0, vfov_deg=20.0, delta_deg=2.0, max_range=30.0)
    frame = raycast_scan(world, Pose([0.0, 0.0, 0.0]), lidar)
    az, el = lidar.beam_angles()
    # aim between beams (rows 4,5) x (cols 92,93)
    r0, c0 = 4, 92
    az_mid = 0.5 * (az[c0] + az[c0 + 1])
    el_mid = 0.5 * (el[r0] + el[r0 + 1])
    p = np.array([np.cos(el_mid) * np.cos(az_mid), np.cos(el_mid) * np.sin(az_mid), np.sin(el_mid)]) * 3.0
    block = enclosing_block(frame, p)
    expect = np.array(
        [
            [frame.ranges[r0, c0], frame.ranges[r0, c0 + 1]],
            [frame.ranges[r0 + 1, c0], frame.ranges[r0 + 1, c0 + 1]],
        ]
    )
    np.testing.assert_array_equal(block, expect)


def test_enclosing_block_outside_fov_is_none():
    world = World(bounds_lo=[-10, -10, -10], bounds_hi=[10, 10, 10])
    lidar = LidarModel(hfov_deg=90.0, vfov_deg=20.0, delta_deg=2.0)
    frame = raycast_scan(world, Pose([0.0, 0.0, 0.0]), lidar)
    assert enclosing_block(frame, np.array([0.0, 0.0, 5.0])) is None  # above the fan
    assert enclosing_block(frame, np.array([-5.0, 0.0, 0.0])) is None  # behind a 90 deg scanner


def test_enclosing_block_wraps_across_seam():
    world = World(
        bounds_lo=[-10, -10, -10],
        bounds_hi=[10, 10, 10],
        boxes_lo=[[-4.4, -10, -10]],
        boxes_hi=[[-4.0, 10, 10]],
    )
    lidar = LidarModel(hfov_deg=360.0, vfov_deg=10.0, delta_deg=1.0, max_range=30.0)
    frame = raycast_scan(world, Pose([0.0, 0.0, 0.0]), lidar)
    # straight behind: azimuth pi sits between the last and first column
    block = enclosing_block(frame, np.array([-4.0, 0.0, 0.05]))
    assert block is not None
    assert np.all(np.isfinite(block))


# ---- frame updates ---- #

def _wall_world():
    return World(
        bounds_lo=[-20, -20, -20],
        bounds_hi=[20, 20, 20],
        boxes_lo=[[4.0, -20, -20]],
        boxes_hi=[[4.4, 20, 20]],
    )


def test_head_on_wall_certifies_well():
    world = _wall_world()
    lidar = LidarModel(hfov_deg=360.0, vfov_deg=30.0, delta_deg=1.0, max_range=30.0)
    frame = raycast_scan(world, Pose([0.0, 0.0, 0.0]), lidar)
    obs = ObservationMap(res=0.4)
    upd = update_observation(obs, frame, ObsConfig())
    assert len(upd.touched) > 50
    key = obs.key_of(np.array([4.05, 0.0, 0.0]))
    assert obs.labels[key] == Label.WELL
    assert obs.n_well > 20


def test_grazing_wall_stays_poorly():
    world = _wall_world()
    lidar = LidarModel(hfov_deg=360.0, vfov_deg=10.0, delta_deg=1.0, max_range=30.0)
    # sensor hugging the wall plane: beams strike the surface at a few degrees
    frame = raycast_scan(world, Pose([3.8, 0.0, 0.0]), lidar)
    obs = ObservationMap(res=0.4)
    update_observation(obs, frame, ObsConfig())
    far_key = obs.key_of(np.array([4.1, 8.0, 0.0]))
    assert obs.labels.get(far_key) in (Label.POORLY, None)
    assert obs.n_well <= 2  # at most the cells right at the sensor's foot


def test_labels_never_downgrade():
    world = _wall_world()
    lidar = LidarModel(hfov_deg=360.0, vfov_deg=30.0, delta_deg=1.0, max_range=30.0)
    obs = ObservationMap(res=0.4)
    cfg = ObsConfig()
    head_on = raycast_scan(world, Pose([0.0, 0.0, 0.0]), lidar)
    update_observation(obs, head_on, cfg)
    well_before = {k for k, v in obs.labels.items() if v == Label.WELL}
    grazing = raycast_scan(world, Pose([3.8, 0.0, 0.0]), lidar)
    update_observation(obs, grazing, cfg)
    well_after = {k for k, v in obs.labels.items() if v == Label.WELL}
    assert well_before <= well_after


def test_distance_gate_blocks_certification():
    world = _wall_world()
    lidar = LidarModel(hfov_deg=360.0, vfov_deg=30.0, delta_deg=1.0, max_range=30.0)
    frame = raycast_scan(world, Pose([-16.0, 0.0, 0.0]), lidar)  # wall 20 m away
    obs = ObservationMap(res=0.4)
    update_observation(obs, frame, ObsConfig(max_distance=15.0))
    assert obs.n_well == 0
    assert obs.n_voxels > 0


def test_update_reports_newly_well_and_frontier_removed():
    world = _wall_world()
    lidar = LidarModel(hfov_deg=360.0, vfov_deg=30.0, delta_deg=1.0, max_range=30.0)
    frame = raycast_scan(world, Pose([0.0, 0.0, 0.0]), lidar)
    obs = ObservationMap(res=0.4)
    key = obs.key_of(np.array([4.05, 0.0, 0.0]))
    obs.set_frontier(key, np.array([-1.0, 0.0, 0.0]))
    upd = update_observation(obs, frame, ObsConfig())
    assert key in upd.newly_well
    assert key in upd.frontier_removed
    assert key not in obs.normals
    # second pass over the same frame touches the voxel but leaves it alone
    upd2 = update_observation(obs, frame, ObsConfig())
    assert key in upd2.touched
    assert key not in upd2.newly_well


def test_touched_order_is_first_appearance():
    world = _wall_world()
    lidar = LidarModel(hfov_deg=360.0, vfov_deg=10.0, delta_deg=1.0, max_range=30.0)
    frame = raycast_scan(world, Pose([0.0, 0.0, 0.0]), lidar)
    obs = ObservationMap(res=0.4)
    upd = update_observation(obs, frame, ObsConfig())
    assert len(upd.touched) == len(set(upd.touched))
    keys = np.floor(frame.hit_points() / obs.res).astype(np.int64)
    first = []
    seen = set()
    for k in map(tuple, keys):
        if k not in seen:
            seen.add(k)
            first.append(k)
    assert upd.touched == first


# ---- accounting / export ---- #

def test_memory_accounting_identity():
    obs = ObservationMap(res=0.4)
    assert obs.memory_bytes() == FIXED_BYTES
    obs.labels[(0, 0, 0)] = Label.POORLY
    obs.labels[(1, 0, 0)] = Label.WELL
    obs.set_frontier((2, 0, 0), np.array([0.0, 0.0, 1.0]))
    expect = FIXED_BYTES + 3 * (KEY_BYTES + LABEL_BYTES + SLOT_BYTES) + 1 * NORMAL_BYTES
    assert obs.memory_bytes() == expect


def test_obsmap_ply_has_color_channel(tmp_path):
    obs = ObservationMap(res=0.4)
    obs.labels[(0, 0, 0)] = Label.POORLY
    obs.labels[(1, 0, 0)] = Label.WELL
    path = tmp_path / "obs.ply"
    obs.save_ply(path)
    blob = path.read_bytes()
    assert b"property uchar red" in blob
    head_end = blob.index(b"end_header\n") + len(b"end_header\n")
    assert len(blob) - head_end == 2 * (12 + 3)
