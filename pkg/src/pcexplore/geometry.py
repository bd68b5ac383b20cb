"""Small geometric primitives shared across the package.

Everything here operates on plain numpy arrays in float64 so results are
bitwise reproducible across runs.  Boxes are axis-aligned and represented
by a pair of corners (lo, hi).
"""
from __future__ import annotations

import numpy as np


def as_point(p) -> np.ndarray:
    """Coerce a 3-vector to a float64 numpy array of shape (3,)."""
    a = np.asarray(p, dtype=np.float64)
    if a.shape != (3,):
        raise ValueError(f"expected a 3-vector, got shape {a.shape}")
    return a


def box_contains(lo: np.ndarray, hi: np.ndarray, p: np.ndarray) -> bool:
    """True if p lies inside [lo, hi] (closed box)."""
    return bool(np.all(p >= lo) and np.all(p <= hi))


def box_distance(lo: np.ndarray, hi: np.ndarray, p: np.ndarray) -> float:
    """Euclidean distance from p to the closed box [lo, hi] (0 inside)."""
    d = np.maximum(np.maximum(lo - p, 0.0), p - hi)
    return float(np.linalg.norm(d))


def boxes_distance(lo: np.ndarray, hi: np.ndarray, p: np.ndarray) -> np.ndarray:
    """Distance from p to each of a stack of boxes (lo, hi of shape (n, 3))."""
    d = np.maximum(np.maximum(lo - p[None, :], 0.0), p[None, :] - hi)
    return np.linalg.norm(d, axis=1)


def boxes_intersect(alo, ahi, blo, bhi) -> bool:
    """True if closed boxes [alo, ahi] and [blo, bhi] overlap."""
    return bool(np.all(ahi >= blo) and np.all(bhi >= alo))


def ray_boxes(origin: np.ndarray, dirs: np.ndarray, lo: np.ndarray, hi: np.ndarray) -> np.ndarray:
    """Slab-method intersection of many rays against many boxes.

    Args:
        origin: (3,) common ray origin.
        dirs: (n, 3) unit direction per ray.
        lo, hi: (m, 3) box corners.

    Returns:
        (n,) distance along each ray to the nearest box hit with t > 0,
        np.inf where the ray misses every box.  A ray starting inside a
        box reports the exit t of that box, which callers reject by
        validating the origin separately.
    """
    n = dirs.shape[0]
    if lo.shape[0] == 0:
        return np.full(n, np.inf)
    with np.errstate(divide="ignore", invalid="ignore"):
        inv = 1.0 / dirs  # (n, 3), +-inf on zero components
        t0 = (lo[None, :, :] - origin[None, None, :]) * inv[:, None, :]
        t1 = (hi[None, :, :] - origin[None, None, :]) * inv[:, None, :]
    tmin = np.minimum(t0, t1)
    tmax = np.maximum(t0, t1)
    # zero direction component outside the slab produces nan; treat as miss
    tmin = np.nan_to_num(tmin, nan=-np.inf)
    tmax = np.nan_to_num(tmax, nan=np.inf)
    near = tmin.max(axis=2)  # (n, m)
    far = tmax.min(axis=2)
    hit = (near <= far) & (far > 0.0)
    t = np.where(near > 0.0, near, far)  # inside a box -> positive exit
    t = np.where(hit, t, np.inf)
    return t.min(axis=1)


def ray_spheres(origin: np.ndarray, dirs: np.ndarray, centers: np.ndarray, radii: np.ndarray) -> np.ndarray:
    """Nearest positive intersection of rays with a set of spheres.

    Returns (n,) distances, np.inf for misses.
    """
    n = dirs.shape[0]
    if centers.shape[0] == 0:
        return np.full(n, np.inf)
    oc = origin[None, :] - centers  # (m, 3)
    b = dirs @ oc.T  # (n, m)
    c = (oc * oc).sum(axis=1)[None, :] - radii[None, :] ** 2
    disc = b * b - c
    ok = disc >= 0.0
    sq = np.sqrt(np.where(ok, disc, 0.0))
    t_near = -b - sq
    t_far = -b + sq
    t = np.where(t_near > 0.0, t_near, t_far)
    t = np.where(ok & (t > 0.0), t, np.inf)
    return t.min(axis=1)


def points_segment_distance(points: np.ndarray, a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Distance from each point (n, 3) to the segment ab."""
    ab = b - a
    denom = float(ab @ ab)
    if denom == 0.0:
        return np.linalg.norm(points - a[None, :], axis=1)
    t = np.clip((points - a[None, :]) @ ab / denom, 0.0, 1.0)
    proj = a[None, :] + t[:, None] * ab[None, :]
    return np.linalg.norm(points - proj, axis=1)


def polyline_length(points: np.ndarray) -> float:
    """Total arc length of an (n, 3) polyline."""
    if len(points) < 2:
        return 0.0
    return float(np.linalg.norm(np.diff(points, axis=0), axis=1).sum())


def wrap_angle(a: float) -> float:
    """Wrap an angle to (-pi, pi]."""
    w = (a + np.pi) % (2.0 * np.pi) - np.pi
    if w == -np.pi:
        w = np.pi
    return float(w)


def rot_z(yaw: float) -> np.ndarray:
    """Rotation matrix about +z by yaw radians."""
    c, s = np.cos(yaw), np.sin(yaw)
    return np.array([[c, -s, 0.0], [s, c, 0.0], [0.0, 0.0, 1.0]])
