"""pcexplore: deterministic LiDAR exploration on point-cloud maps.

The package provides, bottom up:

- :mod:`pcexplore.worldsim` -- a headless box-world with an exact
  simulated LiDAR on a regular azimuth/elevation beam grid.
- :mod:`pcexplore.cloudmap` -- a spatial-hash point-cloud map with
  nearest-distance, clearance, and exact segment-capsule queries.
- :mod:`pcexplore.obsmap` -- an observation-quality surface map keyed
  by voxel, certifying voxels from per-beam range agreement.
- :mod:`pcexplore.frontiers` -- incremental frontier detection and
  clustering over the observation map.
- :mod:`pcexplore.topograph` -- an incremental topological graph whose
  vertices come from a sphere decomposition of free space.
- :mod:`pcexplore.planner` -- hierarchical global planning: cluster
  ranking, viewpoint sampling, and an open travelling-salesman tour.
- :mod:`pcexplore.executor` -- the sense/update/plan/move loop.
- :mod:`pcexplore.bench` -- benchmark harness (multi-goal path search,
  memory footprint, planning-cycle times).

Everything is deterministic: no randomness enters the pipeline, so a
scenario re-run reproduces trajectories, maps, and reports exactly.
"""
from .worldsim import LidarModel, Pose, ScanFrame, World, load_world, raycast_scan, save_world
from .cloudmap import PointCloudMap
from .obsmap import Label, ObsConfig, ObservationMap, update_observation
from .frontiers import ClusterConfig, FrontierManager, cluster_frontiers, detect_frontiers, estimate_normal

__all__ = [
    "LidarModel",
    "Pose",
    "ScanFrame",
    "World",
    "load_world",
    "save_world",
    "raycast_scan",
    "PointCloudMap",
    "Label",
    "ObsConfig",
    "ObservationMap",
    "update_observation",
    "ClusterConfig",
    "FrontierManager",
    "cluster_frontiers",
    "detect_frontiers",
    "estimate_normal",
]

__version__ = "0.1.0"
