"""Incremental topological graph built directly on the point cloud.

Space is decomposed into cubic regions.  Each region's free space is
covered by collision-free spheres found recursively, the spheres are
clustered by overlap, and each cluster contributes one representative
vertex.  Edges store explicit collision-free polylines found by line of
sight or grid A* inside a padded box around the endpoint pair.  Updates
are local to the regions a frame touched, plus a global recheck of any
stored path whose surroundings gained points.
"""
from __future__ import annotations

import heapq
from dataclasses import dataclass, field

import numpy as np

from .cloudmap import PointCloudMap
from .gridsearch import astar_grid
from .unionfind import UnionFind

REGULAR = "regular"
ODOM = "odom"
TEMP = "viewpoint_temp"


@dataclass
class TopoConfig:
    region_size: float = 5.0
    safety_radius: float = 0.8
    radius_cap: float | None = None   # None: region box diagonal
    astar_pitch: float = 0.4
    vertex_match_tol: float = 0.2
    sphere_link: str = "penetration"  # or "circle": intersection-circle radius
    max_cover_depth: int = 16
    astar_max_expansions: int = 60000

    def sphere_radius_cap(self) -> float:
        if self.radius_cap is not None:
            return self.radius_cap
        return float(np.sqrt(3.0) * self.region_size)


@dataclass
class Sphere:
    center: np.ndarray
    radius: float


def sphere_overlap(a: Sphere, b: Sphere, measure: str = "penetration") -> float:
    """Size of the intersection of two spheres.

    "penetration" is the depth along the center line, r1 + r2 - d.
    "circle" is the radius of the intersection circle; containment
    degenerates to the smaller sphere's radius.
    """
    d = float(np.linalg.norm(a.center - b.center))
    if measure == "penetration":
        return a.radius + b.radius - d
    if measure != "circle":
        raise ValueError(f"unknown overlap measure {measure!r}")
    if d >= a.radius + b.radius:
        return -np.inf
    if d <= abs(a.radius - b.radius):
        return min(a.radius, b.radius)
    sq = 4.0 * d * d * a.radius * a.radius - (d * d - b.radius * b.radius + a.radius * a.radius) ** 2
    return float(np.sqrt(max(sq, 0.0)) / (2.0 * d))


def cover_region(
    box_lo: np.ndarray,
    box_hi: np.ndarray,
    cloud: PointCloudMap,
    cfg: TopoConfig,
) -> list[Sphere]:
    """Cover a region's free space with collision-free spheres.

    At each sub-box: place a sphere at the center with radius equal to
    the nearest point distance (capped).  If it contains the sub-box,
    keep it and stop.  If it clears the safety radius, keep it and
    recurse on the parts outside its inscribed cube.  Otherwise discard
    it and recurse on the eight octants.  Sub-boxes with max side below
    the safety radius are dropped.

    The nearest-point query inherits the cloud's neighbor cap, so a
    sphere is influenced only by points within that range; updates stay
    local to adjacent regions.
    """
    safety = cfg.safety_radius
    cap = cfg.sphere_radius_cap()
    out: list[Sphere] = []

    def visit(lo: np.ndarray, hi: np.ndarray, depth: int) -> None:
        side = hi - lo
        if np.max(side) < safety or depth > cfg.max_cover_depth:
            return
        c = (lo + hi) * 0.5
        r = min(cloud.nearest_distance(c), cap)
        half_diag = float(np.linalg.norm(side)) * 0.5
        if half_diag <= r:
            if r >= safety:
                out.append(Sphere(center=c, radius=r))
            return
        if r > safety:
            out.append(Sphere(center=c, radius=r))
            s = r / np.sqrt(3.0)  # inscribed cube half side
            cuts = []
            for ax in range(3):
                pts = [lo[ax]]
                for v in (c[ax] - s, c[ax] + s):
                    if lo[ax] < v < hi[ax]:
                        pts.append(v)
                pts.append(hi[ax])
                cuts.append(pts)
            for i in range(len(cuts[0]) - 1):
                for j in range(len(cuts[1]) - 1):
                    for k in range(len(cuts[2]) - 1):
                        sub_lo = np.array([cuts[0][i], cuts[1][j], cuts[2][k]])
                        sub_hi = np.array([cuts[0][i + 1], cuts[1][j + 1], cuts[2][k + 1]])
                        if np.any(sub_hi - sub_lo <= 1e-12):
                            continue
                        # farthest corner inside the sphere: already covered
                        far = np.maximum(np.abs(sub_lo - c), np.abs(sub_hi - c))
                        if float(np.linalg.norm(far)) <= r:
                            continue
                        visit(sub_lo, sub_hi, depth + 1)
        else:
            for i in range(2):
                for j in range(2):
                    for k in range(2):
                        sub_lo = np.array(
                            [lo[0] if i == 0 else c[0], lo[1] if j == 0 else c[1], lo[2] if k == 0 else c[2]]
                        )
                        sub_hi = np.array(
                            [c[0] if i == 0 else hi[0], c[1] if j == 0 else hi[1], c[2] if k == 0 else hi[2]]
                        )
                        visit(sub_lo, sub_hi, depth + 1)

    visit(np.asarray(box_lo, dtype=np.float64), np.asarray(box_hi, dtype=np.float64), 0)
    return out


def cluster_spheres(
    spheres: list[Sphere], safety_radius: float, measure: str = "penetration"
) -> list[list[int]]:
    """Group spheres whose pairwise overlap exceeds the safety radius,
    closed transitively.  Returns index clusters ordered by smallest
    member."""
    uf = UnionFind(len(spheres))
    for i in range(len(spheres)):
        for j in range(i + 1, len(spheres)):
            if sphere_overlap(spheres[i], spheres[j], measure) > safety_radius:
                uf.union(i, j)
    return uf.groups()


def categorize_vertices(
    v_pre: list[int], v_new: list[int]
) -> tuple[list[int], list[int], list[int]]:
    """Split a region's before/after vertex ids into (removed, remaining,
    inserted), preserving input order."""
    pre, new = set(v_pre), set(v_new)
    removed = [v for v in v_pre if v not in new]
    remaining = [v for v in v_pre if v in new]
    inserted = [v for v in v_new if v not in pre]
    return removed, remaining, inserted


@dataclass
class Region:
    key: tuple[int, int, int]
    box_lo: np.ndarray
    box_hi: np.ndarray
    vertices: list[int] = field(default_factory=list)


@dataclass
class Vertex:
    id: int
    position: np.ndarray
    region_key: tuple[int, int, int]
    kind: str = REGULAR


@dataclass
class Edge:
    a: int
    b: int
    path: np.ndarray        # polyline, path[0] at a's position
    length: float
    box_lo: np.ndarray      # path AABB, drives revalidation
    box_hi: np.ndarray


def _make_edge(a: int, b: int, path: np.ndarray) -> Edge:
    seg = np.diff(path, axis=0)
    length = float(np.sqrt((seg**2).sum(axis=1)).sum()) if len(path) > 1 else 0.0
    return Edge(a=a, b=b, path=path, length=length, box_lo=path.min(axis=0), box_hi=path.max(axis=0))


class RollbackToken:
    def __init__(self, vertex_id: int):
        self.vertex_id = vertex_id
        self.edges: list[tuple[int, int]] = []


class TopoGraph:
    """Vertex/edge store with incremental region-local maintenance."""

    def __init__(self, cfg: TopoConfig, start: np.ndarray):
        self.cfg = cfg
        self.vertices: dict[int, Vertex] = {}
        self.adj: dict[int, dict[int, Edge]] = {}
        self.regions: dict[tuple[int, int, int], Region] = {}
        self.next_id = 0
        self.touched_regions: dict[tuple[int, int, int], None] = {}
        start = np.asarray(start, dtype=np.float64)
        self.odom_id = self._add_vertex(start, self.region_key_of(start), ODOM)

    # ---- store primitives ---- #

    def _add_vertex(self, position: np.ndarray, region_key, kind: str) -> int:
        vid = self.next_id
        self.next_id += 1
        self.vertices[vid] = Vertex(
            id=vid, position=np.asarray(position, dtype=np.float64).copy(), region_key=region_key, kind=kind
        )
        self.adj[vid] = {}
        return vid

    def _drop_edge(self, a: int, b: int) -> None:
        self.adj[a].pop(b, None)
        self.adj[b].pop(a, None)

    def _store_edge(self, edge: Edge) -> None:
        self.adj[edge.a][edge.b] = edge
        self.adj[edge.b][edge.a] = edge

    def edges(self):
        for a, nbrs in self.adj.items():
            for b, e in nbrs.items():
                if a < b:
                    yield e

    def n_edges(self) -> int:
        return sum(1 for _ in self.edges())

    def edge_path(self, a: int, b: int) -> np.ndarray:
        e = self.adj[a][b]
        return e.path if e.a == a else e.path[::-1]

    # ---- regions ---- #

    def region_key_of(self, p: np.ndarray) -> tuple[int, int, int]:
        k = np.floor(np.asarray(p, dtype=np.float64) / self.cfg.region_size).astype(np.int64)
        return (int(k[0]), int(k[1]), int(k[2]))

    def _region(self, key: tuple[int, int, int]) -> Region:
        reg = self.regions.get(key)
        if reg is None:
            lo = np.array(key, dtype=np.float64) * self.cfg.region_size
            reg = Region(key=key, box_lo=lo, box_hi=lo + self.cfg.region_size)
            self.regions[key] = reg
        return reg

    @staticmethod
    def neighborhood(key: tuple[int, int, int]) -> list[tuple[int, int, int]]:
        return [
            (key[0] + i, key[1] + j, key[2] + k)
            for i in (-1, 0, 1)
            for j in (-1, 0, 1)
            for k in (-1, 0, 1)
        ]

    def _candidates(self, region_keys) -> list[int]:
        """Regular vertices of the given regions, plus the odometry
        vertex when it sits in one of them."""
        seen: dict[int, None] = {}
        keyset = set(region_keys)
        for k in region_keys:
            reg = self.regions.get(k)
            if reg is not None:
                for vid in reg.vertices:
                    seen[vid] = None
        if self.vertices[self.odom_id].region_key in keyset:
            seen[self.odom_id] = None
        return list(seen)

    # ---- vertex phase ---- #

    def update_vertices(
        self, cloud: PointCloudMap, region_keys
    ) -> dict[tuple[int, int, int], tuple[list[int], list[int], set[int]]]:
        """Recompute representative vertices for each listed region.

        New cluster representatives within the match tolerance of an old
        vertex keep its id; their stored position is refreshed to the new
        center.  Returns per region (previous ids, new ids, moved ids).
        """
        out = {}
        for key in region_keys:
            reg = self._region(key)
            pre = list(reg.vertices)
            spheres = cover_region(reg.box_lo, reg.box_hi, cloud, self.cfg)
            clusters = cluster_spheres(spheres, self.cfg.safety_radius, self.cfg.sphere_link)
            rc = (reg.box_lo + reg.box_hi) * 0.5
            positions = []
            for cl in clusters:
                best = min(cl, key=lambda i: (float(np.linalg.norm(spheres[i].center - rc)), i))
                positions.append(spheres[best].center)

            unmatched = {vid: self.vertices[vid].position for vid in pre}
            new_ids: list[int] = []
            moved: set[int] = set()
            for pos in positions:
                best_vid = None
                best_d = self.cfg.vertex_match_tol
                for vid, op in unmatched.items():
                    d = float(np.linalg.norm(op - pos))
                    if d <= best_d:
                        best_vid, best_d = vid, d
                if best_vid is not None:
                    del unmatched[best_vid]
                    if not np.array_equal(self.vertices[best_vid].position, pos):
                        self.vertices[best_vid].position = pos.copy()
                        moved.add(best_vid)
                    new_ids.append(best_vid)
                else:
                    new_ids.append(self._add_vertex(pos, key, REGULAR))
            reg.vertices = list(new_ids)
            out[key] = (pre, new_ids, moved)
        return out

    # ---- edge phase ---- #

    def _path_clear(self, path: np.ndarray, cloud: PointCloudMap) -> bool:
        safety = self.cfg.safety_radius
        for i in range(len(path) - 1):
            if not cloud.segment_clear(path[i], path[i + 1], safety):
                return False
        return True

    def _attempt_edge(
        self, a: int, b: int, cloud: PointCloudMap, memos: tuple[dict, dict] | None = None
    ) -> bool:
        pa = self.vertices[a].position
        pb = self.vertices[b].position
        safety = self.cfg.safety_radius
        if cloud.segment_clear(pa, pb, safety):
            self._store_edge(_make_edge(a, b, np.array([pa, pb])))
            return True
        pad = self.cfg.region_size
        lo = np.minimum(pa, pb) - pad
        hi = np.maximum(pa, pb) + pad
        # exact per-step validation keeps every stored path reproducible:
        # a path that still verifies is itself an admissible node chain,
        # so a fresh search over the same map cannot miss the connection
        cap = float(np.sqrt(safety**2 + 0.75 * self.cfg.astar_pitch**2)) + 1e-6
        node_memo, step_memo = memos if memos is not None else ({}, {})
        path = astar_grid(
            pa,
            pb,
            self.cfg.astar_pitch,
            lambda p: cloud.nearest_distance(p, cap=cap),
            safety,
            lo,
            hi,
            connect_free=lambda x, y: cloud.segment_clear(x, y, safety),
            step_free=lambda x, y: cloud.segment_clear(x, y, safety),
            max_expansions=self.cfg.astar_max_expansions,
            node_memo=node_memo,
            step_memo=step_memo,
        )
        if path is None:
            return False
        self._store_edge(_make_edge(a, b, path))
        return True

    def update_edges(
        self,
        cloud: PointCloudMap,
        per_region: dict,
        uav_pos: np.ndarray,
        touched_lo: np.ndarray | None = None,
        touched_hi: np.ndarray | None = None,
    ) -> None:
        """Refresh the edge set after a vertex phase.

        Removed vertices lose their edges and leave the store.  Edges of
        remaining vertices, moved vertices, and any edge whose path box
        comes near cells the frame touched are rechecked against the
        current map; failures are deleted and their endpoint pairs
        re-searched.  Inserted and moved vertices are paired against all
        vertices of their 27-region neighborhood, and the odometry
        vertex is rebuilt at the current position.
        """
        safety = self.cfg.safety_radius
        pairs: dict[tuple[int, int], None] = {}

        def enqueue(a: int, b: int) -> None:
            if a != b:
                pairs[(min(a, b), max(a, b))] = None

        removed_all: list[int] = []
        moved_all: set[int] = set()
        inserted_all: list[int] = []
        for key, (pre, new, moved) in per_region.items():
            removed, _, inserted = categorize_vertices(pre, new)
            removed_all.extend(removed)
            inserted_all.extend(inserted)
            moved_all.update(moved)

        for vid in removed_all:
            for nb in list(self.adj[vid]):
                self._drop_edge(vid, nb)
            del self.adj[vid]
            del self.vertices[vid]

        # moved vertices: stored paths no longer end at the vertex
        for vid in moved_all:
            for nb in list(self.adj[vid]):
                self._drop_edge(vid, nb)

        # recheck edges of remaining vertices and, for completeness, any
        # edge whose corridor could contain newly inserted points
        suspects: dict[tuple[int, int], Edge] = {}
        for key, (pre, new, moved) in per_region.items():
            _, remaining, _ = categorize_vertices(pre, new)
            for vid in remaining:
                for nb, e in self.adj[vid].items():
                    suspects[(min(vid, nb), max(vid, nb))] = e
        if touched_lo is not None and touched_hi is not None:
            t_lo = np.asarray(touched_lo, dtype=np.float64) - safety
            t_hi = np.asarray(touched_hi, dtype=np.float64) + safety
            for e in self.edges():
                if np.all(e.box_hi >= t_lo) and np.all(e.box_lo <= t_hi):
                    suspects[(min(e.a, e.b), max(e.a, e.b))] = e
        for (a, b), e in suspects.items():
            if b not in self.adj.get(a, {}):
                continue
            if not self._path_clear(e.path, cloud):
                self._drop_edge(a, b)
                enqueue(a, b)

        for vid in list(inserted_all) + sorted(moved_all):
            if vid not in self.vertices:
                continue
            for u in self._candidates(self.neighborhood(self.vertices[vid].region_key)):
                enqueue(vid, u)

        # odometry vertex follows the UAV and is rebuilt every frame
        od = self.vertices[self.odom_id]
        uav_pos = np.asarray(uav_pos, dtype=np.float64)
        for nb in list(self.adj[self.odom_id]):
            self._drop_edge(self.odom_id, nb)
        od.position = uav_pos.copy()
        od.region_key = self.region_key_of(uav_pos)
        for u in self._candidates(self.neighborhood(od.region_key)):
            enqueue(self.odom_id, u)

        # the map is frozen for the whole pass, so clearance and step
        # verdicts are shared across every attempt
        memos: tuple[dict, dict] = ({}, {})
        for a, b in pairs:
            if a not in self.vertices or b not in self.vertices:
                continue
            if b in self.adj[a]:
                continue
            self._attempt_edge(a, b, cloud, memos)

    def update(self, cloud: PointCloudMap, cloud_touched_keys, uav_pos: np.ndarray) -> None:
        """One full maintenance pass: region list from the touched cells
        plus the UAV's own region, each widened to its 27-neighborhood."""
        base: dict[tuple[int, int, int], None] = {}
        cs = cloud.cell_size
        for ck in cloud_touched_keys:
            center = (np.array(ck, dtype=np.float64) + 0.5) * cs
            base[self.region_key_of(center)] = None
        base[self.region_key_of(uav_pos)] = None
        widened: dict[tuple[int, int, int], None] = {}
        for k in base:
            for nk in self.neighborhood(k):
                widened[nk] = None
        for k in widened:
            self.touched_regions[k] = None

        touched_lo = touched_hi = None
        if cloud_touched_keys:
            arr = np.asarray(list(cloud_touched_keys), dtype=np.float64)
            touched_lo = arr.min(axis=0) * cs
            touched_hi = (arr.max(axis=0) + 1.0) * cs
        per_region = self.update_vertices(cloud, list(widened))
        self.update_edges(cloud, per_region, uav_pos, touched_lo, touched_hi)

    # ---- queries ---- #

    def shortest_path(self, a: int, b: int) -> tuple[list[int], float] | None:
        """A* over the graph with Euclidean heuristic; returns the vertex
        sequence and its total edge length, or None when unreachable."""
        if a not in self.vertices or b not in self.vertices:
            return None
        if a == b:
            return [a], 0.0
        goal = self.vertices[b].position
        heap = [(float(np.linalg.norm(self.vertices[a].position - goal)), 0.0, 0, a)]
        g = {a: 0.0}
        parent: dict[int, int] = {}
        closed: set[int] = set()
        seq = 1
        while heap:
            _, _, _, cur = heapq.heappop(heap)
            if cur in closed:
                continue
            if cur == b:
                ids = [b]
                while ids[-1] != a:
                    ids.append(parent[ids[-1]])
                ids.reverse()
                return ids, g[b]
            closed.add(cur)
            for nb, e in self.adj[cur].items():
                if nb in closed:
                    continue
                ng = g[cur] + e.length
                if ng < g.get(nb, np.inf) - 1e-12:
                    g[nb] = ng
                    parent[nb] = cur
                    h = float(np.linalg.norm(self.vertices[nb].position - goal))
                    heapq.heappush(heap, (ng + h, -ng, seq, nb))
                    seq += 1
        return None

    def stitch(self, ids: list[int]) -> np.ndarray:
        """Concatenate the stored edge paths along a vertex sequence."""
        if not ids:
            return np.zeros((0, 3))
        pts = [self.vertices[ids[0]].position.copy()]
        for a, b in zip(ids, ids[1:]):
            pts.extend(self.edge_path(a, b)[1:])
        return np.array(pts)

    def connect_temp(self, p: np.ndarray, cloud: PointCloudMap) -> tuple[int, RollbackToken]:
        """Insert a temporary vertex at p and try edges to the vertices
        of the surrounding regions.  The token undoes everything."""
        p = np.asarray(p, dtype=np.float64)
        key = self.region_key_of(p)
        vid = self._add_vertex(p, key, TEMP)  # not listed in the region
        token = RollbackToken(vid)
        memos: tuple[dict, dict] = ({}, {})
        for u in self._candidates(self.neighborhood(key)):
            if u == vid:
                continue
            if self._attempt_edge(vid, u, cloud, memos):
                token.edges.append((vid, u))
        return vid, token

    def rollback(self, token: RollbackToken) -> None:
        for a, b in token.edges:
            self._drop_edge(a, b)
        self.adj.pop(token.vertex_id, None)
        self.vertices.pop(token.vertex_id, None)

    # ---- introspection ---- #

    def snapshot(self):
        """Canonical content view (id counter excluded); two graphs with
        equal snapshots behave identically."""
        verts = tuple(
            sorted(
                (vid, v.kind, v.region_key, tuple(v.position.tolist()))
                for vid, v in self.vertices.items()
            )
        )
        edges = tuple(
            sorted(
                (e.a, e.b, round(e.length, 12), tuple(map(tuple, e.path.tolist())))
                for e in self.edges()
            )
        )
        return verts, edges

    def reachability_components(self) -> list[frozenset]:
        """Connected components over vertex ids."""
        ids = list(self.vertices)
        index = {vid: i for i, vid in enumerate(ids)}
        uf = UnionFind(len(ids))
        for e in self.edges():
            uf.union(index[e.a], index[e.b])
        return [frozenset(ids[i] for i in grp) for grp in uf.groups()]

    def export_csv(self, path: str) -> None:
        """Edge-list CSV: vertex rows then edge rows."""
        with open(path, "w", encoding="utf-8") as fh:
            fh.write("type,id_a,id_b,x,y,z,kind,length\n")
            for vid in sorted(self.vertices):
                v = self.vertices[vid]
                fh.write(
                    f"vertex,{vid},,{v.position[0]:.6f},{v.position[1]:.6f},{v.position[2]:.6f},{v.kind},\n"
                )
            for e in sorted(self.edges(), key=lambda e: (e.a, e.b)):
                fh.write(f"edge,{e.a},{e.b},,,,,{e.length:.6f}\n")
