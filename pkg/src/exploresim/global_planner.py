"""Global layer: roadmap over explored space, frontier detection, homing.

The graph accretes vertices along every executed path.  Frontier clusters are
free voxels bordering unknown space; clusters whose estimated gain clears the
threshold and that can be wired into the graph become repositioning targets.
Homing queries return shortcut-refined shortest paths to the home vertex with
edges re-validated against the current map.
"""

from __future__ import annotations

import heapq
import math
from dataclasses import dataclass

import numpy as np
from scipy import ndimage

from .motion_primitives import Path, RobotState, straight_path
from .sensor_sim import BeamSampler, SensorConfig, visible_unknown_voxels
from .voxel_map import BoundingBox, OccupancyGrid, VoxelState, is_path_collision_free


class GlobalPlannerError(RuntimeError):
    pass


class NoHomePath(GlobalPlannerError):
    """No collision-valid route to home remains; mission must abort."""


class NoReachableFrontier(GlobalPlannerError):
    """Frontiers exist but none is reachable on the graph."""


@dataclass
class GlobalPlannerConfig:
    vertex_spacing: float = 2.0      # m between roadmap vertices along paths
    connect_radius: float = 5.0      # m radius for shortcut edges
    frontier_sigma_d: float = 50.0   # m, distance weight in frontier selection
    gain_threshold: float = 0.5      # m^3, V_delta for frontier acceptance
    connect_tries: int = 8           # candidate vertices tried when wiring a frontier
    standoff_radius: float = 2.5     # m, search radius for a bbox-clear viewpoint
    gain_mode: str = "beams"
    gain_rays: object = "auto"

    def __post_init__(self):
        if self.vertex_spacing <= 0 or self.connect_radius <= 0:
            raise ValueError("vertex_spacing and connect_radius must be positive")
        if self.gain_threshold <= 0:
            raise ValueError("gain_threshold must be positive")


@dataclass
class MissionBudget:
    total_endurance: float = 900.0  # s
    elapsed: float = 0.0
    homing_margin: float = 1.3      # multiplier >= 1 on the homing time
    nominal_speed: float = 2.0      # m/s

    def __post_init__(self):
        if self.total_endurance < 0 or self.elapsed < 0:
            raise ValueError("times must be non-negative")
        if self.homing_margin < 1:
            raise ValueError("homing_margin must be >= 1")
        if self.nominal_speed <= 0:
            raise ValueError("nominal_speed must be positive")

    @property
    def remaining(self) -> float:
        return self.total_endurance - self.elapsed


@dataclass
class Vertex:
    id: int
    position: np.ndarray
    kind: str = "visited"       # "visited" | "frontier"
    gain: float = 0.0           # stored estimated gain for frontier vertices


@dataclass
class Frontier:
    position: np.ndarray        # representative voxel center (free, borders unknown)
    voxel_count: int
    gain: float                 # m^3, undiscounted estimate at the representative
    vertex_id: int = -1
    standoff: np.ndarray | None = None  # bbox-clear viewpoint the graph connects to


class GlobalGraph:
    """Undirected roadmap with metric edge lengths; vertex 0 is home."""

    def __init__(self, home_position):
        self.vertices: list[Vertex] = []
        self.adj: dict[int, dict[int, float]] = {}
        self.home_id = self.add_vertex(np.asarray(home_position, dtype=float))

    def add_vertex(self, position, kind: str = "visited", gain: float = 0.0) -> int:
        vid = len(self.vertices)
        self.vertices.append(Vertex(vid, np.asarray(position, dtype=float), kind, gain))
        self.adj[vid] = {}
        return vid

    def add_edge(self, a: int, b: int) -> None:
        if a == b:
            return
        length = float(np.linalg.norm(self.vertices[a].position - self.vertices[b].position))
        self.adj[a][b] = length
        self.adj[b][a] = length

    def remove_edge(self, a: int, b: int) -> None:
        self.adj[a].pop(b, None)
        self.adj[b].pop(a, None)

    def drop_frontier_vertices(self) -> None:
        """Remove frontier vertices (and their edges), renumbering nothing.

        Frontier vertices are only ever leaves attached by one edge, so they
        are detached and tombstoned.
        """
        for v in self.vertices:
            if v.kind == "frontier":
                for nbr in list(self.adj[v.id]):
                    self.remove_edge(v.id, nbr)
                v.kind = "dropped"

    def live_vertices(self) -> list[Vertex]:
        return [v for v in self.vertices if v.kind != "dropped"]

    def nearest_vertices(self, position, count: int, kind: str = "visited") -> list[int]:
        position = np.asarray(position, dtype=float)
        cands = [v for v in self.vertices if v.kind == kind]
        cands.sort(key=lambda v: (float(np.linalg.norm(v.position - position)), v.id))
        return [v.id for v in cands[:count]]

    def dijkstra(self, source: int) -> tuple[dict[int, float], dict[int, int]]:
        dist = {source: 0.0}
        prev: dict[int, int] = {}
        heap = [(0.0, source)]
        while heap:
            d, u = heapq.heappop(heap)
            if d > dist.get(u, math.inf):
                continue
            for v, w in self.adj[u].items():
                nd = d + w
                if nd < dist.get(v, math.inf) - 1e-15:
                    dist[v] = nd
                    prev[v] = u
                    heapq.heappush(heap, (nd, v))
        return dist, prev

    def shortest_path(self, source: int, target: int) -> tuple[list[int], float] | None:
        dist, prev = self.dijkstra(source)
        if target not in dist:
            return None
        chain = [target]
        while chain[-1] != source:
            chain.append(prev[chain[-1]])
        chain.reverse()
        return chain, dist[target]

    # -- text dump format ---------------------------------------------------

    def dump(self, path) -> None:
        lines = []
        for v in self.vertices:
            if v.kind == "dropped":
                continue
            lines.append("v %d %.6f %.6f %.6f %s\n" % (
                v.id, v.position[0], v.position[1], v.position[2], v.kind))
        seen = set()
        for a, nbrs in sorted(self.adj.items()):
            for b, length in sorted(nbrs.items()):
                if (b, a) in seen:
                    continue
                seen.add((a, b))
                lines.append("e %d %d %.6f\n" % (a, b, length))
        text = "".join(lines)
        if hasattr(path, "write"):
            path.write(text)
        else:
            with open(path, "w") as fh:
                fh.write(text)


def _segment_free(grid, a, b, bbox) -> bool:
    return is_path_collision_free(grid, np.stack([a, b]), bbox, unknown_is_obstacle=True)


def update_graph(graph: GlobalGraph, executed_path: Path, grid: OccupancyGrid,
                 bbox: BoundingBox, config: GlobalPlannerConfig) -> GlobalGraph:
    """Accrete roadmap vertices every vertex_spacing meters along the path.

    Candidates within spacing/2 of an existing vertex reuse it.  Consecutive
    chain vertices are linked; when the straight chord between them cuts a
    corner the flown sub-path itself is subdivided (it is known collision
    free), so the trail always stays connected.  Each new vertex also picks
    up collision-free shortcut edges within connect_radius.
    """
    positions = executed_path.positions
    if positions.shape[0] == 0:
        return graph
    # Candidate points every vertex_spacing of arc length, plus both ends.
    cands = [(positions[0], 0)]
    acc = 0.0
    for i, (a, b) in enumerate(zip(positions[:-1], positions[1:])):
        acc += float(np.linalg.norm(b - a))
        if acc >= config.vertex_spacing - 1e-9:
            cands.append((b, i + 1))
            acc = 0.0
    if cands[-1][1] != positions.shape[0] - 1:
        cands.append((positions[-1], positions.shape[0] - 1))

    prev_vid = None
    prev_idx = 0
    for p, idx in cands:
        vid = None
        for v in graph.vertices:
            if v.kind != "visited":
                continue
            if np.linalg.norm(v.position - p) <= config.vertex_spacing / 2:
                vid = v.id
                break
        if vid is None:
            vid = graph.add_vertex(p, "visited")
            # Shortcut edges to anything within the connect radius.
            for v in graph.vertices[:-1]:
                if v.kind != "visited":
                    continue
                d = float(np.linalg.norm(v.position - p))
                if d <= config.connect_radius and _segment_free(grid, v.position, p, bbox):
                    graph.add_edge(vid, v.id)
        if prev_vid is not None and vid != prev_vid and vid not in graph.adj[prev_vid]:
            _link_via_path(graph, prev_vid, vid, positions[prev_idx:idx + 1],
                           grid, bbox, depth=6)
        prev_vid = vid
        prev_idx = idx
    return graph


def _link_via_path(graph, a, b, subpath: np.ndarray, grid, bbox, depth) -> bool:
    """Link two trail vertices, falling back to waypoints on the flown path."""
    pa, pb = graph.vertices[a].position, graph.vertices[b].position
    if _segment_free(grid, pa, pb, bbox):
        graph.add_edge(a, b)
        return True
    if depth == 0 or subpath.shape[0] < 3:
        return False
    mid_idx = subpath.shape[0] // 2
    mid = graph.add_vertex(subpath[mid_idx], "visited")
    ok_a = _link_via_path(graph, a, mid, subpath[:mid_idx + 1], grid, bbox, depth - 1)
    ok_b = _link_via_path(graph, mid, b, subpath[mid_idx:], grid, bbox, depth - 1)
    return ok_a and ok_b


# ---------------------------------------------------------------------------
# frontiers
# ---------------------------------------------------------------------------

_CONN26 = np.ones((3, 3, 3), dtype=int)


def frontier_cell_mask(grid: OccupancyGrid) -> np.ndarray:
    """Free voxels 6-adjacent to at least one Unknown voxel."""
    free = grid.cells == VoxelState.FREE
    unknown = grid.cells == VoxelState.UNKNOWN
    adj = np.zeros_like(free)
    adj[:-1, :, :] |= unknown[1:, :, :]
    adj[1:, :, :] |= unknown[:-1, :, :]
    adj[:, :-1, :] |= unknown[:, 1:, :]
    adj[:, 1:, :] |= unknown[:, :-1, :]
    adj[:, :, :-1] |= unknown[:, :, 1:]
    adj[:, :, 1:] |= unknown[:, :, :-1]
    return free & adj


def _estimate_gain(grid, position, sensor: SensorConfig, config: GlobalPlannerConfig,
                   sampler: BeamSampler | None = None) -> float:
    gain_sensor = sensor.clamped_to_update_range()
    if config.gain_mode == "exact":
        vis = visible_unknown_voxels(grid, position, 0.0, gain_sensor)
    else:
        if sampler is None:
            sampler = BeamSampler(grid)
        vis = sampler.visible_unknown(position, 0.0, gain_sensor, config.gain_rays)
    return float(vis.size) * grid.voxel_volume


def _standoff_candidates(grid: OccupancyGrid, rep: np.ndarray, bbox: BoundingBox,
                         radius: float, limit: int = 24) -> np.ndarray:
    """Voxel centers around rep where the whole bbox sits in known-free space,
    nearest first.  Frontier cells border unknown by definition, so the robot
    parks at such a viewpoint rather than on the cell itself."""
    from .voxel_map import boxes_blocked

    dims = np.asarray(grid.dims)
    lo = np.maximum(grid.world_to_voxel(rep - radius), 0)
    hi = np.minimum(grid.world_to_voxel(rep + radius), dims - 1)
    sub = grid.cells[lo[0]:hi[0] + 1, lo[1]:hi[1] + 1, lo[2]:hi[2] + 1]
    cand = np.argwhere(sub == VoxelState.FREE) + lo
    if cand.shape[0] == 0:
        return np.zeros((0, 3))
    centers = grid.voxel_centers(cand)
    d = np.linalg.norm(centers - rep, axis=1)
    order = np.lexsort((grid.flat_index(cand), d))
    centers = centers[order]
    blocked = boxes_blocked(grid, centers, bbox, unknown_is_obstacle=True)
    clear = centers[~blocked]
    if clear.shape[0] <= 1:
        return clear
    # Thin by minimum separation so the candidates spread over the whole
    # radius instead of piling up next to the interface.
    min_sep = 2 * grid.resolution
    kept = [clear[0]]
    for c in clear[1:]:
        if len(kept) >= limit:
            break
        if all(np.linalg.norm(c - k) >= min_sep for k in kept):
            kept.append(c)
    return np.array(kept)


def _find_standoff(grid: OccupancyGrid, rep: np.ndarray, bbox: BoundingBox,
                   radius: float) -> np.ndarray | None:
    """Nearest bbox-clear voxel center around rep, or None."""
    cands = _standoff_candidates(grid, rep, bbox, radius, limit=1)
    return cands[0] if cands.shape[0] else None


def detect_frontiers(grid: OccupancyGrid, graph: GlobalGraph, sensor: SensorConfig,
                     config: GlobalPlannerConfig, bbox: BoundingBox) -> list[Frontier]:
    """Cluster frontier cells, estimate gain, and wire survivors into the graph.

    Clusters are 26-connected components of the frontier mask.  The
    representative is the member voxel nearest the cluster centroid; the gain
    estimate is taken from the cluster's bbox-clear standoff viewpoint, i.e.
    the volume a robot repositioned there could actually observe (an estimate
    taken inside the interface itself can see volume no reachable pose can,
    which would make such clusters permanently attractive yet unmappable).
    Clusters below the gain threshold, without a standoff, or with no
    collision-free straight connection from the standoff to a graph vertex
    are dropped (inaccessible frontiers never become targets).  Previous
    frontier vertices are replaced wholesale.
    """
    graph.drop_frontier_vertices()
    mask = frontier_cell_mask(grid)
    labels, n = ndimage.label(mask, structure=_CONN26)
    frontiers: list[Frontier] = []
    if n == 0:
        return frontiers

    sampler = BeamSampler(grid) if config.gain_mode == "beams" else None
    objects = ndimage.find_objects(labels)
    for k in range(1, n + 1):
        sl = objects[k - 1]
        local = np.argwhere(labels[sl] == k)
        members = local + np.array([s.start for s in sl])
        centroid = members.mean(axis=0)
        off = members - centroid
        d2 = np.einsum("ij,ij->i", off, off)
        rep_idx = members[int(np.argmin(d2))]  # argmin ties -> first in scan order
        rep = grid.voxel_center(rep_idx)

        candidates = _standoff_candidates(grid, rep, bbox, config.standoff_radius)
        if candidates.shape[0] == 0:
            continue
        gain = _estimate_gain(grid, candidates[0], sensor, config, sampler)
        if gain < config.gain_threshold:
            continue

        vertex_id = -1
        standoff = None
        for cand_pos in candidates:
            for vid in graph.nearest_vertices(cand_pos, config.connect_tries):
                if _segment_free(grid, graph.vertices[vid].position, cand_pos, bbox):
                    standoff = cand_pos
                    vertex_id = graph.add_vertex(cand_pos, "frontier", gain)
                    graph.add_edge(vertex_id, vid)
                    break
            if vertex_id >= 0:
                break
        if vertex_id < 0:
            continue
        frontiers.append(Frontier(rep, int(members.shape[0]), gain, vertex_id, standoff))
    return frontiers


def check_global_completion(grid: OccupancyGrid, frontiers: list[Frontier],
                            config: GlobalPlannerConfig) -> bool:
    """Complete when no reachable frontier with sufficient gain remains."""
    return len(frontiers) == 0


# ---------------------------------------------------------------------------
# graph path planning
# ---------------------------------------------------------------------------


def shortcut_waypoints(points: np.ndarray, grid: OccupancyGrid, bbox: BoundingBox) -> np.ndarray:
    """Greedy shortcutting: replace vertex subchains by straight segments."""
    pts = np.atleast_2d(points)
    if pts.shape[0] <= 2:
        return pts
    out = [pts[0]]
    i = 0
    last = pts.shape[0] - 1
    while i < last:
        j = last
        while j > i + 1 and not _segment_free(grid, pts[i], pts[j], bbox):
            j -= 1
        out.append(pts[j])
        i = j
    return np.array(out)


def _entry_vertex(graph: GlobalGraph, position, grid, bbox, config) -> int | None:
    """Nearest visited vertex reachable by a straight collision-free segment."""
    for vid in graph.nearest_vertices(position, config.connect_tries):
        if _segment_free(grid, position, graph.vertices[vid].position, bbox):
            return vid
    return None


def _validated_graph_route(graph: GlobalGraph, source: int, target: int,
                           grid, bbox) -> tuple[list[int], float] | None:
    """Shortest path whose edges still pass collision checks; stale edges are
    removed and the search repeats."""
    while True:
        found = graph.shortest_path(source, target)
        if found is None:
            return None
        chain, length = found
        stale = None
        for a, b in zip(chain[:-1], chain[1:]):
            if not _segment_free(grid, graph.vertices[a].position,
                                 graph.vertices[b].position, bbox):
                stale = (a, b)
                break
        if stale is None:
            return chain, length
        graph.remove_edge(*stale)


def _route_to_path(graph: GlobalGraph, start_position, chain: list[int],
                   grid, bbox, speed: float, sample_ds: float) -> Path:
    waypoints = [np.asarray(start_position, dtype=float)]
    waypoints.extend(graph.vertices[v].position for v in chain)
    refined = shortcut_waypoints(np.array(waypoints), grid, bbox)
    return straight_path(refined, speed, sample_ds)


def plan_to_frontier(graph: GlobalGraph, current: RobotState, frontiers: list[Frontier],
                     grid: OccupancyGrid, bbox: BoundingBox, config: GlobalPlannerConfig,
                     speed: float, sample_ds: float) -> tuple[Path, Frontier]:
    """Repositioning path to the frontier maximizing gain * exp(-dist/sigma)."""
    if not frontiers:
        raise NoReachableFrontier("no frontiers supplied")
    entry = _entry_vertex(graph, current.position, grid, bbox, config)
    if entry is None:
        raise NoReachableFrontier("no graph vertex reachable from the current state")

    remaining = list(frontiers)
    while remaining:
        dist, _ = graph.dijkstra(entry)
        scored = []
        for f in remaining:
            d = dist.get(f.vertex_id)
            if d is None:
                continue
            score = f.gain * math.exp(-d / config.frontier_sigma_d)
            scored.append((-score, d, f.vertex_id, f))
        if not scored:
            raise NoReachableFrontier("no frontier reachable on the graph")
        scored.sort(key=lambda t: (t[0], t[1], t[2]))
        best = scored[0][3]
        route = _validated_graph_route(graph, entry, best.vertex_id, grid, bbox)
        if route is None:
            remaining = [f for f in remaining if f.vertex_id != best.vertex_id]
            continue
        chain, _ = route
        path = _route_to_path(graph, current.position, chain, grid, bbox, speed, sample_ds)
        return path, best
    raise NoReachableFrontier("no frontier reachable on the graph")


def plan_home(graph: GlobalGraph, current: RobotState, grid: OccupancyGrid,
              bbox: BoundingBox, config: GlobalPlannerConfig,
              speed: float, sample_ds: float) -> Path:
    """Shortcut-refined, collision-revalidated path back to the home vertex."""
    entry = _entry_vertex(graph, current.position, grid, bbox, config)
    if entry is None:
        raise NoHomePath("no graph vertex reachable from the current state")
    route = _validated_graph_route(graph, entry, graph.home_id, grid, bbox)
    if route is None:
        raise NoHomePath("graph route to home has been invalidated")
    chain, _ = route
    return _route_to_path(graph, current.position, chain, grid, bbox, speed, sample_ds)


def time_to_home(graph: GlobalGraph, current: RobotState, grid: OccupancyGrid,
                 bbox: BoundingBox, config: GlobalPlannerConfig,
                 budget: MissionBudget) -> float:
    """Homing duration at nominal speed; raises NoHomePath when infeasible."""
    path = plan_home(graph, current, grid, bbox, config, budget.nominal_speed,
                     budget.nominal_speed * 0.5)
    return path.length / budget.nominal_speed
