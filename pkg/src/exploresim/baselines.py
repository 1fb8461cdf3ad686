"""Comparison planners behind the same mission loop: frontier-chasing and
sampling-based next-best-view.

Both are faithful-in-spirit reimplementations tuned to show their documented
failure modes: the frontier planner chases the nearest cluster with no sensor
model and wastes retries on unreachable targets; the NBV planner samples its
random tree over the whole map, which starves narrow passages of samples.
"""

from __future__ import annotations

import heapq
import math
from dataclasses import dataclass

import numpy as np
from scipy import ndimage

from .global_planner import frontier_cell_mask, _CONN26
from .motion_primitives import Path, RobotState, straight_path
from .sensor_sim import BeamSampler, SensorConfig
from .voxel_map import BoundingBox, OccupancyGrid, VoxelState, is_path_collision_free


@dataclass
class FrontierBaselineConfig:
    min_cluster_volume: float = 0.5   # m^3; reuses the V_delta threshold
    max_retries: int = 3              # attempts per frontier before blacklisting
    blacklist_radius: float = 1.0     # m, proximity for matching failed targets


@dataclass
class NbvpBaselineConfig:
    node_budget: int = 120            # sampled nodes per iteration
    edge_length_cap: float = 4.0      # m
    gain_discount: float = 0.98       # per meter, applied over tree distance
    gain_threshold: float = 0.5       # m^3; below this the iteration is a dud
    stall_limit: int = 5              # dud iterations before reporting completion
    gain_rays: object = "auto"


# ---------------------------------------------------------------------------
# frontier planner: nearest cluster by grid shortest path, no sensor model
# ---------------------------------------------------------------------------


def _navigable_mask(grid: OccupancyGrid, bbox: BoundingBox) -> np.ndarray:
    """Free voxels where the whole bbox fits (unknown counts as obstacle)."""
    blocked = grid.cells != VoxelState.FREE
    r = np.maximum(np.ceil(bbox.half_extents / grid.resolution - 1e-9).astype(int), 0)
    size = tuple(int(2 * k + 1) for k in r)
    inflated = ndimage.maximum_filter(blocked.astype(np.uint8), size=size, mode="constant", cval=1)
    return inflated == 0


def grid_shortest_path(nav: np.ndarray, start: tuple, goal: tuple) -> list[tuple] | None:
    """A* over the 6-connected navigable voxel grid (unit step cost)."""
    if not nav[start] or not nav[goal]:
        return None
    dims = nav.shape

    def h(c):
        return abs(c[0] - goal[0]) + abs(c[1] - goal[1]) + abs(c[2] - goal[2])

    open_heap = [(h(start), 0, start)]
    g_cost = {start: 0}
    came: dict[tuple, tuple] = {}
    while open_heap:
        f, g, cur = heapq.heappop(open_heap)
        if cur == goal:
            chain = [cur]
            while chain[-1] != start:
                chain.append(came[chain[-1]])
            chain.reverse()
            return chain
        if g > g_cost.get(cur, math.inf):
            continue
        x, y, z = cur
        for nxt in ((x - 1, y, z), (x + 1, y, z), (x, y - 1, z),
                    (x, y + 1, z), (x, y, z - 1), (x, y, z + 1)):
            if not (0 <= nxt[0] < dims[0] and 0 <= nxt[1] < dims[1] and 0 <= nxt[2] < dims[2]):
                continue
            if not nav[nxt]:
                continue
            ng = g + 1
            if ng < g_cost.get(nxt, math.inf):
                g_cost[nxt] = ng
                came[nxt] = cur
                heapq.heappush(open_heap, (ng + h(nxt), ng, nxt))
    return None


class FrontierPlanner:
    """Marches to the nearest frontier cluster, retrying and then blacklisting
    clusters that prove unreachable."""

    def __init__(self, config: FrontierBaselineConfig, bbox: BoundingBox):
        self.config = config
        self.bbox = bbox
        self.failures: list[tuple[np.ndarray, int]] = []  # (position, attempts)

    def _attempts_near(self, pos: np.ndarray) -> int:
        for p, n in self.failures:
            if np.linalg.norm(p - pos) <= self.config.blacklist_radius:
                return n
        return 0

    def _note_failure(self, pos: np.ndarray) -> None:
        for i, (p, n) in enumerate(self.failures):
            if np.linalg.norm(p - pos) <= self.config.blacklist_radius:
                self.failures[i] = (p, n + 1)
                return
        self.failures.append((pos.copy(), 1))

    def plan(self, grid: OccupancyGrid, state: RobotState, rng, speed: float,
             sample_ds: float) -> tuple[Path | None, dict]:
        mask = frontier_cell_mask(grid)
        labels, n = ndimage.label(mask, structure=_CONN26)
        min_voxels = max(1, int(math.ceil(self.config.min_cluster_volume / grid.voxel_volume)))

        reps = []
        for k in range(1, n + 1):
            members = np.argwhere(labels == k)
            if members.shape[0] < min_voxels:
                continue
            centroid = members.mean(axis=0)
            off = members - centroid
            rep_idx = members[int(np.argmin(np.einsum("ij,ij->i", off, off)))]
            reps.append(grid.voxel_center(rep_idx))
        info = {"clusters": len(reps)}
        if not reps:
            info["complete"] = True
            return None, info

        nav = _navigable_mask(grid, self.bbox)
        start = tuple(grid.world_to_voxel(state.position))
        if not nav[start]:
            # The robot's own cell can fail the inflation test right at spawn;
            # fall back to the nearest navigable cell in a small neighborhood.
            start = self._nearest_navigable(nav, start)
            if start is None:
                info["complete"] = True
                return None, info

        order = sorted(range(len(reps)),
                       key=lambda i: (float(np.linalg.norm(reps[i] - state.position)), i))
        for i in order:
            rep = reps[i]
            if self._attempts_near(rep) >= self.config.max_retries:
                continue
            goal = self._nearest_navigable(nav, tuple(grid.world_to_voxel(rep)))
            if goal is None:
                self._note_failure(rep)
                continue
            chain = grid_shortest_path(nav, start, goal)
            if chain is None:
                self._note_failure(rep)
                continue
            waypoints = np.array([grid.voxel_center(np.array(c)) for c in chain])
            waypoints[0] = state.position
            path = straight_path(waypoints, speed, sample_ds)
            if path.length < grid.resolution:
                # Standing on the frontier without clearing it; chasing it
                # again would never advance the mission.
                self._note_failure(rep)
                continue
            if not is_path_collision_free(grid, path.positions, self.bbox,
                                          unknown_is_obstacle=True):
                self._note_failure(rep)
                continue
            info["target"] = rep
            return path, info
        # Every remaining cluster is blacklisted or unreachable.
        info["complete"] = True
        return None, info

    def note_failure(self, target: np.ndarray) -> None:
        self._note_failure(np.asarray(target, dtype=float))

    @staticmethod
    def _nearest_navigable(nav: np.ndarray, cell: tuple, radius: int = 4):
        if nav[cell]:
            return cell
        dims = nav.shape
        best = None
        for dx in range(-radius, radius + 1):
            for dy in range(-radius, radius + 1):
                for dz in range(-radius, radius + 1):
                    c = (cell[0] + dx, cell[1] + dy, cell[2] + dz)
                    if not (0 <= c[0] < dims[0] and 0 <= c[1] < dims[1] and 0 <= c[2] < dims[2]):
                        continue
                    if nav[c]:
                        d = abs(dx) + abs(dy) + abs(dz)
                        if best is None or d < best[0]:
                            best = (d, c)
        return best[1] if best else None


# ---------------------------------------------------------------------------
# NBV planner: RRT over the whole map bounds, execute the best first edge
# ---------------------------------------------------------------------------


class NbvPlanner:
    """Receding-horizon NBV: a random tree spanning the full map bounds."""

    def __init__(self, config: NbvpBaselineConfig, bbox: BoundingBox, sensor: SensorConfig):
        self.config = config
        self.bbox = bbox
        self.sensor = sensor
        self.stalls = 0

    def plan(self, grid: OccupancyGrid, state: RobotState, rng: np.random.Generator,
             speed: float, sample_ds: float) -> tuple[Path | None, dict]:
        cfg = self.config
        gain_sensor = self.sensor.clamped_to_update_range()
        vol = grid.voxel_volume
        sampler = BeamSampler(grid)

        positions = [state.position.copy()]
        parents = [-1]
        dists = [0.0]
        gains = [0.0]
        lo = grid.origin
        hi = grid.upper

        for _ in range(cfg.node_budget):
            sample = rng.uniform(lo, hi)
            d2 = [float(np.sum((p - sample) ** 2)) for p in positions]
            ni = int(np.argmin(d2))
            near = positions[ni]
            delta = sample - near
            dist = float(np.linalg.norm(delta))
            if dist < 1e-9:
                continue
            if dist > cfg.edge_length_cap:
                sample = near + delta * (cfg.edge_length_cap / dist)
                dist = cfg.edge_length_cap
            if not grid.contains_point(sample):
                continue
            if not is_path_collision_free(grid, np.stack([near, sample]), self.bbox,
                                          unknown_is_obstacle=True):
                continue
            vis = sampler.visible_unknown(sample, 0.0, gain_sensor, cfg.gain_rays)
            cum_d = dists[ni] + dist
            node_gain = gains[ni] + (cfg.gain_discount ** cum_d) * vis.size * vol
            positions.append(sample)
            parents.append(ni)
            dists.append(cum_d)
            gains.append(node_gain)

        info = {"tree_nodes": len(positions)}
        if len(positions) == 1:
            self.stalls += 1
            info["stalled"] = True
            return None, info

        best = int(np.argmax(gains))
        info["best_gain"] = gains[best]
        if best == 0:
            self.stalls += 1
            info["stalled"] = True
            return None, info
        if gains[best] < cfg.gain_threshold:
            self.stalls += 1
        else:
            self.stalls = 0
        # Walk up to the child of the root: that edge is executed.
        node = best
        while parents[node] != 0:
            node = parents[node]
        waypoints = np.stack([state.position, positions[node]])
        return straight_path(waypoints, speed, sample_ds), info

    @property
    def exhausted(self) -> bool:
        return self.stalls >= self.config.stall_limit
