"""Receding-horizon local exploration: motion-primitive tree, gain, best path.

The tree is expanded breadth-first inside a fixed window centered on the
robot.  Each node scores the unknown volume newly visible from its endpoint,
discounted per meter of path; the best root-to-node path maximizes gain minus
a length penalty.  Local completion is reported when no path in the tree
clears the gain threshold.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .motion_primitives import (
    MotionModel,
    MotionPrimitive,
    Path,
    RobotState,
    generate_primitive_commands,
    path_from_primitives,
    propagate_batch,
)
from .sensor_sim import BeamSampler, SensorConfig, visible_unknown_voxels
from .voxel_map import BoundingBox, OccupancyGrid, boxes_blocked, _densify


class PlannerError(RuntimeError):
    pass


class StateInCollision(PlannerError):
    """The planning root overlaps a non-free voxel; caller must recover."""


@dataclass
class LocalPlannerConfig:
    window_dims: np.ndarray = None      # (3,) m, window centered on the robot
    tree_depth: int = 4
    max_nodes: int = 120
    gain_discount: float = 0.98         # per-meter decay, lambda
    path_length_weight: float = 0.05    # m^3 per m
    completion_threshold: float = 0.5   # m^3 (V_delta)
    gain_mode: str = "beams"            # "beams" | "exact"
    gain_rays: object = "auto"          # "auto" | (nh, nv); beams mode only
    execute_primitives: int = 1         # receding horizon: primitives flown per replan

    def __post_init__(self):
        if self.window_dims is None:
            self.window_dims = np.array([40.0, 40.0, 8.0])
        self.window_dims = np.asarray(self.window_dims, dtype=float)
        if np.any(self.window_dims <= 0):
            raise ValueError("window_dims must be positive")
        if self.tree_depth < 1:
            raise ValueError("tree_depth must be >= 1")
        if not 0 < self.gain_discount <= 1:
            raise ValueError("gain_discount must be in (0, 1]")
        if self.completion_threshold <= 0:
            raise ValueError("completion_threshold must be positive")
        if self.gain_mode not in ("beams", "exact"):
            raise ValueError(f"unknown gain_mode {self.gain_mode!r}")


def _visible_set(grid: OccupancyGrid, position, heading: float,
                 sensor: SensorConfig, config: LocalPlannerConfig,
                 sampler: BeamSampler | None = None) -> np.ndarray:
    gain_sensor = sensor.clamped_to_update_range()
    if config.gain_mode == "exact":
        return visible_unknown_voxels(grid, position, heading, gain_sensor)
    if sampler is None:
        sampler = BeamSampler(grid)
    return sampler.visible_unknown(position, heading, gain_sensor, config.gain_rays)


@dataclass
class TreeNode:
    id: int
    parent: int | None
    primitive: MotionPrimitive | None   # None for the root
    state: RobotState
    depth: int
    cum_length: float
    new_count: int                      # unknown voxels newly visible at this node
    cum_gain: float                     # discounted gain of the root-to-node path, m^3
    seen: np.ndarray                    # sorted flat indices counted on the path so far
    new_flat: np.ndarray = field(default=None, repr=False)


@dataclass
class PrimitiveTree:
    nodes: list[TreeNode]
    root_state: RobotState

    def path_to(self, node_id: int) -> list[TreeNode]:
        chain = []
        nid: int | None = node_id
        while nid is not None:
            node = self.nodes[nid]
            chain.append(node)
            nid = node.parent
        chain.reverse()
        return chain

    @property
    def max_gain(self) -> float:
        return max(n.cum_gain for n in self.nodes)


def build_tree(grid: OccupancyGrid, state: RobotState, model: MotionModel,
               sensor: SensorConfig, config: LocalPlannerConfig,
               bbox: BoundingBox) -> PrimitiveTree:
    """Breadth-first primitive tree rooted at the current state.

    Children are kept only when their primitive stays collision-free
    (unknown treated as obstacle) and inside the window intersected with the
    map bounds.  Expansion stops at tree_depth levels or max_nodes nodes.
    """
    if boxes_blocked(grid, state.position[None, :], bbox, unknown_is_obstacle=True)[0]:
        raise StateInCollision(f"planning root at {state.position} is in collision")

    win_lo = state.position - config.window_dims / 2
    win_hi = state.position + config.window_dims / 2
    vol = grid.voxel_volume
    sampler = BeamSampler(grid) if config.gain_mode == "beams" else None

    root_vis = _visible_set(grid, state.position, state.heading, sensor, config, sampler)
    root = TreeNode(0, None, None, state.copy(), 0, 0.0, int(root_vis.size),
                    float(root_vis.size) * vol, root_vis, root_vis)
    nodes = [root]
    frontier = [root]
    spacing = grid.resolution / 2.0

    for _ in range(config.tree_depth):
        if not frontier or len(nodes) >= config.max_nodes:
            break
        next_frontier: list[TreeNode] = []
        for parent in frontier:
            if len(nodes) >= config.max_nodes:
                break
            commands = generate_primitive_commands(parent.state, model)
            prims = propagate_batch(parent.state, commands, model)

            # One vectorized pass over every sample of every candidate.
            counts = []
            all_samples = []
            for prim in prims:
                s = _densify(prim.positions, spacing)
                counts.append(s.shape[0])
                all_samples.append(s)
            samples = np.concatenate(all_samples)
            in_window = np.all((samples >= win_lo) & (samples <= win_hi), axis=1)
            blocked = boxes_blocked(grid, samples, bbox, unknown_is_obstacle=True)
            ok = in_window & ~blocked

            offset = 0
            for prim, n_samp in zip(prims, counts):
                good = bool(ok[offset:offset + n_samp].all())
                offset += n_samp
                if not good:
                    continue
                if len(nodes) >= config.max_nodes:
                    break
                end = prim.terminal_state
                vis = _visible_set(grid, end.position, end.heading, sensor, config, sampler)
                new = np.setdiff1d(vis, parent.seen, assume_unique=True)
                cum_len = parent.cum_length + prim.length
                gain = parent.cum_gain + (config.gain_discount ** cum_len) * new.size * vol
                node = TreeNode(len(nodes), parent.id, prim, end, parent.depth + 1,
                                cum_len, int(new.size), gain,
                                np.union1d(parent.seen, new), new)
                nodes.append(node)
                next_frontier.append(node)
        frontier = next_frontier

    return PrimitiveTree(nodes, state.copy())


def exploration_gain(grid: OccupancyGrid, states: list[RobotState],
                     sensor: SensorConfig, config: LocalPlannerConfig,
                     cum_dists: list[float] | None = None) -> float:
    """Discounted newly-visible unknown volume along a state sequence (m^3).

    Each state contributes lambda^d * |new voxels| * voxel_volume, where new
    voxels are those not already counted at earlier states and d is the
    cumulative distance at that state (straight-line between the given states
    unless cum_dists is supplied).
    """
    if not states:
        raise ValueError("path must contain at least one state")
    if cum_dists is None:
        cum_dists = [0.0]
        for a, b in zip(states[:-1], states[1:]):
            cum_dists.append(cum_dists[-1] + float(np.linalg.norm(b.position - a.position)))
    vol = grid.voxel_volume
    seen = np.zeros(0, dtype=np.int64)
    gain = 0.0
    for state, d in zip(states, cum_dists):
        vis = _visible_set(grid, state.position, state.heading, sensor, config)
        new = np.setdiff1d(vis, seen, assume_unique=True)
        gain += (config.gain_discount ** d) * new.size * vol
        seen = np.union1d(seen, new)
    return gain


@dataclass
class BestPath:
    path: Path
    gain: float                 # discounted gain of the selected path, m^3
    utility: float              # gain - path_length_weight * length
    node_id: int
    node_gains: list[tuple[int, float]]  # (node id, discounted cumulative gain)


def best_path(tree: PrimitiveTree, config: LocalPlannerConfig) -> BestPath:
    """Root-to-node path maximizing gain minus the length penalty.

    Ties break toward the shorter path, then the lower node id (node ids are
    assigned in deterministic BFS order).
    """
    best = None
    best_key = None
    for node in tree.nodes:
        utility = node.cum_gain - config.path_length_weight * node.cum_length
        key = (utility, -node.cum_length, -node.id)
        if best_key is None or key > best_key:
            best = node
            best_key = key

    chain = tree.path_to(best.id)
    prims = [n.primitive for n in chain if n.primitive is not None]
    if prims:
        path = path_from_primitives(prims)
    else:
        root = tree.root_state
        path = Path(root.position[None, :].copy(), root.velocity[None, :].copy(),
                    np.array([root.heading]), 0.0, 0.0)
    gains = [(n.id, n.cum_gain) for n in chain]
    return BestPath(path, best.cum_gain, best_key[0], best.id, gains)


def check_local_completion(tree: PrimitiveTree, config: LocalPlannerConfig) -> bool:
    """True when no path in the tree reaches the gain threshold."""
    return tree.max_gain < config.completion_threshold
