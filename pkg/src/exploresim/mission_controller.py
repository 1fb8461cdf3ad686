"""Mission state machine: local exploration, global repositioning, homing.

Each step performs one action: a receding-horizon local move, a repositioning
flight, or the homing flight.  The endurance guard runs before every action
with a one-action lookahead, which makes the homing guarantee provable: at
every decision point `elapsed + margin * time_to_home < total_endurance`
holds, so the flight home always lands within the budget.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field
from enum import Enum

import numpy as np

from .global_planner import (
    GlobalGraph,
    GlobalPlannerConfig,
    MissionBudget,
    NoHomePath,
    NoReachableFrontier,
    check_global_completion,
    detect_frontiers,
    plan_home,
    plan_to_frontier,
    time_to_home,
    update_graph,
)
from .local_planner import (
    LocalPlannerConfig,
    StateInCollision,
    best_path,
    build_tree,
    check_local_completion,
)
from .motion_primitives import MotionModel, Path, RobotState, path_from_primitives
from .sensor_sim import GroundTruthEnv, SensorConfig, simulate_scan
from .voxel_map import (
    BoundingBox,
    OccupancyGrid,
    boxes_blocked,
    integrate_scan,
    is_path_collision_free,
    voxel_counts,
)


class MissionMode(Enum):
    LOCAL_EXPLORATION = "LocalExploration"
    GLOBAL_REPOSITIONING = "GlobalRepositioning"
    HOMING = "Homing"
    DONE = "Done"


METRICS_HEADER = ("t_s,mode,x,y,z,explored_m3,free_voxels,occupied_voxels,"
                  "unknown_voxels,tree_nodes,best_gain,plan_wall_ms")

_MAX_HOMING_REPLANS = 5
_MAX_HOVER_STALLS = 3
_MAX_NO_PROGRESS = 8


@dataclass
class MissionState:
    mode: MissionMode
    robot: RobotState
    budget: MissionBudget
    iteration: int = 0
    done_reason: str | None = None   # completed | budget | aborted
    recovery_used: bool = False
    hover_stalls: int = 0
    no_progress_steps: int = 0


@dataclass
class MetricsRow:
    t_s: float
    mode: str
    x: float
    y: float
    z: float
    explored_m3: float
    free_voxels: int
    occupied_voxels: int
    unknown_voxels: int
    tree_nodes: int
    best_gain: float
    plan_wall_ms: float

    def format(self) -> str:
        return ("%.3f,%s,%.4f,%.4f,%.4f,%.6f,%d,%d,%d,%d,%.6f,%.3f" % (
            self.t_s, self.mode, self.x, self.y, self.z, self.explored_m3,
            self.free_voxels, self.occupied_voxels, self.unknown_voxels,
            self.tree_nodes, self.best_gain, self.plan_wall_ms))


@dataclass
class MissionContext:
    env: GroundTruthEnv
    grid: OccupancyGrid
    graph: GlobalGraph
    sensor: SensorConfig
    model: MotionModel
    local_cfg: LocalPlannerConfig
    global_cfg: GlobalPlannerConfig
    bbox: BoundingBox
    log_wall_times: bool = False


@dataclass
class MissionLog:
    rows: list[MetricsRow] = field(default_factory=list)
    transitions: list[tuple[int, str, str]] = field(default_factory=list)
    termination: str = ""
    executed: list[np.ndarray] = field(default_factory=list)  # (N, 3) per step
    grid: OccupancyGrid | None = None
    graph: GlobalGraph | None = None
    env: GroundTruthEnv | None = None

    @property
    def executed_positions(self) -> np.ndarray:
        chunks = [e for e in self.executed if e.shape[0]]
        return np.concatenate(chunks) if chunks else np.zeros((0, 3))

    def metrics_csv(self) -> str:
        lines = [METRICS_HEADER]
        lines.extend(r.format() for r in self.rows)
        lines.append("# termination=%s" % self.termination)
        lines.append("# steps=%d" % len(self.rows))
        lines.append("# elapsed_s=%.3f" % (self.rows[-1].t_s if self.rows else 0.0))
        lines.append("# explored_m3=%.6f" % (self.rows[-1].explored_m3 if self.rows else 0.0))
        return "\n".join(lines) + "\n"


def _scan_and_integrate(ctx: MissionContext, state: RobotState) -> None:
    scan = simulate_scan(ctx.env, state.position, state.heading, ctx.sensor)
    integrate_scan(ctx.grid, state.position, scan, ctx.sensor.map_update_range)


def _seed_takeoff_volume(ctx: MissionContext, state: RobotState) -> None:
    """Copy the ground truth around the start pose into the map.

    The sensor wedge cannot observe the voxels straight above and below the
    robot, but the takeoff volume is physically verified by the robot being
    there; without this the start bbox would sit in Unknown space forever.
    """
    grid = ctx.grid
    half = ctx.bbox.half_extents + 2 * grid.resolution
    lo = np.maximum(grid.world_to_voxel(state.position - half), 0)
    hi = np.minimum(grid.world_to_voxel(state.position + half) + 1, np.asarray(grid.dims))
    sl = (slice(lo[0], hi[0]), slice(lo[1], hi[1]), slice(lo[2], hi[2]))
    grid.cells[sl] = ctx.env.grid.cells[sl]


def _transition(mission: MissionState, log: MissionLog, to: MissionMode) -> None:
    if mission.mode is to:
        return
    log.transitions.append((mission.iteration, mission.mode.value, to.value))
    mission.mode = to


def _execute_path(ctx: MissionContext, path: Path, check_remaining: bool = True):
    """Fly a path, scanning every primitive_duration of travel time.

    After each scan the remainder is re-checked against the updated map; a
    predicted collision truncates the flight.  Returns (positions flown,
    end state, flown duration, truncated flag).
    """
    n = len(path)
    if n == 0:
        return np.zeros((0, 3)), None, 0.0, False
    if n == 1 or path.duration == 0.0:
        return path.positions[:1].copy(), path.state_at(0), path.duration, False

    dt = path.duration / (n - 1)
    stride = max(1, int(round(ctx.model.primitive_duration / dt)))
    scan_points = sorted(set(list(range(stride, n, stride)) + [n - 1]))

    prev = 0
    for sp in scan_points:
        _scan_and_integrate(ctx, path.state_at(sp))
        prev = sp
        if sp == n - 1:
            break
        if check_remaining:
            rest = path.positions[sp:]
            if not is_path_collision_free(ctx.grid, rest, ctx.bbox, unknown_is_obstacle=True):
                return path.positions[:sp + 1].copy(), path.state_at(sp), sp * dt, True
    return path.positions.copy(), path.end, path.duration, False


def _homing_due_local(mission: MissionState, ctx: MissionContext, tth: float) -> bool:
    """One-action lookahead for a local step of k primitives."""
    b = mission.budget
    dt_exec = ctx.local_cfg.execute_primitives * ctx.model.primitive_duration
    drift = ctx.model.v_max * dt_exec / b.nominal_speed
    return b.elapsed + dt_exec + b.homing_margin * (tth + drift) >= b.total_endurance


def _homing_due_for_flight(mission: MissionState, ctx: MissionContext, tth: float,
                           flight: Path) -> bool:
    """Lookahead before committing to a repositioning flight: worst case the
    robot flies the whole path and must return along it."""
    b = mission.budget
    t_flight = flight.duration
    return (b.elapsed + t_flight
            + b.homing_margin * (tth + flight.length / b.nominal_speed)
            >= b.total_endurance)


def _go_home(mission: MissionState, ctx: MissionContext, log: MissionLog,
             reason: str, t_wall_ms: float) -> None:
    """Fly home (replanning around surprises) and finish the mission."""
    _transition(mission, log, MissionMode.HOMING)
    for _ in range(_MAX_HOMING_REPLANS):
        try:
            path = plan_home(ctx.graph, mission.robot, ctx.grid, ctx.bbox, ctx.global_cfg,
                             mission.budget.nominal_speed,
                             mission.budget.nominal_speed * ctx.model.sample_dt)
        except NoHomePath:
            _finish(mission, ctx, log, "aborted", t_wall_ms)
            return
        flown, end, duration, truncated = _execute_path(ctx, path)
        log.executed.append(flown)
        mission.budget.elapsed += duration
        if end is not None:
            mission.robot = end.copy()
        ctx.graph = update_graph(ctx.graph, path, ctx.grid, ctx.bbox, ctx.global_cfg)
        if not truncated:
            _finish(mission, ctx, log, reason, t_wall_ms)
            return
    _finish(mission, ctx, log, "aborted", t_wall_ms)


def _finish(mission: MissionState, ctx: MissionContext, log: MissionLog,
            reason: str, t_wall_ms: float, tree_nodes: int = 0, gain: float = 0.0) -> None:
    _transition(mission, log, MissionMode.DONE)
    mission.done_reason = reason
    log.termination = reason
    _record(mission, ctx, log, tree_nodes, gain, t_wall_ms)


def _record(mission: MissionState, ctx: MissionContext, log: MissionLog,
            tree_nodes: int, gain: float, wall_ms: float) -> None:
    free, occ, unk = voxel_counts(ctx.grid)
    vol = ctx.grid.voxel_volume
    p = mission.robot.position
    log.rows.append(MetricsRow(
        mission.budget.elapsed, mission.mode.value, p[0], p[1], p[2],
        (free + occ) * vol, free, occ, unk, tree_nodes, gain,
        wall_ms if ctx.log_wall_times else 0.0))


def _recover_root(mission: MissionState, ctx: MissionContext, log: MissionLog,
                  t0: float) -> bool:
    """Stop-and-hover recovery when the robot's bbox is blocked on the map.

    Hovers for one primitive (rescanning the surroundings), then retries this
    one step with a half-size bbox; an unrecoverable root aborts the mission.
    The caller restores ctx.bbox after the step, so the halved box never
    outlives the recovery.  Returns True when the step may proceed.
    """
    if not boxes_blocked(ctx.grid, mission.robot.position[None, :], ctx.bbox,
                         unknown_is_obstacle=True)[0]:
        return True
    mission.recovery_used = True
    mission.robot.velocity = np.zeros(3)
    _scan_and_integrate(ctx, mission.robot)
    mission.budget.elapsed += ctx.model.primitive_duration
    log.executed.append(np.array([mission.robot.position]))
    if not boxes_blocked(ctx.grid, mission.robot.position[None, :], ctx.bbox,
                         unknown_is_obstacle=True)[0]:
        return True
    halved = ctx.bbox.halved()
    if boxes_blocked(ctx.grid, mission.robot.position[None, :], halved,
                     unknown_is_obstacle=True)[0]:
        _finish(mission, ctx, log, "aborted", (time.perf_counter() - t0) * 1e3)
        return False
    ctx.bbox = halved
    return True


def step(mission: MissionState, ctx: MissionContext, log: MissionLog) -> None:
    """One planner action; mutates mission, map, graph, and the log."""
    if mission.mode == MissionMode.DONE:
        raise RuntimeError("mission already finished")
    mission.iteration += 1
    t0 = time.perf_counter()

    full_bbox = ctx.bbox
    try:
        if not _recover_root(mission, ctx, log, t0):
            return

        try:
            tth = time_to_home(ctx.graph, mission.robot, ctx.grid, ctx.bbox,
                               ctx.global_cfg, mission.budget)
        except NoHomePath:
            _finish(mission, ctx, log, "aborted", (time.perf_counter() - t0) * 1e3)
            return

        if mission.mode == MissionMode.LOCAL_EXPLORATION:
            if _homing_due_local(mission, ctx, tth):
                _go_home(mission, ctx, log, "budget", (time.perf_counter() - t0) * 1e3)
                return
            _step_local(mission, ctx, log, t0)
        elif mission.mode == MissionMode.GLOBAL_REPOSITIONING:
            _step_global(mission, ctx, log, t0, tth)
        elif mission.mode == MissionMode.HOMING:
            _go_home(mission, ctx, log, "completed", (time.perf_counter() - t0) * 1e3)
    finally:
        ctx.bbox = full_bbox


def _step_local(mission: MissionState, ctx: MissionContext, log: MissionLog, t0: float) -> None:
    try:
        tree = build_tree(ctx.grid, mission.robot, ctx.model, ctx.sensor,
                          ctx.local_cfg, ctx.bbox)
    except StateInCollision:
        # The recovery preamble already vetted the root; anything left is fatal.
        _finish(mission, ctx, log, "aborted", (time.perf_counter() - t0) * 1e3)
        return

    if check_local_completion(tree, ctx.local_cfg):
        wall = (time.perf_counter() - t0) * 1e3
        _transition(mission, log, MissionMode.GLOBAL_REPOSITIONING)
        _record(mission, ctx, log, len(tree.nodes), tree.max_gain, wall)
        return

    bp = best_path(tree, ctx.local_cfg)
    chain = tree.path_to(bp.node_id)
    prims = [n.primitive for n in chain if n.primitive is not None]
    prims = prims[:ctx.local_cfg.execute_primitives]
    wall = (time.perf_counter() - t0) * 1e3

    if not prims:
        # Best node is the root: hover in place, scanning once.
        mission.hover_stalls += 1
        _scan_and_integrate(ctx, mission.robot)
        mission.budget.elapsed += ctx.model.primitive_duration
        log.executed.append(np.array([mission.robot.position]))
        if mission.hover_stalls >= _MAX_HOVER_STALLS:
            _transition(mission, log, MissionMode.GLOBAL_REPOSITIONING)
        _record(mission, ctx, log, len(tree.nodes), bp.gain, wall)
        return

    mission.hover_stalls = 0
    unknown_before = int(np.count_nonzero(ctx.grid.cells == 0))
    flown = [mission.robot.position[None, :]]
    for prim in prims:
        flown.append(prim.positions[1:])
        mission.robot = prim.terminal_state
        _scan_and_integrate(ctx, mission.robot)
        mission.budget.elapsed += prim.duration
    log.executed.append(np.concatenate(flown))
    executed_path = path_from_primitives(prims)
    ctx.graph = update_graph(ctx.graph, executed_path, ctx.grid, ctx.bbox, ctx.global_cfg)

    # Gain estimates can chase unmappable slivers; when local motion stops
    # producing map progress, hand over to the global layer.
    if int(np.count_nonzero(ctx.grid.cells == 0)) == unknown_before:
        mission.no_progress_steps += 1
        if mission.no_progress_steps >= _MAX_NO_PROGRESS:
            mission.no_progress_steps = 0
            _transition(mission, log, MissionMode.GLOBAL_REPOSITIONING)
    else:
        mission.no_progress_steps = 0
    _record(mission, ctx, log, len(tree.nodes), bp.gain, wall)


def _step_global(mission: MissionState, ctx: MissionContext, log: MissionLog,
                 t0: float, tth: float) -> None:
    frontiers = detect_frontiers(ctx.grid, ctx.graph, ctx.sensor, ctx.global_cfg, ctx.bbox)
    if check_global_completion(ctx.grid, frontiers, ctx.global_cfg):
        _go_home(mission, ctx, log, "completed", (time.perf_counter() - t0) * 1e3)
        return
    try:
        sigma_g, target = plan_to_frontier(
            ctx.graph, mission.robot, frontiers, ctx.grid, ctx.bbox, ctx.global_cfg,
            mission.budget.nominal_speed, mission.budget.nominal_speed * ctx.model.sample_dt)
    except NoReachableFrontier:
        _go_home(mission, ctx, log, "completed", (time.perf_counter() - t0) * 1e3)
        return

    if _homing_due_for_flight(mission, ctx, tth, sigma_g):
        _go_home(mission, ctx, log, "budget", (time.perf_counter() - t0) * 1e3)
        return

    wall = (time.perf_counter() - t0) * 1e3
    flown, end, duration, truncated = _execute_path(ctx, sigma_g)
    log.executed.append(flown)
    if end is not None:
        mission.robot = end.copy()
    if duration == 0.0:
        # Already standing at the target standoff: scan it out so the
        # frontier decays and simulated time always advances.
        _scan_and_integrate(ctx, mission.robot)
        duration = ctx.model.primitive_duration
    mission.budget.elapsed += duration
    ctx.graph = update_graph(ctx.graph, sigma_g, ctx.grid, ctx.bbox, ctx.global_cfg)
    if not truncated:
        _transition(mission, log, MissionMode.LOCAL_EXPLORATION)
    _record(mission, ctx, log, 0, target.gain, wall)


def _step_baseline(mission: MissionState, ctx: MissionContext, log: MissionLog,
                   planner, rng: np.random.Generator) -> None:
    """One iteration of a baseline planner under the same budget/homing rules."""
    mission.iteration += 1
    t0 = time.perf_counter()
    full_bbox = ctx.bbox
    try:
        if not _recover_root(mission, ctx, log, t0):
            return
        try:
            tth = time_to_home(ctx.graph, mission.robot, ctx.grid, ctx.bbox,
                               ctx.global_cfg, mission.budget)
        except NoHomePath:
            _finish(mission, ctx, log, "aborted", (time.perf_counter() - t0) * 1e3)
            return

        if getattr(planner, "exhausted", False):
            _go_home(mission, ctx, log, "completed", (time.perf_counter() - t0) * 1e3)
            return
        if _homing_due_local(mission, ctx, tth):
            _go_home(mission, ctx, log, "budget", (time.perf_counter() - t0) * 1e3)
            return

        path, info = planner.plan(ctx.grid, mission.robot, rng,
                                  mission.budget.nominal_speed,
                                  mission.budget.nominal_speed * ctx.model.sample_dt)
        nodes = int(info.get("tree_nodes", info.get("clusters", 0)))
        gain = float(info.get("best_gain", 0.0))
        wall = (time.perf_counter() - t0) * 1e3

        if path is None:
            if info.get("complete"):
                _go_home(mission, ctx, log, "completed", wall)
                return
            # Stall: hover for one primitive duration.
            _scan_and_integrate(ctx, mission.robot)
            mission.budget.elapsed += ctx.model.primitive_duration
            log.executed.append(np.array([mission.robot.position]))
            _record(mission, ctx, log, nodes, gain, wall)
            return

        if _homing_due_for_flight(mission, ctx, tth, path):
            _go_home(mission, ctx, log, "budget", wall)
            return
        flown, end, duration, truncated = _execute_path(ctx, path)
        log.executed.append(flown)
        if end is not None:
            mission.robot = end.copy()
        if duration == 0.0:
            # Zero-length plan: hover so simulated time always advances.
            _scan_and_integrate(ctx, mission.robot)
            duration = ctx.model.primitive_duration
        mission.budget.elapsed += duration
        ctx.graph = update_graph(ctx.graph, path, ctx.grid, ctx.bbox, ctx.global_cfg)
        if truncated and hasattr(planner, "note_failure") and "target" in info:
            planner.note_failure(info["target"])
        _record(mission, ctx, log, nodes, gain, wall)
    finally:
        ctx.bbox = full_bbox


def run_mission(env: GroundTruthEnv, ctx: MissionContext, mission: MissionState,
                planner=None, rng: np.random.Generator | None = None,
                max_iterations: int = 5000) -> MissionLog:
    """Drive a planner until Done; deterministic given inputs.

    planner=None runs the bifurcated local/global planner; otherwise any
    object with plan(grid, state, rng, speed, sample_ds) runs under the same
    budget, homing, and safety machinery.
    """
    log = MissionLog()
    _seed_takeoff_volume(ctx, mission.robot)
    _scan_and_integrate(ctx, mission.robot)
    while mission.mode != MissionMode.DONE:
        if mission.iteration >= max_iterations:
            mission.done_reason = "aborted"
            log.termination = "aborted"
            log.transitions.append((mission.iteration, mission.mode.value, MissionMode.DONE.value))
            mission.mode = MissionMode.DONE
            break
        if planner is None:
            step(mission, ctx, log)
        else:
            _step_baseline(mission, ctx, log, planner, rng)
    log.grid = ctx.grid
    log.graph = ctx.graph
    log.env = env
    return log
