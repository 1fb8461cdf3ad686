"""Procedural environments, scenario configs, and the seeded batch runner.

Scenario files are flat INI-style key-value text with one section per
subsystem.  Every run is fully determined by (scenario, seed): environment
generation, planning, and the metrics stream contain no implicit entropy.
"""

from __future__ import annotations

import math
import os
from dataclasses import dataclass, field
from configparser import ConfigParser

import numpy as np

from .baselines import FrontierBaselineConfig, FrontierPlanner, NbvPlanner, NbvpBaselineConfig
from .global_planner import GlobalGraph, GlobalPlannerConfig, MissionBudget
from .local_planner import LocalPlannerConfig
from .mission_controller import (
    MissionContext,
    MissionLog,
    MissionMode,
    MissionState,
    run_mission,
)
from .motion_primitives import MotionModel, RobotState
from .sensor_sim import GroundTruthEnv, SensorConfig
from .voxel_map import BoundingBox, OccupancyGrid, VoxelState, load_voxmap, new_map


class ConfigError(ValueError):
    pass


# ---------------------------------------------------------------------------
# environment generators
# ---------------------------------------------------------------------------


def _solid_grid(extent, resolution) -> OccupancyGrid:
    g = new_map((0.0, 0.0, 0.0), extent, resolution)
    g.cells[:] = VoxelState.OCCUPIED
    return g


def _carve(grid: OccupancyGrid, lo, hi) -> None:
    res = grid.resolution
    lo = np.asarray(lo, dtype=float)
    hi = np.asarray(hi, dtype=float)
    i0 = np.maximum(np.floor((lo - grid.origin) / res + 1e-9).astype(int), 0)
    i1 = np.minimum(np.ceil((hi - grid.origin) / res - 1e-9).astype(int), grid.dims)
    grid.cells[i0[0]:i1[0], i0[1]:i1[1], i0[2]:i1[2]] = VoxelState.FREE


def straight_tunnel(length: float, width: float, height: float, resolution: float,
                    roughness: float = 0.0, seed: int = 0) -> GroundTruthEnv:
    """Single straight tunnel along x with optional rough walls."""
    res = resolution
    m = 2 * res  # wall shell; two voxels so sampled gain beams cannot clip corners
    g = _solid_grid((length + 2 * m, width + 2 * m, height + 2 * m), res)
    _carve(g, (m, m, m), (m + length, m + width, m + height))

    if roughness > 0:
        rng = np.random.default_rng(seed)
        amp_vox = int(round(roughness / res))
        min_width_vox = int(math.ceil(width / res)) - 2 * amp_vox
        min_width_vox = max(min_width_vox, 5)
        y0 = int(round(m / res))
        y1 = y0 + int(math.ceil(width / res))
        for ix in range(int(round(m / res)), int(round((m + length) / res))):
            lo_off = int(rng.integers(0, amp_vox + 1))
            hi_off = int(rng.integers(0, amp_vox + 1))
            if (y1 - hi_off) - (y0 + lo_off) < min_width_vox:
                continue
            g.cells[ix, y0:y0 + lo_off, :] = VoxelState.OCCUPIED
            g.cells[ix, y1 - hi_off:y1, :] = VoxelState.OCCUPIED

    home = np.array([m + 1.0, m + width / 2, m + height / 2])
    return GroundTruthEnv(g, home, meta={"kind": "straight_tunnel", "length": length})


def branching_corridors(corridors: list[dict], resolution: float,
                        home_corridor: int = 0) -> GroundTruthEnv:
    """Axis-aligned corridor network carved from solid rock.

    Each corridor is {"start": (x, y), "end": (x, y), "width": w, "height": h}
    with the floor at z = 0.  Junctions emerge wherever carved boxes overlap.
    """
    if not corridors:
        raise ConfigError("need at least one corridor")
    res = resolution
    m = 2 * res
    boxes = []
    for c in corridors:
        a = np.asarray(c["start"], dtype=float)
        b = np.asarray(c["end"], dtype=float)
        if not (a[0] == b[0] or a[1] == b[1]):
            raise ConfigError(f"corridor {c} is not axis-aligned")
        w = float(c["width"])
        h = float(c["height"])
        lo2 = np.minimum(a, b) - w / 2
        hi2 = np.maximum(a, b) + w / 2
        boxes.append((np.array([lo2[0], lo2[1], 0.0]), np.array([hi2[0], hi2[1], h])))

    all_lo = np.min([b[0] for b in boxes], axis=0)
    all_hi = np.max([b[1] for b in boxes], axis=0)
    shift = m - all_lo
    g = _solid_grid(tuple(all_hi - all_lo + 2 * m), res)
    for lo, hi in boxes:
        _carve(g, lo + shift, hi + shift)

    c0 = corridors[home_corridor]
    a = np.asarray(c0["start"], dtype=float)
    b = np.asarray(c0["end"], dtype=float)
    d = b - a
    n = np.linalg.norm(d)
    inset = a + (d / n) * min(max(1.0, c0["width"] / 2), n / 2) if n > 0 else a
    home = np.array([inset[0] + shift[0], inset[1] + shift[1], c0["height"] / 2 + shift[2]])
    return GroundTruthEnv(g, home, meta={"kind": "branching_corridors", "shift": shift})


def room_and_pillar(cols: int, rows: int, corridor_width: float, pillar: float,
                    height: float, resolution: float, entry_depth: float = 0.0,
                    passage_width: float | None = None, cols_right: int = 0,
                    corridor_width_right: float | None = None) -> GroundTruthEnv:
    """Pillar field(s) behind an optional entry room and narrow passage.

    The field is a free rectangle with a cols x rows lattice of square
    pillars; corridors between pillars have the given width.  When
    entry_depth > 0, a spacious entry room precedes the field and connects to
    it only through a passage of passage_width in a dividing wall; the wall's
    x-center is exposed in meta["passage_x"] so tests can detect crossings.
    cols_right > 0 appends a second field with its own (typically narrower)
    corridor width, giving a spacious-left / constrained-right split.
    """
    res = resolution
    m = 2 * res

    def field_dims(ncols, width):
        pitch = pillar + width
        return ncols * pitch + width, rows * pitch + width, pitch

    len_l, wid_l, pitch_l = field_dims(cols, corridor_width)
    len_r = wid_r = pitch_r = 0.0
    w_right = corridor_width_right if corridor_width_right is not None else corridor_width
    if cols_right > 0:
        len_r, wid_r, pitch_r = field_dims(cols_right, w_right)

    wall_t = 2 * res if entry_depth > 0 else 0.0
    field_wid = max(wid_l, wid_r)
    total_len = entry_depth + wall_t + len_l + len_r

    g = _solid_grid((total_len + 2 * m, field_wid + 2 * m, height + 2 * m), res)
    meta = {"kind": "room_and_pillar"}

    if entry_depth > 0:
        _carve(g, (m, m, m), (m + entry_depth, m + field_wid, m + height))
        pw = passage_width if passage_width is not None else corridor_width
        yc = m + field_wid / 2
        _carve(g, (m + entry_depth, yc - pw / 2, m),
               (m + entry_depth + wall_t, yc + pw / 2, m + height))
        meta["passage_x"] = m + entry_depth + wall_t / 2
        meta["passage_width"] = pw

    def carve_field(fx, ncols, width, field_len, field_w, pitch):
        fy = m + (field_wid - field_w) / 2  # centered in y
        _carve(g, (fx, fy, m), (fx + field_len, fy + field_w, m + height))
        for i in range(ncols):
            for j in range(rows):
                lo = np.asarray((fx + width + i * pitch, fy + width + j * pitch, m))
                hi = lo + np.asarray((pillar, pillar, height))
                i0 = np.floor((lo - g.origin) / res + 1e-9).astype(int)
                i1 = np.ceil((hi - g.origin) / res - 1e-9).astype(int)
                g.cells[i0[0]:i1[0], i0[1]:i1[1], i0[2]:i1[2]] = VoxelState.OCCUPIED

    fx = m + entry_depth + wall_t
    carve_field(fx, cols, corridor_width, len_l, wid_l, pitch_l)
    if cols_right > 0:
        carve_field(fx + len_l, cols_right, w_right, len_r, wid_r, pitch_r)
        meta["split_x"] = fx + len_l

    if entry_depth > 0:
        home = np.array([m + min(1.0, entry_depth / 2), m + field_wid / 2, m + height / 2])
    else:
        home = np.array([fx + corridor_width / 2,
                         m + (field_wid - wid_l) / 2 + corridor_width / 2,
                         m + height / 2])
    return GroundTruthEnv(g, home, meta=meta)


def multi_level(floor_length: float, floor_width: float, floor_height: float,
                resolution: float, floors: int = 2, opening: float = 2.0,
                opening_pos: tuple[float, float] | None = None,
                ramp_slope: float = 0.6) -> GroundTruthEnv:
    """Stacked floors connected by stairwell ramps through slab openings.

    Each transition is an inclined free channel of width `opening` rising at
    ramp_slope from one floor onto the next, so a wedge-FoV sensor can
    observe the ascent path (the volume straight above a sealed ceiling hole
    would be unobservable).  opening_pos places the ramp's lower end (x) and
    its center line (y).
    """
    res = resolution
    m = 2 * res
    slab = 2 * res
    total_h = floors * floor_height + (floors - 1) * slab
    g = _solid_grid((floor_length + 2 * m, floor_width + 2 * m, total_h + 2 * m), res)

    floor_z = []
    z = m
    for k in range(floors):
        _carve(g, (m, m, z), (m + floor_length, m + floor_width, z + floor_height))
        floor_z.append((z, z + floor_height))
        z += floor_height + slab

    rise = floor_height + slab
    run = rise / ramp_slope
    if opening_pos is None:
        opening_pos = (floor_length - run - 1.0, floor_width * 0.5)
    ox, oy = m + opening_pos[0], m + opening_pos[1]
    ramp_info = []
    for k in range(floors - 1):
        z_base = floor_z[k][0]
        # Carve the inclined channel one voxel column at a time; headroom is
        # one floor height so the channel never pinches.
        x = ox
        while x < ox + run:
            frac = (x - ox) / run
            z_lo = z_base + frac * rise
            _carve(g, (x, oy - opening / 2, z_lo),
                   (min(x + res, ox + run), oy + opening / 2,
                    min(z_lo + floor_height, total_h + m)))
            x += res
        ramp_info.append((ox, ox + run, oy, opening))

    home = np.array([m + 1.5, m + floor_width / 2, m + floor_height / 2])
    meta = {"kind": "multi_level", "floor_z": floor_z,
            "ramp": ramp_info, "opening": (ox, oy, opening)}
    return GroundTruthEnv(g, home, meta=meta)


_GENERATORS = {
    "straight_tunnel": straight_tunnel,
    "branching_corridors": branching_corridors,
    "room_and_pillar": room_and_pillar,
    "multi_level": multi_level,
}


def generate_env(spec: dict, seed: int) -> GroundTruthEnv:
    """Dispatch to a named generator; deterministic given (spec, seed)."""
    spec = dict(spec)
    name = spec.pop("generator", None)
    if name == "straight_tunnel":
        return straight_tunnel(spec["length"], spec["width"], spec["height"],
                               spec["resolution"], spec.get("roughness", 0.0), seed)
    if name == "branching_corridors":
        return branching_corridors(spec["corridors"], spec["resolution"],
                                   spec.get("home_corridor", 0))
    if name == "room_and_pillar":
        return room_and_pillar(spec["cols"], spec["rows"], spec["corridor_width"],
                               spec["pillar"], spec["height"], spec["resolution"],
                               spec.get("entry_depth", 0.0), spec.get("passage_width"),
                               spec.get("cols_right", 0), spec.get("corridor_width_right"))
    if name == "multi_level":
        return multi_level(spec["floor_length"], spec["floor_width"], spec["floor_height"],
                           spec["resolution"], spec.get("floors", 2),
                           spec.get("opening", 2.0), spec.get("opening_pos"))
    raise ConfigError(f"unknown environment generator {name!r}")


# ---------------------------------------------------------------------------
# scenario configuration
# ---------------------------------------------------------------------------


@dataclass
class ScenarioConfig:
    env_spec: dict
    resolution: float
    sensor: SensorConfig
    model: MotionModel
    local_cfg: LocalPlannerConfig
    global_cfg: GlobalPlannerConfig
    budget: MissionBudget
    bbox: BoundingBox
    planner: str = "mb"
    seed: int = 0
    max_iterations: int = 5000
    frontier_cfg: FrontierBaselineConfig = field(default_factory=FrontierBaselineConfig)
    nbvp_cfg: NbvpBaselineConfig = field(default_factory=NbvpBaselineConfig)


def _floats(s: str) -> list[float]:
    return [float(x) for x in s.split()]


def _parse_corridors(raw: str) -> list[dict]:
    """corridor lines: x0 y0 x1 y1 width height, separated by ';' or newlines."""
    out = []
    for chunk in raw.replace("\n", ";").split(";"):
        chunk = chunk.strip()
        if not chunk:
            continue
        v = _floats(chunk)
        if len(v) != 6:
            raise ConfigError(f"corridor needs 6 numbers, got {chunk!r}")
        out.append({"start": (v[0], v[1]), "end": (v[2], v[3]), "width": v[4], "height": v[5]})
    return out


def load_scenario(path) -> ScenarioConfig:
    cp = ConfigParser()
    read = cp.read(path)
    if not read:
        raise ConfigError(f"cannot read scenario file {path}")
    try:
        return _scenario_from_parser(cp, os.path.dirname(str(path)))
    except (KeyError, ValueError) as exc:
        raise ConfigError(f"bad scenario {path}: {exc}") from exc


def _scenario_from_parser(cp: ConfigParser, base_dir: str) -> ScenarioConfig:
    if "map" not in cp or "resolution" not in cp["map"]:
        raise ConfigError("missing [map] resolution")
    resolution = cp.getfloat("map", "resolution")

    env = cp["environment"] if "environment" in cp else {}
    env_spec: dict = {"resolution": resolution}
    if "voxmap" in env:
        env_spec["voxmap"] = os.path.join(base_dir, env["voxmap"]) if base_dir else env["voxmap"]
        if "home" in env:
            env_spec["home"] = _floats(env["home"])
    else:
        env_spec["generator"] = env.get("generator", "straight_tunnel")
        for key in ("length", "width", "height", "roughness", "entry_depth",
                    "passage_width", "corridor_width", "corridor_width_right",
                    "pillar", "floor_length", "floor_width", "floor_height",
                    "opening"):
            if key in env:
                env_spec[key] = float(env[key])
        for key in ("cols", "rows", "cols_right", "floors", "home_corridor"):
            if key in env:
                env_spec[key] = int(env[key])
        if "corridors" in env:
            env_spec["corridors"] = _parse_corridors(env["corridors"])
        if "opening_pos" in env:
            env_spec["opening_pos"] = tuple(_floats(env["opening_pos"]))

    s = cp["sensor"] if "sensor" in cp else {}
    sensor = SensorConfig(
        fov_horizontal=float(s.get("fov_horizontal", 360.0)),
        fov_vertical=float(s.get("fov_vertical", 30.0)),
        d_max=float(s.get("d_max", 50.0)),
        map_update_range=float(s.get("map_update_range", s.get("d_max", 50.0))),
        rays_horizontal=int(s.get("rays_horizontal", 180)),
        rays_vertical=int(s.get("rays_vertical", 9)),
    )

    mo = cp["motion"] if "motion" in cp else {}
    model = MotionModel(
        v_max=float(mo.get("v_max", 2.0)),
        a_max=float(mo.get("a_max", 2.0)),
        yaw_rate_max=float(mo.get("yaw_rate_max", 1.5)),
        primitive_duration=float(mo.get("primitive_duration", 2.0)),
        sample_dt=float(mo.get("sample_dt", 0.1)),
        vz_max=float(mo.get("vz_max", 1.0)),
        yaw_fan=float(mo.get("yaw_fan", math.pi / 2)),
        n_headings=int(mo.get("n_headings", 9)),
        n_speeds=int(mo.get("n_speeds", 2)),
        n_vertical=int(mo.get("n_vertical", 3)),
    )

    lo = cp["local"] if "local" in cp else {}
    gain_rays = lo.get("gain_rays", "auto")
    if gain_rays != "auto" and gain_rays != "exact":
        parts = gain_rays.split()
        if len(parts) == 2:
            gain_rays = (int(parts[0]), int(parts[1]))
        else:
            raise ConfigError(f"gain_rays must be 'auto' or 'nh nv', got {gain_rays!r}")
    local_cfg = LocalPlannerConfig(
        window_dims=np.array(_floats(lo.get("window_dims", "40 40 8"))),
        tree_depth=int(lo.get("tree_depth", 4)),
        max_nodes=int(lo.get("max_nodes", 120)),
        gain_discount=float(lo.get("gain_discount", 0.98)),
        path_length_weight=float(lo.get("path_length_weight", 0.05)),
        completion_threshold=float(lo.get("completion_threshold", 0.5)),
        gain_mode=lo.get("gain_mode", "beams"),
        gain_rays=gain_rays,
        execute_primitives=int(lo.get("execute_primitives", 1)),
    )

    gl = cp["global"] if "global" in cp else {}
    global_cfg = GlobalPlannerConfig(
        vertex_spacing=float(gl.get("vertex_spacing", 2.0)),
        connect_radius=float(gl.get("connect_radius", 5.0)),
        frontier_sigma_d=float(gl.get("frontier_sigma_d", 50.0)),
        gain_threshold=float(gl.get("gain_threshold", lo.get("completion_threshold", 0.5))),
        connect_tries=int(gl.get("connect_tries", 8)),
        gain_mode=gl.get("gain_mode", local_cfg.gain_mode),
        gain_rays=local_cfg.gain_rays,
    )

    mi = cp["mission"] if "mission" in cp else {}
    if "seed" not in mi:
        raise ConfigError("missing [mission] seed (runs must be explicitly seeded)")
    budget = MissionBudget(
        total_endurance=float(mi.get("total_endurance", 900.0)),
        homing_margin=float(mi.get("homing_margin", 1.3)),
        nominal_speed=float(mi.get("nominal_speed", 2.0)),
    )
    bbox = BoundingBox(np.array(_floats(mi.get("bbox", "0.6 0.6 0.6"))) / 2.0)
    planner = mi.get("planner", "mb")
    if planner not in ("mb", "frontier", "nbvp"):
        raise ConfigError(f"unknown planner {planner!r}")

    fr = cp["baseline_frontier"] if "baseline_frontier" in cp else {}
    frontier_cfg = FrontierBaselineConfig(
        min_cluster_volume=float(fr.get("min_cluster_volume",
                                        local_cfg.completion_threshold)),
        max_retries=int(fr.get("max_retries", 3)),
        blacklist_radius=float(fr.get("blacklist_radius", 1.0)),
    )
    nb = cp["baseline_nbvp"] if "baseline_nbvp" in cp else {}
    nbvp_cfg = NbvpBaselineConfig(
        node_budget=int(nb.get("node_budget", 120)),
        edge_length_cap=float(nb.get("edge_length_cap", 4.0)),
        gain_discount=float(nb.get("gain_discount", local_cfg.gain_discount)),
        gain_threshold=float(nb.get("gain_threshold", local_cfg.completion_threshold)),
        stall_limit=int(nb.get("stall_limit", 5)),
        gain_rays=local_cfg.gain_rays,
    )

    return ScenarioConfig(
        env_spec=env_spec, resolution=resolution, sensor=sensor, model=model,
        local_cfg=local_cfg, global_cfg=global_cfg, budget=budget, bbox=bbox,
        planner=planner, seed=int(mi["seed"]),
        max_iterations=int(mi.get("max_iterations", 5000)),
        frontier_cfg=frontier_cfg, nbvp_cfg=nbvp_cfg)


def build_env(scenario: ScenarioConfig, seed: int) -> GroundTruthEnv:
    spec = scenario.env_spec
    if "voxmap" in spec:
        grid = load_voxmap(spec["voxmap"])
        home = spec.get("home")
        if home is None:
            meta_path = spec["voxmap"] + ".meta"
            if os.path.exists(meta_path):
                with open(meta_path) as fh:
                    for line in fh:
                        if line.startswith("home="):
                            home = _floats(line.split("=", 1)[1])
        if home is None:
            raise ConfigError("voxmap environment needs a home position")
        return GroundTruthEnv(grid, np.asarray(home, dtype=float))
    return generate_env(spec, seed)


def run_scenario(scenario: ScenarioConfig, seed: int | None = None,
                 log_wall_times: bool = False) -> MissionLog:
    """One seeded mission for the configured planner.

    Planning collision checks run with the robot bbox inflated by a quarter
    voxel: checks sample paths every half voxel, and positions between
    samples drift at most a quarter voxel, so the inflated checks clear the
    whole swept tube, not just the sampled poses.
    """
    seed = scenario.seed if seed is None else seed
    env = build_env(scenario, seed)
    grid = new_map(env.grid.origin, env.grid.upper, env.grid.resolution)
    graph = GlobalGraph(env.home)
    plan_bbox = BoundingBox(scenario.bbox.half_extents + scenario.resolution / 4)
    ctx = MissionContext(env=env, grid=grid, graph=graph, sensor=scenario.sensor,
                         model=scenario.model, local_cfg=scenario.local_cfg,
                         global_cfg=scenario.global_cfg, bbox=plan_bbox,
                         log_wall_times=log_wall_times)
    budget = MissionBudget(scenario.budget.total_endurance, 0.0,
                           scenario.budget.homing_margin, scenario.budget.nominal_speed)
    mission = MissionState(MissionMode.LOCAL_EXPLORATION,
                           RobotState.at_rest(env.home), budget)
    rng = np.random.default_rng(seed)
    if scenario.planner == "mb":
        planner = None
    elif scenario.planner == "frontier":
        planner = FrontierPlanner(scenario.frontier_cfg, plan_bbox)
    else:
        planner = NbvPlanner(scenario.nbvp_cfg, plan_bbox, scenario.sensor)
    return run_mission(env, ctx, mission, planner=planner, rng=rng,
                       max_iterations=scenario.max_iterations)


# ---------------------------------------------------------------------------
# batch running and aggregation
# ---------------------------------------------------------------------------


@dataclass
class BatchResult:
    seeds: list[int]
    finals: list[float]            # final explored m^3 per run
    terminations: list[str]
    times: np.ndarray              # common time grid
    mean: np.ndarray
    low: np.ndarray
    high: np.ndarray

    def summary_text(self) -> str:
        lines = ["runs=%d" % len(self.seeds)]
        for seed, vol, term in zip(self.seeds, self.finals, self.terminations):
            lines.append("run_seed_%d_explored_m3=%.6f" % (seed, vol))
            lines.append("run_seed_%d_termination=%s" % (seed, term))
        lines.append("final_mean_m3=%.6f" % (sum(self.finals) / len(self.finals)))
        lines.append("final_min_m3=%.6f" % min(self.finals))
        lines.append("final_max_m3=%.6f" % max(self.finals))
        lines.append("aborted_runs=%d" % sum(1 for t in self.terminations if t == "aborted"))
        return "\n".join(lines) + "\n"

    def envelope_csv(self) -> str:
        lines = ["t_s,mean_m3,min_m3,max_m3"]
        for t, m, lo, hi in zip(self.times, self.mean, self.low, self.high):
            lines.append("%.3f,%.6f,%.6f,%.6f" % (t, m, lo, hi))
        return "\n".join(lines) + "\n"


def explored_series(log: MissionLog) -> tuple[np.ndarray, np.ndarray]:
    ts = np.array([r.t_s for r in log.rows])
    vols = np.array([r.explored_m3 for r in log.rows])
    return ts, vols


def aggregate(logs: list[MissionLog], seeds: list[int], t_end: float,
              t_step: float = 5.0) -> BatchResult:
    times = np.arange(0.0, t_end + t_step / 2, t_step)
    series = []
    for log in logs:
        ts, vols = explored_series(log)
        if ts.size == 0:
            series.append(np.zeros_like(times))
            continue
        idx = np.searchsorted(ts, times, side="right") - 1
        # Step-hold: before the first row the volume reads 0, afterwards the
        # latest recorded value (the final value persists past mission end).
        vals = np.where(idx >= 0, vols[np.clip(idx, 0, len(vols) - 1)], 0.0)
        series.append(vals)
    stack = np.stack(series)
    finals = [log.rows[-1].explored_m3 if log.rows else 0.0 for log in logs]
    return BatchResult(
        seeds=seeds,
        finals=finals,
        terminations=[log.termination for log in logs],
        times=times,
        mean=stack.mean(axis=0),
        low=stack.min(axis=0),
        high=stack.max(axis=0),
    )


def run_batch(scenario: ScenarioConfig, n_runs: int,
              log_wall_times: bool = False) -> tuple[list[MissionLog], BatchResult]:
    """Seeds seed..seed+n_runs-1; aborted runs are kept and flagged."""
    if n_runs < 1:
        raise ConfigError("n_runs must be >= 1")
    seeds = [scenario.seed + k for k in range(n_runs)]
    logs = [run_scenario(scenario, seed=s, log_wall_times=log_wall_times) for s in seeds]
    result = aggregate(logs, seeds, scenario.budget.total_endurance)
    return logs, result
