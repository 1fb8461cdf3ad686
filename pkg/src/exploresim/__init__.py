"""Voxel-world exploration planning: a bifurcated local/global planner, a
depth-sensor simulator, and frontier/NBV baseline planners."""

from .voxel_map import (
    BoundingBox,
    OccupancyGrid,
    VoxelState,
    dump_voxmap,
    integrate_scan,
    is_path_collision_free,
    load_voxmap,
    new_map,
    raycast,
    voxel_counts,
)
from .sensor_sim import GroundTruthEnv, SensorConfig, simulate_scan, visible_unknown_voxels
from .motion_primitives import MotionModel, MotionPrimitive, Path, RobotState
from .local_planner import LocalPlannerConfig, best_path, build_tree, exploration_gain
from .global_planner import GlobalGraph, GlobalPlannerConfig, MissionBudget
from .mission_controller import MissionMode, MissionState, run_mission
from .harness import ScenarioConfig, generate_env, load_scenario, run_batch, run_scenario

__version__ = "0.1.0"
