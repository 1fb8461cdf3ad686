"""Frontier-chasing and NBV baselines under the shared mission loop."""

import numpy as np

from exploresim.baselines import (
    FrontierBaselineConfig,
    FrontierPlanner,
    NbvPlanner,
    NbvpBaselineConfig,
    grid_shortest_path,
    _navigable_mask,
)
from exploresim.global_planner import GlobalPlannerConfig, MissionBudget
from exploresim.harness import ScenarioConfig, run_scenario
from exploresim.local_planner import LocalPlannerConfig
from exploresim.motion_primitives import MotionModel, RobotState
from exploresim.sensor_sim import SensorConfig
from exploresim.voxel_map import BoundingBox, VoxelState, boxes_blocked, new_map

BBOX = BoundingBox.cube(0.5)


def tunnel_scenario(planner, seed=0, budget=90.0):
    return ScenarioConfig(
        env_spec={"generator": "straight_tunnel", "length": 25.0, "width": 4.0,
                  "height": 3.0, "resolution": 0.25},
        resolution=0.25,
        sensor=SensorConfig(d_max=7.0, map_update_range=7.0, fov_vertical=50,
                            rays_horizontal=180, rays_vertical=21),
        model=MotionModel(v_max=1.0, a_max=1.5, primitive_duration=1.5, sample_dt=0.1,
                          vz_max=0.4, n_headings=7, n_speeds=1, n_vertical=3),
        local_cfg=LocalPlannerConfig(window_dims=np.array([10.0, 10.0, 4.0]),
                                     tree_depth=3, max_nodes=40,
                                     completion_threshold=0.25,
                                     gain_mode="beams", gain_rays=(96, 9)),
        global_cfg=GlobalPlannerConfig(vertex_spacing=1.5, connect_radius=4.0,
                                       gain_threshold=0.25),
        budget=MissionBudget(total_endurance=budget, nominal_speed=1.0),
        bbox=BoundingBox.cube(0.5),
        planner=planner, seed=seed,
    )


def half_mapped_tunnel(res=0.25):
    g = new_map((0, 0, 0), (20, 4, 3), res)
    g.cells[:] = VoxelState.UNKNOWN
    half = g.dims[0] // 2
    g.cells[1:half, 1:-1, 1:-1] = VoxelState.FREE
    g.cells[0:2, :, :] = VoxelState.OCCUPIED
    g.cells[:half, 0:2, :] = VoxelState.OCCUPIED
    g.cells[:half, -2:, :] = VoxelState.OCCUPIED
    g.cells[:half, :, 0:2] = VoxelState.OCCUPIED
    g.cells[:half, :, -2:] = VoxelState.OCCUPIED
    # Re-carve the free interior over the wall carves.
    g.cells[2:half, 2:-2, 2:-2] = VoxelState.FREE
    return g


# ---------------------------------------------------------------------------
# grid A* oracle
# ---------------------------------------------------------------------------


def bfs_oracle(nav, start, goal):
    from collections import deque

    if not nav[start] or not nav[goal]:
        return None
    dist = {start: 0}
    q = deque([start])
    dims = nav.shape
    while q:
        cur = q.popleft()
        if cur == goal:
            return dist[cur]
        x, y, z = cur
        for nxt in ((x - 1, y, z), (x + 1, y, z), (x, y - 1, z),
                    (x, y + 1, z), (x, y, z - 1), (x, y, z + 1)):
            if (0 <= nxt[0] < dims[0] and 0 <= nxt[1] < dims[1] and 0 <= nxt[2] < dims[2]
                    and nav[nxt] and nxt not in dist):
                dist[nxt] = dist[cur] + 1
                q.append(nxt)
    return None


def test_grid_path_matches_bfs_oracle():
    rng = np.random.default_rng(3)
    for _ in range(10):
        nav = rng.random((12, 12, 4)) > 0.25
        cells = np.argwhere(nav)
        start = tuple(cells[rng.integers(len(cells))])
        goal = tuple(cells[rng.integers(len(cells))])
        chain = grid_shortest_path(nav, start, goal)
        want = bfs_oracle(nav, start, goal)
        if want is None:
            assert chain is None
        else:
            assert chain is not None
            assert len(chain) - 1 == want
            for a, b in zip(chain[:-1], chain[1:]):
                assert sum(abs(i - j) for i, j in zip(a, b)) == 1


def test_navigable_mask_requires_bbox_fit():
    g = new_map((0, 0, 0), (4, 2, 2), 0.25)
    g.cells[:] = VoxelState.FREE
    g.cells[:, 0, :] = VoxelState.OCCUPIED
    nav = _navigable_mask(g, BoundingBox.cube(0.5))
    # Cells right next to the wall cannot host the bbox center.
    assert not nav[:, 1, :].any()
    assert nav[8, 4, 4]


# ---------------------------------------------------------------------------
# frontier baseline
# ---------------------------------------------------------------------------


def test_frontier_planner_marches_to_interface():
    g = half_mapped_tunnel()
    planner = FrontierPlanner(FrontierBaselineConfig(min_cluster_volume=0.25), BBOX)
    state = RobotState.at_rest([2.0, 2.0, 1.5])
    rng = np.random.default_rng(0)
    path, info = planner.plan(g, state, rng, 1.0, 0.25)
    assert path is not None
    assert info["clusters"] >= 1
    # Path heads toward the mapped/unknown interface at x ~ 10 m.
    assert path.positions[-1][0] > 7.0


def test_frontier_planner_reports_completion_when_mapped():
    g = half_mapped_tunnel()
    g.cells[g.cells == VoxelState.UNKNOWN] = VoxelState.OCCUPIED
    planner = FrontierPlanner(FrontierBaselineConfig(), BBOX)
    state = RobotState.at_rest([2.0, 2.0, 1.5])
    path, info = planner.plan(g, state, np.random.default_rng(0), 1.0, 0.25)
    assert path is None
    assert info.get("complete")


def test_frontier_blacklist_after_retries():
    g = half_mapped_tunnel()
    # Unreachable pocket: unknown sliver behind the wall, its frontier cell
    # walled off from the robot by a full barrier.
    g.cells[30:, :, :] = VoxelState.OCCUPIED  # far half solid
    g.cells[34:36, 6:10, 4:8] = VoxelState.UNKNOWN
    g.cells[33, 6:10, 4:8] = VoxelState.FREE  # frontier cells inside the rock
    cfg = FrontierBaselineConfig(min_cluster_volume=0.2, max_retries=2)
    planner = FrontierPlanner(cfg, BBOX)
    state = RobotState.at_rest([2.0, 2.0, 1.5])
    rng = np.random.default_rng(0)
    seen_none = 0
    for _ in range(6):
        path, info = planner.plan(g, state, rng, 1.0, 0.25)
        if path is None:
            seen_none += 1
            break
    assert seen_none == 1  # blacklisting converges to "complete"
    assert planner.failures


def test_frontier_mission_runs_and_homes():
    log = run_scenario(tunnel_scenario("frontier", budget=60.0))
    assert log.termination in ("budget", "completed")
    assert np.linalg.norm(log.executed_positions[-1] - log.env.home) < 0.5
    # Ground-truth safety for the baseline too.
    blocked = boxes_blocked(log.env.grid, log.executed_positions,
                            BoundingBox.cube(0.5), unknown_is_obstacle=False)
    assert not blocked.any()


# ---------------------------------------------------------------------------
# NBV baseline
# ---------------------------------------------------------------------------


def test_nbvp_grows_tree_and_moves():
    g = half_mapped_tunnel()
    cfg = NbvpBaselineConfig(node_budget=80, edge_length_cap=3.0)
    sensor = SensorConfig(d_max=6.0, map_update_range=6.0, fov_vertical=40)
    planner = NbvPlanner(cfg, BBOX, sensor)
    state = RobotState.at_rest([2.0, 2.0, 1.5])
    path, info = planner.plan(g, state, np.random.default_rng(1), 1.0, 0.25)
    assert info["tree_nodes"] > 1
    assert path is not None
    assert info["best_gain"] > 0
    # Executes one edge only.
    assert path.length <= cfg.edge_length_cap + 1e-6


def test_nbvp_deterministic_given_seed():
    g = half_mapped_tunnel()
    cfg = NbvpBaselineConfig(node_budget=60)
    sensor = SensorConfig(d_max=6.0, map_update_range=6.0, fov_vertical=40)
    state = RobotState.at_rest([2.0, 2.0, 1.5])
    p1, i1 = NbvPlanner(cfg, BBOX, sensor).plan(g, state, np.random.default_rng(7), 1.0, 0.25)
    p2, i2 = NbvPlanner(cfg, BBOX, sensor).plan(g, state, np.random.default_rng(7), 1.0, 0.25)
    assert i1["tree_nodes"] == i2["tree_nodes"]
    assert i1["best_gain"] == i2["best_gain"]
    assert np.array_equal(p1.positions, p2.positions)


def test_nbvp_stalls_when_boxed_in():
    g = new_map((0, 0, 0), (4, 4, 2), 0.25)
    g.cells[:] = VoxelState.OCCUPIED
    g.cells[6:10, 6:10, 3:6] = VoxelState.FREE
    cfg = NbvpBaselineConfig(node_budget=40, stall_limit=2)
    sensor = SensorConfig(d_max=3.0, map_update_range=3.0)
    planner = NbvPlanner(cfg, BBOX, sensor)
    state = RobotState.at_rest([2.0, 2.0, 1.1])
    rng = np.random.default_rng(2)
    for _ in range(2):
        path, info = planner.plan(g, state, rng, 1.0, 0.25)
        assert path is None
    assert planner.exhausted


def test_nbvp_mission_runs_and_homes():
    log = run_scenario(tunnel_scenario("nbvp", budget=60.0))
    assert log.termination in ("budget", "completed")
    assert np.linalg.norm(log.executed_positions[-1] - log.env.home) < 0.5
    blocked = boxes_blocked(log.env.grid, log.executed_positions,
                            BoundingBox.cube(0.5), unknown_is_obstacle=False)
    assert not blocked.any()


def test_mission_interface_parity_all_three_planners():
    finals = {}
    for planner in ("mb", "frontier", "nbvp"):
        log = run_scenario(tunnel_scenario(planner, budget=45.0))
        assert log.rows, planner
        assert log.termination in ("budget", "completed")
        finals[planner] = log.rows[-1].explored_m3
    assert all(v > 0 for v in finals.values())
