"""End-to-end CLI: run, batch, gen-env, exit codes, dumps, determinism."""

import os
import subprocess
import sys
import textwrap

import pytest

from exploresim.cli import main
from exploresim.voxel_map import load_voxmap

SCENARIO = textwrap.dedent("""\
    [environment]
    generator = straight_tunnel
    length = 15
    width = 4
    height = 3

    [map]
    resolution = 0.25

    [sensor]
    fov_vertical = 50
    d_max = 7
    map_update_range = 7
    rays_horizontal = 180
    rays_vertical = 21

    [motion]
    v_max = 1.0
    a_max = 1.5
    primitive_duration = 1.5
    sample_dt = 0.1
    vz_max = 0.4
    n_headings = 7
    n_speeds = 1
    n_vertical = 3

    [local]
    window_dims = 10 10 4
    tree_depth = 3
    max_nodes = 40
    completion_threshold = 0.25
    gain_rays = 96 9

    [global]
    vertex_spacing = 1.5
    connect_radius = 4.0

    [mission]
    planner = mb
    seed = 2
    total_endurance = 40
    nominal_speed = 1.0
    bbox = 0.5 0.5 0.5
    """)


@pytest.fixture()
def scenario_file(tmp_path):
    p = tmp_path / "scenario.cfg"
    p.write_text(SCENARIO)
    return str(p)


def test_run_writes_outputs_and_exit_zero(scenario_file, tmp_path):
    out = str(tmp_path / "out")
    rc = main(["run", "--config", scenario_file, "--out", out,
               "--dump-map", "--dump-graph"])
    assert rc == 0
    metrics = open(os.path.join(out, "metrics.csv")).read()
    assert metrics.startswith("t_s,mode,x,y,z,explored_m3,free_voxels,"
                              "occupied_voxels,unknown_voxels,tree_nodes,"
                              "best_gain,plan_wall_ms")
    assert "# termination=" in metrics
    summary = open(os.path.join(out, "summary.txt")).read()
    assert "termination=" in summary and "explored_m3=" in summary
    grid = load_voxmap(os.path.join(out, "map.voxmap"))
    assert grid.total_voxels > 0
    graph_text = open(os.path.join(out, "graph.txt")).read()
    assert graph_text.startswith("v 0 ")
    assert "\ne " in graph_text


def test_run_byte_identical_metrics(scenario_file, tmp_path):
    out1, out2 = str(tmp_path / "a"), str(tmp_path / "b")
    assert main(["run", "--config", scenario_file, "--out", out1]) == 0
    assert main(["run", "--config", scenario_file, "--out", out2]) == 0
    b1 = open(os.path.join(out1, "metrics.csv"), "rb").read()
    b2 = open(os.path.join(out2, "metrics.csv"), "rb").read()
    assert b1 == b2


def test_run_planner_and_seed_overrides(scenario_file, tmp_path):
    out = str(tmp_path / "nbvp_out")
    rc = main(["run", "--config", scenario_file, "--planner", "nbvp",
               "--seed", "9", "--out", out])
    assert rc == 0
    assert os.path.exists(os.path.join(out, "metrics.csv"))


def test_batch_outputs(scenario_file, tmp_path):
    out = str(tmp_path / "batch")
    rc = main(["batch", "--config", scenario_file, "--runs", "2", "--out", out])
    assert rc == 0
    assert os.path.exists(os.path.join(out, "run_2", "metrics.csv"))
    assert os.path.exists(os.path.join(out, "run_3", "metrics.csv"))
    summary = open(os.path.join(out, "summary.txt")).read()
    assert "runs=2" in summary
    envelope = open(os.path.join(out, "envelope.csv")).read()
    assert envelope.startswith("t_s,mean_m3,min_m3,max_m3")


def test_batch_byte_identical_summaries(scenario_file, tmp_path):
    outs = []
    for name in ("b1", "b2"):
        out = str(tmp_path / name)
        assert main(["batch", "--config", scenario_file, "--runs", "2", "--out", out]) == 0
        outs.append(open(os.path.join(out, "summary.txt"), "rb").read())
    assert outs[0] == outs[1]


def test_gen_env_roundtrip(scenario_file, tmp_path):
    out = str(tmp_path / "env.voxmap")
    rc = main(["gen-env", "--spec", scenario_file, "--out", out])
    assert rc == 0
    grid = load_voxmap(out)
    assert grid.resolution == 0.25
    meta = open(out + ".meta").read()
    assert meta.startswith("home=")


def test_config_error_exit_code(tmp_path):
    bad = tmp_path / "bad.cfg"
    bad.write_text("[map]\nresolution = 0.25\n[mission]\nplanner = warp\nseed = 1\n")
    rc = main(["run", "--config", str(bad), "--out", str(tmp_path / "x")])
    assert rc == 1
    rc = main(["run", "--config", str(tmp_path / "missing.cfg"), "--out", str(tmp_path / "y")])
    assert rc == 1


def test_console_script_invocation(scenario_file, tmp_path):
    out = str(tmp_path / "proc_out")
    proc = subprocess.run(
        [sys.executable, "-m", "exploresim.cli", "run", "--config", scenario_file,
         "--out", out],
        capture_output=True, text=True)
    assert proc.returncode == 0, proc.stderr
    assert "termination=" in proc.stdout
