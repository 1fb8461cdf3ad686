"""Grid construction, scan integration, ray traversal, and collision checks."""

import io

import numpy as np
import pytest

from exploresim.voxel_map import (
    BoundingBox,
    MapError,
    VoxelState,
    boxes_blocked,
    dump_voxmap,
    integrate_scan,
    is_path_collision_free,
    load_voxmap,
    new_map,
    raycast,
    traversed_voxels,
    voxel_counts,
)
from exploresim.sensor_sim import Scan


def make_scan(dirs, ranges, hits):
    return Scan(np.atleast_2d(np.asarray(dirs, dtype=float)),
                np.atleast_1d(np.asarray(ranges, dtype=float)),
                np.atleast_1d(np.asarray(hits, dtype=bool)))


# ---------------------------------------------------------------------------
# construction
# ---------------------------------------------------------------------------


def test_new_map_trivial_counts():
    g = new_map((0, 0, 0), (2, 2, 2), 1.0)
    assert g.dims == (2, 2, 2)
    assert g.total_voxels == 8
    assert np.all(g.cells == VoxelState.UNKNOWN)
    assert voxel_counts(g) == (0, 0, 8)


def test_new_map_local_window_dims():
    g = new_map((0, 0, 0), (40, 40, 8), 0.4)
    assert g.dims == (100, 100, 20)
    assert g.total_voxels == 200_000


def test_new_map_ceiling_per_axis():
    # ceil(1 / 0.3) = 4
    g = new_map((0, 0, 0), (1, 1, 1), 0.3)
    assert g.dims == (4, 4, 4)


def test_new_map_rejects_bad_args():
    with pytest.raises(MapError):
        new_map((0, 0, 0), (1, 1, 1), 0.0)
    with pytest.raises(MapError):
        new_map((0, 0, 0), (1, 0, 1), 0.5)
    with pytest.raises(MapError):
        new_map((1, 0, 0), (0, 1, 1), 0.5)


def test_world_voxel_roundtrip():
    rng = np.random.default_rng(3)
    g = new_map((-2, 1, 0), (5, 4, 2.5), 0.3)
    for _ in range(200):
        idx = np.array([rng.integers(0, d) for d in g.dims])
        center = g.voxel_center(idx)
        assert np.array_equal(g.world_to_voxel(center), idx)
        jitter = center + (rng.random(3) - 0.5) * 0.29
        assert np.array_equal(g.world_to_voxel(jitter), idx)


def test_flat_index_roundtrip_is_x_fastest():
    g = new_map((0, 0, 0), (3, 4, 5), 1.0)
    idx = np.array([[1, 2, 3], [0, 0, 0], [2, 3, 4]])
    flat = g.flat_index(idx)
    assert flat.tolist() == [1 + 3 * (2 + 4 * 3), 0, 2 + 3 * (3 + 4 * 4)]
    assert np.array_equal(g.unflatten(flat), idx)


# ---------------------------------------------------------------------------
# integrate_scan
# ---------------------------------------------------------------------------


def test_integrate_single_beam_no_hit():
    g = new_map((0, 0, 0), (10, 3, 3), 1.0)
    origin = np.array([0.5, 1.5, 1.5])
    scan = make_scan([[1, 0, 0]], [2.5], [False])
    integrate_scan(g, origin, scan, 100.0)
    free, occ, unk = voxel_counts(g)
    assert (free, occ) == (3, 0)
    for ix in range(3):
        assert g.cells[ix, 1, 1] == VoxelState.FREE


def test_integrate_beam_with_hit():
    g = new_map((0, 0, 0), (10, 3, 3), 1.0)
    origin = np.array([0.5, 1.5, 1.5])
    scan = make_scan([[1, 0, 0]], [2.5], [True])
    integrate_scan(g, origin, scan, 10.0)
    assert g.cells[0, 1, 1] == VoxelState.FREE
    assert g.cells[1, 1, 1] == VoxelState.FREE
    assert g.cells[2, 1, 1] == VoxelState.OCCUPIED
    assert voxel_counts(g)[:2] == (2, 1)


def test_integrate_respects_update_range():
    g = new_map((0, 0, 0), (70, 1, 1), 1.0)
    origin = np.array([0.5, 0.5, 0.5])
    scan = make_scan([[1, 0, 0]], [60.0], [True])
    integrate_scan(g, origin, scan, 50.0)
    free, occ, unk = voxel_counts(g)
    assert occ == 0
    # Free marks reach exactly the voxels entered before 50 m.
    assert free == 51  # voxels 0..50 (entry at 49.5 < 50)
    assert g.cells[50, 0, 0] == VoxelState.FREE
    assert g.cells[51, 0, 0] == VoxelState.UNKNOWN


def test_integrate_occupied_wins_within_scan():
    g = new_map((0, 0, 0), (5, 5, 1), 1.0)
    origin = np.array([0.5, 2.5, 0.5])
    # Beam A ends (hit) in the voxel that beam B passes through cleanly.
    scan = make_scan([[1, 0, 0], [1, 0, 0]], [2.2, 4.4], [True, False])
    integrate_scan(g, origin, scan, 10.0)
    assert g.cells[2, 2, 0] == VoxelState.OCCUPIED


def test_integrate_pose_outside_bounds_raises():
    g = new_map((0, 0, 0), (5, 5, 5), 1.0)
    scan = make_scan([[1, 0, 0]], [1.0], [False])
    with pytest.raises(MapError):
        integrate_scan(g, np.array([-1.0, 0.5, 0.5]), scan, 10.0)


def test_integrate_clips_beams_leaving_bounds():
    g = new_map((0, 0, 0), (4, 4, 4), 1.0)
    origin = np.array([3.5, 3.5, 3.5])
    scan = make_scan([[1, 0, 0]], [10.0], [True])
    integrate_scan(g, origin, scan, 20.0)
    # Only the origin voxel is inside; the hit endpoint is out of the map.
    assert voxel_counts(g) == (1, 0, 63)


def test_later_scan_can_flip_occupied_to_free():
    g = new_map((0, 0, 0), (6, 1, 1), 1.0)
    origin = np.array([0.5, 0.5, 0.5])
    integrate_scan(g, origin, make_scan([[1, 0, 0]], [2.2], [True]), 10.0)
    assert g.cells[2, 0, 0] == VoxelState.OCCUPIED
    # A later clean pass through the voxel demotes it.
    integrate_scan(g, origin, make_scan([[1, 0, 0]], [4.4], [False]), 10.0)
    assert g.cells[2, 0, 0] == VoxelState.FREE


def test_unknown_monotone_and_conservation_random_sequences():
    rng = np.random.default_rng(42)
    for trial in range(30):
        g = new_map((0, 0, 0), (8, 8, 4), 0.5)
        total = g.total_voxels
        prev_unknown = total
        for _ in range(10):
            pos = np.array([rng.uniform(0.3, 3.7), rng.uniform(0.3, 3.7), rng.uniform(0.3, 1.7)])
            n = rng.integers(1, 30)
            dirs = rng.normal(size=(n, 3))
            dirs /= np.linalg.norm(dirs, axis=1)[:, None]
            ranges = rng.uniform(0.1, 6.0, size=n)
            hits = rng.random(n) < 0.5
            integrate_scan(g, pos, Scan(dirs, ranges, hits), rng.uniform(0.5, 6.0))
            free, occ, unk = voxel_counts(g)
            assert free + occ + unk == total
            assert unk <= prev_unknown
            prev_unknown = unk


# ---------------------------------------------------------------------------
# raycast / traversal
# ---------------------------------------------------------------------------


def segment_voxel_oracle(grid, origin, direction, max_range):
    """Brute force: every voxel whose box the segment crosses with positive chord."""
    out = set()
    o = np.asarray(origin, dtype=float)
    d = np.asarray(direction, dtype=float)
    for ix in range(grid.dims[0]):
        for iy in range(grid.dims[1]):
            for iz in range(grid.dims[2]):
                lo = grid.origin + np.array([ix, iy, iz]) * grid.resolution
                hi = lo + grid.resolution
                t0, t1 = 0.0, max_range
                ok = True
                for ax in range(3):
                    if abs(d[ax]) < 1e-15:
                        if not (lo[ax] <= o[ax] < hi[ax]):
                            ok = False
                            break
                    else:
                        ta = (lo[ax] - o[ax]) / d[ax]
                        tb = (hi[ax] - o[ax]) / d[ax]
                        if ta > tb:
                            ta, tb = tb, ta
                        t0 = max(t0, ta)
                        t1 = min(t1, tb)
                if ok and t0 < t1:
                    out.add((ix, iy, iz))
    return out


def test_raycast_all_free_returns_none():
    g = new_map((0, 0, 0), (10, 3, 3), 1.0)
    g.cells[:] = VoxelState.FREE
    assert raycast(g, [0.5, 1.5, 1.5], [1, 0, 0], 5.0) is None


def test_raycast_hits_wall():
    g = new_map((0, 0, 0), (10, 3, 3), 1.0)
    g.cells[:] = VoxelState.FREE
    g.cells[7, :, :] = VoxelState.OCCUPIED
    hit = raycast(g, [0.5, 1.5, 1.5], [1, 0, 0], 20.0)
    assert hit.index == (7, 1, 1)
    assert hit.state == VoxelState.OCCUPIED
    assert hit.distance == pytest.approx(6.5)


def test_raycast_first_non_free_is_unknown():
    g = new_map((0, 0, 0), (10, 1, 1), 1.0)
    g.cells[:4, 0, 0] = VoxelState.FREE
    hit = raycast(g, [0.5, 0.5, 0.5], [1, 0, 0], 20.0)
    assert hit.index == (4, 0, 0)
    assert hit.state == VoxelState.UNKNOWN


def test_raycast_origin_outside_raises():
    g = new_map((0, 0, 0), (4, 4, 4), 1.0)
    with pytest.raises(MapError):
        raycast(g, [5.0, 1.0, 1.0], [1, 0, 0], 2.0)
    with pytest.raises(MapError):
        raycast(g, [1.0, 1.0, 1.0], [1, 1, 0], 2.0)  # not unit length


def test_traversal_matches_brute_force_oracle():
    rng = np.random.default_rng(7)
    g = new_map((0, 0, 0), (10, 10, 10), 1.0)
    for _ in range(300):
        origin = rng.uniform(0.05, 9.95, size=3)
        d = rng.normal(size=3)
        d /= np.linalg.norm(d)
        max_range = rng.uniform(0.5, 25.0)
        got = set(traversed_voxels(g, origin, d, max_range))
        want = segment_voxel_oracle(g, origin, d, max_range)
        assert got == want


def test_traversal_visits_in_order_without_repeats():
    rng = np.random.default_rng(11)
    g = new_map((0, 0, 0), (12, 12, 12), 0.5)
    for _ in range(100):
        origin = rng.uniform(0.1, 5.9, size=3)
        d = rng.normal(size=3)
        d /= np.linalg.norm(d)
        seq = traversed_voxels(g, origin, d, 10.0)
        assert len(seq) == len(set(seq))
        # Consecutive voxels differ by exactly one axis step.
        for a, b in zip(seq[:-1], seq[1:]):
            diff = np.abs(np.array(a) - np.array(b))
            assert diff.sum() == 1


# ---------------------------------------------------------------------------
# collision checking
# ---------------------------------------------------------------------------


def corridor_map(width_m, res=0.2):
    """Free corridor of the given width along x, walls elsewhere; 10 m long, 2 m tall."""
    g = new_map((0, -2, 0), (10, 2, 2), res)
    g.cells[:] = VoxelState.OCCUPIED
    half = width_m / 2
    y0 = int(round((-half - g.origin[1]) / res))
    y1 = int(round((half - g.origin[1]) / res))
    g.cells[:, y0:y1, :] = VoxelState.FREE
    return g


def test_collision_free_straight_corridor():
    g = corridor_map(1.0)
    bbox = BoundingBox.cube(0.6)
    path = np.array([[0.5, 0.0, 1.0], [9.5, 0.0, 1.0]])
    assert is_path_collision_free(g, path, bbox, unknown_is_obstacle=True)


def test_collision_narrow_corridor_blocks():
    g = corridor_map(0.4)
    bbox = BoundingBox.cube(0.6)
    path = np.array([[0.5, 0.0, 1.0], [9.5, 0.0, 1.0]])
    assert not is_path_collision_free(g, path, bbox, unknown_is_obstacle=True)


def test_collision_near_occupied_voxel():
    g = new_map((0, 0, 0), (10, 10, 2), 0.2)
    g.cells[:] = VoxelState.FREE
    g.cells[25, 25, :] = VoxelState.OCCUPIED  # voxel at x=[5,5.2), y=[5,5.2)
    bbox = BoundingBox.cube(0.6)
    grazing = np.array([[1.0, 5.3, 1.0], [9.0, 5.3, 1.0]])  # within 0.3 of the voxel
    assert not is_path_collision_free(g, grazing, bbox, unknown_is_obstacle=True)
    clear = np.array([[1.0, 6.0, 1.0], [9.0, 6.0, 1.0]])
    assert is_path_collision_free(g, clear, bbox, unknown_is_obstacle=True)


def test_collision_unknown_flag():
    g = new_map((0, 0, 0), (10, 4, 2), 0.2)
    g.cells[:, :, :] = VoxelState.FREE
    g.cells[20:30, :, :] = VoxelState.UNKNOWN
    bbox = BoundingBox.cube(0.4)
    path = np.array([[1.0, 2.0, 1.0], [9.0, 2.0, 1.0]])
    assert not is_path_collision_free(g, path, bbox, unknown_is_obstacle=True)
    assert is_path_collision_free(g, path, bbox, unknown_is_obstacle=False)


def test_collision_out_of_bounds_counts():
    g = new_map((0, 0, 0), (10, 10, 10), 0.5)
    g.cells[:] = VoxelState.FREE
    bbox = BoundingBox.cube(0.6)
    assert not is_path_collision_free(g, np.array([[0.1, 5.0, 5.0]]), bbox)
    assert is_path_collision_free(g, np.array([[5.0, 5.0, 5.0]]), bbox)


def test_collision_soundness_exhaustive_recheck():
    rng = np.random.default_rng(9)
    bbox = BoundingBox(np.array([0.3, 0.3, 0.25]))
    for _ in range(20):
        g = new_map((0, 0, 0), (6, 6, 3), 0.25)
        cells = rng.choice([VoxelState.FREE, VoxelState.OCCUPIED, VoxelState.UNKNOWN],
                           p=[0.85, 0.1, 0.05], size=g.dims).astype(np.uint8)
        g.cells[:] = cells
        a = rng.uniform(0.5, 5.5, size=3) * np.array([1, 1, 0.5])
        b = rng.uniform(0.5, 5.5, size=3) * np.array([1, 1, 0.5])
        path = np.stack([a, b])
        if not is_path_collision_free(g, path, bbox, unknown_is_obstacle=True):
            continue
        # Exhaustive recheck at fine spacing: no sampled box overlaps non-Free.
        ts = np.linspace(0, 1, 200)
        samples = a + ts[:, None] * (b - a)
        assert not boxes_blocked(g, samples, bbox, unknown_is_obstacle=True).any()


# ---------------------------------------------------------------------------
# counts and dump format
# ---------------------------------------------------------------------------


def test_counts_match_exhaustive_recount():
    rng = np.random.default_rng(5)
    g = new_map((0, 0, 0), (7, 5, 3), 0.5)
    g.cells[:] = rng.choice([0, 1, 2], size=g.dims).astype(np.uint8)
    free, occ, unk = voxel_counts(g)
    assert free == sum(1 for v in g.cells.reshape(-1) if v == VoxelState.FREE)
    assert occ == sum(1 for v in g.cells.reshape(-1) if v == VoxelState.OCCUPIED)
    assert unk == sum(1 for v in g.cells.reshape(-1) if v == VoxelState.UNKNOWN)
    assert free + occ + unk == g.total_voxels


def test_voxmap_roundtrip():
    rng = np.random.default_rng(13)
    g = new_map((-1.5, 0, 2), (2.5, 3, 4.4), 0.4)
    g.cells[:] = rng.choice([0, 1, 2], size=g.dims).astype(np.uint8)
    buf = io.BytesIO()
    dump_voxmap(g, buf)
    buf.seek(0)
    g2 = load_voxmap(buf)
    assert g2.dims == g.dims
    assert g2.resolution == g.resolution
    assert np.allclose(g2.origin, g.origin)
    assert np.array_equal(g2.cells, g.cells)


def test_voxmap_header_and_x_fastest_payload():
    g = new_map((0, 0, 0), (2, 2, 1), 1.0)
    g.cells[1, 0, 0] = VoxelState.FREE
    g.cells[0, 1, 0] = VoxelState.OCCUPIED
    buf = io.BytesIO()
    dump_voxmap(g, buf)
    raw = buf.getvalue()
    header, payload = raw.split(b"\n", 1)
    assert header.startswith(b"VOXMAP v1 2 2 1")
    assert payload == bytes([0, 1, 2, 0])
