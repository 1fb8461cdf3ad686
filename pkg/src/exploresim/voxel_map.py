"""Three-state 3D occupancy grid: scan integration, ray casting, collision queries.

The grid holds one byte per voxel (0=Unknown, 1=Free, 2=Occupied) in an
(nx, ny, nz) array indexed by voxel coordinates.  All distances are meters,
all directions are unit vectors in the world frame.
"""

from __future__ import annotations

from dataclasses import dataclass
from enum import IntEnum

import numpy as np


class VoxelState(IntEnum):
    UNKNOWN = 0
    FREE = 1
    OCCUPIED = 2


# Epsilon (meters, in voxel units after division by resolution) used to make
# boundary-exact box/voxel overlap tests deterministic against float fuzz.
_BOUNDARY_EPS = 1e-9


class MapError(ValueError):
    """Bad map construction or query parameters."""


@dataclass
class BoundingBox:
    """Axis-aligned robot bounding box given as half-extents per axis."""

    half_extents: np.ndarray

    def __post_init__(self):
        self.half_extents = np.asarray(self.half_extents, dtype=float)
        if self.half_extents.shape != (3,) or not np.all(self.half_extents > 0):
            raise MapError(f"half extents must be 3 positive numbers, got {self.half_extents}")

    @classmethod
    def cube(cls, side: float) -> "BoundingBox":
        return cls(np.full(3, side / 2.0))

    def halved(self) -> "BoundingBox":
        return BoundingBox(self.half_extents / 2.0)


@dataclass
class OccupancyGrid:
    origin: np.ndarray          # world coords of the (0,0,0) voxel corner
    resolution: float           # voxel edge length (m)
    dims: tuple[int, int, int]  # voxel counts per axis
    cells: np.ndarray           # uint8, shape dims, values are VoxelState

    def __post_init__(self):
        self.origin = np.asarray(self.origin, dtype=float)

    # -- coordinate conversions ------------------------------------------

    def world_to_voxel(self, point) -> np.ndarray:
        """Voxel index containing a world point (no bounds check)."""
        return np.floor((np.asarray(point, dtype=float) - self.origin) / self.resolution).astype(np.int64)

    def voxel_center(self, index) -> np.ndarray:
        return self.origin + (np.asarray(index, dtype=float) + 0.5) * self.resolution

    def voxel_centers(self, indices: np.ndarray) -> np.ndarray:
        """Centers for an (N, 3) array of voxel indices."""
        return self.origin + (indices.astype(float) + 0.5) * self.resolution

    def contains_point(self, point) -> bool:
        p = np.asarray(point, dtype=float)
        upper = self.origin + np.asarray(self.dims) * self.resolution
        return bool(np.all(p >= self.origin) and np.all(p < upper))

    def in_bounds(self, index) -> bool:
        i = np.asarray(index)
        return bool(np.all(i >= 0) and np.all(i < np.asarray(self.dims)))

    @property
    def upper(self) -> np.ndarray:
        return self.origin + np.asarray(self.dims) * self.resolution

    @property
    def voxel_volume(self) -> float:
        return self.resolution ** 3

    @property
    def total_voxels(self) -> int:
        return int(np.prod(self.dims))

    # -- flat index convention: x-fastest, flat = ix + nx*(iy + ny*iz) ----

    def flat_index(self, indices: np.ndarray) -> np.ndarray:
        """Flat (x-fastest) indices for an (N, 3) or (3,) index array."""
        idx = np.asarray(indices, dtype=np.int64)
        nx, ny, _ = self.dims
        return idx[..., 0] + nx * (idx[..., 1] + ny * idx[..., 2])

    def unflatten(self, flat: np.ndarray) -> np.ndarray:
        nx, ny, _ = self.dims
        f = np.asarray(flat, dtype=np.int64)
        ix = f % nx
        iy = (f // nx) % ny
        iz = f // (nx * ny)
        return np.stack([ix, iy, iz], axis=-1)

    def states_at_flat(self, flat: np.ndarray) -> np.ndarray:
        idx = self.unflatten(flat)
        return self.cells[idx[..., 0], idx[..., 1], idx[..., 2]]

    def copy(self) -> "OccupancyGrid":
        return OccupancyGrid(self.origin.copy(), self.resolution, self.dims, self.cells.copy())


def new_map(bounds_min, bounds_max, resolution: float) -> OccupancyGrid:
    """All-Unknown grid covering the metric box, dims rounded up per axis."""
    lo = np.asarray(bounds_min, dtype=float)
    hi = np.asarray(bounds_max, dtype=float)
    if resolution <= 0:
        raise MapError(f"resolution must be positive, got {resolution}")
    extent = hi - lo
    if np.any(extent <= 0):
        raise MapError(f"degenerate bounds: min {lo}, max {hi}")
    dims = tuple(int(n) for n in np.ceil(extent / resolution - _BOUNDARY_EPS))
    cells = np.zeros(dims, dtype=np.uint8)
    return OccupancyGrid(lo, float(resolution), dims, cells)


def voxel_counts(grid: OccupancyGrid) -> tuple[int, int, int]:
    """(free, occupied, unknown) voxel counts."""
    counts = np.bincount(grid.cells.reshape(-1), minlength=3)
    return int(counts[VoxelState.FREE]), int(counts[VoxelState.OCCUPIED]), int(counts[VoxelState.UNKNOWN])


# ---------------------------------------------------------------------------
# Ray traversal (Amanatides-Woo 3D DDA)
# ---------------------------------------------------------------------------


def _dda_setup(grid: OccupancyGrid, origin: np.ndarray, dirs: np.ndarray):
    """Initial voxel, per-axis step, boundary distances and increments.

    dirs is (N, 3) of unit vectors; returns arrays shaped (N, 3).  t values
    are world-frame distances along each ray.
    """
    res = grid.resolution
    local = (origin - grid.origin) / res
    vox = np.floor(local).astype(np.int64)
    vox = np.broadcast_to(vox, dirs.shape).copy()

    step = np.where(dirs > 0, 1, np.where(dirs < 0, -1, 0)).astype(np.int64)
    with np.errstate(divide="ignore", invalid="ignore"):
        next_bound = np.where(step > 0, vox + 1.0, vox.astype(float))
        t_max = (next_bound - local) * res / dirs
        t_delta = res / np.abs(dirs)
    t_max[step == 0] = np.inf
    t_delta[step == 0] = np.inf
    return vox, step, t_max, t_delta


def traversed_voxels(grid: OccupancyGrid, origin, direction, max_range: float) -> list[tuple[int, int, int]]:
    """Voxels intersected by the segment origin + t*direction, t in [0, max_range].

    Visits each voxel exactly once, in traversal order, starting with the
    voxel containing the origin.  Stops at the map boundary.
    """
    origin = np.asarray(origin, dtype=float)
    direction = np.asarray(direction, dtype=float)
    if not grid.contains_point(origin):
        raise MapError(f"ray origin {origin} outside map bounds")
    if abs(np.linalg.norm(direction) - 1.0) > 1e-9:
        raise MapError(f"direction must be a unit vector, got norm {np.linalg.norm(direction)}")

    vox, step, t_max, t_delta = _dda_setup(grid, origin, direction[None, :])
    vox, step, t_max, t_delta = vox[0], step[0], t_max[0], t_delta[0]
    dims = grid.dims
    out: list[tuple[int, int, int]] = []
    while True:
        out.append((int(vox[0]), int(vox[1]), int(vox[2])))
        axis = int(np.argmin(t_max))
        if t_max[axis] >= max_range:
            break
        vox[axis] += step[axis]
        if vox[axis] < 0 or vox[axis] >= dims[axis]:
            break
        t_max[axis] += t_delta[axis]
    return out


@dataclass
class RayHit:
    index: tuple[int, int, int]
    state: VoxelState
    distance: float  # distance to the voxel's entry face (0 for the origin voxel)


def raycast(grid: OccupancyGrid, origin, direction, max_range: float) -> RayHit | None:
    """First non-Free voxel along the ray, or None if all Free within range."""
    origin = np.asarray(origin, dtype=float)
    direction = np.asarray(direction, dtype=float)
    if not grid.contains_point(origin):
        raise MapError(f"ray origin {origin} outside map bounds")
    if abs(np.linalg.norm(direction) - 1.0) > 1e-9:
        raise MapError(f"direction must be a unit vector, got norm {np.linalg.norm(direction)}")

    vox, step, t_max, t_delta = _dda_setup(grid, origin, direction[None, :])
    vox, step, t_max, t_delta = vox[0], step[0], t_max[0], t_delta[0]
    dims = grid.dims
    t_enter = 0.0
    while True:
        state = VoxelState(grid.cells[vox[0], vox[1], vox[2]])
        if state != VoxelState.FREE:
            return RayHit((int(vox[0]), int(vox[1]), int(vox[2])), state, t_enter)
        axis = int(np.argmin(t_max))
        if t_max[axis] >= max_range:
            return None
        t_enter = float(t_max[axis])
        vox[axis] += step[axis]
        if vox[axis] < 0 or vox[axis] >= dims[axis]:
            return None
        t_max[axis] += t_delta[axis]


def march_first_hit(grid: OccupancyGrid, origin: np.ndarray, dirs: np.ndarray,
                    max_range: float, stop_mask: np.ndarray):
    """Batched DDA from one origin: first voxel whose state is flagged in stop_mask.

    stop_mask is a boolean lookup over VoxelState values (length 3).
    Returns (hit, t_enter, t_exit, hit_vox) where hit marks rays that reached
    a stopping voxel within max_range; for those, t_enter/t_exit bracket the
    chord through the stopping voxel and hit_vox is its (N, 3) index.

    Degenerate corner grazes (chord shorter than a thousandth of a voxel) do
    not count as hits: the march continues, so reported hit points always lie
    strictly inside the struck voxel.  Beam lattices fired from quantized
    robot poses do produce exact corner crossings, and a boundary-exact hit
    point would be attributed to the neighbouring free voxel downstream.
    """
    n = dirs.shape[0]
    vox, step, t_max, t_delta = _dda_setup(grid, origin, dirs)
    dims = np.asarray(grid.dims)
    cells = grid.cells
    min_chord = grid.resolution * 1e-3

    hit = np.zeros(n, dtype=bool)
    t_enter_out = np.zeros(n)
    t_exit_out = np.zeros(n)
    hit_vox = np.zeros((n, 3), dtype=np.int64)

    active = np.arange(n)
    t_enter = np.zeros(n)
    while active.size:
        v = vox[active]
        states = cells[v[:, 0], v[:, 1], v[:, 2]]
        t_exit = np.minimum(np.min(t_max[active], axis=1), max_range)
        stopped = stop_mask[states] & (t_exit - t_enter[active] > min_chord)
        if np.any(stopped):
            rows = active[stopped]
            hit[rows] = True
            t_enter_out[rows] = t_enter[rows]
            t_exit_out[rows] = t_exit[stopped]
            hit_vox[rows] = vox[rows]
            active = active[~stopped]
            if active.size == 0:
                break
        axis = np.argmin(t_max[active], axis=1)
        t_next = t_max[active, axis]
        alive = t_next < max_range
        active = active[alive]
        if active.size == 0:
            break
        axis = axis[alive]
        t_enter[active] = t_next[alive]
        vox[active, axis] += step[active, axis]
        moved = vox[active, axis]
        inside = (moved >= 0) & (moved < dims[axis])
        t_max[active, axis] += t_delta[active, axis]
        active = active[inside]
    return hit, t_enter_out, t_exit_out, hit_vox


def march_mark(grid: OccupancyGrid, origin: np.ndarray, dirs: np.ndarray, t_end: np.ndarray):
    """Batched DDA collecting every voxel with entry distance < t_end per ray.

    Returns (visited_flat, last_flat, reached) where visited_flat is the
    concatenation of flat indices over all rays (duplicates possible across
    rays), last_flat[i] is the final voxel visited by ray i (-1 if none), and
    reached[i] says whether the ray's endpoint lies inside that voxel (False
    when the ray was clipped at the map boundary first).

    Voxels the ray merely grazes (chord below a ten-thousandth of a voxel,
    i.e. exact corner crossings) are not collected: a zero-length pass
    observes nothing and must not mark map state.
    """
    n = dirs.shape[0]
    vox, step, t_max, t_delta = _dda_setup(grid, origin, dirs)
    dims = np.asarray(grid.dims)
    nx, ny, _ = grid.dims
    min_chord = grid.resolution * 1e-4

    chunks: list[np.ndarray] = []
    last_flat = np.full(n, -1, dtype=np.int64)
    reached = np.zeros(n, dtype=bool)
    active = np.arange(n)[t_end > 0]
    t_enter = np.zeros(n)
    while active.size:
        v = vox[active]
        exit_ = np.minimum(np.min(t_max[active], axis=1), t_end[active])
        solid = exit_ - t_enter[active] > min_chord
        if np.any(solid):
            rows = active[solid]
            flat = v[solid, 0] + nx * (v[solid, 1] + ny * v[solid, 2])
            chunks.append(flat)
            last_flat[rows] = flat
        axis = np.argmin(t_max[active], axis=1)
        t_next = t_max[active, axis]
        alive = t_next < t_end[active]
        reached[active[~alive]] = True
        active = active[alive]
        if active.size == 0:
            break
        axis = axis[alive]
        t_enter[active] = t_next[alive]
        vox[active, axis] += step[active, axis]
        moved = vox[active, axis]
        inside = (moved >= 0) & (moved < dims[axis])
        t_max[active, axis] += t_delta[active, axis]
        active = active[inside]
    visited = np.concatenate(chunks) if chunks else np.zeros(0, dtype=np.int64)
    return visited, last_flat, reached




def march_to_targets(grid: OccupancyGrid, origin: np.ndarray, targets: np.ndarray) -> np.ndarray:
    """Line-of-sight test from one origin to many target voxels.

    targets is (N, 3) voxel indices.  A target is visible when the ray from
    the origin to the target's center reaches the target without entering an
    Occupied voxel first.  Unknown voxels do not occlude.  Returns an (N,)
    bool mask.
    """
    n = targets.shape[0]
    if n == 0:
        return np.zeros(0, dtype=bool)
    centers = grid.voxel_centers(targets)
    delta = centers - origin
    dist = np.linalg.norm(delta, axis=1)
    dirs = np.zeros_like(delta)
    nz = dist > 0
    dirs[nz] = delta[nz] / dist[nz, None]

    visible = np.zeros(n, dtype=bool)
    # Degenerate rays: origin inside the target voxel.
    own_vox = grid.world_to_voxel(origin)
    at_origin = np.all(targets == own_vox, axis=1)
    visible[at_origin] = True

    vox, step, t_max, t_delta = _dda_setup(grid, origin, dirs)
    dims = np.asarray(grid.dims)
    cells = grid.cells
    limit = dist + 2.0 * grid.resolution  # safety net; target test fires first

    active = np.arange(n)[~at_origin]
    while active.size:
        v = vox[active]
        arrived = np.all(v == targets[active], axis=1)
        if np.any(arrived):
            visible[active[arrived]] = True
            active = active[~arrived]
            if active.size == 0:
                break
            v = vox[active]
        states = cells[v[:, 0], v[:, 1], v[:, 2]]
        active = active[states != VoxelState.OCCUPIED]
        if active.size == 0:
            break
        axis = np.argmin(t_max[active], axis=1)
        t_next = t_max[active, axis]
        alive = t_next < limit[active]
        active = active[alive]
        if active.size == 0:
            break
        axis = axis[alive]
        vox[active, axis] += step[active, axis]
        moved = vox[active, axis]
        inside = (moved >= 0) & (moved < dims[axis])
        t_max[active, axis] += t_delta[active, axis]
        active = active[inside]
    return visible


# ---------------------------------------------------------------------------
# Scan integration
# ---------------------------------------------------------------------------


def integrate_scan(grid: OccupancyGrid, origin, scan, map_update_range: float) -> OccupancyGrid:
    """Fold one scan into the map (in place); returns the grid.

    Voxels traversed by each beam out to min(measured range, update range)
    become Free; the voxel containing a hit endpoint within the update range
    becomes Occupied.  Occupied marks win over Free marks from other beams of
    the same scan.  Beams leaving the map are clipped silently.
    """
    origin = np.asarray(origin, dtype=float)
    if not grid.contains_point(origin):
        raise MapError(f"sensor position {origin} outside map bounds")
    if map_update_range <= 0:
        raise MapError(f"map_update_range must be positive, got {map_update_range}")

    dirs = np.asarray(scan.directions, dtype=float)
    ranges = np.asarray(scan.ranges, dtype=float)
    hits = np.asarray(scan.hits, dtype=bool)
    if dirs.shape[0] == 0:
        return grid

    t_end = np.minimum(ranges, map_update_range)
    visited, last_flat, reached = march_mark(grid, origin, dirs, t_end)
    occ_rows = hits & (ranges <= map_update_range) & reached
    occ_flat = np.unique(last_flat[occ_rows])
    free_flat = np.unique(visited)
    free_flat = np.setdiff1d(free_flat, occ_flat, assume_unique=True)

    fi = grid.unflatten(free_flat)
    grid.cells[fi[:, 0], fi[:, 1], fi[:, 2]] = VoxelState.FREE
    oi = grid.unflatten(occ_flat)
    grid.cells[oi[:, 0], oi[:, 1], oi[:, 2]] = VoxelState.OCCUPIED
    return grid


# ---------------------------------------------------------------------------
# Collision checking
# ---------------------------------------------------------------------------


def _densify(positions: np.ndarray, spacing: float) -> np.ndarray:
    """Insert samples so consecutive points are at most `spacing` apart.

    Every segment is subdivided uniformly with the same count (sized for the
    longest gap), which keeps the operation a single broadcast.
    """
    if positions.shape[0] < 2:
        return positions
    segs = np.diff(positions, axis=0)
    max_gap = float(np.linalg.norm(segs, axis=1).max())
    if max_gap <= spacing:
        return positions
    n = int(np.ceil(max_gap / spacing - 1e-12))
    ts = (np.arange(1, n + 1) / n)[None, :, None]          # (1, n, 1)
    interp = positions[:-1, None, :] + ts * segs[:, None, :]  # (S, n, 3)
    return np.concatenate([positions[:1], interp.reshape(-1, 3)])


def boxes_blocked(grid: OccupancyGrid, centers: np.ndarray, bbox: BoundingBox,
                  unknown_is_obstacle: bool = True) -> np.ndarray:
    """Per-center test: does the bbox centered there overlap any blocking voxel?

    Out-of-bounds overlap counts as blocked.  Overlap uses half-open voxel
    extents, so a box whose face exactly touches a voxel boundary does not
    claim the voxel beyond it.
    """
    centers = np.atleast_2d(np.asarray(centers, dtype=float))
    res = grid.resolution
    lo = (centers - bbox.half_extents - grid.origin) / res
    hi = (centers + bbox.half_extents - grid.origin) / res
    imin = np.floor(lo + _BOUNDARY_EPS).astype(np.int64)
    imax = np.ceil(hi - _BOUNDARY_EPS).astype(np.int64) - 1

    dims = np.asarray(grid.dims)
    blocked_out = (imin < 0).any(axis=1) | (imax >= dims).any(axis=1)

    cells = grid.cells
    if unknown_is_obstacle:
        bad = cells != VoxelState.FREE
    else:
        bad = cells == VoxelState.OCCUPIED

    result = blocked_out.copy()
    pending = ~result
    if not np.any(pending):
        return result
    span = imax - imin + 1
    max_span = span[pending].max(axis=0)
    for ox in range(int(max_span[0])):
        for oy in range(int(max_span[1])):
            for oz in range(int(max_span[2])):
                sel = pending & (ox < span[:, 0]) & (oy < span[:, 1]) & (oz < span[:, 2])
                if not np.any(sel):
                    continue
                rows = np.nonzero(sel)[0]
                hit = bad[imin[rows, 0] + ox, imin[rows, 1] + oy, imin[rows, 2] + oz]
                result[rows[hit]] = True
                pending[rows[hit]] = False
    return result


def is_path_collision_free(grid: OccupancyGrid, positions, bbox: BoundingBox,
                           unknown_is_obstacle: bool = True) -> bool:
    """True iff the bbox swept along the path never overlaps a blocking voxel.

    positions is an (N, 3) array (or a Path-like object with .positions);
    samples are densified to at most resolution/2 spacing between the given
    waypoints.
    """
    if hasattr(positions, "positions"):
        positions = positions.positions
    pts = np.atleast_2d(np.asarray(positions, dtype=float))
    if pts.shape[0] == 0:
        raise MapError("path must contain at least one state")
    samples = _densify(pts, grid.resolution / 2.0)
    return not bool(boxes_blocked(grid, samples, bbox, unknown_is_obstacle).any())


# ---------------------------------------------------------------------------
# VOXMAP v1 dump format
# ---------------------------------------------------------------------------


def dump_voxmap(grid: OccupancyGrid, path) -> None:
    """Write `VOXMAP v1 <nx> <ny> <nz> <res> <ox> <oy> <oz>` + raw bytes (x-fastest)."""
    nx, ny, nz = grid.dims
    header = "VOXMAP v1 %d %d %d %.17g %.17g %.17g %.17g\n" % (
        nx, ny, nz, grid.resolution, grid.origin[0], grid.origin[1], grid.origin[2])
    data = grid.cells.reshape(-1, order="F").tobytes()
    if hasattr(path, "write"):
        path.write(header.encode("ascii"))
        path.write(data)
    else:
        with open(path, "wb") as fh:
            fh.write(header.encode("ascii"))
            fh.write(data)


def load_voxmap(path) -> OccupancyGrid:
    if hasattr(path, "read"):
        fh = path
        close = False
    else:
        fh = open(path, "rb")
        close = True
    try:
        header = fh.readline().decode("ascii").split()
        if len(header) != 9 or header[0] != "VOXMAP" or header[1] != "v1":
            raise MapError(f"bad VOXMAP header: {header}")
        nx, ny, nz = int(header[2]), int(header[3]), int(header[4])
        res = float(header[5])
        origin = np.array([float(header[6]), float(header[7]), float(header[8])])
        raw = fh.read(nx * ny * nz)
        if len(raw) != nx * ny * nz:
            raise MapError(f"VOXMAP payload truncated: got {len(raw)} of {nx*ny*nz} bytes")
        cells = np.frombuffer(raw, dtype=np.uint8).reshape((nx, ny, nz), order="F").copy()
        if cells.max(initial=0) > 2:
            raise MapError("VOXMAP contains voxel states outside {0,1,2}")
        return OccupancyGrid(origin, res, (nx, ny, nz), cells)
    finally:
        if close:
            fh.close()
