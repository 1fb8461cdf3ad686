"""Depth sensor model: simulated range scans and unknown-voxel visibility.

Two visibility variants are provided.  `visible_unknown_voxels` is the exact
per-voxel-center computation used by all oracle tests; `visible_unknown_beams`
marches a beam grid through the map and is much faster at mission scale.
Both treat Unknown voxels as transparent (only Occupied occludes), otherwise a
fully unknown frontier would self-occlude and exploration would stall.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numpy as np

from .voxel_map import (
    MapError,
    OccupancyGrid,
    VoxelState,
    march_first_hit,
    march_to_targets,
)


class SensorError(ValueError):
    pass


@dataclass
class SensorConfig:
    fov_horizontal: float = 360.0   # degrees
    fov_vertical: float = 30.0      # degrees
    d_max: float = 50.0             # m
    map_update_range: float = 50.0  # m, <= d_max
    rays_horizontal: int = 180
    rays_vertical: int = 9

    def __post_init__(self):
        if not 0 < self.fov_horizontal <= 360:
            raise SensorError(f"fov_horizontal must be in (0, 360], got {self.fov_horizontal}")
        if not 0 < self.fov_vertical <= 180:
            raise SensorError(f"fov_vertical must be in (0, 180], got {self.fov_vertical}")
        if self.d_max <= 0:
            raise SensorError(f"d_max must be positive, got {self.d_max}")
        if self.map_update_range > self.d_max:
            raise SensorError("map_update_range must not exceed d_max")
        if self.rays_horizontal < 1 or self.rays_vertical < 1:
            raise SensorError("ray counts must be >= 1")

    def clamped_to_update_range(self) -> "SensorConfig":
        """Copy with d_max reduced to the mappable range (for gain estimates)."""
        if self.d_max <= self.map_update_range:
            return self
        return replace(self, d_max=self.map_update_range)


@dataclass
class GroundTruthEnv:
    """Fully known simulation world: Free/Occupied grid plus the home position."""

    grid: OccupancyGrid
    home: np.ndarray
    meta: dict | None = None

    def __post_init__(self):
        self.home = np.asarray(self.home, dtype=float)
        if np.any(self.grid.cells == VoxelState.UNKNOWN):
            raise SensorError("ground-truth environment must contain no Unknown voxels")
        hv = self.grid.world_to_voxel(self.home)
        if not self.grid.in_bounds(hv) or self.grid.cells[hv[0], hv[1], hv[2]] != VoxelState.FREE:
            raise SensorError(f"home position {self.home} is not in a Free voxel")


@dataclass
class Scan:
    directions: np.ndarray  # (N, 3) unit vectors, world frame
    ranges: np.ndarray      # (N,)
    hits: np.ndarray        # (N,) bool

    def __len__(self) -> int:
        return self.directions.shape[0]


def beam_directions(config: SensorConfig, heading: float,
                    rays_horizontal: int | None = None,
                    rays_vertical: int | None = None) -> np.ndarray:
    """Uniform (N, 3) beam grid over the FoV, centered on the heading.

    Elevation-major ordering.  A full 360 degree horizontal FoV is sampled
    without endpoint duplication; narrower FoVs include both edges.
    """
    nh = rays_horizontal if rays_horizontal is not None else config.rays_horizontal
    nv = rays_vertical if rays_vertical is not None else config.rays_vertical
    fh = math.radians(config.fov_horizontal)
    fv = math.radians(config.fov_vertical)

    if nh == 1:
        azimuths = np.array([heading])
    elif config.fov_horizontal >= 360.0:
        azimuths = heading + np.linspace(0.0, 2 * math.pi, nh, endpoint=False)
    else:
        azimuths = heading + np.linspace(-fh / 2, fh / 2, nh)
    if nv == 1:
        elevations = np.array([0.0])
    else:
        elevations = np.linspace(-fv / 2, fv / 2, nv)

    az = np.repeat(azimuths[None, :], nv, axis=0).reshape(-1)
    el = np.repeat(elevations[:, None], azimuths.size, axis=1).reshape(-1)
    ce = np.cos(el)
    return np.stack([ce * np.cos(az), ce * np.sin(az), np.sin(el)], axis=1)


def auto_ray_counts(config: SensorConfig, resolution: float) -> tuple[int, int]:
    """Beam counts dense enough to resolve one voxel at the sensor's full range."""
    spacing = resolution / max(config.d_max, resolution)
    nh = int(math.ceil(math.radians(config.fov_horizontal) / spacing))
    nv = int(math.ceil(math.radians(config.fov_vertical) / spacing)) + 1
    return max(nh, 8), max(nv, 3)


_OCCUPIED_STOP = np.array([False, False, True])  # index by VoxelState


class BeamSampler:
    """Reusable fixed-step beam marcher over a snapshot of the map.

    Built once per planning step: the cells are copied into a border-padded
    array whose sentinel border reads Occupied, so marching needs no bounds
    tests.  Sampling advances half a voxel per step; no axis can jump a whole
    voxel, so slab-like occluders are never leapt over, though brief corner
    crossings may be missed (this is the gain-estimation fast path, not the
    mapping-grade traversal).  Corner seams of single-voxel walls can leak;
    world generators keep solid structure at least two voxels thick.
    """

    _CHUNK = 16

    def __init__(self, grid: OccupancyGrid):
        self.grid = grid
        nx, ny, nz = grid.dims
        self.padded = np.full((nx + 2, ny + 2, nz + 2), int(VoxelState.OCCUPIED),
                              dtype=np.uint8)
        self.padded[1:-1, 1:-1, 1:-1] = grid.cells
        self._dir_cache: dict = {}

    def directions(self, config: SensorConfig, heading: float,
                   nh: int, nv: int) -> np.ndarray:
        key = (id(config), round(heading, 12), nh, nv)
        dirs = self._dir_cache.get(key)
        if dirs is None:
            dirs = beam_directions(config, heading, nh, nv).astype(np.float32)
            self._dir_cache[key] = dirs
        return dirs

    def sample_unknown(self, origin: np.ndarray, dirs: np.ndarray,
                       max_range: float) -> np.ndarray:
        """Sorted unique flat indices of Unknown voxels the beams touch before
        stopping at an Occupied voxel, the map border, or max_range.

        Steps that cross more than one voxel boundary at once (diagonal seam
        crossings) are treated as blocked when every possible first-crossing
        voxel is Occupied, so beams cannot slip through the concave seam where
        two solid slabs meet.
        """
        grid = self.grid
        res = grid.resolution
        step = np.float32(res * 0.5)
        n_steps = int(np.ceil(max_range / (res * 0.5))) + 1
        ts_all = (np.arange(n_steps, dtype=np.float32) * step).clip(max=np.float32(max_range))
        origin32 = np.asarray(origin, dtype=np.float32)
        inv_res = np.float32(1.0 / res)
        grid_origin = grid.origin.astype(np.float32)
        dims1 = np.asarray(grid.dims, dtype=np.int64) + 1
        nx, ny, _ = grid.dims
        padded = self.padded
        occ = int(VoxelState.OCCUPIED)

        active = np.asarray(dirs, dtype=np.float32)
        origin_local = ((origin32 - grid_origin) * inv_res).astype(np.float32)
        start_vox = grid.world_to_voxel(origin)
        last_vox = np.repeat(start_vox[None, :], active.shape[0], axis=0)
        dirs_local = active * inv_res
        out: list[np.ndarray] = []
        for t0 in range(0, n_steps, self._CHUNK):
            if active.shape[0] == 0:
                break
            ts = ts_all[t0:t0 + self._CHUNK]
            local = origin_local + dirs_local[:, None, :] * ts[None, :, None]  # (B, T, 3)
            vox = np.floor(local).astype(np.int64)
            cx = np.clip(vox[..., 0] + 1, 0, dims1[0])                  # sentinel border
            cy = np.clip(vox[..., 1] + 1, 0, dims1[1])
            cz = np.clip(vox[..., 2] + 1, 0, dims1[2])
            states = padded[cx, cy, cz]                                 # (B, T)
            occupied = states == occ

            # Previous-sample clipped indices (column-wise shift).
            px = np.empty_like(cx)
            px[:, 0] = np.clip(last_vox[:, 0] + 1, 0, dims1[0])
            px[:, 1:] = cx[:, :-1]
            py = np.empty_like(cy)
            py[:, 0] = np.clip(last_vox[:, 1] + 1, 0, dims1[1])
            py[:, 1:] = cy[:, :-1]
            pz = np.empty_like(cz)
            pz[:, 0] = np.clip(last_vox[:, 2] + 1, 0, dims1[2])
            pz[:, 1:] = cz[:, :-1]
            dx = cx != px
            dy = cy != py
            dz = cz != pz
            need = (dx.astype(np.int8) + dy.astype(np.int8) + dz.astype(np.int8)) >= 2
            if need.any():
                # Diagonal seam rule: a multi-boundary step is blocked when
                # any single-flip intermediate voxel is Occupied.  Bulk
                # unknown passes (unknown does not occlude); corners touching
                # known structure occlude conservatively, so beams cannot
                # slip through wall seams into solid-interior unknown.
                any_occ = (dx & (padded[cx, py, pz] == occ)) \
                    | (dy & (padded[px, cy, pz] == occ)) \
                    | (dz & (padded[px, py, cz] == occ))
                occupied = occupied | (need & any_occ)

            hit_any = occupied.any(axis=1)
            ncols = states.shape[1]
            first_occ = np.where(hit_any, occupied.argmax(axis=1), ncols)
            take = states == VoxelState.UNKNOWN
            take &= np.arange(ncols)[None, :] < first_occ[:, None]
            if take.any():
                v = vox[take]
                out.append(v[:, 0] + nx * (v[:, 1] + ny * v[:, 2]))
            keep = ~hit_any
            active = active[keep]
            dirs_local = dirs_local[keep]
            last_vox = vox[keep, -1, :]
        if not out:
            return np.zeros(0, dtype=np.int64)
        return np.unique(np.concatenate(out))

    def visible_unknown(self, position, heading: float, config: SensorConfig,
                        rays: tuple[int, int] | str | None = None) -> np.ndarray:
        """Beam-sampled visible set with the frustum center filter applied."""
        position = np.asarray(position, dtype=float)
        if not self.grid.contains_point(position):
            raise MapError(f"pose {position} outside map bounds")
        if rays == "auto":
            nh, nv = auto_ray_counts(config, self.grid.resolution)
        elif rays is None:
            nh, nv = config.rays_horizontal, config.rays_vertical
        else:
            nh, nv = rays
        dirs = self.directions(config, heading, nh, nv)
        flats = self.sample_unknown(position, dirs, config.d_max)
        return _frustum_filter(self.grid, flats, position, heading, config)


def simulate_scan(env: GroundTruthEnv, position, heading: float,
                  config: SensorConfig) -> Scan:
    """Range scan against the ground-truth world.

    Hit ranges point at the middle of the chord through the struck voxel, so
    the reported endpoint is strictly inside it; misses report d_max.
    """
    position = np.asarray(position, dtype=float)
    grid = env.grid
    if not grid.contains_point(position):
        raise MapError(f"sensor position {position} outside environment bounds")
    pv = grid.world_to_voxel(position)
    if grid.cells[pv[0], pv[1], pv[2]] == VoxelState.OCCUPIED:
        raise SensorError(f"sensor position {position} is inside an Occupied voxel")

    dirs = beam_directions(config, heading)
    hit, t_enter, t_exit, _ = march_first_hit(grid, position, dirs, config.d_max, _OCCUPIED_STOP)
    ranges = np.full(dirs.shape[0], config.d_max)
    mid = 0.5 * (t_enter[hit] + t_exit[hit])
    ranges[hit] = np.minimum(mid, config.d_max)
    return Scan(dirs, ranges, hit)


def visible_unknown_voxels(grid: OccupancyGrid, position, heading: float,
                           config: SensorConfig) -> np.ndarray:
    """Exact visible-unknown set: sorted flat voxel indices.

    A voxel qualifies when its center is within d_max and inside the FoV
    wedge, and the ray from the sensor to the center meets no Occupied voxel
    first.
    """
    position = np.asarray(position, dtype=float)
    if not grid.contains_point(position):
        raise MapError(f"pose {position} outside map bounds")

    res = grid.resolution
    dims = np.asarray(grid.dims)
    lo = np.maximum(grid.world_to_voxel(position - config.d_max), 0)
    hi = np.minimum(grid.world_to_voxel(position + config.d_max), dims - 1)
    sub = grid.cells[lo[0]:hi[0] + 1, lo[1]:hi[1] + 1, lo[2]:hi[2] + 1]
    local = np.argwhere(sub == VoxelState.UNKNOWN)
    if local.shape[0] == 0:
        return np.zeros(0, dtype=np.int64)
    cand = local + lo

    centers = grid.voxel_centers(cand)
    delta = centers - position
    dist = np.linalg.norm(delta, axis=1)
    keep = dist <= config.d_max

    horiz = np.linalg.norm(delta[:, :2], axis=1)
    elev = np.arctan2(delta[:, 2], horiz)
    half_v = math.radians(config.fov_vertical) / 2
    keep &= np.abs(elev) <= half_v + 1e-12

    if config.fov_horizontal < 360.0:
        az = np.arctan2(delta[:, 1], delta[:, 0])
        dyaw = np.remainder(az - heading + math.pi, 2 * math.pi) - math.pi
        half_h = math.radians(config.fov_horizontal) / 2
        keep &= np.abs(dyaw) <= half_h + 1e-12

    cand = cand[keep]
    if cand.shape[0] == 0:
        return np.zeros(0, dtype=np.int64)
    vis = march_to_targets(grid, position, cand)
    return np.sort(grid.flat_index(cand[vis]))


def _frustum_filter(grid: OccupancyGrid, flats: np.ndarray, position: np.ndarray,
                    heading: float, config: SensorConfig) -> np.ndarray:
    """Keep voxels whose centers lie inside the sensor frustum."""
    if flats.size == 0:
        return flats
    centers = grid.voxel_centers(grid.unflatten(flats))
    delta = centers - position
    dist = np.linalg.norm(delta, axis=1)
    keep = dist <= config.d_max
    elev = np.arctan2(delta[:, 2], np.linalg.norm(delta[:, :2], axis=1))
    keep &= np.abs(elev) <= math.radians(config.fov_vertical) / 2 + 1e-12
    if config.fov_horizontal < 360.0:
        az = np.arctan2(delta[:, 1], delta[:, 0])
        dyaw = np.remainder(az - heading + math.pi, 2 * math.pi) - math.pi
        keep &= np.abs(dyaw) <= math.radians(config.fov_horizontal) / 2 + 1e-12
    return flats[keep]


def visible_unknown_beams(grid: OccupancyGrid, position, heading: float,
                          config: SensorConfig,
                          rays: tuple[int, int] | str | None = None) -> np.ndarray:
    """Beam-sampled visible-unknown set: sorted flat voxel indices.

    Beams stop at Occupied voxels or d_max; the Unknown voxels they traverse
    are kept when their centers lie inside the sensor frustum, so the result
    approximates the exact per-center variant with beam-based occlusion.
    rays="auto" picks a grid dense enough to resolve single voxels at full
    range; a (horizontal, vertical) pair overrides the sensor's scan grid.
    Callers with many queries against one map snapshot should reuse a
    BeamSampler instead.
    """
    return BeamSampler(grid).visible_unknown(position, heading, config, rays)
