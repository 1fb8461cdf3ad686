"""Robot state, velocity-slew motion model, and the primitive command lattice.

Primitives and paths store their sampled trajectories as arrays; RobotState
objects are materialized lazily where callers need them.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np


def normalize_angle(a: float) -> float:
    """Wrap to (-pi, pi]."""
    r = math.remainder(a, math.tau)
    if r <= -math.pi:
        r += math.tau
    return r


def normalize_angles(a: np.ndarray) -> np.ndarray:
    """Vector wrap to (-pi, pi]."""
    r = np.remainder(np.asarray(a, dtype=float) + np.pi, 2 * np.pi) - np.pi
    r[r == -np.pi] = np.pi
    return r


@dataclass
class RobotState:
    position: np.ndarray   # m
    velocity: np.ndarray   # m/s
    heading: float         # rad, (-pi, pi]

    def __post_init__(self):
        self.position = np.asarray(self.position, dtype=float)
        self.velocity = np.asarray(self.velocity, dtype=float)
        self.heading = normalize_angle(float(self.heading))

    @classmethod
    def at_rest(cls, position, heading: float = 0.0) -> "RobotState":
        return cls(np.asarray(position, dtype=float), np.zeros(3), heading)

    def copy(self) -> "RobotState":
        return RobotState(self.position.copy(), self.velocity.copy(), self.heading)


@dataclass
class MotionModel:
    v_max: float = 2.0              # m/s
    a_max: float = 2.0              # m/s^2
    yaw_rate_max: float = 1.5       # rad/s
    primitive_duration: float = 2.0  # s
    sample_dt: float = 0.1          # s
    vz_max: float = 1.0             # m/s, vertical command component
    yaw_fan: float = math.pi / 2    # command headings span +/- yaw_fan
    n_headings: int = 9
    n_speeds: int = 2
    n_vertical: int = 3

    def __post_init__(self):
        for name in ("v_max", "a_max", "yaw_rate_max", "primitive_duration", "sample_dt"):
            if getattr(self, name) <= 0:
                raise ValueError(f"{name} must be positive")
        if self.sample_dt > self.primitive_duration:
            raise ValueError("sample_dt must not exceed primitive_duration")


@dataclass
class Command:
    target_velocity: np.ndarray
    target_heading: float

    def __post_init__(self):
        self.target_velocity = np.asarray(self.target_velocity, dtype=float)


class _Trajectory:
    """Array-backed state sequence shared by primitives and paths."""

    def __init__(self, positions: np.ndarray, velocities: np.ndarray,
                 headings: np.ndarray, length: float, duration: float):
        self.positions = np.asarray(positions, dtype=float)
        self.velocities = np.asarray(velocities, dtype=float)
        self.headings = np.asarray(headings, dtype=float)
        self.length = float(length)
        self.duration = float(duration)
        self._states: list[RobotState] | None = None

    def __len__(self) -> int:
        return self.positions.shape[0]

    @property
    def states(self) -> list[RobotState]:
        if self._states is None:
            self._states = [RobotState(self.positions[i].copy(), self.velocities[i].copy(),
                                       float(self.headings[i]))
                            for i in range(self.positions.shape[0])]
        return self._states

    def state_at(self, i: int) -> RobotState:
        i = int(i)
        return RobotState(self.positions[i].copy(), self.velocities[i].copy(),
                          float(self.headings[i]))

    @property
    def end(self) -> RobotState:
        return self.state_at(len(self) - 1)


class MotionPrimitive(_Trajectory):
    """One primitive: states sampled every sample_dt; index 0 is the input state."""

    @property
    def terminal_state(self) -> RobotState:
        return self.end


class Path(_Trajectory):
    """Time-parameterized state sequence (local, global, or homing path)."""


def _from_states(cls, states: list[RobotState], duration: float):
    positions = np.array([s.position for s in states])
    velocities = np.array([s.velocity for s in states])
    headings = np.array([s.heading for s in states])
    length = float(np.linalg.norm(np.diff(positions, axis=0), axis=1).sum()) if len(states) > 1 else 0.0
    return cls(positions, velocities, headings, length, duration)


def path_from_states(states: list[RobotState], duration: float) -> Path:
    return _from_states(Path, states, duration)


def propagate(state: RobotState, command: Command, model: MotionModel) -> MotionPrimitive:
    """Integrate the velocity-slew model for one primitive duration.

    Velocity moves toward the command target at up to a_max, position
    integrates the updated velocity each sample_dt (semi-implicit Euler),
    heading slews toward the target at up to yaw_rate_max.
    """
    return propagate_batch(state, [command], model)[0]


def propagate_batch(state: RobotState, commands: list[Command],
                    model: MotionModel) -> list[MotionPrimitive]:
    """Propagate many commands from one state in a single vectorized pass."""
    n = len(commands)
    targets = np.array([c.target_velocity for c in commands])     # (n, 3)
    target_yaws = np.array([c.target_heading for c in commands])  # (n,)
    speeds = np.linalg.norm(targets, axis=1)
    over = speeds > model.v_max + 1e-9
    if np.any(over):
        bad = float(speeds[over][0])
        raise ValueError(f"command speed {bad:.3f} exceeds v_max {model.v_max}")

    steps = int(round(model.primitive_duration / model.sample_dt))
    dt = model.sample_dt
    dv_cap = model.a_max * dt
    dyaw_cap = model.yaw_rate_max * dt

    pos = np.empty((n, steps + 1, 3))
    vel = np.empty((n, steps + 1, 3))
    yaw = np.empty((n, steps + 1))
    pos[:, 0] = state.position
    vel[:, 0] = state.velocity
    yaw[:, 0] = state.heading

    p = np.repeat(state.position[None, :], n, axis=0)
    v = np.repeat(state.velocity[None, :], n, axis=0)
    y = np.full(n, state.heading)
    for k in range(1, steps + 1):
        dv = targets - v
        norms = np.linalg.norm(dv, axis=1)
        scale = np.ones(n)
        big = norms > dv_cap
        scale[big] = dv_cap / norms[big]
        v = v + dv * scale[:, None]
        p = p + v * dt
        dyaw = normalize_angles(target_yaws - y)
        dyaw = np.clip(dyaw, -dyaw_cap, dyaw_cap)
        y = normalize_angles(y + dyaw)
        pos[:, k] = p
        vel[:, k] = v
        yaw[:, k] = y

    seg = np.linalg.norm(np.diff(pos, axis=1), axis=2)  # (n, steps)
    lengths = seg.sum(axis=1)
    duration = steps * dt
    return [MotionPrimitive(pos[i], vel[i], yaw[i], float(lengths[i]), duration)
            for i in range(n)]


def generate_primitive_commands(state: RobotState, model: MotionModel) -> list[Command]:
    """Deterministic command lattice fanned around the current heading.

    Ordering is fixed: headings (low to high offset) x speeds (v_max then
    v_max/2) x vertical components (-vz_max, 0, +vz_max), followed by one
    stop command.  Commands whose combined speed would exceed v_max are
    rescaled onto the v_max sphere, so every command is dynamically valid.
    """
    if model.n_headings < 1 or model.n_speeds < 1 or model.n_vertical < 1:
        raise ValueError("branching counts must be >= 1")
    if model.n_headings == 1:
        offsets = [0.0]
    else:
        offsets = list(np.linspace(-model.yaw_fan, model.yaw_fan, model.n_headings))
    speeds = [model.v_max / (k + 1) for k in range(model.n_speeds)]
    if model.n_vertical == 1:
        verticals = [0.0]
    else:
        verticals = list(np.linspace(-model.vz_max, model.vz_max, model.n_vertical))

    commands: list[Command] = []
    for off in offsets:
        yaw = normalize_angle(state.heading + off)
        for s in speeds:
            for vz in verticals:
                v = np.array([s * math.cos(yaw), s * math.sin(yaw), vz])
                norm = float(np.linalg.norm(v))
                if norm > model.v_max:
                    v = v * (model.v_max / norm)
                commands.append(Command(v, yaw))
    commands.append(Command(np.zeros(3), state.heading))
    return commands


def path_from_primitives(primitives: list[MotionPrimitive]) -> Path:
    """Concatenate primitives, dropping duplicated joint states."""
    if not primitives:
        raise ValueError("need at least one primitive")
    pos = [primitives[0].positions]
    vel = [primitives[0].velocities]
    yaws = [primitives[0].headings]
    for prim in primitives[1:]:
        pos.append(prim.positions[1:])
        vel.append(prim.velocities[1:])
        yaws.append(prim.headings[1:])
    length = sum(p.length for p in primitives)
    duration = sum(p.duration for p in primitives)
    return Path(np.concatenate(pos), np.concatenate(vel), np.concatenate(yaws),
                length, duration)


def straight_path(waypoints: np.ndarray, speed: float, sample_ds: float) -> Path:
    """Polyline resampled at sample_ds, flown at constant speed.

    Heading follows the direction of travel; velocities point along each
    segment with magnitude `speed`.
    """
    pts = np.atleast_2d(np.asarray(waypoints, dtype=float))
    if speed <= 0 or sample_ds <= 0:
        raise ValueError("speed and sample_ds must be positive")

    segs = np.diff(pts, axis=0)
    seg_len = np.linalg.norm(segs, axis=1)
    keep = seg_len > 1e-12
    segs, starts, seg_len = segs[keep], pts[:-1][keep], seg_len[keep]

    samples = [pts[:1]]
    for a, d, L in zip(starts, segs, seg_len):
        n = max(1, int(math.ceil(L / sample_ds - 1e-12)))
        ts = np.arange(1, n + 1) / n
        samples.append(a + ts[:, None] * d)
    positions = np.concatenate(samples)
    length = float(seg_len.sum())

    n_pts = positions.shape[0]
    if n_pts == 1:
        return Path(positions, np.zeros((1, 3)), np.zeros(1), 0.0, 0.0)

    fwd = np.diff(positions, axis=0)
    fwd_len = np.linalg.norm(fwd, axis=1)
    dirs = np.zeros_like(positions)
    dirs[:-1] = fwd / np.maximum(fwd_len, 1e-300)[:, None]
    dirs[-1] = dirs[-2]
    velocities = dirs * speed
    headings = np.arctan2(dirs[:, 1], dirs[:, 0])
    return Path(positions, velocities, headings, length, length / speed)
