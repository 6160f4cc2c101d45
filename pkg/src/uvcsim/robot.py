"""Differential-drive robot model: kinematics, LIDAR, collision, battery.

The base is a symmetric differential drive (rotates in place) with a
0.49 m x 0.62 m rectangular footprint, a 360-degree planar range finder,
and two 60 Wh batteries feeding a base load plus the lamp bank.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import TYPE_CHECKING

import numpy as np

from .geometry import Pose2D, normalize_angle
from .world import FREE, OccupancyGrid, raycast_batch

if TYPE_CHECKING:
    from .navigation import AutonomyLevel

V_MAX_DEFAULT = 1.0   # m/s
W_MAX_DEFAULT = 1.5   # rad/s


@dataclass(frozen=True)
class Twist:
    """Drive command: forward linear velocity and CCW angular velocity."""

    v: float = 0.0
    w: float = 0.0

    def clamped(self, v_max: float = V_MAX_DEFAULT, w_max: float = W_MAX_DEFAULT) -> "Twist":
        return Twist(
            min(max(self.v, -v_max), v_max),
            min(max(self.w, -w_max), w_max),
        )


@dataclass(frozen=True)
class Footprint:
    """Axis dimensions of the base rectangle in the robot frame
    (length along +x / heading, width along y)."""

    width: float = 0.49
    length: float = 0.62

    @property
    def circumradius(self) -> float:
        return 0.5 * math.hypot(self.width, self.length)


@dataclass(frozen=True, eq=False)
class LaserScan:
    """One 360-degree planar scan. Beam i points at world angle
    robot_theta + angle_min + i * angle_increment."""

    angle_min: float
    angle_increment: float
    ranges: np.ndarray
    range_max: float
    stamp: float = 0.0

    def bearings(self) -> np.ndarray:
        """Beam bearings relative to the robot heading."""
        return self.angle_min + np.arange(self.ranges.size) * self.angle_increment


@dataclass(frozen=True)
class LidarParams:
    beam_count: int = 360
    range_max: float = 10.0
    noise_sigma: float = 0.01  # m; 0 gives deterministic scans


@dataclass(frozen=True)
class BatteryParams:
    capacity_wh: float = 120.0    # two 60 Wh packs in parallel
    base_load_w: float = 40.0     # drives + computer; 120 Wh / 3 h runtime
    lamp_load_w: float = 66.8     # 4 lamps x 16.7 W electrical


@dataclass
class RobotState:
    pose: Pose2D
    twist: Twist = Twist()
    lamp_on: bool = False
    autonomy: "AutonomyLevel | None" = None
    battery_wh: float = 120.0
    footprint: Footprint = field(default_factory=Footprint)


def step_kinematics(pose: Pose2D, cmd: Twist, dt: float) -> Pose2D:
    """Advance a unicycle pose exactly over one step of constant command.

    Straight-line motion when |w| is negligible, otherwise the closed-form
    circular arc. Pure rotation (v = 0) leaves the position bit-identical.
    """
    if dt <= 0:
        raise ValueError(f"dt must be > 0, got {dt}")
    v, w = cmd.v, cmd.w
    theta = pose.theta
    if abs(w) < 1e-9:
        x = pose.x + v * math.cos(theta) * dt
        y = pose.y + v * math.sin(theta) * dt
    else:
        r = v / w
        x = pose.x + r * (math.sin(theta + w * dt) - math.sin(theta))
        y = pose.y - r * (math.cos(theta + w * dt) - math.cos(theta))
    return Pose2D(x, y, normalize_angle(theta + w * dt))


def simulate_lidar(
    grid: OccupancyGrid,
    pose: Pose2D,
    beam_count: int = 360,
    range_max: float = 10.0,
    noise_sigma: float = 0.0,
    rng: np.random.Generator | None = None,
    stamp: float = 0.0,
) -> LaserScan:
    """Cast ``beam_count`` evenly spaced beams spanning the full circle.

    Each range is the raycast hit distance plus optional zero-mean Gaussian
    noise, clamped into (0, range_max]. With noise_sigma = 0 the scan is a
    pure function of (grid, pose, beam_count, range_max).
    """
    if beam_count < 1:
        raise ValueError(f"beam_count must be >= 1, got {beam_count}")
    angle_min = -math.pi
    increment = 2.0 * math.pi / beam_count
    angles = pose.theta + angle_min + increment * np.arange(beam_count)
    ranges = raycast_batch(grid, (pose.x, pose.y), angles, range_max)
    if noise_sigma > 0.0:
        if rng is None:
            rng = np.random.default_rng()
        ranges = ranges + rng.normal(0.0, noise_sigma, beam_count)
    ranges = np.clip(ranges, 1e-6, range_max)
    return LaserScan(angle_min, increment, ranges, range_max, stamp)


def check_collision(grid: OccupancyGrid, pose: Pose2D, footprint: Footprint) -> bool:
    """True iff the oriented footprint rectangle overlaps any blocking cell.

    Any part of the rectangle outside the map also counts as a collision.
    Overlap is exact (separating-axis test between the rectangle and each
    candidate cell square).
    """
    hl = footprint.length / 2.0
    hw = footprint.width / 2.0
    c, s = math.cos(pose.theta), math.sin(pose.theta)
    corners = np.array(
        [
            (pose.x + c * dx - s * dy, pose.y + s * dx + c * dy)
            for dx, dy in ((hl, hw), (hl, -hw), (-hl, -hw), (-hl, hw))
        ]
    )
    x_min, y_min, x_max, y_max = grid.extent
    if (
        corners[:, 0].min() < x_min
        or corners[:, 1].min() < y_min
        or corners[:, 0].max() >= x_max
        or corners[:, 1].max() >= y_max
    ):
        return True

    res = grid.resolution
    ix0, iy0 = grid.world_to_cell(corners[:, 0].min(), corners[:, 1].min())
    ix1, iy1 = grid.world_to_cell(corners[:, 0].max(), corners[:, 1].max())
    ix0, iy0 = max(ix0, 0), max(iy0, 0)
    ix1, iy1 = min(ix1, grid.width - 1), min(iy1, grid.height - 1)
    sub = grid.cells[iy0 : iy1 + 1, ix0 : ix1 + 1]
    if not (sub != FREE).any():
        return False

    jj, ii = np.meshgrid(
        np.arange(ix0, ix1 + 1), np.arange(iy0, iy1 + 1)
    )
    blocked_mask = sub != FREE
    cx = grid.origin.x + (jj[blocked_mask] + 0.5) * res
    cy = grid.origin.y + (ii[blocked_mask] + 0.5) * res
    if cx.size == 0:
        return False
    dx = cx - pose.x
    dy = cy - pose.y
    half_cell = res / 2.0
    # separating axes: world x, world y, robot heading u, robot lateral v
    u = (c, s)
    v = (-s, c)
    for ax, ay, rect_half in (
        (1.0, 0.0, abs(c) * hl + abs(s) * hw),
        (0.0, 1.0, abs(s) * hl + abs(c) * hw),
        (u[0], u[1], hl),
        (v[0], v[1], hw),
    ):
        cell_half = (abs(ax) + abs(ay)) * half_cell
        sep = np.abs(dx * ax + dy * ay) > rect_half + cell_half
        keep = ~sep
        if not keep.any():
            return False
        dx, dy = dx[keep], dy[keep]
    return True


def step_battery(
    battery_wh: float,
    dt: float,
    lamp_on: bool,
    params: BatteryParams = BatteryParams(),
) -> float:
    """Drain the pack by (base load + lamp load if lit) over dt seconds.

    Never goes below zero; at zero the simulator forces the robot dark and
    stationary.
    """
    if dt <= 0:
        raise ValueError(f"dt must be > 0, got {dt}")
    load_w = params.base_load_w + (params.lamp_load_w if lamp_on else 0.0)
    return max(0.0, battery_wh - load_w * dt / 3600.0)
