"""Adaptable-autonomy navigation: assisted-teleoperation filters, grid
path planning, and point/path following.

Four modes: manual passthrough, proximity deceleration, deceleration plus
steer-away, and autonomous goal navigation. The assist filters act on
operator commands only; the autonomous follower is never filtered.
"""

from __future__ import annotations

import heapq
import math
from dataclasses import dataclass
from enum import Enum

from .geometry import Pose2D, normalize_angle
from .robot import LaserScan, Twist, V_MAX_DEFAULT, W_MAX_DEFAULT
from .world import FREE, OccupancyGrid, inflate

_SQRT2 = math.sqrt(2.0)


class AutonomyLevel(Enum):
    MANUAL = "manual"
    ASSISTED_DECEL = "assisted_decel"
    ASSISTED_STEER = "assisted_steer"
    AUTONOMOUS = "autonomous"

    @classmethod
    def parse(cls, value: "str | AutonomyLevel") -> "AutonomyLevel":
        if isinstance(value, cls):
            return value
        try:
            return cls(str(value).lower())
        except ValueError:
            raise ValueError(f"unknown autonomy level {value!r}") from None


class PlanningError(Exception):
    """Base class for path planning failures."""


class StartOccupiedError(PlanningError):
    pass


class GoalOccupiedError(PlanningError):
    pass


class GoalUnreachableError(PlanningError):
    pass


class TargetOutOfRangeError(ValueError):
    """Manual drive target beyond the configured reach."""


@dataclass(frozen=True)
class AssistParams:
    """Thresholds for the assisted-teleoperation filters."""

    d_stop: float = 0.35          # full stop at or below this clearance
    d_slow: float = 1.0           # deceleration ramp starts here
    cone_half_angle: float = math.radians(30.0)
    d_influence: float = 1.2      # steer-away reacts inside this range
    k_steer: float = 0.8          # rad/s per unit of repulsion

    def __post_init__(self) -> None:
        if not 0 < self.d_stop < self.d_slow:
            raise ValueError("need 0 < d_stop < d_slow")
        if not 0 < self.cone_half_angle <= math.pi / 2:
            raise ValueError("cone_half_angle must be in (0, pi/2]")
        if self.d_influence <= 0:
            raise ValueError("d_influence must be > 0")


@dataclass(frozen=True)
class FollowParams:
    lookahead: float = 0.6
    k_v: float = 1.0
    k_omega: float = 2.0
    alpha_turn: float = 0.9       # rotate in place beyond this heading error
    goal_tolerance: float = 0.1
    v_max: float = V_MAX_DEFAULT
    w_max: float = W_MAX_DEFAULT


@dataclass(frozen=True)
class Path:
    """Planned route: waypoint positions (cell centers) and total length."""

    waypoints: tuple[tuple[float, float], ...]
    total_length: float

    @property
    def goal(self) -> tuple[float, float]:
        return self.waypoints[-1]


# ----------------------------------------------------------------------
# Assisted teleoperation
# ----------------------------------------------------------------------

def _clearance_toward(cmd_v: float, scan: LaserScan, cone_half_angle: float) -> float:
    """Minimum range among beams within the cone around the motion direction
    (ahead for v >= 0, behind for v < 0)."""
    center = 0.0 if cmd_v >= 0 else math.pi
    best = math.inf
    bearing = scan.angle_min
    for r in scan.ranges:
        rel = normalize_angle(bearing - center)
        if abs(rel) <= cone_half_angle and r < best:
            best = float(r)
        bearing += scan.angle_increment
    return best


def assist_decelerate(cmd: Twist, scan: LaserScan, p: AssistParams) -> Twist:
    """Scale the linear command down as clearance shrinks.

    Linear ramp: unchanged at d >= d_slow, zero at d <= d_stop. The angular
    command passes through untouched, so the operator can always rotate out
    of a blocked spot.
    """
    if scan.ranges.size == 0:
        raise ValueError("scan must contain at least one beam")
    d = _clearance_toward(cmd.v, scan, p.cone_half_angle)
    factor = (d - p.d_stop) / (p.d_slow - p.d_stop)
    factor = min(max(factor, 0.0), 1.0)
    return Twist(cmd.v * factor, cmd.w)


def _repulsion_terms(scan: LaserScan, p: AssistParams) -> list[float]:
    """Per-beam (paired) repulsion contributions from obstacles in the
    frontal half-plane.

    Beams are paired across the heading axis and each pair contributes
    sin(|bearing|) * (u_left - u_right), which makes the total exactly
    negate when a scan is mirrored left-right.
    """
    n = scan.ranges.size
    d_inf = p.d_influence
    half_pi = math.pi / 2

    entries = []  # (bearing, weight)
    for i in range(n):
        b = normalize_angle(scan.angle_min + i * scan.angle_increment)
        if -half_pi < b < half_pi:
            u = max(0.0, (d_inf - float(scan.ranges[i])) / d_inf)
            entries.append((b, u))

    pos = sorted([(b, u) for b, u in entries if b > 0.0])
    neg = sorted([(-b, u) for b, u in entries if b < 0.0])
    zero = [u for b, u in entries if b == 0.0]

    tol = abs(scan.angle_increment) / 2 if scan.angle_increment else 1e-9
    terms: list[float] = []
    i = j = 0
    while i < len(pos) and j < len(neg):
        bp, up = pos[i]
        bn, un = neg[j]
        if abs(bp - bn) <= tol:
            terms.append(math.sin(bp) * (up - un))
            i += 1
            j += 1
        elif bp < bn:
            terms.append(math.sin(bp) * up)
            i += 1
        else:
            terms.append(-math.sin(bn) * un)
            j += 1
    for bp, up in pos[i:]:
        terms.append(math.sin(bp) * up)
    for bn, un in neg[j:]:
        terms.append(-math.sin(bn) * un)
    for u in zero:
        terms.append(0.0 * u)
    return terms


def steer_correction(scan: LaserScan, p: AssistParams) -> float:
    """Angular-velocity correction steering away from nearby obstacles.

    Obstacles on the left (positive bearing) produce a negative correction
    (turn right) and vice versa; magnitude grows linearly as ranges drop
    below d_influence.
    """
    repulsion = math.fsum(_repulsion_terms(scan, p))
    return -p.k_steer * repulsion


def assist_steer(
    cmd: Twist, scan: LaserScan, p: AssistParams, w_max: float = W_MAX_DEFAULT
) -> Twist:
    """Deceleration assist plus a repulsive yaw term (the second assistance
    stage): the robot slows near obstacles and steers away from those to
    either side."""
    decel = assist_decelerate(cmd, scan, p)
    w = decel.w + steer_correction(scan, p)
    return Twist(decel.v, min(max(w, -w_max), w_max))


# ----------------------------------------------------------------------
# Path planning
# ----------------------------------------------------------------------

def plan_path(
    grid: OccupancyGrid,
    start: tuple[float, float],
    goal: tuple[float, float],
    robot_radius: float,
) -> Path:
    """A* on the 8-connected grid inflated by ``robot_radius``.

    Edge costs are resolution (orthogonal) and sqrt(2) * resolution
    (diagonal); diagonals are disallowed when either adjacent orthogonal
    cell is blocked, so returned segments never cut corners. Ties in f are
    broken by lower heuristic, then row-major cell order, making plans
    deterministic. Waypoints are cell centers with collinear interior
    points removed.
    """
    inflated = inflate(grid, robot_radius)
    free = inflated.cells == FREE
    h_cells, w_cells = free.shape

    sx, sy = inflated.world_to_cell(*start)
    gx, gy = inflated.world_to_cell(*goal)
    if not inflated.in_bounds_cell(sx, sy) or not free[sy, sx]:
        raise StartOccupiedError(f"start {start} is not in free space")
    if not inflated.in_bounds_cell(gx, gy) or not free[gy, gx]:
        raise GoalOccupiedError(f"goal {goal} is not in free space")
    if (sx, sy) == (gx, gy):
        return Path((inflated.cell_to_world(sx, sy),), 0.0)

    def heuristic(cx: int, cy: int) -> float:
        return math.hypot(cx - gx, cy - gy)

    # g-cost tracked as (straight, diagonal) step counts so the final cost
    # is exactly reproducible by any oracle using the same counts
    counts: dict[tuple[int, int], tuple[int, int]] = {(sx, sy): (0, 0)}
    g_best: dict[tuple[int, int], float] = {(sx, sy): 0.0}
    parent: dict[tuple[int, int], tuple[int, int]] = {}
    h0 = heuristic(sx, sy)
    open_heap: list[tuple[float, float, int, tuple[int, int]]] = [
        (h0, h0, sy * w_cells + sx, (sx, sy))
    ]
    closed: set[tuple[int, int]] = set()

    neighbors = (
        (1, 0, False), (-1, 0, False), (0, 1, False), (0, -1, False),
        (1, 1, True), (1, -1, True), (-1, 1, True), (-1, -1, True),
    )
    goal_cell = (gx, gy)
    found = False
    while open_heap:
        _, _, _, cell = heapq.heappop(open_heap)
        if cell in closed:
            continue
        if cell == goal_cell:
            found = True
            break
        closed.add(cell)
        cx, cy = cell
        g_here = g_best[cell]
        a_here, b_here = counts[cell]
        for dx, dy, diag in neighbors:
            nx, ny = cx + dx, cy + dy
            if not (0 <= nx < w_cells and 0 <= ny < h_cells) or not free[ny, nx]:
                continue
            if diag and not (free[cy, nx] and free[ny, cx]):
                continue  # no corner cutting
            g_new = g_here + (_SQRT2 if diag else 1.0)
            nb = (nx, ny)
            if nb in g_best and g_best[nb] <= g_new:
                continue
            g_best[nb] = g_new
            counts[nb] = (a_here, b_here + 1) if diag else (a_here + 1, b_here)
            parent[nb] = cell
            h_nb = heuristic(nx, ny)
            heapq.heappush(open_heap, (g_new + h_nb, h_nb, ny * w_cells + nx, nb))
    if not found:
        raise GoalUnreachableError(f"no route from {start} to {goal}")

    cells = [goal_cell]
    while cells[-1] != (sx, sy):
        cells.append(parent[cells[-1]])
    cells.reverse()

    # decimate collinear runs (equal step directions)
    kept = [cells[0]]
    for k in range(1, len(cells) - 1):
        d_prev = (cells[k][0] - cells[k - 1][0], cells[k][1] - cells[k - 1][1])
        d_next = (cells[k + 1][0] - cells[k][0], cells[k + 1][1] - cells[k][1])
        if d_prev != d_next:
            kept.append(cells[k])
    kept.append(cells[-1])

    a, b = counts[goal_cell]
    total = a * inflated.resolution + b * (_SQRT2 * inflated.resolution)
    waypoints = tuple(inflated.cell_to_world(cx, cy) for cx, cy in kept)
    return Path(waypoints, total)


# ----------------------------------------------------------------------
# Following
# ----------------------------------------------------------------------

def _rotate_or_drive(
    bearing: float, distance: float, p: FollowParams
) -> Twist:
    w = min(max(p.k_omega * bearing, -p.w_max), p.w_max)
    if abs(bearing) > p.alpha_turn:
        return Twist(0.0, w)
    v = min(max(p.k_v * distance, 0.0), p.v_max)
    return Twist(v, w)


def follow_path(
    pose: Pose2D, path: Path, params: FollowParams = FollowParams()
) -> tuple[Twist, bool]:
    """Pure-pursuit step toward a lookahead point on the path.

    Returns (twist, reached). Large heading errors trigger rotation in
    place; otherwise speed scales with remaining distance, capped at v_max.
    """
    wps = path.waypoints
    if not wps:
        raise ValueError("path must contain at least one waypoint")
    goal = wps[-1]
    if math.hypot(goal[0] - pose.x, goal[1] - pose.y) <= params.goal_tolerance:
        return Twist(0.0, 0.0), True

    # project the robot onto the polyline: nearest point and its arc position
    best_d2 = math.inf
    s_proj = 0.0
    s_acc = 0.0
    for (x0, y0), (x1, y1) in zip(wps, wps[1:]):
        ex, ey = x1 - x0, y1 - y0
        seg_len = math.hypot(ex, ey)
        if seg_len == 0.0:
            continue
        t = ((pose.x - x0) * ex + (pose.y - y0) * ey) / (seg_len * seg_len)
        t = min(max(t, 0.0), 1.0)
        px, py = x0 + t * ex, y0 + t * ey
        d2 = (pose.x - px) ** 2 + (pose.y - py) ** 2
        if d2 < best_d2:
            best_d2 = d2
            s_proj = s_acc + t * seg_len
        s_acc += seg_len
    total_arc = s_acc if s_acc > 0.0 else 0.0
    remaining = max(total_arc - s_proj, 0.0)

    # walk the polyline to the lookahead arc position
    target = goal
    s_want = s_proj + params.lookahead
    s_acc = 0.0
    for (x0, y0), (x1, y1) in zip(wps, wps[1:]):
        seg_len = math.hypot(x1 - x0, y1 - y0)
        if seg_len == 0.0:
            continue
        if s_acc + seg_len >= s_want:
            f = (s_want - s_acc) / seg_len
            target = (x0 + f * (x1 - x0), y0 + f * (y1 - y0))
            break
        s_acc += seg_len

    bearing = normalize_angle(
        math.atan2(target[1] - pose.y, target[0] - pose.x) - pose.theta
    )
    # near the goal the lookahead clamps to it; use true remaining distance
    distance = max(remaining, math.hypot(goal[0] - pose.x, goal[1] - pose.y))
    return _rotate_or_drive(bearing, distance, params), False


def drive_to_point(
    target_in_robot_frame: tuple[float, float],
    params: FollowParams = FollowParams(),
    manual_range: float = 3.0,
) -> tuple[Twist, bool]:
    """Rotate-then-drive toward a single clicked floor target given in the
    robot frame. Targets beyond ``manual_range`` are rejected."""
    tx, ty = target_in_robot_frame
    distance = math.hypot(tx, ty)
    if distance > manual_range:
        raise TargetOutOfRangeError(
            f"target at {distance:.2f} m exceeds the {manual_range:.2f} m manual range"
        )
    if distance <= params.goal_tolerance:
        return Twist(0.0, 0.0), True
    bearing = math.atan2(ty, tx)
    return _rotate_or_drive(bearing, distance, params), False
