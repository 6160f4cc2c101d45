"""UVC irradiance and dose physics, dose accounting, pose planning, and the
lamp safety interlock.

Each tube lamp is modeled as an isotropic point source: E = P / (4*pi*r^2)
with the radius clamped at R_MIN below the physical housing. This exactly
reproduces the 4.5 W -> 35.8 uW/cm2 at 1 m rating of the reference lamps.
Occlusion is binary: a surface without line of sight to the lamp receives
nothing. Dose accumulates on free cells and on the first blocking cell a
ray reaches (walls are surfaces too), never on cells deeper inside walls.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .geometry import Pose2D
from .world import (
    FREE,
    UNKNOWN,
    GridQueryError,
    OccupancyGrid,
    inflate,
    line_of_sight,
    segments_clear,
)

R_MIN = 0.2  # m; point-source clamp, closer than the lamp housing allows
W_PER_M2_TO_UW_PER_CM2 = 100.0
DOSE_CUTOFF_DEFAULT = 8.0  # m; irradiance beyond this is treated as zero


class NoReachablePoseError(Exception):
    """The planner found no collision-free candidate pose at all."""


@dataclass(frozen=True)
class LampArray:
    """Bank of UVC tube lamps mounted in a semicircle on the front half of
    the pole. Offsets are robot-frame (x forward)."""

    lamp_count: int = 4
    uvc_power_w: float = 4.5         # germicidal output per lamp
    electrical_power_w: float = 16.7  # draw per lamp
    mount_radius: float = 0.15
    mount_height: float = 1.2        # informational; the dose plane sits here

    def __post_init__(self) -> None:
        if self.lamp_count < 1:
            raise ValueError("lamp_count must be >= 1")
        if self.uvc_power_w <= 0:
            raise ValueError("uvc_power_w must be > 0")

    @property
    def total_electrical_w(self) -> float:
        return self.lamp_count * self.electrical_power_w

    def offsets(self) -> list[tuple[float, float]]:
        """Robot-frame mount points: a semicircular arc facing forward."""
        n = self.lamp_count
        if n == 1:
            return [(self.mount_radius, 0.0)]
        if self.mount_radius == 0.0:
            return [(0.0, 0.0)] * n
        arc = [
            -math.pi / 2 + k * math.pi / (n - 1)
            for k in range(n)
        ]
        return [
            (self.mount_radius * math.cos(a), self.mount_radius * math.sin(a))
            for a in arc
        ]

    def world_positions(self, pose: Pose2D) -> list[tuple[float, float]]:
        return [pose.to_world(dx, dy) for dx, dy in self.offsets()]


@dataclass
class DoseGrid:
    """Cumulative UVC energy per cell (J/m^2) on the same geometry as the
    occupancy grid. Values only ever grow."""

    resolution: float
    origin: Pose2D
    values: np.ndarray  # (height, width) float64

    @classmethod
    def for_grid(cls, grid: OccupancyGrid) -> "DoseGrid":
        return cls(
            grid.resolution,
            grid.origin,
            np.zeros((grid.height, grid.width), dtype=np.float64),
        )

    def dose_at_cell(self, ix: int, iy: int) -> float:
        return float(self.values[iy, ix])

    def copy(self) -> "DoseGrid":
        return DoseGrid(self.resolution, self.origin, self.values.copy())


@dataclass(frozen=True)
class DisinfectionTarget:
    """Prioritized surface cells and the dose they must reach."""

    cells: tuple[tuple[int, int], ...]
    required_dose: float  # J/m^2

    def __post_init__(self) -> None:
        if not self.cells:
            raise ValueError("target must contain at least one cell")
        if self.required_dose <= 0:
            raise ValueError("required_dose must be > 0")

    @classmethod
    def from_log_reduction(
        cls, cells, log_reduction: float, d90: float
    ) -> "DisinfectionTarget":
        """Express the requirement as N log10 reductions of a pathogen with
        the given D90 (J/m^2 per log)."""
        if d90 <= 0:
            raise ValueError("d90 must be > 0")
        return cls(tuple(tuple(c) for c in cells), log_reduction * d90)


# ----------------------------------------------------------------------
# Irradiance and dose
# ----------------------------------------------------------------------

def irradiance_at(
    grid: OccupancyGrid,
    lamp: tuple[float, float],
    uvc_power_w: float,
    target: tuple[float, float],
) -> float:
    """Point-source irradiance (W/m^2) at ``target``, zero when occluded.

    E = P / (4*pi*max(r, R_MIN)^2). The target's own cell never occludes,
    so wall surfaces facing the lamp are irradiated.
    """
    if uvc_power_w <= 0:
        raise ValueError("uvc_power_w must be > 0")
    if not grid.in_bounds_world(*lamp):
        raise GridQueryError(f"lamp position {lamp} outside the map")
    if not grid.in_bounds_world(*target):
        raise GridQueryError(f"target {target} outside the map")
    if not line_of_sight(grid, lamp, target):
        return 0.0
    r = math.hypot(target[0] - lamp[0], target[1] - lamp[1])
    r = max(r, R_MIN)
    return uvc_power_w / (4.0 * math.pi * r * r)


def irradiance_field(
    grid: OccupancyGrid,
    lamp: tuple[float, float],
    uvc_power_w: float,
    cutoff: float = DOSE_CUTOFF_DEFAULT,
) -> np.ndarray:
    """Irradiance (W/m^2) at every irradiable cell center from one lamp.

    Free cells and directly visible wall-surface cells receive the
    inverse-square irradiance; occluded, unknown, and out-of-cutoff cells
    are zero.
    """
    lx, ly = lamp
    if not grid.in_bounds_world(lx, ly):
        raise GridQueryError(f"lamp position {lamp} outside the map")
    res = grid.resolution
    h, w = grid.height, grid.width
    xs = grid.origin.x + (np.arange(w) + 0.5) * res
    ys = grid.origin.y + (np.arange(h) + 0.5) * res
    dx = xs[np.newaxis, :] - lx
    dy = ys[:, np.newaxis] - ly
    r = np.hypot(dx, dy)
    surface = grid.cells != UNKNOWN  # free or occupied; unknown never irradiated
    candidates = surface & (r <= cutoff)
    e = np.zeros((h, w), dtype=np.float64)
    iys, ixs = np.nonzero(candidates)
    if iys.size == 0:
        return e
    cxs = grid.origin.x + (ixs + 0.5) * res
    cys = grid.origin.y + (iys + 0.5) * res
    clear = segments_clear(grid, lamp, cxs, cys)
    rr = np.maximum(r[iys, ixs], R_MIN)
    e[iys[clear], ixs[clear]] = uvc_power_w / (4.0 * math.pi * rr[clear] ** 2)
    return e


class IrradianceCache:
    """Memoizes per-lamp irradiance fields keyed by lamp position.

    Lamp positions are snapped to a half-resolution lattice, so a
    stationary robot (the dominant case while disinfecting) reuses its
    fields every tick and slow maneuvering reuses nearby ones; the snap
    moves a lamp by at most resolution/4. Pass no cache to
    :func:`accumulate_dose` for exact per-call fields.
    """

    def __init__(self, grid: OccupancyGrid, cutoff: float = DOSE_CUTOFF_DEFAULT):
        self.grid = grid
        self.cutoff = cutoff
        self._snap = grid.resolution / 2.0
        self._fields: dict[tuple[float, float, float], np.ndarray] = {}

    def field(self, lamp: tuple[float, float], uvc_power_w: float) -> np.ndarray:
        x_min, y_min, x_max, y_max = self.grid.extent
        eps = self.grid.resolution * 1e-3
        snapped = (
            min(max(round(lamp[0] / self._snap) * self._snap, x_min), x_max - eps),
            min(max(round(lamp[1] / self._snap) * self._snap, y_min), y_max - eps),
        )
        key = (snapped[0], snapped[1], uvc_power_w)
        got = self._fields.get(key)
        if got is None:
            got = irradiance_field(self.grid, snapped, uvc_power_w, self.cutoff)
            # keep the cache bounded while the robot sweeps the room
            if len(self._fields) > 256:
                self._fields.clear()
            self._fields[key] = got
        return got


def accumulate_dose(
    dose: DoseGrid,
    grid: OccupancyGrid,
    pose: Pose2D,
    lamps: LampArray,
    lamp_on: bool,
    dt: float,
    cache: IrradianceCache | None = None,
) -> DoseGrid:
    """Add ``irradiance * dt`` from every lamp to every irradiable cell.

    With the lamps off the grid is returned unchanged. Doses never
    decrease; accumulation over dt then dt' equals one pass over dt + dt'
    for a stationary robot.
    """
    if dt <= 0:
        raise ValueError(f"dt must be > 0, got {dt}")
    if not lamp_on:
        return dose
    for lamp in lamps.world_positions(pose):
        if cache is not None:
            e = cache.field(lamp, lamps.uvc_power_w)
        else:
            e = irradiance_field(grid, lamp, lamps.uvc_power_w)
        dose.values += e * dt
    return dose


def log_reduction(dose: float, d90: float) -> float:
    """Log10 pathogen reduction for a delivered dose: one log per D90."""
    if d90 <= 0:
        raise ValueError(f"d90 must be > 0, got {d90}")
    return dose / d90


def dwell_time_for_dose(
    required_dose: float, distance: float, uvc_power_w: float
) -> float:
    """Seconds of exposure needed to deliver ``required_dose`` at
    ``distance`` from one unoccluded lamp."""
    if required_dose < 0:
        raise ValueError("required_dose must be >= 0")
    if distance <= 0 or uvc_power_w <= 0:
        raise ValueError("distance and uvc_power_w must be > 0")
    r = max(distance, R_MIN)
    return required_dose * 4.0 * math.pi * r * r / uvc_power_w


# ----------------------------------------------------------------------
# Pose planning (greedy set cover)
# ----------------------------------------------------------------------

@dataclass(frozen=True)
class PlannedPose:
    pose: Pose2D
    dwell: float                      # s
    covers: tuple[tuple[int, int], ...]  # target cells brought to dose here


@dataclass(frozen=True)
class DisinfectionPlan:
    poses: tuple[PlannedPose, ...]
    covered: tuple[tuple[int, int], ...]
    uncoverable: tuple[tuple[int, int], ...]  # occluded from every candidate

    @property
    def total_dwell(self) -> float:
        return sum(p.dwell for p in self.poses)


def candidate_poses(
    grid: OccupancyGrid,
    candidate_spacing: float,
    clearance_radius: float,
) -> list[tuple[float, float]]:
    """Grid of candidate stand positions over collision-free space."""
    inflated = inflate(grid, clearance_radius)
    stride = max(1, round(candidate_spacing / grid.resolution))
    out = []
    for iy in range(stride // 2, grid.height, stride):
        for ix in range(stride // 2, grid.width, stride):
            if inflated.cells[iy, ix] == FREE:
                out.append(grid.cell_to_world(ix, iy))
    return out


def plan_disinfection_poses(
    grid: OccupancyGrid,
    target: DisinfectionTarget,
    lamps: LampArray,
    candidate_spacing: float = 0.5,
    clearance_radius: float = 0.4,
    cutoff: float = DOSE_CUTOFF_DEFAULT,
) -> DisinfectionPlan:
    """Greedy set cover over candidate stand poses.

    Each round picks the pose with the best coverage rate: candidate dwell
    options are the per-cell dwells sorted ascending, and the pose covering
    the most still-uncovered cells per second of dwell wins. Cells no
    candidate can see at all are reported separately as uncoverable.
    """
    positions = candidate_poses(grid, candidate_spacing, clearance_radius)
    if not positions:
        raise NoReachablePoseError("no collision-free candidate pose on this map")

    cells = list(target.cells)
    centers = [grid.cell_to_world(ix, iy) for ix, iy in cells]

    # orientation: face the nearest target cell so the forward-mounted
    # lamps actually point at the work
    poses = []
    for px, py in positions:
        nearest = min(centers, key=lambda c: (c[0] - px) ** 2 + (c[1] - py) ** 2)
        theta = math.atan2(nearest[1] - py, nearest[0] - px)
        poses.append(Pose2D(px, py, theta))

    # combined irradiance matrix: candidates x target cells
    cxs = np.array([c[0] for c in centers])
    cys = np.array([c[1] for c in centers])
    e = np.zeros((len(poses), len(cells)), dtype=np.float64)
    for ci, pose in enumerate(poses):
        for lamp in lamps.world_positions(pose):
            r = np.hypot(cxs - lamp[0], cys - lamp[1])
            clear = segments_clear(grid, lamp, cxs, cys)
            rr = np.maximum(r, R_MIN)
            e[ci] += np.where(
                clear & (r <= cutoff), lamps.uvc_power_w / (4.0 * math.pi * rr**2), 0.0
            )

    visible_any = e.max(axis=0) > 0.0
    uncoverable = tuple(cells[i] for i in range(len(cells)) if not visible_any[i])
    uncovered = [i for i in range(len(cells)) if visible_any[i]]

    chosen: list[PlannedPose] = []
    while uncovered:
        best = None  # (rate, -count, candidate index, dwell, covered ids)
        for ci in range(len(poses)):
            ee = e[ci, uncovered]
            vis = ee > 0.0
            if not vis.any():
                continue
            dwells = target.required_dose / ee[vis]
            ids = np.array(uncovered)[vis]
            order = np.argsort(dwells, kind="stable")
            dwells = dwells[order]
            ids = ids[order]
            ks = np.arange(1, dwells.size + 1)
            rates = ks / dwells
            k_best = int(np.argmax(rates))
            cand = (
                float(rates[k_best]),
                k_best + 1,
                -ci,
                float(dwells[k_best]),
                ids[: k_best + 1],
            )
            if best is None or cand[:3] > best[:3]:
                best = cand
        if best is None:
            break  # remaining cells visible in principle but zero-rate; give up
        _, _, neg_ci, dwell, ids = best
        ci = -neg_ci
        chosen.append(
            PlannedPose(poses[ci], dwell, tuple(cells[i] for i in ids))
        )
        covered_set = set(int(i) for i in ids)
        uncovered = [i for i in uncovered if i not in covered_set]

    covered = tuple(c for p in chosen for c in p.covers)
    return DisinfectionPlan(tuple(chosen), covered, uncoverable)


@dataclass(frozen=True)
class CoverageReport:
    covered_fraction: float
    min_dose: float
    mean_dose: float
    required_dose: float
    target_count: int
    uncoverable: tuple[tuple[int, int], ...] = ()

    def to_dict(self) -> dict:
        return {
            "covered_fraction": self.covered_fraction,
            "min_dose": self.min_dose,
            "mean_dose": self.mean_dose,
            "required_dose": self.required_dose,
            "target_count": self.target_count,
            "uncoverable": [list(c) for c in self.uncoverable],
        }


def coverage_report(
    dose: DoseGrid,
    target: DisinfectionTarget,
    uncoverable: tuple[tuple[int, int], ...] = (),
) -> CoverageReport:
    """Fraction of target cells at or above the required dose, plus dose
    statistics over the target set. ``uncoverable`` (from the planner) is
    echoed for the report consumer."""
    doses = np.array([dose.dose_at_cell(ix, iy) for ix, iy in target.cells])
    covered = int((doses >= target.required_dose).sum())
    return CoverageReport(
        covered_fraction=covered / len(target.cells),
        min_dose=float(doses.min()),
        mean_dose=float(doses.mean()),
        required_dose=target.required_dose,
        target_count=len(target.cells),
        uncoverable=tuple(uncoverable),
    )


# ----------------------------------------------------------------------
# Safety interlock
# ----------------------------------------------------------------------

class LampInterlock:
    """Connection-loss interlock for the lamp bank.

    The lamps are live only while a session is connected with a fresh
    heartbeat. Any outage latches them off; only a fresh lamp-on request
    (a False -> True edge while healthy) clears the latch, so a reconnect
    alone never relights the lamps.
    """

    def __init__(self, heartbeat_timeout: float = 3.0):
        self.heartbeat_timeout = heartbeat_timeout
        self._latched_off = False
        self._last_request = False

    def tick(
        self,
        session_connected: bool,
        last_heartbeat_age: float,
        lamp_requested: bool,
    ) -> bool:
        healthy = session_connected and last_heartbeat_age < self.heartbeat_timeout
        if not healthy:
            self._latched_off = True
            self._last_request = lamp_requested
            return False
        if lamp_requested and not self._last_request:
            self._latched_off = False
        self._last_request = lamp_requested
        return lamp_requested and not self._latched_off
