"""Fixed-timestep simulation session.

One Simulator owns one robot in one world and is advanced only by tick().
Commands arrive through a queue and take effect at the next tick boundary,
so a replay of the same queued commands at the same ticks is deterministic.
The 50 ms master tick runs kinematics, collision, battery, and dose
accounting; the LIDAR refreshes every other tick (10 Hz).
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .disinfection import (
    DoseGrid,
    IrradianceCache,
    LampArray,
    LampInterlock,
    accumulate_dose,
)
from .geometry import Pose2D
from .navigation import (
    AssistParams,
    AutonomyLevel,
    FollowParams,
    Path,
    PlanningError,
    TargetOutOfRangeError,
    assist_decelerate,
    assist_steer,
    drive_to_point,
    follow_path,
    plan_path,
)
from .robot import (
    BatteryParams,
    LaserScan,
    LidarParams,
    RobotState,
    Twist,
    check_collision,
    simulate_lidar,
    step_battery,
    step_kinematics,
)
from .world import OccupancyGrid

TICK_SECONDS = 0.05
LIDAR_PERIOD_TICKS = 2   # 10 Hz on the 20 Hz master loop
DOSE_BATCH_SECONDS = 0.25  # dose update cadence while the robot is moving


@dataclass(frozen=True)
class SimConfig:
    tick: float = TICK_SECONDS
    v_max: float = 1.0
    w_max: float = 1.5
    manual_range: float = 3.0
    lidar: LidarParams = field(default_factory=LidarParams)
    lidar_enabled: bool = True
    battery: BatteryParams = field(default_factory=BatteryParams)
    heartbeat_timeout: float = 3.0
    dose_cutoff: float = 8.0


def _always_linked() -> tuple[bool, float]:
    """Default link for headless runs: connected, heartbeat fresh."""
    return True, 0.0


class Simulator:
    """Single-robot simulation advanced in fixed 50 ms ticks.

    ``link_state`` supplies (session_connected, heartbeat_age) each tick;
    the lamp interlock and the motion watchdog act on it. Telemetry-worthy
    events (mode acks, goal status, lamp changes) are returned from tick().
    """

    def __init__(
        self,
        grid: OccupancyGrid,
        start_pose: Pose2D,
        *,
        lamps: LampArray | None = None,
        config: SimConfig | None = None,
        assist: AssistParams | None = None,
        follow: FollowParams | None = None,
        autonomy: AutonomyLevel = AutonomyLevel.MANUAL,
        link_state: Callable[[], tuple[bool, float]] = _always_linked,
        seed: int = 0,
    ):
        self.grid = grid
        self.config = config or SimConfig()
        self.lamps = lamps or LampArray()
        self.assist = assist or AssistParams()
        self.follow = follow or FollowParams(
            v_max=self.config.v_max, w_max=self.config.w_max
        )
        self.link_state = link_state
        self.state = RobotState(
            pose=start_pose,
            autonomy=autonomy,
            battery_wh=self.config.battery.capacity_wh,
        )
        self.dose = DoseGrid.for_grid(grid)
        self.interlock = LampInterlock(self.config.heartbeat_timeout)
        self.rng = np.random.default_rng(seed)
        self.sim_time = 0.0
        self.tick_count = 0
        self.scan: LaserScan | None = None
        self.collided = False
        self.lamp_forced_off = False

        self._battery = BatteryParams(
            capacity_wh=self.config.battery.capacity_wh,
            base_load_w=self.config.battery.base_load_w,
            lamp_load_w=self.lamps.total_electrical_w,
        )
        self._cache = IrradianceCache(grid, self.config.dose_cutoff)
        self._dose_pending_dt = 0.0
        self._queue: list[tuple] = []
        self._operator_twist = Twist()
        self._manual_target: tuple[float, float] | None = None  # world frame
        self._lamp_requested = False
        self._path: Path | None = None
        self._goal_state = "idle"

    # -- command intake (takes effect at the next tick boundary) --------

    def request_autonomy(self, level: AutonomyLevel | str) -> None:
        self._queue.append(("autonomy", AutonomyLevel.parse(level)))

    def request_lamp(self, on: bool) -> None:
        self._queue.append(("lamp", bool(on)))

    def command_velocity(self, v: float, w: float) -> None:
        self._queue.append(("vel", float(v), float(w)))

    def command_manual_target(self, x: float, y: float) -> None:
        """Clicked floor point, robot frame at command time."""
        self._queue.append(("target", float(x), float(y)))

    def command_goal(self, x: float, y: float) -> None:
        """Map-frame navigation goal for autonomous mode."""
        self._queue.append(("goal", float(x), float(y)))

    # -- introspection ---------------------------------------------------

    @property
    def pose(self) -> Pose2D:
        return self.state.pose

    @property
    def autonomy(self) -> AutonomyLevel:
        return self.state.autonomy

    @property
    def lamp_on(self) -> bool:
        return self.state.lamp_on

    @property
    def battery_wh(self) -> float:
        return self.state.battery_wh

    @property
    def battery_fraction(self) -> float:
        return self.state.battery_wh / self._battery.capacity_wh

    @property
    def goal_state(self) -> str:
        return self._goal_state

    # -- the tick ---------------------------------------------------------

    def _apply_commands(self, events: list) -> None:
        queue, self._queue = self._queue, []
        for cmd in queue:
            kind = cmd[0]
            if kind == "autonomy":
                level = cmd[1]
                if self.state.autonomy is AutonomyLevel.AUTONOMOUS and level is not AutonomyLevel.AUTONOMOUS:
                    if self._path is not None:
                        self._path = None
                        self._set_goal_state("aborted", events, reason="mode_change")
                    self.state.twist = Twist()
                self.state.autonomy = level
                events.append(("/telemetry/mode", {"level": level.value}))
            elif kind == "lamp":
                self._lamp_requested = cmd[1]
                self.lamp_forced_off = False
            elif kind == "vel":
                self._operator_twist = Twist(cmd[1], cmd[2]).clamped(
                    self.config.v_max, self.config.w_max
                )
                self._manual_target = None
            elif kind == "target":
                try:
                    drive_to_point((cmd[1], cmd[2]), self.follow, self.config.manual_range)
                except TargetOutOfRangeError as exc:
                    events.append(
                        ("/telemetry/goal_status", {"state": "rejected", "reason": str(exc)})
                    )
                    continue
                self._manual_target = self.state.pose.to_world(cmd[1], cmd[2])
                self._operator_twist = Twist()
            elif kind == "goal":
                self._handle_goal(cmd[1], cmd[2], events)

    def _handle_goal(self, x: float, y: float, events: list) -> None:
        if self.state.autonomy is not AutonomyLevel.AUTONOMOUS:
            self._set_goal_state("rejected", events, reason="not in autonomous mode")
            return
        try:
            self._path = plan_path(
                self.grid,
                (self.state.pose.x, self.state.pose.y),
                (x, y),
                self.state.footprint.circumradius,
            )
        except PlanningError as exc:
            self._path = None
            self._set_goal_state("rejected", events, reason=type(exc).__name__)
            return
        self._set_goal_state("active", events)

    def _set_goal_state(self, state: str, events: list, reason: str | None = None) -> None:
        self._goal_state = state
        payload = {"state": state}
        if reason:
            payload["reason"] = reason
        events.append(("/telemetry/goal_status", payload))

    def _desired_twist(self, events: list) -> Twist:
        level = self.state.autonomy
        if level is AutonomyLevel.AUTONOMOUS:
            if self._path is None:
                return Twist()
            twist, reached = follow_path(self.state.pose, self._path, self.follow)
            if reached:
                self._path = None
                self._set_goal_state("reached", events)
            elif twist.v > 0.0 and self._path_blocked():
                self._path = None
                self._set_goal_state("aborted", events, reason="path_blocked")
                return Twist()
            return twist.clamped(self.config.v_max, self.config.w_max)

        # manual family: velocity or clicked target, optionally filtered
        if self._manual_target is not None:
            local = self.state.pose.to_robot(*self._manual_target)
            try:
                raw, reached = drive_to_point(local, self.follow, self.config.manual_range)
            except TargetOutOfRangeError:
                self._manual_target = None
                return Twist()
            if reached:
                self._manual_target = None
                raw = Twist()
        else:
            raw = self._operator_twist
        raw = raw.clamped(self.config.v_max, self.config.w_max)
        if level is AutonomyLevel.MANUAL or self.scan is None:
            return raw
        if level is AutonomyLevel.ASSISTED_DECEL:
            return assist_decelerate(raw, self.scan, self.assist)
        return assist_steer(raw, self.scan, self.assist, self.config.w_max)

    def _path_blocked(self) -> bool:
        """Abort signal for autonomous mode: an obstacle inside d_stop in
        the direction of travel while a path is active."""
        if self.scan is None:
            return False
        bearings = np.mod(self.scan.bearings() + np.pi, 2.0 * np.pi) - np.pi
        ahead = np.abs(bearings) <= self.assist.cone_half_angle
        if not ahead.any():
            return False
        return float(self.scan.ranges[ahead].min()) <= self.assist.d_stop

    def tick(self) -> list[tuple[str, dict]]:
        """Advance the world one fixed step; returns telemetry events."""
        events: list[tuple[str, dict]] = []
        cfg = self.config
        self._apply_commands(events)

        connected, hb_age = self.link_state()
        link_ok = connected and hb_age < cfg.heartbeat_timeout
        if not link_ok:
            # watchdog: stop motion sources, drop stale requests
            if self._lamp_requested or self.state.lamp_on:
                self.lamp_forced_off = True
            self._operator_twist = Twist()
            self._manual_target = None
            self._lamp_requested = False
            if self._path is not None:
                self._path = None
                self._set_goal_state("aborted", events, reason="link_lost")

        lamp_before = self.state.lamp_on
        lamp_on = self.interlock.tick(connected, hb_age, self._lamp_requested)

        if self.config.lidar_enabled and self.tick_count % LIDAR_PERIOD_TICKS == 0:
            self.scan = simulate_lidar(
                self.grid,
                self.state.pose,
                cfg.lidar.beam_count,
                cfg.lidar.range_max,
                cfg.lidar.noise_sigma,
                self.rng,
                stamp=self.sim_time,
            )

        twist = self._desired_twist(events)

        if self.state.battery_wh <= 0.0:
            twist = Twist()
            lamp_on = False

        moved = False
        if twist.v != 0.0 or twist.w != 0.0:
            candidate = step_kinematics(self.state.pose, twist, cfg.tick)
            if check_collision(self.grid, candidate, self.state.footprint):
                twist = Twist()
                self.collided = True
                events.append(("/telemetry/anomaly", {"kind": "collision"}))
            else:
                self.state.pose = candidate
                moved = True

        if lamp_on != lamp_before:
            events.append(
                ("/telemetry/lamp", {"on": lamp_on, "forced_off": self.lamp_forced_off})
            )
        self.state.twist = twist
        self.state.lamp_on = lamp_on

        self.state.battery_wh = step_battery(
            self.state.battery_wh, cfg.tick, lamp_on, self._battery
        )

        # dose accounting: tick-exact while parked (fields are cached);
        # batched to DOSE_BATCH_SECONDS while sweeping, to bound the cost
        # of recomputing visibility for moving lamps
        if lamp_on:
            self._dose_pending_dt += cfg.tick
            if not moved or self._dose_pending_dt >= DOSE_BATCH_SECONDS - 1e-9:
                self._flush_dose()
        elif self._dose_pending_dt > 0.0:
            self._flush_dose()

        self.tick_count += 1
        self.sim_time = self.tick_count * cfg.tick
        return events

    def _flush_dose(self) -> None:
        if self._dose_pending_dt <= 0.0:
            return
        accumulate_dose(
            self.dose,
            self.grid,
            self.state.pose,
            self.lamps,
            True,
            self._dose_pending_dt,
            self._cache,
        )
        self._dose_pending_dt = 0.0

    def run_ticks(self, n: int) -> list[tuple[str, dict]]:
        events = []
        for _ in range(n):
            events.extend(self.tick())
        return events

    def run_for(self, seconds: float) -> list[tuple[str, dict]]:
        return self.run_ticks(max(0, round(seconds / self.config.tick)))
