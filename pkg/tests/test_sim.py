import math

import pytest

from uvcsim.geometry import Pose2D
from uvcsim.navigation import AutonomyLevel
from uvcsim.robot import BatteryParams
from uvcsim.sim import SimConfig, Simulator

from conftest import add_wall_x, empty_grid


def make_sim(grid=None, pose=Pose2D(5.0, 5.0, 0.0), **kwargs):
    return Simulator(grid if grid is not None else empty_grid(10.0, 10.0), pose, **kwargs)


class ScriptedLink:
    """Link provider the tests can flip mid-run."""

    def __init__(self):
        self.connected = True
        self.hb_age = 0.0

    def __call__(self):
        return self.connected, self.hb_age


class TestAutonomySwitching:
    def test_mode_ack_on_every_request_even_when_unchanged(self):
        sim = make_sim()
        sim.request_autonomy(AutonomyLevel.MANUAL)
        events = sim.tick()
        acks = [e for e in events if e[0] == "/telemetry/mode"]
        assert acks == [("/telemetry/mode", {"level": "manual"})]
        # no further acks without a new request
        assert not [e for e in sim.tick() if e[0] == "/telemetry/mode"]

    def test_switch_takes_effect_next_tick(self):
        sim = make_sim()
        sim.request_autonomy("assisted_decel")
        assert sim.autonomy is AutonomyLevel.MANUAL
        sim.tick()
        assert sim.autonomy is AutonomyLevel.ASSISTED_DECEL

    def test_leaving_autonomous_cancels_path_and_stops(self):
        sim = make_sim()
        sim.request_autonomy(AutonomyLevel.AUTONOMOUS)
        sim.tick()
        sim.command_goal(8.0, 5.0)
        sim.tick()
        assert sim.goal_state == "active"
        for _ in range(40):
            sim.tick()
        assert sim.state.twist.v > 0.0  # under way
        sim.request_autonomy(AutonomyLevel.MANUAL)
        events = sim.tick()
        assert sim.state.twist == type(sim.state.twist)(0.0, 0.0)
        assert sim._path is None
        status = [p for t, p in events if t == "/telemetry/goal_status"]
        assert {"state": "aborted", "reason": "mode_change"} in status

    def test_assisted_decel_blocks_forward_command_near_wall(self):
        grid = empty_grid(10.0, 10.0)
        add_wall_x(grid, 5.5, 5.6)
        sim = make_sim(grid, Pose2D(5.25, 5.0, 0.0))  # ~0.25 m from the wall
        sim.request_autonomy(AutonomyLevel.ASSISTED_DECEL)
        sim.tick()  # mode applies; scan refreshes
        sim.command_velocity(1.0, 0.0)
        sim.tick()
        assert sim.state.twist.v == 0.0

    def test_goal_rejected_outside_autonomous(self):
        sim = make_sim()
        sim.command_goal(8.0, 5.0)
        events = sim.tick()
        status = [p for t, p in events if t == "/telemetry/goal_status"]
        assert status and status[0]["state"] == "rejected"

    def test_goal_reached_end_to_end(self):
        sim = make_sim()
        sim.request_autonomy(AutonomyLevel.AUTONOMOUS)
        sim.tick()
        sim.command_goal(7.0, 5.0)
        sim.tick()
        for _ in range(20 * 60):
            if sim.goal_state == "reached":
                break
            sim.tick()
        assert sim.goal_state == "reached"
        assert math.hypot(sim.pose.x - 7.0, sim.pose.y - 5.0) <= 0.15


class TestManualDriving:
    def test_velocity_command_moves_robot(self):
        sim = make_sim()
        sim.command_velocity(0.5, 0.0)
        sim.run_ticks(20)
        assert sim.pose.x == pytest.approx(5.0 + 0.5 * 1.0, abs=1e-6)

    def test_manual_target_drive_and_arrival(self):
        sim = make_sim()
        sim.command_manual_target(1.5, 0.0)
        sim.run_for(6.0)
        assert math.hypot(sim.pose.x - 6.5, sim.pose.y - 5.0) <= 0.15
        assert sim.state.twist.v == 0.0

    def test_manual_target_beyond_range_rejected(self):
        sim = make_sim()
        sim.command_manual_target(5.0, 0.0)
        events = sim.tick()
        status = [p for t, p in events if t == "/telemetry/goal_status"]
        assert status and status[0]["state"] == "rejected"
        assert sim.state.twist.v == 0.0

    def test_collision_rejected_and_flagged(self):
        grid = empty_grid(10.0, 10.0)
        add_wall_x(grid, 5.7, 5.8)
        sim = make_sim(grid, Pose2D(5.0, 5.0, 0.0))
        sim.command_velocity(1.0, 0.0)
        sim.run_for(3.0)
        assert sim.collided
        assert sim.state.twist.v == 0.0
        # robot stopped short of overlapping the wall
        assert sim.pose.x < 5.7 - 0.62 / 2 + 0.06


class TestWatchdog:
    def test_heartbeat_loss_stops_motion_and_lamps_within_deadline(self):
        link = ScriptedLink()
        sim = make_sim(
            empty_grid(5.0, 5.0), pose=Pose2D(2.5, 2.5, 0.0), link_state=link
        )
        sim.request_lamp(True)
        sim.command_velocity(0.8, 0.2)
        sim.tick()
        assert sim.lamp_on and sim.state.twist.v > 0.0
        # client goes silent: age grows past the 3 s timeout
        ticks_to_deadline = round((3.0 + 0.05) / 0.05)
        for k in range(ticks_to_deadline + 1):
            link.hb_age = (k + 1) * 0.05
            sim.tick()
            if not sim.lamp_on and sim.state.twist.v == 0.0:
                break
        assert not sim.lamp_on
        assert sim.state.twist.v == 0.0 and sim.state.twist.w == 0.0
        assert sim.lamp_forced_off

    def test_reconnect_does_not_relight_lamp(self):
        link = ScriptedLink()
        sim = make_sim(link_state=link)
        sim.request_lamp(True)
        sim.tick()
        link.connected = False
        sim.tick()
        assert not sim.lamp_on

        link.connected = True
        link.hb_age = 0.0
        sim.run_ticks(5)
        assert not sim.lamp_on  # stays dark until a fresh request
        sim.request_lamp(True)
        sim.tick()
        assert sim.lamp_on

    def test_forced_off_flag_distinct_from_user_off(self):
        link = ScriptedLink()
        sim = make_sim(link_state=link)
        sim.request_lamp(True)
        sim.tick()
        sim.request_lamp(False)  # polite user switch-off
        sim.tick()
        assert not sim.lamp_on and not sim.lamp_forced_off
        sim.request_lamp(True)
        sim.tick()
        link.connected = False
        sim.tick()
        assert not sim.lamp_on and sim.lamp_forced_off


class TestBatteryIntegration:
    def test_flat_battery_forces_standstill_and_dark(self):
        sim = make_sim(
            config=SimConfig(
                battery=BatteryParams(capacity_wh=0.001, base_load_w=40.0),
                lidar_enabled=False,
            )
        )
        sim.request_lamp(True)
        sim.command_velocity(1.0, 0.0)
        sim.run_ticks(10)
        assert sim.battery_wh == 0.0
        assert sim.state.twist.v == 0.0
        assert not sim.lamp_on

    def test_lamp_drain_uses_lamp_array_power(self):
        sim = make_sim(config=SimConfig(lidar_enabled=False))
        sim.request_lamp(True)
        sim.tick()
        start = sim.battery_wh
        sim.run_ticks(100)  # 5 s
        drained = start - sim.battery_wh
        expect = (40.0 + 66.8) * 5.0 / 3600.0
        assert drained == pytest.approx(expect, rel=1e-6)


class TestDeterminism:
    def test_identical_runs_identical_traces(self):
        def run():
            grid = empty_grid(8.0, 8.0)
            add_wall_x(grid, 6.0, 6.1)
            sim = make_sim(grid, Pose2D(2.0, 2.0, 0.3), seed=77)
            sim.request_autonomy(AutonomyLevel.ASSISTED_STEER)
            sim.command_velocity(0.7, 0.1)
            trace = []
            for _ in range(200):
                sim.tick()
                p = sim.pose
                trace.append((p.x, p.y, p.theta, sim.state.twist.v, sim.state.twist.w))
            return trace

        assert run() == run()
