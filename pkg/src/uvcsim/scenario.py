"""Scenario files and the headless runner.

A scenario is a YAML document naming a map, a start pose, configuration
blocks, an optional disinfection target, and a script of timed commands.
Runs are deterministic given the seed: the same scenario produces a
byte-identical pose trace. Every run writes a dose heatmap PGM, a
coverage JSON, a pose trace CSV, and a summary JSON into the output
directory.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import yaml

from .disinfection import (
    DisinfectionPlan,
    DisinfectionTarget,
    LampArray,
    coverage_report,
    plan_disinfection_poses,
)
from .geometry import Pose2D
from .navigation import AssistParams, AutonomyLevel
from .robot import BatteryParams, LidarParams
from .sim import SimConfig, Simulator
from .world import OccupancyGrid, load_map_from_meta, write_pgm

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_COLLISION = 3
EXIT_PLANNER = 4


class ScenarioError(ValueError):
    """Scenario file rejected; the message carries location context."""


@dataclass
class ScriptCommand:
    t: float
    kind: str
    args: dict


@dataclass
class Scenario:
    map_meta: Path
    start: Pose2D
    seed: int = 0
    duration: float | None = None
    autonomy: AutonomyLevel = AutonomyLevel.MANUAL
    lamps: LampArray = field(default_factory=LampArray)
    assist: AssistParams = field(default_factory=AssistParams)
    battery: BatteryParams = field(default_factory=BatteryParams)
    lidar: LidarParams = field(default_factory=LidarParams)
    lidar_enabled: bool = True
    script: list[ScriptCommand] = field(default_factory=list)
    target: DisinfectionTarget | None = None

    def load_grid(self) -> OccupancyGrid:
        return load_map_from_meta(self.map_meta)


_SCRIPT_KINDS = {
    "vel": ("v", "w"),
    "target": ("x", "y"),
    "goal": ("x", "y"),
    "autonomy": ("level",),
    "lamp": ("on",),
    "wait": (),
}


def _need(mapping: dict, key: str, where: str):
    if key not in mapping:
        raise ScenarioError(f"{where}: missing required field '{key}'")
    return mapping[key]


def parse_target(raw: dict, grid: OccupancyGrid, where: str = "targets") -> DisinfectionTarget:
    cells: list[tuple[int, int]] = []
    if "cells" in raw:
        for c in raw["cells"]:
            if not isinstance(c, (list, tuple)) or len(c) != 2:
                raise ScenarioError(f"{where}: cells entries must be [ix, iy]")
            cells.append((int(c[0]), int(c[1])))
    for rect in raw.get("rects", []):
        if not isinstance(rect, (list, tuple)) or len(rect) != 4:
            raise ScenarioError(f"{where}: rects entries must be [x0, y0, x1, y1] meters")
        x0, y0, x1, y1 = map(float, rect)
        ix0, iy0 = grid.world_to_cell(min(x0, x1), min(y0, y1))
        ix1, iy1 = grid.world_to_cell(max(x0, x1), max(y0, y1))
        for iy in range(max(iy0, 0), min(iy1, grid.height - 1) + 1):
            for ix in range(max(ix0, 0), min(ix1, grid.width - 1) + 1):
                cells.append((ix, iy))
    if not cells:
        raise ScenarioError(f"{where}: no target cells given (need 'cells' or 'rects')")
    seen = set()
    unique = [c for c in cells if not (c in seen or seen.add(c))]
    if "required_dose" in raw:
        return DisinfectionTarget(tuple(unique), float(raw["required_dose"]))
    if "required_log_reduction" in raw:
        d90 = _need(raw, "d90", where)
        return DisinfectionTarget.from_log_reduction(
            unique, float(raw["required_log_reduction"]), float(d90)
        )
    raise ScenarioError(
        f"{where}: need 'required_dose' or 'required_log_reduction' with 'd90'"
    )


def load_scenario(path: str | Path) -> Scenario:
    path = Path(path)
    try:
        raw = yaml.safe_load(path.read_text())
    except yaml.YAMLError as exc:
        mark = getattr(exc, "problem_mark", None)
        where = f"{path}:{mark.line + 1}" if mark else str(path)
        raise ScenarioError(f"{where}: {getattr(exc, 'problem', exc)}") from exc
    if not isinstance(raw, dict):
        raise ScenarioError(f"{path}: scenario must be a mapping")

    meta_rel = _need(raw, "map", str(path))
    map_meta = (path.parent / meta_rel).resolve()
    if not map_meta.exists():
        raise ScenarioError(f"{path}: map metadata file {map_meta} does not exist")

    start_raw = _need(raw, "start", str(path))
    try:
        start = Pose2D(
            float(start_raw["x"]), float(start_raw["y"]), float(start_raw.get("theta", 0.0))
        )
    except (TypeError, KeyError, ValueError) as exc:
        raise ScenarioError(f"{path}: start must map x, y[, theta] to numbers") from exc

    scenario = Scenario(map_meta=map_meta, start=start, seed=int(raw.get("seed", 0)))
    if "duration" in raw:
        scenario.duration = float(raw["duration"])
    if "autonomy" in raw:
        try:
            scenario.autonomy = AutonomyLevel.parse(raw["autonomy"])
        except ValueError as exc:
            raise ScenarioError(f"{path}: {exc}") from exc
    if "lamps" in raw:
        scenario.lamps = LampArray(
            lamp_count=int(raw["lamps"].get("count", 4)),
            uvc_power_w=float(raw["lamps"].get("uvc_power_w", 4.5)),
            electrical_power_w=float(raw["lamps"].get("electrical_power_w", 16.7)),
            mount_radius=float(raw["lamps"].get("mount_radius", 0.15)),
        )
    if "assist" in raw:
        a = raw["assist"]
        scenario.assist = AssistParams(
            d_stop=float(a.get("d_stop", 0.35)),
            d_slow=float(a.get("d_slow", 1.0)),
            cone_half_angle=math.radians(float(a.get("cone_half_angle_deg", 30.0))),
            d_influence=float(a.get("d_influence", 1.2)),
            k_steer=float(a.get("k_steer", 0.8)),
        )
    if "battery" in raw:
        b = raw["battery"]
        scenario.battery = BatteryParams(
            capacity_wh=float(b.get("capacity_wh", 120.0)),
            base_load_w=float(b.get("base_load_w", 40.0)),
            lamp_load_w=float(b.get("lamp_load_w", 66.8)),
        )
    if "lidar" in raw:
        li = raw["lidar"]
        scenario.lidar = LidarParams(
            beam_count=int(li.get("beam_count", 360)),
            range_max=float(li.get("range_max", 10.0)),
            noise_sigma=float(li.get("noise_sigma", LidarParams().noise_sigma)),
        )
        scenario.lidar_enabled = bool(li.get("enabled", True))

    last_t = 0.0
    for i, entry in enumerate(raw.get("script", [])):
        where = f"{path}: script[{i}]"
        if not isinstance(entry, dict):
            raise ScenarioError(f"{where}: each step must be a mapping")
        # YAML 1.1 reads a bare `on:` key as boolean True; map it back
        entry = {("on" if k is True else k): v for k, v in entry.items()}
        t = float(_need(entry, "t", where))
        kind = str(_need(entry, "cmd", where))
        if kind not in _SCRIPT_KINDS:
            raise ScenarioError(
                f"{where}: unknown command '{kind}' (one of {sorted(_SCRIPT_KINDS)})"
            )
        if t < last_t:
            raise ScenarioError(f"{where}: timestamps must be non-decreasing")
        last_t = t
        args = {}
        for name in _SCRIPT_KINDS[kind]:
            args[name] = _need(entry, name, where)
        scenario.script.append(ScriptCommand(t, kind, args))

    if "targets" in raw:
        grid = scenario.load_grid()
        scenario.target = parse_target(raw["targets"], grid, f"{path}: targets")
    return scenario


def build_simulator(scenario: Scenario, grid: OccupancyGrid | None = None) -> Simulator:
    grid = grid if grid is not None else scenario.load_grid()
    config = SimConfig(
        lidar=scenario.lidar,
        lidar_enabled=scenario.lidar_enabled,
        battery=scenario.battery,
    )
    return Simulator(
        grid,
        scenario.start,
        lamps=scenario.lamps,
        config=config,
        assist=scenario.assist,
        autonomy=scenario.autonomy,
        seed=scenario.seed,
    )


def _apply_script_command(sim: Simulator, cmd: ScriptCommand) -> None:
    if cmd.kind == "vel":
        sim.command_velocity(float(cmd.args["v"]), float(cmd.args["w"]))
    elif cmd.kind == "target":
        sim.command_manual_target(float(cmd.args["x"]), float(cmd.args["y"]))
    elif cmd.kind == "goal":
        sim.command_goal(float(cmd.args["x"]), float(cmd.args["y"]))
    elif cmd.kind == "autonomy":
        sim.request_autonomy(str(cmd.args["level"]))
    elif cmd.kind == "lamp":
        sim.request_lamp(bool(cmd.args["on"]))
    # "wait" schedules nothing; its timestamp extends the run


@dataclass
class RunReport:
    exit_code: int
    sim_time: float
    collided: bool
    battery_wh: float
    coverage: dict | None
    outputs: dict

    def to_dict(self) -> dict:
        return {
            "exit_code": self.exit_code,
            "sim_time": self.sim_time,
            "collided": self.collided,
            "battery_wh": self.battery_wh,
            "coverage": self.coverage,
            "outputs": self.outputs,
        }


def write_dose_heatmap(path: Path, sim: Simulator, required_dose: float) -> None:
    """Grayscale dose map: values at or above the required dose clamp to
    white; unirradiated cells are black."""
    norm = np.clip(sim.dose.values / required_dose, 0.0, 1.0) * 255.0
    write_pgm(path, np.flipud(norm.astype(np.uint8)))  # image row 0 = top


def run_scenario(
    scenario: Scenario,
    out_dir: str | Path,
    *,
    plan: DisinfectionPlan | None = None,
    execute_plan_first: bool = False,
) -> RunReport:
    """Execute a scenario headless, as fast as the host allows.

    Fails fast on collision (exit 3). With ``execute_plan_first`` a
    disinfection plan is computed and executed before the timed script.
    """
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    grid = scenario.load_grid()
    sim = build_simulator(scenario, grid)

    trace_path = out_dir / "trace.csv"
    dose_path = out_dir / "dose.pgm"
    coverage_path = out_dir / "coverage.json"
    summary_path = out_dir / "summary.json"

    uncoverable: tuple = ()
    planner_failed = False
    trace_rows = ["t,x,y,theta,v,w,mode,lamp"]

    def record():
        p, tw = sim.pose, sim.state.twist
        trace_rows.append(
            f"{sim.sim_time:.2f},{p.x:.6f},{p.y:.6f},{p.theta:.6f},"
            f"{tw.v:.6f},{tw.w:.6f},{sim.autonomy.value},{int(sim.lamp_on)}"
        )

    if execute_plan_first:
        if scenario.target is None:
            raise ScenarioError("scenario has no targets to plan for")
        if plan is None:
            plan = plan_disinfection_poses(grid, scenario.target, scenario.lamps)
        uncoverable = plan.uncoverable
        ok = execute_plan(sim, plan, scenario.target, on_tick=record)
        planner_failed = not ok
    elif plan is not None:
        uncoverable = plan.uncoverable

    script = sorted(scenario.script, key=lambda c: c.t)
    end_time = scenario.duration
    if end_time is None:
        end_time = script[-1].t if script else 0.0
    base_time = sim.sim_time  # plan execution may already have advanced it

    i = 0
    while sim.sim_time - base_time <= end_time + 1e-9:
        rel = sim.sim_time - base_time
        while i < len(script) and script[i].t <= rel + 1e-9:
            _apply_script_command(sim, script[i])
            i += 1
        if rel >= end_time and i >= len(script):
            break
        record()
        sim.tick()
        if sim.collided:
            break
    record()

    coverage = None
    if scenario.target is not None:
        report = coverage_report(sim.dose, scenario.target, uncoverable)
        coverage = report.to_dict()
        if plan is not None:
            coverage["plan"] = [
                {
                    "x": p.pose.x,
                    "y": p.pose.y,
                    "theta": p.pose.theta,
                    "dwell": p.dwell,
                    "covers": [list(c) for c in p.covers],
                }
                for p in plan.poses
            ]
        coverage_path.write_text(json.dumps(coverage, indent=2))
        write_dose_heatmap(dose_path, sim, scenario.target.required_dose)
    else:
        coverage_path.write_text(json.dumps({"covered_fraction": None}, indent=2))
        peak = float(sim.dose.values.max())
        write_dose_heatmap(dose_path, sim, peak if peak > 0 else 1.0)

    trace_path.write_text("\n".join(trace_rows) + "\n")

    exit_code = EXIT_OK
    if sim.collided:
        exit_code = EXIT_COLLISION
    elif planner_failed:
        exit_code = EXIT_PLANNER
    report = RunReport(
        exit_code=exit_code,
        sim_time=sim.sim_time,
        collided=sim.collided,
        battery_wh=sim.battery_wh,
        coverage=coverage,
        outputs={
            "trace": str(trace_path),
            "dose_heatmap": str(dose_path),
            "coverage": str(coverage_path),
            "summary": str(summary_path),
        },
    )
    summary_path.write_text(json.dumps(report.to_dict(), indent=2))
    return report


def execute_plan(
    sim: Simulator,
    plan: DisinfectionPlan,
    target: DisinfectionTarget,
    *,
    on_tick=None,
    arrival_budget_s: float = 120.0,
    dwell_margin: float = 5.0,
) -> bool:
    """Drive to each planned pose and dwell until its claimed cells reach
    the required dose (or a generous multiple of the planned dwell passes).

    Measuring the dose instead of trusting the stopwatch absorbs the small
    irradiance differences between the planned pose and the pose actually
    reached. Returns False when any pose could not be served.
    """
    ok = True
    for planned in plan.poses:
        if not _drive_sim_to(sim, planned.pose, arrival_budget_s, on_tick):
            ok = False
            continue
        sim.request_lamp(True)
        budget = max(planned.dwell * dwell_margin, 10.0)
        spent = 0.0
        claimed = list(planned.covers)
        while spent < budget:
            sim.tick()
            spent += sim.config.tick
            if on_tick:
                on_tick()
            if all(
                sim.dose.values[iy, ix] >= target.required_dose for ix, iy in claimed
            ):
                break
        else:
            ok = False
        sim.request_lamp(False)
        sim.tick()
        if on_tick:
            on_tick()
    return ok


def _drive_sim_to(sim: Simulator, pose: Pose2D, budget_s: float, on_tick=None) -> bool:
    """Autonomous goal navigation to a planned pose, then rotate in place
    to its heading."""
    already_there = (
        math.hypot(sim.pose.x - pose.x, sim.pose.y - pose.y)
        <= sim.follow.goal_tolerance
    )
    if not already_there:
        sim.request_autonomy(AutonomyLevel.AUTONOMOUS)
        sim.tick()
        if on_tick:
            on_tick()
        sim.command_goal(pose.x, pose.y)
        sim.tick()
        if sim.goal_state == "rejected":
            return False
        spent = 0.0
        while sim.goal_state == "active" and spent < budget_s:
            sim.tick()
            spent += sim.config.tick
            if on_tick:
                on_tick()
        if sim.goal_state != "reached":
            return False
    # align to the planned heading so the forward lamp arc faces the work
    sim.request_autonomy(AutonomyLevel.MANUAL)
    sim.tick()
    if on_tick:
        on_tick()
    spent = 0.0
    aligned = False
    while spent < 30.0:
        err = _ang_diff(pose.theta, sim.pose.theta)
        if abs(err) < 0.02:
            aligned = True
            break
        sim.command_velocity(0.0, max(-1.0, min(1.0, 2.0 * err)))
        sim.tick()
        spent += sim.config.tick
        if on_tick:
            on_tick()
    sim.command_velocity(0.0, 0.0)
    sim.tick()
    if on_tick:
        on_tick()
    return aligned


def _ang_diff(a: float, b: float) -> float:
    return math.atan2(math.sin(a - b), math.cos(a - b))
