"""Command-line entry point: headless runs, the teleoperation service,
and disinfection pose planning.

Exit codes: 0 ok, 2 config error, 3 collision, 4 planner failure.
"""

from __future__ import annotations

import argparse
import asyncio
import json
import logging
import os
import sys
from pathlib import Path

import yaml

from .disinfection import NoReachablePoseError, plan_disinfection_poses
from .geometry import Pose2D
from .navigation import AutonomyLevel
from .scenario import (
    EXIT_CONFIG,
    EXIT_OK,
    EXIT_PLANNER,
    ScenarioError,
    Scenario,
    load_scenario,
    parse_target,
    run_scenario,
)
from .sim import SimConfig, Simulator
from .world import MapError, load_map_from_meta

log = logging.getLogger("uvcsim")


def _setup_logging() -> None:
    level = os.environ.get("UVCSIM_LOG", "info").upper()
    logging.basicConfig(
        level=getattr(logging, level, logging.INFO),
        format="%(asctime)s %(name)s %(levelname)s %(message)s",
    )


def cmd_run(args) -> int:
    try:
        scenario = load_scenario(args.scenario)
    except ScenarioError as exc:
        print(f"scenario error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (OSError, MapError) as exc:
        print(f"cannot load scenario inputs: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    report = run_scenario(scenario, args.out)
    print(json.dumps(report.to_dict(), indent=2))
    return report.exit_code


def cmd_serve(args) -> int:
    try:
        grid = load_map_from_meta(args.map)
    except (OSError, MapError) as exc:
        print(f"cannot load map: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    start = Pose2D(args.start_x, args.start_y, args.start_theta)
    sim = Simulator(
        grid,
        start,
        config=SimConfig(heartbeat_timeout=args.heartbeat_timeout),
        autonomy=AutonomyLevel.MANUAL,
        seed=args.seed,
    )

    async def main() -> int:
        from .protocol.robot_link import RobotLink
        from .protocol.server import RelayServer

        try:
            server = await RelayServer(
                host=args.host,
                port=args.port,
                heartbeat_timeout=args.heartbeat_timeout,
                close_timeout=args.close_timeout,
            ).start()
        except OSError as exc:
            print(f"cannot listen on port {args.port}: {exc}", file=sys.stderr)
            return EXIT_CONFIG
        url = f"ws://{args.host}:{server.port}"
        print(f"relay listening on {url} (robot id: {args.id})", flush=True)
        link = RobotLink(
            url + "/ws/robot", args.id, sim, close_timeout=args.close_timeout
        )
        try:
            await link.run(real_time=True)
        except (KeyboardInterrupt, asyncio.CancelledError):
            pass
        finally:
            await server.stop()
        return EXIT_OK

    try:
        return asyncio.run(main())
    except KeyboardInterrupt:
        return EXIT_OK


def cmd_plan(args) -> int:
    try:
        grid = load_map_from_meta(args.map)
        raw = yaml.safe_load(Path(args.targets).read_text())
        if not isinstance(raw, dict):
            raise ScenarioError(f"{args.targets}: targets file must be a mapping")
        target = parse_target(raw, grid, str(args.targets))
    except (OSError, MapError, ScenarioError, ValueError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG

    from .disinfection import LampArray

    lamps = LampArray()
    try:
        plan = plan_disinfection_poses(
            grid, target, lamps, candidate_spacing=args.spacing
        )
    except NoReachablePoseError as exc:
        print(f"planner failure: {exc}", file=sys.stderr)
        return EXIT_PLANNER

    for i, p in enumerate(plan.poses):
        print(
            f"pose {i}: x={p.pose.x:.3f} y={p.pose.y:.3f} theta={p.pose.theta:.3f} "
            f"dwell={p.dwell:.1f}s covers={len(p.covers)} cells"
        )
    print(f"total poses: {len(plan.poses)}, total dwell: {plan.total_dwell:.1f}s")
    if plan.uncoverable:
        print(f"uncoverable cells (occluded from all reachable poses): "
              f"{[list(c) for c in plan.uncoverable]}")
    if not plan.poses:
        print("no pose can irradiate any target cell", file=sys.stderr)
        return EXIT_PLANNER

    if args.execute:
        scenario = Scenario(
            map_meta=Path(args.map),
            start=Pose2D(args.start_x, args.start_y, args.start_theta),
            seed=args.seed,
            target=target,
        )
        report = run_scenario(scenario, args.out, plan=plan, execute_plan_first=True)
        print(json.dumps(report.to_dict(), indent=2))
        return report.exit_code
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="uvcsim",
        description="2D disinfection-robot simulator, planner, and teleoperation service",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p_run = sub.add_parser("run", help="run a scenario headless")
    p_run.add_argument("scenario", help="scenario YAML file")
    p_run.add_argument("--out", default="out", help="output directory")
    p_run.set_defaults(func=cmd_run)

    p_serve = sub.add_parser("serve", help="start the relay with one simulated robot")
    p_serve.add_argument("--port", type=int, default=8765)
    p_serve.add_argument("--host", default="127.0.0.1")
    p_serve.add_argument("--map", required=True, help="map metadata YAML")
    p_serve.add_argument("--id", default="uvcbot", help="robot peer id")
    p_serve.add_argument("--start-x", type=float, default=1.0)
    p_serve.add_argument("--start-y", type=float, default=1.0)
    p_serve.add_argument("--start-theta", type=float, default=0.0)
    p_serve.add_argument("--seed", type=int, default=0)
    p_serve.add_argument("--heartbeat-timeout", type=float, default=3.0)
    p_serve.add_argument("--close-timeout", type=float, default=15.0)
    p_serve.set_defaults(func=cmd_serve)

    p_plan = sub.add_parser("plan", help="plan disinfection poses for a target set")
    p_plan.add_argument("--map", required=True, help="map metadata YAML")
    p_plan.add_argument("--targets", required=True, help="targets YAML")
    p_plan.add_argument("--spacing", type=float, default=0.5)
    p_plan.add_argument("--execute", action="store_true", help="run the plan headless")
    p_plan.add_argument("--out", default="out", help="output directory for --execute")
    p_plan.add_argument("--start-x", type=float, default=1.0)
    p_plan.add_argument("--start-y", type=float, default=1.0)
    p_plan.add_argument("--start-theta", type=float, default=0.0)
    p_plan.add_argument("--seed", type=int, default=0)
    p_plan.set_defaults(func=cmd_plan)
    return parser


def main(argv=None) -> int:
    _setup_logging()
    args = build_parser().parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
