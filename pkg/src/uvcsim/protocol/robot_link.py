"""Robot-side session endpoint: binds a Simulator to the relay.

Registers under a known id, waits for a client, translates command
envelopes into simulator commands, and publishes telemetry. Scan frames
are decimated to 90 beams at 5 Hz to bound bandwidth; one full-resolution
scan is available on demand via /cmd/request_scan. The client heartbeat
age feeds the simulator's lamp interlock and motion watchdog.
"""

from __future__ import annotations

import asyncio
import base64
import logging
import time

import numpy as np

from websockets.asyncio.client import connect
from websockets.exceptions import ConnectionClosed

from ..navigation import AutonomyLevel
from ..sim import Simulator
from ..world import FREE, OCCUPIED
from .messages import (
    HEARTBEAT_INTERVAL,
    Envelope,
    decode_frame,
    encode_frame,
)

log = logging.getLogger("uvcsim.robot")

SCAN_PERIOD = 0.2        # 5 Hz
SCAN_BEAMS_WIRE = 90
POSE_PERIOD = 0.1        # 10 Hz
SLOW_PERIOD = 1.0        # battery, dose, dose_map


def encode_map(grid) -> dict:
    """Map raster for the console: 0 free, 1 occupied, 2 unknown, base64
    row-major from the minimum-y row."""
    raw = np.where(grid.cells == FREE, 0, np.where(grid.cells == OCCUPIED, 1, 2))
    return {
        "width": grid.width,
        "height": grid.height,
        "resolution": grid.resolution,
        "origin": {"x": grid.origin.x, "y": grid.origin.y, "theta": grid.origin.theta},
        "cells": base64.b64encode(raw.astype(np.uint8).tobytes()).decode("ascii"),
    }


def encode_dose_map(sim: Simulator, required_dose: float, max_side: int = 96) -> dict:
    """Coarse dose heatmap, normalized so required_dose saturates to 255."""
    values = sim.dose.values
    h, w = values.shape
    stride = max(1, (max(h, w) + max_side - 1) // max_side)
    coarse = values[::stride, ::stride]
    norm = np.clip(coarse / required_dose, 0.0, 1.0) * 255.0
    return {
        "width": coarse.shape[1],
        "height": coarse.shape[0],
        "stride": stride,
        "data": base64.b64encode(norm.astype(np.uint8).tobytes()).decode("ascii"),
    }


class RobotLink:
    """One robot's connection to the relay plus its telemetry scheduler."""

    def __init__(
        self,
        url: str,
        robot_id: str,
        sim: Simulator,
        *,
        required_dose: float = 100.0,
        close_timeout: float = 15.0,
        clock=time.monotonic,
    ):
        self.url = url
        self.robot_id = robot_id
        self.sim = sim
        self.required_dose = required_dose
        self.close_timeout = close_timeout
        self.clock = clock
        self.paired = False
        self.last_client_hb = float("-inf")
        self._seq = 0
        self._ws = None
        self._full_scan_wanted = False
        self._last_sent: dict[str, float] = {}
        sim.link_state = self._link_state

    def _link_state(self) -> tuple[bool, float]:
        age = self.clock() - self.last_client_hb if self.paired else float("inf")
        return self.paired, age

    # -- outbound ----------------------------------------------------------

    def _envelope(self, topic: str, payload: dict) -> dict:
        self._seq += 1
        return Envelope(topic, self._seq, self.sim.sim_time, payload).to_frame()

    async def _send(self, topic: str, payload: dict) -> None:
        if self._ws is None or not self.paired:
            return
        try:
            await self._ws.send(encode_frame(self._envelope(topic, payload)))
        except ConnectionClosed:
            self.paired = False

    async def _publish_periodic(self) -> None:
        now = self.sim.sim_time
        state = self.sim.state

        def due(topic: str, period: float) -> bool:
            last = self._last_sent.get(topic)
            if last is None or now - last >= period - 1e-9:
                self._last_sent[topic] = now
                return True
            return False

        if due("/telemetry/pose", POSE_PERIOD):
            p = state.pose
            await self._send("/telemetry/pose", {"x": p.x, "y": p.y, "theta": p.theta})
        scan = self.sim.scan
        if scan is not None and due("/telemetry/scan", SCAN_PERIOD):
            stride = max(1, scan.ranges.size // SCAN_BEAMS_WIRE)
            await self._send(
                "/telemetry/scan",
                {
                    "angle_min": scan.angle_min,
                    "increment": scan.angle_increment * stride,
                    "ranges": [round(float(r), 4) for r in scan.ranges[::stride]],
                    "range_max": scan.range_max,
                },
            )
        if scan is not None and self._full_scan_wanted:
            self._full_scan_wanted = False
            await self._send(
                "/telemetry/scan_full",
                {
                    "angle_min": scan.angle_min,
                    "increment": scan.angle_increment,
                    "ranges": [round(float(r), 4) for r in scan.ranges],
                    "range_max": scan.range_max,
                },
            )
        if due("/telemetry/battery", SLOW_PERIOD):
            await self._send(
                "/telemetry/battery",
                {"wh": state.battery_wh, "fraction": self.sim.battery_fraction},
            )
        if due("/telemetry/dose", SLOW_PERIOD):
            values = self.sim.dose.values
            lit = values[values > 0.0]
            await self._send(
                "/telemetry/dose",
                {
                    "covered_fraction": float((values >= self.required_dose).mean()),
                    "min": float(lit.min()) if lit.size else 0.0,
                    "mean": float(lit.mean()) if lit.size else 0.0,
                },
            )
        if due("/telemetry/dose_map", SLOW_PERIOD):
            await self._send(
                "/telemetry/dose_map", encode_dose_map(self.sim, self.required_dose)
            )

    async def _publish_events(self, events) -> None:
        for topic, payload in events:
            await self._send(topic, payload)

    async def _on_paired(self) -> None:
        self.paired = True
        self.last_client_hb = self.clock()
        self._last_sent.clear()
        await self._send("/telemetry/map", encode_map(self.sim.grid))
        await self._send("/telemetry/mode", {"level": self.sim.autonomy.value})
        await self._send(
            "/telemetry/lamp",
            {"on": self.sim.lamp_on, "forced_off": self.sim.lamp_forced_off},
        )

    # -- inbound -----------------------------------------------------------

    def _handle_command(self, env: Envelope) -> None:
        sim = self.sim
        topic, p = env.topic, env.payload
        if topic == "/cmd/heartbeat":
            self.last_client_hb = self.clock()
        elif topic == "/cmd/vel":
            sim.command_velocity(p["v"], p["w"])
        elif topic == "/cmd/manual_target":
            sim.command_manual_target(p["x"], p["y"])
        elif topic == "/cmd/goal":
            sim.command_goal(p["x"], p["y"])
        elif topic == "/cmd/autonomy":
            try:
                sim.request_autonomy(AutonomyLevel.parse(p["level"]))
            except ValueError as exc:
                log.warning("bad autonomy level: %s", exc)
        elif topic == "/cmd/lamp":
            sim.request_lamp(p["on"])
        elif topic == "/cmd/request_scan":
            self._full_scan_wanted = True
        else:
            log.warning("unhandled command topic %s", topic)
        # any valid command proves the client is alive
        if topic != "/cmd/heartbeat":
            self.last_client_hb = self.clock()

    async def _receiver(self) -> None:
        async for raw in self._ws:
            try:
                frame = decode_frame(raw)
            except Exception as exc:
                log.warning("bad frame: %s", exc)
                continue
            kind = frame.get("type")
            if kind == "paired":
                await self._on_paired()
            elif kind == "data":
                try:
                    self._handle_command(Envelope.from_frame(frame))
                except Exception as exc:
                    log.warning("bad envelope: %s", exc)
            elif kind == "error":
                code = frame.get("code")
                if code == "SessionClosed":
                    self.paired = False
                log.warning("relay error: %s", frame)

    # -- main loop -----------------------------------------------------------

    async def run(self, *, real_time: bool = True, stop: asyncio.Event | None = None):
        """Register, then tick the simulator until ``stop`` is set.

        In real-time mode ticks are paced to the wall clock; otherwise the
        loop free-runs (useful for tests).
        """
        async with connect(self.url) as ws:
            self._ws = ws
            await ws.send(encode_frame({"type": "register", "id": self.robot_id}))
            receiver = asyncio.create_task(self._receiver())
            keepalive = asyncio.create_task(self._keepalive_loop())
            tick = self.sim.config.tick
            next_tick = self.clock()
            try:
                while stop is None or not stop.is_set():
                    if real_time:
                        delay = next_tick - self.clock()
                        if delay > 0:
                            await asyncio.sleep(delay)
                        next_tick += tick
                    else:
                        await asyncio.sleep(0)
                    events = self.sim.tick()
                    await self._publish_events(events)
                    await self._publish_periodic()
                    if self.paired and self.clock() - self.last_client_hb > self.close_timeout:
                        self.paired = False  # session closed; wait for a new pairing
                    if receiver.done():
                        break
            finally:
                receiver.cancel()
                keepalive.cancel()
                self._ws = None

    async def _keepalive_loop(self) -> None:
        """Refresh the registration while no client is paired."""
        while True:
            await asyncio.sleep(HEARTBEAT_INTERVAL)
            if not self.paired and self._ws is not None:
                try:
                    await self._ws.send(encode_frame({"type": "keepalive"}))
                except ConnectionClosed:
                    return
