"""Websocket relay: /ws/robot for registration, /ws/client for operators.

Replaces a peer-to-peer channel with a server-side relay carrying the same
session semantics: one paired client per robot, ordered envelope delivery,
heartbeat watchdog. Each connection has a single outbound queue drained by
one sender task, so frames are always delivered in the order they were
routed, even with artificial delay injected for tests.
"""

from __future__ import annotations

import asyncio
import logging
from typing import Callable

from websockets.asyncio.server import serve
from websockets.exceptions import ConnectionClosed

from .messages import (
    BadMessageError,
    Envelope,
    ProtocolError,
    decode_frame,
    encode_frame,
)
from .session import PeerRegistry, Session, SessionState

log = logging.getLogger("uvcsim.relay")

SWEEP_PERIOD = 0.25


class _Connection:
    """One websocket with an ordered outbound queue."""

    def __init__(self, ws, delay: Callable[[], float] | None = None):
        self.ws = ws
        self.queue: asyncio.Queue = asyncio.Queue()
        self.delay = delay
        self._task = asyncio.create_task(self._drain())

    async def _drain(self):
        try:
            while True:
                frame = await self.queue.get()
                if frame is None:
                    break
                if self.delay is not None:
                    await asyncio.sleep(self.delay())
                await self.ws.send(encode_frame(frame))
        except ConnectionClosed:
            pass

    def send(self, frame: dict) -> None:
        self.queue.put_nowait(frame)

    async def close(self):
        self.queue.put_nowait(None)
        await self._task  # flush queued frames before closing the socket
        try:
            await self.ws.close()
        except ConnectionClosed:
            pass


class RelayServer:
    """Signaling plus data relay for robots and operator clients."""

    def __init__(
        self,
        host: str = "127.0.0.1",
        port: int = 8765,
        *,
        registry: PeerRegistry | None = None,
        heartbeat_timeout: float | None = None,
        close_timeout: float | None = None,
        delivery_delay: Callable[[], float] | None = None,
    ):
        kwargs = {}
        if heartbeat_timeout is not None:
            kwargs["heartbeat_timeout"] = heartbeat_timeout
        if close_timeout is not None:
            kwargs["close_timeout"] = close_timeout
        self.registry = registry or PeerRegistry(**kwargs)
        self.host = host
        self.port = port
        self.delivery_delay = delivery_delay
        self._robot_conns: dict[str, _Connection] = {}
        self._client_conns: dict[int, _Connection] = {}  # id(session) -> conn
        self._server = None
        self._sweeper: asyncio.Task | None = None

    async def start(self):
        self._server = await serve(self._handler, self.host, self.port)
        self._sweeper = asyncio.create_task(self._sweep_loop())
        sock = next(iter(self._server.sockets))
        self.port = sock.getsockname()[1]
        log.info("relay listening on ws://%s:%d", self.host, self.port)
        return self

    async def stop(self):
        if self._sweeper:
            self._sweeper.cancel()
        if self._server:
            self._server.close()
            await self._server.wait_closed()

    async def _sweep_loop(self):
        while True:
            await asyncio.sleep(SWEEP_PERIOD)
            # an open robot socket counts as a keep-alive: registration
            # expiry is for robots that silently vanished
            for robot_id in self._robot_conns:
                self.registry.touch_robot(robot_id)
            for session, state in self.registry.sweep():
                if state is SessionState.CLOSED:
                    conn = self._client_conns.pop(id(session), None)
                    if conn is not None:
                        conn.send({"type": "error", "code": "SessionClosed"})

    async def _handler(self, ws):
        path = ws.request.path
        if path.startswith("/ws/robot"):
            await self._serve_robot(ws)
        elif path.startswith("/ws/client"):
            await self._serve_client(ws)
        else:
            await ws.send(encode_frame({"type": "error", "code": "BadMessage",
                                        "detail": f"unknown path {path}"}))
            await ws.close()

    # -- robot side --------------------------------------------------------

    async def _serve_robot(self, ws):
        conn = _Connection(ws, self.delivery_delay)
        robot_id = None
        try:
            frame = decode_frame(await ws.recv())
            if frame.get("type") != "register":
                raise BadMessageError("first frame on /ws/robot must be register")
            robot_id = frame.get("id")
            self.registry.register_robot(robot_id)
            conn.send({"type": "registered", "id": robot_id})
            self._robot_conns[robot_id] = conn
            log.info("robot %s registered", robot_id)
            async for raw in ws:
                self._on_robot_frame(robot_id, raw)
        except ProtocolError as exc:
            conn.send(exc.frame())
            robot_id = None  # registration failed; do not tear it down below
        except ConnectionClosed:
            pass
        finally:
            if robot_id is not None and self._robot_conns.get(robot_id) is conn:
                del self._robot_conns[robot_id]
                record = self.registry.robots.get(robot_id)
                session = record.session if record else None
                if session is not None:
                    session.state = SessionState.CLOSED
                    client = self._client_conns.pop(id(session), None)
                    if client is not None:
                        client.send({"type": "error", "code": "SessionClosed"})
                self.registry.unregister_robot(robot_id)
                log.info("robot %s gone", robot_id)
            await conn.close()

    def _on_robot_frame(self, robot_id: str, raw) -> None:
        conn = self._robot_conns[robot_id]
        try:
            frame = decode_frame(raw)
            kind = frame.get("type")
            if kind == "keepalive":
                self.registry.touch_robot(robot_id)
                return
            if kind != "data":
                raise BadMessageError(f"unexpected frame type {kind!r} from robot")
            record = self.registry.robots.get(robot_id)
            session = record.session if record else None
            if session is None:
                self.registry.touch_robot(robot_id)
                return  # telemetry with nobody listening is dropped
            delivery = self.registry.route(session, Envelope.from_frame(frame), "robot")
            client = self._client_conns.get(id(session))
            if client is not None:
                client.send(delivery.envelope.to_frame())
                for anomaly in delivery.anomalies:
                    client.send(anomaly.to_frame())
        except ProtocolError as exc:
            conn.send(exc.frame())

    # -- client side --------------------------------------------------------

    async def _serve_client(self, ws):
        conn = _Connection(ws, self.delivery_delay)
        session: Session | None = None
        try:
            frame = decode_frame(await ws.recv())
            if frame.get("type") != "connect":
                raise BadMessageError("first frame on /ws/client must be connect")
            session = self.registry.connect_client(frame.get("robot_id"))
            self._client_conns[id(session)] = conn
            conn.send({"type": "paired", "robot_id": session.robot_id})
            robot = self._robot_conns.get(session.robot_id)
            if robot is not None:
                robot.send({"type": "paired"})
            log.info("client paired with %s", session.robot_id)
            async for raw in ws:
                self._on_client_frame(session, conn, raw)
        except ProtocolError as exc:
            conn.send(exc.frame())
        except ConnectionClosed:
            pass
        finally:
            if session is not None:
                self._client_conns.pop(id(session), None)
                # the robot-side watchdog notices the missing heartbeats;
                # the registry closes the session after close_timeout
            await conn.close()

    def _on_client_frame(self, session: Session, conn: _Connection, raw) -> None:
        try:
            frame = decode_frame(raw)
            if frame.get("type") != "data":
                raise BadMessageError("clients may only send data frames after connect")
            delivery = self.registry.route(session, Envelope.from_frame(frame), "client")
            robot = self._robot_conns.get(session.robot_id)
            if robot is not None:
                robot.send(delivery.envelope.to_frame())
            for anomaly in delivery.anomalies:
                conn.send(anomaly.to_frame())
        except ProtocolError as exc:
            conn.send(exc.frame())


async def run_relay(host: str, port: int, **kwargs) -> RelayServer:
    server = RelayServer(host, port, **kwargs)
    await server.start()
    return server
