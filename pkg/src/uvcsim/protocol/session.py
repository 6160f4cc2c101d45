"""Session state machine and peer registry, independent of any transport.

The registry pairs exactly one client to a registered robot, routes
envelopes with direction and ordering checks, and runs the staleness
watchdog (Paired -> Degraded -> Closed). A clock callable is injected so
tests can drive time directly.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field
from enum import Enum

from .messages import (
    CLOSE_TIMEOUT,
    COMMAND_TOPICS,
    HEARTBEAT_TIMEOUT,
    TELEMETRY_TOPICS,
    BadMessageError,
    DuplicateIdError,
    Envelope,
    RobotBusyError,
    SessionClosedError,
    UnknownRobotError,
    WrongDirectionError,
    valid_peer_id,
)


class SessionState(Enum):
    ROBOT_REGISTERED = "robot_registered"
    CLIENT_CONNECTING = "client_connecting"
    PAIRED = "paired"
    DEGRADED = "degraded"
    CLOSED = "closed"


@dataclass
class Session:
    robot_id: str
    state: SessionState
    last_robot_hb: float
    last_client_hb: float
    last_seq: dict = field(default_factory=lambda: {"robot": None, "client": None})


@dataclass
class RobotRecord:
    robot_id: str
    last_keepalive: float
    session: Session | None = None


@dataclass
class Delivery:
    """Outcome of routing one envelope: who receives what."""

    to: str                      # 'robot' or 'client'
    envelope: Envelope
    anomalies: list = field(default_factory=list)  # extra envelopes for the client


class PeerRegistry:
    """Transport-agnostic core of the relay: registration, pairing,
    ordered routing, and the heartbeat watchdog."""

    def __init__(
        self,
        clock=time.monotonic,
        heartbeat_timeout: float = HEARTBEAT_TIMEOUT,
        close_timeout: float = CLOSE_TIMEOUT,
    ):
        self.clock = clock
        self.heartbeat_timeout = heartbeat_timeout
        self.close_timeout = close_timeout
        self.robots: dict[str, RobotRecord] = {}
        self._anomaly_seq = 0

    # -- registration and pairing ---------------------------------------

    def register_robot(self, robot_id: str) -> RobotRecord:
        if not valid_peer_id(robot_id):
            raise BadMessageError(f"invalid robot id {robot_id!r}")
        now = self.clock()
        existing = self.robots.get(robot_id)
        if existing is not None:
            expired = now - existing.last_keepalive > self.heartbeat_timeout
            if not expired:
                raise DuplicateIdError(robot_id)
            if existing.session is not None:
                existing.session.state = SessionState.CLOSED
        record = RobotRecord(robot_id, last_keepalive=now)
        self.robots[robot_id] = record
        return record

    def touch_robot(self, robot_id: str) -> None:
        record = self.robots.get(robot_id)
        if record is not None:
            record.last_keepalive = self.clock()

    def unregister_robot(self, robot_id: str) -> None:
        record = self.robots.pop(robot_id, None)
        if record is not None and record.session is not None:
            record.session.state = SessionState.CLOSED

    def connect_client(self, robot_id: str) -> Session:
        now = self.clock()
        record = self.robots.get(robot_id)
        if record is None or now - record.last_keepalive > self.heartbeat_timeout:
            raise UnknownRobotError(robot_id)
        if record.session is not None:
            state = self.heartbeat_monitor(record.session, now)
            if state is not SessionState.CLOSED:
                raise RobotBusyError(robot_id)
        session = Session(
            robot_id,
            SessionState.CLIENT_CONNECTING,
            last_robot_hb=now,
            last_client_hb=now,
        )
        session.state = SessionState.PAIRED
        record.session = session
        return session

    # -- routing ----------------------------------------------------------

    def route(self, session: Session, envelope: Envelope, sender: str) -> Delivery:
        """Validate and route one envelope; refreshes the sender heartbeat.

        Commands flow client -> robot, telemetry robot -> client. While
        Degraded only telemetry passes. Sequence regressions are rejected;
        gaps are surfaced to the client as anomaly telemetry.
        """
        assert sender in ("robot", "client")
        now = self.clock()
        state = self.heartbeat_monitor(session, now)
        if state is SessionState.CLOSED:
            raise SessionClosedError(session.robot_id)

        envelope.validate_schema()
        is_command = envelope.topic in COMMAND_TOPICS
        if is_command and sender != "client":
            raise WrongDirectionError(f"{envelope.topic} is client-to-robot")
        if envelope.topic in TELEMETRY_TOPICS and sender != "robot":
            raise WrongDirectionError(f"{envelope.topic} is robot-to-client")
        if (
            state is SessionState.DEGRADED
            and is_command
            and envelope.topic != "/cmd/heartbeat"  # the recovery path must stay open
        ):
            raise SessionClosedError(
                f"session degraded; command {envelope.topic} not accepted"
            )

        anomalies = []
        last = session.last_seq[sender]
        if last is not None:
            if envelope.seq <= last:
                raise BadMessageError(
                    f"seq must be strictly increasing: got {envelope.seq} after {last}"
                )
            if envelope.seq > last + 1:
                anomalies.append(self._gap_anomaly(sender, last, envelope.seq, now))
        session.last_seq[sender] = envelope.seq

        if sender == "client":
            session.last_client_hb = now
        else:
            session.last_robot_hb = now
            self.touch_robot(session.robot_id)
        # a fresh heartbeat may repair a degraded session
        self.heartbeat_monitor(session, now)

        return Delivery(
            to="robot" if sender == "client" else "client",
            envelope=envelope,
            anomalies=anomalies,
        )

    def _gap_anomaly(self, sender: str, last: int, seq: int, now: float) -> Envelope:
        self._anomaly_seq += 1
        return Envelope(
            "/telemetry/anomaly",
            seq=self._anomaly_seq,
            stamp=now,
            payload={
                "kind": "seq_gap",
                "sender": sender,
                "expected": last + 1,
                "got": seq,
            },
        )

    # -- watchdog ----------------------------------------------------------

    def heartbeat_monitor(self, session: Session, now: float | None = None) -> SessionState:
        """Recompute the session state from heartbeat staleness.

        Both directions are watched symmetrically: either end going silent
        degrades the session, and past close_timeout it closes for good.
        """
        if now is None:
            now = self.clock()
        if session.state is SessionState.CLOSED:
            return session.state
        stale = max(now - session.last_client_hb, now - session.last_robot_hb)
        if stale > self.close_timeout:
            session.state = SessionState.CLOSED
            record = self.robots.get(session.robot_id)
            if record is not None and record.session is session:
                record.session = None
        elif stale > self.heartbeat_timeout:
            session.state = SessionState.DEGRADED
        else:
            session.state = SessionState.PAIRED
        return session.state

    def sweep(self, now: float | None = None) -> list[tuple[Session, SessionState]]:
        """Advance every session's watchdog; drop expired registrations.

        Returns sessions whose state changed so the transport can notify.
        """
        if now is None:
            now = self.clock()
        changed = []
        for robot_id in list(self.robots):
            record = self.robots[robot_id]
            session = record.session
            if session is not None:
                before = session.state
                after = self.heartbeat_monitor(session, now)
                if after is not before:
                    changed.append((session, after))
            if (
                record.session is None
                and now - record.last_keepalive > self.heartbeat_timeout
            ):
                del self.robots[robot_id]
        return changed
