"""Teleoperation protocol: signaling, topic-addressed envelopes, session
state machine, websocket relay, and the robot-side endpoint."""

from .messages import (
    COMMAND_TOPICS,
    TELEMETRY_TOPICS,
    CLOSE_TIMEOUT,
    HEARTBEAT_INTERVAL,
    HEARTBEAT_TIMEOUT,
    BadMessageError,
    DuplicateIdError,
    Envelope,
    ProtocolError,
    RobotBusyError,
    SessionClosedError,
    UnknownRobotError,
    UnknownTopicError,
    WrongDirectionError,
    decode_frame,
    encode_frame,
)
from .session import PeerRegistry, Session, SessionState
from .server import RelayServer
from .robot_link import RobotLink
