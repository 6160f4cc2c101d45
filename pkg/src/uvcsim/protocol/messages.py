"""Wire vocabulary: signaling frames, topic-addressed envelopes, schemas.

Every frame is one UTF-8 JSON document per websocket text message.
Signaling frames: {"type":"register","id":...}, {"type":"connect",
"robot_id":...}, {"type":"paired"}, {"type":"error","code":...}. Data
frames wrap an envelope: {"type":"data","envelope":{topic,seq,stamp,
payload}}. All numeric payload fields are SI.
"""

from __future__ import annotations

import json
import re
from dataclasses import dataclass

HEARTBEAT_INTERVAL = 1.0
HEARTBEAT_TIMEOUT = 3.0
CLOSE_TIMEOUT = 15.0

PEER_ID_RE = re.compile(r"^[A-Za-z0-9_\-]{1,64}$")


class ProtocolError(Exception):
    code = "ProtocolError"

    def __init__(self, detail: str = ""):
        super().__init__(detail or self.code)
        self.detail = detail

    def frame(self) -> dict:
        out = {"type": "error", "code": self.code}
        if self.detail:
            out["detail"] = self.detail
        return out


class BadMessageError(ProtocolError):
    code = "BadMessage"


class DuplicateIdError(ProtocolError):
    code = "DuplicateId"


class UnknownRobotError(ProtocolError):
    code = "UnknownRobot"


class RobotBusyError(ProtocolError):
    code = "RobotBusy"


class UnknownTopicError(ProtocolError):
    code = "UnknownTopic"


class WrongDirectionError(ProtocolError):
    code = "WrongDirection"


class SessionClosedError(ProtocolError):
    code = "SessionClosed"


_NUM = (int, float)

# topic -> {field: expected type(s)}; None means any JSON value
COMMAND_TOPICS: dict[str, dict] = {
    "/cmd/vel": {"v": _NUM, "w": _NUM},
    "/cmd/manual_target": {"x": _NUM, "y": _NUM},   # robot frame
    "/cmd/goal": {"x": _NUM, "y": _NUM},            # map frame
    "/cmd/autonomy": {"level": str},
    "/cmd/lamp": {"on": bool},
    "/cmd/heartbeat": {},
    "/cmd/request_scan": {},
}

TELEMETRY_TOPICS: dict[str, dict] = {
    "/telemetry/pose": {"x": _NUM, "y": _NUM, "theta": _NUM},
    "/telemetry/scan": {"angle_min": _NUM, "increment": _NUM, "ranges": list},
    "/telemetry/scan_full": {"angle_min": _NUM, "increment": _NUM, "ranges": list},
    "/telemetry/mode": {"level": str},
    "/telemetry/lamp": {"on": bool, "forced_off": bool},
    "/telemetry/battery": {"wh": _NUM, "fraction": _NUM},
    "/telemetry/dose": {"covered_fraction": _NUM, "min": _NUM, "mean": _NUM},
    "/telemetry/goal_status": {"state": str},
    "/telemetry/map": {"width": int, "height": int, "resolution": _NUM},
    "/telemetry/dose_map": {"width": int, "height": int, "data": str},
    "/telemetry/anomaly": {"kind": str},
}

ALL_TOPICS = {**COMMAND_TOPICS, **TELEMETRY_TOPICS}


@dataclass(frozen=True)
class Envelope:
    """Topic-addressed message: seq is strictly increasing per sender."""

    topic: str
    seq: int
    stamp: float
    payload: dict

    def to_frame(self) -> dict:
        return {
            "type": "data",
            "envelope": {
                "topic": self.topic,
                "seq": self.seq,
                "stamp": self.stamp,
                "payload": self.payload,
            },
        }

    @classmethod
    def from_frame(cls, frame: dict) -> "Envelope":
        env = frame.get("envelope")
        if not isinstance(env, dict):
            raise BadMessageError("data frame without envelope")
        topic = env.get("topic")
        seq = env.get("seq")
        stamp = env.get("stamp", 0.0)
        payload = env.get("payload", {})
        if not isinstance(topic, str) or not isinstance(seq, int) or isinstance(seq, bool):
            raise BadMessageError("envelope needs a string topic and integer seq")
        if not isinstance(payload, dict):
            raise BadMessageError("payload must be an object")
        if not isinstance(stamp, _NUM):
            raise BadMessageError("stamp must be a number")
        return cls(topic, seq, float(stamp), payload)

    def validate_schema(self) -> None:
        schema = ALL_TOPICS.get(self.topic)
        if schema is None:
            raise UnknownTopicError(self.topic)
        for name, kind in schema.items():
            if name not in self.payload:
                raise BadMessageError(f"{self.topic}: missing field '{name}'")
            value = self.payload[name]
            if kind is bool:
                ok = isinstance(value, bool)
            elif kind is _NUM:
                ok = isinstance(value, _NUM) and not isinstance(value, bool)
            elif kind is int:
                ok = isinstance(value, int) and not isinstance(value, bool)
            else:
                ok = isinstance(value, kind)
            if not ok:
                raise BadMessageError(f"{self.topic}: field '{name}' has wrong type")


def encode_frame(frame: dict) -> str:
    return json.dumps(frame, separators=(",", ":"))


def decode_frame(raw: str | bytes) -> dict:
    try:
        frame = json.loads(raw)
    except (json.JSONDecodeError, UnicodeDecodeError) as exc:
        raise BadMessageError(f"not valid JSON: {exc}") from exc
    if not isinstance(frame, dict) or "type" not in frame:
        raise BadMessageError("frame must be an object with a 'type'")
    return frame


def valid_peer_id(peer_id: str) -> bool:
    return isinstance(peer_id, str) and bool(PEER_ID_RE.match(peer_id))
