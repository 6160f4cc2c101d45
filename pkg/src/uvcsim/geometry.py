"""Planar geometry primitives shared by the world model and the robot."""

from __future__ import annotations

import math
from dataclasses import dataclass


def normalize_angle(theta: float) -> float:
    """Wrap an angle to (-pi, pi]."""
    t = math.remainder(theta, math.tau)
    if t <= -math.pi:
        t += math.tau
    return t


@dataclass(frozen=True)
class Pose2D:
    """Planar pose. ``theta`` is always stored normalized to (-pi, pi]."""

    x: float = 0.0
    y: float = 0.0
    theta: float = 0.0

    def __post_init__(self) -> None:
        object.__setattr__(self, "theta", normalize_angle(self.theta))

    @property
    def position(self) -> tuple[float, float]:
        return (self.x, self.y)

    def to_world(self, px: float, py: float) -> tuple[float, float]:
        """Transform a point from the robot frame into world coordinates."""
        c, s = math.cos(self.theta), math.sin(self.theta)
        return (self.x + c * px - s * py, self.y + s * px + c * py)

    def to_robot(self, wx: float, wy: float) -> tuple[float, float]:
        """Transform a world point into the robot frame."""
        c, s = math.cos(self.theta), math.sin(self.theta)
        dx, dy = wx - self.x, wy - self.y
        return (c * dx + s * dy, -s * dx + c * dy)
