"""
Trajectory Block - virtual-leader generators.
"""

import math
from abc import ABC, abstractmethod

import numpy as np

from ..core.config import LeaderTrajectorySpec
from ..core.exceptions import InvalidArgumentError
from ..core.models import VirtualLeader


class LeaderTrajectory(ABC):
    """Leader position and velocity as a function of time."""

    @abstractmethod
    def state(self, t: float) -> VirtualLeader:
        pass


class WaypointTrajectory(LeaderTrajectory):
    """Piecewise-linear flight through timed waypoints; hovers after the last one."""

    def __init__(self, times, positions):
        self.times = np.asarray(times, dtype=float)
        self.positions = np.asarray(positions, dtype=float)
        if self.times.size < 2 or self.positions.shape != (self.times.size, 3):
            raise InvalidArgumentError("need at least two waypoints with 3-D positions")
        if np.any(np.diff(self.times) <= 0):
            raise InvalidArgumentError("waypoint times must be strictly increasing")

    def state(self, t: float) -> VirtualLeader:
        position = np.array([np.interp(t, self.times, self.positions[:, axis]) for axis in range(3)])
        if t < self.times[0] or t >= self.times[-1]:
            return VirtualLeader(position=position, velocity=np.zeros(3))
        segment = int(np.searchsorted(self.times, t, side="right")) - 1
        span = self.times[segment + 1] - self.times[segment]
        velocity = (self.positions[segment + 1] - self.positions[segment]) / span
        return VirtualLeader(position=position, velocity=velocity)


class SerpentineTrajectory(LeaderTrajectory):
    """
    Base line at constant speed with sinusoidal lateral and vertical deviations.

    Deviations start at zero, so the leader begins exactly at `start`.
    """

    def __init__(
        self,
        start,
        speed: float,
        heading: float,
        lateral_amplitude: float = 0.0,
        lateral_period: float = 1.0,
        vertical_amplitude: float = 0.0,
        vertical_period: float = 1.0,
    ):
        self.start = np.asarray(start, dtype=float)
        self.speed = speed
        self.direction = np.array([math.cos(heading), math.sin(heading), 0.0])
        self.lateral = np.array([-math.sin(heading), math.cos(heading), 0.0])
        self.lateral_amplitude = lateral_amplitude
        self.lateral_rate = 2 * math.pi / lateral_period
        self.vertical_amplitude = vertical_amplitude
        self.vertical_rate = 2 * math.pi / vertical_period

    def state(self, t: float) -> VirtualLeader:
        up = np.array([0.0, 0.0, 1.0])
        position = (
            self.start
            + self.speed * t * self.direction
            + self.lateral_amplitude * math.sin(self.lateral_rate * t) * self.lateral
            + self.vertical_amplitude * math.sin(self.vertical_rate * t) * up
        )
        velocity = (
            self.speed * self.direction
            + self.lateral_amplitude * self.lateral_rate * math.cos(self.lateral_rate * t) * self.lateral
            + self.vertical_amplitude * self.vertical_rate * math.cos(self.vertical_rate * t) * up
        )
        return VirtualLeader(position=position, velocity=velocity)


def build_trajectory(spec: LeaderTrajectorySpec, start=None, heading=None) -> LeaderTrajectory:
    """Generator named by the spec; `start`/`heading` override the serpentine's (training episodes)."""
    if spec.kind == "waypoints":
        return WaypointTrajectory([w.t for w in spec.waypoints], [w.position for w in spec.waypoints])
    return SerpentineTrajectory(
        start=spec.start if start is None else start,
        speed=spec.speed,
        heading=math.radians(spec.heading_deg) if heading is None else heading,
        lateral_amplitude=spec.lateral_amplitude,
        lateral_period=spec.lateral_period,
        vertical_amplitude=spec.vertical_amplitude,
        vertical_period=spec.vertical_period,
    )
