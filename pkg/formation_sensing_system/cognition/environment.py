"""
Single-UAV path-following environment and the agent observation.
"""

import logging
import math
from dataclasses import dataclass
from typing import Optional

import numpy as np

from ..core.config import LeaderTrajectorySpec
from ..core.exceptions import HeadingUndefinedError
from ..core.models import RewardMode, RewardWeights, UavState, VirtualLeader
from ..logic_blocks.dynamics import integrate_uav
from ..logic_blocks.formation import circle_points, follow_errors, formation_heading
from ..logic_blocks.nsb import command_to_acceleration
from ..logic_blocks.numerics import Rng
from ..logic_blocks.trajectory import LeaderTrajectory, build_trajectory
from .networks import ACTION_LIMIT
from .rewards import baseline_variants

logger = logging.getLogger("FollowerEnv")

POSITION_SCALE = 1000.0
ERROR_SCALE = 100.0
NOMINAL_LEADER_START = np.array([100.0, 100.0, 50.0])


def observe(uav: UavState, vft: np.ndarray, leader: VirtualLeader) -> np.ndarray:
    """(x, y, z, χ, γ, ẋ, ẏ, ż, x_e, y_e, z_e, e_d, e_v) in SI units."""
    error = np.asarray(vft, dtype=float) - uav.position
    errors = follow_errors(uav, vft, leader)
    return np.concatenate(
        [
            uav.position,
            [uav.track_angle, uav.heading_angle],
            uav.velocity,
            error,
            [errors.e_d, errors.e_v],
        ]
    )


def normalize_observation(obs: np.ndarray) -> np.ndarray:
    scale = np.array(
        [POSITION_SCALE] * 3 + [math.pi] * 2 + [ACTION_LIMIT] * 3 + [ERROR_SCALE] * 3 + [ERROR_SCALE, ACTION_LIMIT]
    )
    return np.asarray(obs, dtype=float) / scale


@dataclass
class StepOutcome:
    obs: np.ndarray
    reward: float
    e_d: float
    e_v: float
    weights: RewardWeights


class FollowerEnv:
    """
    One UAV chasing its VFT on a randomized leader trajectory.

    Actions are commanded velocities; the UAV integrates α = (v − u̇)/ΔT.
    Each reset draws the leader start near (100, 100, 50), the base heading
    and the UAV's circle angle β from the "episode" stream.
    """

    def __init__(
        self,
        leader_spec: LeaderTrajectorySpec,
        rng: Rng,
        mode: RewardMode = RewardMode.AWPF,
        r_f: float = 20.0,
        dt: float = 1.0,
        v_max: float = ACTION_LIMIT,
        start_jitter: float = 20.0,
    ):
        self.leader_spec = leader_spec
        self.rng = rng
        self.reward_fn = baseline_variants(mode)
        self.r_f = r_f
        self.dt = dt
        self.v_max = v_max
        self.start_jitter = start_jitter
        self.trajectory: Optional[LeaderTrajectory] = None
        self.uav: Optional[UavState] = None
        self.t = 0.0
        self.beta = 0.0
        self.heading = 0.0

    def _vft(self, leader: VirtualLeader) -> np.ndarray:
        try:
            self.heading = formation_heading(leader.position)
        except HeadingUndefinedError:
            pass
        return circle_points(leader.position, self.r_f, np.array([self.heading + self.beta]))[0]

    def reset(self) -> np.ndarray:
        jitter = self.rng.uniform(-self.start_jitter, self.start_jitter, size=3)
        start = NOMINAL_LEADER_START + jitter
        self.trajectory = build_trajectory(self.leader_spec, start=start, heading=self.rng.uniform(0, 2 * math.pi))
        self.beta = self.rng.uniform(0, 2 * math.pi)
        uav_start = start - NOMINAL_LEADER_START + self.rng.uniform(-self.start_jitter, self.start_jitter, size=3)
        uav_start[2] = max(uav_start[2], 0.0)
        self.uav = UavState.at_rest(uav_start)
        self.t = 0.0
        return self._observation()

    def _observation(self) -> np.ndarray:
        leader = self.trajectory.state(self.t)
        self.vft = self._vft(leader)
        self.leader = leader
        return normalize_observation(observe(self.uav, self.vft, leader))

    def step(self, action) -> StepOutcome:
        alpha = command_to_acceleration(action, self.uav.velocity, self.dt)
        self.uav = integrate_uav(self.uav, alpha, self.dt, self.v_max)
        self.t += self.dt
        obs = self._observation()
        errors = follow_errors(self.uav, self.vft, self.leader)
        value, weights = self.reward_fn(errors.e_d, errors.e_v)
        return StepOutcome(obs=obs, reward=value, e_d=errors.e_d, e_v=errors.e_v, weights=weights)

